#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "treexfer/conversion.hpp"
#include "treexfer/errors.hpp"
#include "treexfer/neural_tree.hpp"

namespace treexfer {
namespace {

TEST(RoutingMatrix, DepthTwoLayout) {
    // root splits into node 1 (left) and leaf 2 (right); node 1 into leaves 0 and 1
    TreeStructure t;
    t.nodes.push_back({0, 0, 0.0, ChildRef::node(1), ChildRef::leaf(2)});
    t.nodes.push_back({1, 0, 0.0, ChildRef::leaf(0), ChildRef::leaf(1)});
    t.leaves = {{0, {0.0}}, {1, {0.0}}, {2, {0.0}}};
    const auto Q = build_routing_matrix(t);
    const std::vector<std::vector<int>> expected = {
        {1, 1, 0, 0},
        {1, 0, 0, 1},
        {0, 0, 1, 0},
    };
    EXPECT_EQ(Q.dense(), expected);
    EXPECT_EQ(RoutingMatrix::from_dense(expected), Q);
}

TEST(RoutingMatrix, FromDenseRejectsNonTrees) {
    EXPECT_THROW(RoutingMatrix::from_dense({}), InputError);
    EXPECT_THROW(RoutingMatrix::from_dense({{1, 1}, {0, 1}}), InputError);
    EXPECT_THROW(RoutingMatrix::from_dense({{1, 0}, {1, 0}}), InputError);
    EXPECT_THROW(RoutingMatrix::from_dense({{1, 0}, {0, 2}}), InputError);
    EXPECT_THROW(RoutingMatrix::from_dense({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}}), InputError);
}

TEST(RoutingMatrix, DenseRoundTripOnRandomTrees) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const auto Q = build_routing_matrix(oracle::random_tree(oracle::uniform_int(rng, 0, 20), 2, 1, rng));
        const auto dense = Q.dense();
        for (const auto& row : dense) {
            for (int i = 0; i < Q.num_nodes(); ++i) {
                ASSERT_FALSE(row[i] == 1 && row[Q.num_nodes() + i] == 1);
            }
        }
        ASSERT_EQ(RoutingMatrix::from_dense(dense), Q);
    }
}

TEST(NeuralTree, RouteProbabilitiesPairToOne) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 500; ++trial) {
        const int n = oracle::uniform_int(rng, 1, 10);
        const int k = oracle::uniform_int(rng, 1, 6);
        const auto nt = oracle::random_neural_tree(n, k, 2, oracle::uniform(rng, 0.01, 3.0), rng);
        const Vector x = Vector::NullaryExpr(k, [&] { return oracle::uniform(rng, -3.0, 3.0); });
        const Vector D = node_probabilities(nt, x);
        for (int i = 0; i < n; ++i) {
            ASSERT_NEAR(D[i] + D[n + i], 1.0, 1e-12);
        }
    }
}

TEST(NeuralTree, MuMatchesExplicitDescentProduct) {
    std::mt19937_64 rng(19);
    for (int trial = 0; trial < 500; ++trial) {
        const int n = oracle::uniform_int(rng, 1, 12);
        const int k = oracle::uniform_int(rng, 1, 6);
        const auto nt = oracle::random_neural_tree(n, k, 3, oracle::uniform(rng, 0.05, 2.0), rng);
        const Vector x = Vector::NullaryExpr(k, [&] { return oracle::uniform(rng, -2.0, 2.0); });
        const auto r = route(nt, x);
        const Vector ref = oracle::descent_mu(nt, x);
        ASSERT_NEAR(r.mu.sum(), 1.0, 1e-9);
        for (int l = 0; l < nt.num_leaves(); ++l) {
            ASSERT_NEAR(r.mu[l], ref[l], 1e-10);
        }
        const Vector z = predict_soft(nt, x);
        const Vector zref = oracle::naive_logits(nt.pi, r.mu);
        for (int c = 0; c < z.size(); ++c) {
            ASSERT_NEAR(z[c], zref[c], 1e-12);
        }
    }
}

TEST(NeuralTree, LogProbabilitiesStayFiniteAtExtremeMargins) {
    ConversionOptions o;
    o.feature_count = 1;
    TreeStructure t;
    t.nodes.push_back({0, 0, 0.0, ChildRef::leaf(0), ChildRef::leaf(1)});
    t.leaves = {{0, {1.0}}, {1, {2.0}}};
    const auto nt = to_neural_tree(t, o);
    const auto r = route(nt, Vector::Constant(1, 1e6));
    EXPECT_TRUE(std::isfinite(r.log_D[0]));
    EXPECT_LT(r.log_D[0], -1e6);
    EXPECT_EQ(r.log_D[1], 0.0);
    EXPECT_EQ(r.mu[1], 1.0);
    EXPECT_NEAR(log_sigmoid(-800.0), -800.0, 1e-12);
    EXPECT_NEAR(log_sigmoid(0.0), -std::log(2.0), 1e-15);
}

TEST(NeuralTree, BatchMatchesPerSample) {
    std::mt19937_64 rng(23);
    const auto nt = oracle::random_neural_tree(9, 4, 3, 0.3, rng);
    const Matrix X = Matrix::NullaryExpr(40, 4, [&] { return oracle::uniform(rng, -2.0, 2.0); });
    const Matrix Z = predict_soft_batch(nt, X);
    for (int r = 0; r < X.rows(); ++r) {
        const Vector z = predict_soft(nt, X.row(r).transpose());
        for (int c = 0; c < 3; ++c) {
            ASSERT_NEAR(Z(r, c), z[c], 1e-13);
        }
    }
}

TEST(NeuralTree, HardPredictionFollowsMarginSigns) {
    std::mt19937_64 rng(29);
    for (int trial = 0; trial < 300; ++trial) {
        const int k = oracle::uniform_int(rng, 1, 5);
        const auto nt = oracle::random_neural_tree(oracle::uniform_int(rng, 1, 15), k, 2, 0.1, rng);
        const Vector x = Vector::NullaryExpr(k, [&] { return oracle::uniform(rng, -2.0, 2.0); });
        const auto h = predict_hard(nt, x);
        ASSERT_EQ(h.leaf, oracle::descent_leaf(nt, x));
        ASSERT_EQ(h.value, nt.pi.row(h.leaf).transpose());
    }
}

TEST(NeuralTree, LowTemperatureSoftRoutingConcentratesOnHardLeaf) {
    std::mt19937_64 rng(31);
    int checked = 0;
    for (int trial = 0; trial < 300; ++trial) {
        const int k = 3;
        auto nt = oracle::random_neural_tree(7, k, 2, 0.01, rng);
        const Vector x = Vector::NullaryExpr(k, [&] { return oracle::uniform(rng, -2.0, 2.0); });
        const Vector margins = nt.W.transpose() * x + nt.b;
        if (margins.cwiseAbs().minCoeff() < 0.05) {
            continue;
        }
        ++checked;
        Eigen::Index best = 0;
        route(nt, x).mu.maxCoeff(&best);
        ASSERT_EQ(best, predict_hard(nt, x).leaf);
    }
    EXPECT_GT(checked, 100);
}

TEST(NeuralTree, CheckRejectsInconsistentShapes) {
    std::mt19937_64 rng(37);
    auto nt = oracle::random_neural_tree(3, 2, 2, 0.1, rng);
    EXPECT_NO_THROW(nt.check());
    auto bad = nt;
    bad.b.resize(2);
    EXPECT_THROW(bad.check(), std::invalid_argument);
    bad = nt;
    bad.tau = 0.0;
    EXPECT_THROW(bad.check(), std::invalid_argument);
    bad = nt;
    bad.pi.resize(2, 2);
    EXPECT_THROW(bad.check(), std::invalid_argument);
}

}  // namespace
}  // namespace treexfer
