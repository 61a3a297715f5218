#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "treexfer/conversion.hpp"
#include "treexfer/errors.hpp"
#include "treexfer/sparsify.hpp"

namespace treexfer {
namespace {

NeuralTree single_node(double w0, double w1, double b) {
    TreeStructure t;
    t.nodes.push_back({0, 0, 0.0, ChildRef::leaf(0), ChildRef::leaf(1)});
    t.leaves = {{0, {1.0, 0.0}}, {1, {0.0, 1.0}}};
    ConversionOptions o;
    o.feature_count = 2;
    auto nt = to_neural_tree(t, o);
    nt.W(0, 0) = w0;
    nt.W(1, 0) = w1;
    nt.b[0] = b;
    return nt;
}

TEST(Projection, KeepsDominantFeatureAndPreservesMostRoutes) {
    const auto nt = single_node(5.0, 0.01, 0.3);
    const auto p = project_axis_parallel(nt);
    EXPECT_EQ(node_l0(p, 0), 1);
    EXPECT_NE(p.W(0, 0), 0.0);
    EXPECT_EQ(p.W(1, 0), 0.0);

    std::mt19937_64 rng(89);
    int agree = 0;
    int guaranteed = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const Vector x = Vector::NullaryExpr(2, [&] { return oracle::uniform(rng, -1.0, 1.0); });
        agree += predict_hard(p, x).leaf == predict_hard(nt, x).leaf;
        // Margin analysis: dropping 0.01 x_1 cannot flip the sign when the
        // kept part of the margin is larger in magnitude.
        guaranteed += std::abs(5.0 * x[0] + 0.3) > std::abs(0.01 * x[1]);
    }
    EXPECT_GE(agree, guaranteed);
    EXPECT_GT(guaranteed, n * 99 / 100);
}

TEST(Projection, RescalesToTheEffectiveNorm) {
    const auto p = project_axis_parallel(single_node(-3.0, 4.0, 2.0));
    EXPECT_EQ(p.W(1, 0), 5.0);
    EXPECT_EQ(p.W(0, 0), 0.0);
    EXPECT_DOUBLE_EQ(p.b[0], 2.0 * 5.0 / 4.0);
    // the boundary still crosses the kept axis at x_1 = -b / w_1
    EXPECT_DOUBLE_EQ(-p.b[0] / p.W(1, 0), -2.0 / 4.0);
}

TEST(Projection, AxisParallelNodesAreCopied) {
    const auto nt = single_node(0.0, -2.5, 1.25);
    const auto p = project_axis_parallel(nt);
    EXPECT_EQ(p.W, nt.W);
    EXPECT_EQ(p.b, nt.b);
}

TEST(Projection, TiesGoToLowestIndex) {
    const auto p = project_axis_parallel(single_node(1.0, -1.0, 0.0));
    EXPECT_NE(p.W(0, 0), 0.0);
    EXPECT_EQ(p.W(1, 0), 0.0);
}

TEST(Projection, GateScoresDecideTheFeature) {
    const auto nt = single_node(5.0, 1.0, 0.0);
    auto g = GateSet::open(2, 1);
    g.v(1, 0) = 2.0;
    const auto det = project_axis_parallel(nt, &g, GateMode::deterministic);
    EXPECT_EQ(det.W(0, 0), 0.0);
    EXPECT_EQ(det.W(1, 0), 1.0);
    const auto st = project_axis_parallel(nt, &g, GateMode::gumbel_st);
    EXPECT_EQ(st.W, det.W);

    g.log_alpha(0, 0) = -10.0;   // closed gate on the large weight
    const auto ex = project_axis_parallel(nt, &g, GateMode::expected);
    EXPECT_EQ(ex.W(0, 0), 0.0);
    EXPECT_EQ(ex.W(1, 0), 1.0);
}

TEST(Projection, AllZeroScoresAreStateErrors) {
    const auto nt = single_node(0.0, 0.0, 1.0);
    try {
        project_axis_parallel(nt);
        FAIL() << "expected StateError";
    } catch (const StateError& e) {
        EXPECT_NE(std::string(e.what()).find("no selectable feature at node 0"), std::string::npos);
    }
}

TEST(Projection, EveryNodeEndsWithOneWeight) {
    std::mt19937_64 rng(97);
    TreeEnsemble e;
    e.num_class = 3;
    e.feature_count = 5;
    for (int t = 0; t < 4; ++t) {
        e.trees.push_back(oracle::random_neural_tree(9, 5, 3, 0.2, rng));
    }
    e.v = Vector::Ones(4);
    const auto p = project_ensemble(attach_gates(e, GateMode::expected));
    EXPECT_FALSE(p.has_gates());
    for (const auto& nt : p.trees) {
        EXPECT_TRUE(is_axis_parallel(nt));
        for (int i = 0; i < nt.num_nodes(); ++i) {
            EXPECT_EQ(node_l0(nt, i), 1);
        }
    }
    EXPECT_NO_THROW(export_ensemble(p));
}

TEST(Gates, MeanActiveGatesFollowsEvaluationMode) {
    std::mt19937_64 rng(101);
    TreeEnsemble e;
    e.num_class = 2;
    e.feature_count = 4;
    e.trees.push_back(oracle::random_neural_tree(3, 4, 2, 0.2, rng));
    e.v = Vector::Ones(1);
    EXPECT_EQ(mean_active_gates(e), 0.0);
    EXPECT_EQ(mean_active_gates(attach_gates(e, GateMode::expected)), 4.0);
    EXPECT_EQ(mean_active_gates(attach_gates(e, GateMode::gumbel_st)), 1.0);
    auto closed = attach_gates(e, GateMode::expected);
    closed.gates[0].log_alpha.col(0).head(2).setConstant(-10.0);
    EXPECT_DOUBLE_EQ(mean_active_gates(closed), 10.0 / 3.0);
}

TEST(Pipeline, ProducesAxisParallelModelWithReport) {
    const auto [train, test] = oracle::reference_split("glass");
    const auto f = load_model(oracle::fixture_dir() / "glass_arch" / "model.txt", ModelFormat::gbdt_text);
    const auto e = truncate(convert_ensemble(f, {}), 1);
    PipelineConfig pc;
    pc.reinit_seed = 0;
    pc.gate_mode = GateMode::gumbel_st;
    pc.oblique.epochs = 5;
    pc.axis = pc.oblique;
    pc.axis.epochs = 2;
    const auto r = two_stage_pipeline(e, train, &test, pc);
    EXPECT_FALSE(r.model.has_gates());
    EXPECT_FALSE(r.oblique.has_gates());
    for (const auto& nt : r.model.trees) {
        for (int i = 0; i < nt.num_nodes(); ++i) {
            EXPECT_EQ(node_l0(nt, i), 1);
        }
    }
    EXPECT_EQ(r.report.oblique_history.size(), 5u);
    EXPECT_EQ(r.report.axis_history.size(), 2u);
    EXPECT_TRUE(r.report.axis.test.has_value());
    EXPECT_EQ(r.report.mean_active_gates, 1.0);
    EXPECT_NEAR(evaluate(r.model, test, PredictMode::soft).accuracy, *r.report.axis.test, 1e-15);
    EXPECT_THROW(two_stage_pipeline(attach_gates(e, GateMode::expected), train, nullptr, pc), StateError);
}

}  // namespace
}  // namespace treexfer
