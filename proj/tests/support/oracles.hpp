#pragma once

// Independent reference implementations used as test oracles. Nothing here
// calls into the routing, gradient or metric code under test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "treexfer/dataset.hpp"
#include "treexfer/ensemble.hpp"
#include "treexfer/model_io.hpp"
#include "treexfer/neural_tree.hpp"
#include "treexfer/tree_model.hpp"

namespace treexfer::oracle {

inline std::filesystem::path fixture_dir() { return TREEXFER_FIXTURE_DIR; }
inline std::filesystem::path data_dir() { return TREEXFER_DATA_DIR; }

// One committed fixture bundle: source model, probe samples and the source
// library's outputs on them.
struct Fixture {
    CanonicalTreeModel model;        // from the text dump
    CanonicalTreeModel model_json;   // from the canonical JSON sidecar
    Matrix X;
    std::vector<std::vector<int>> leaf_index;
    std::vector<std::vector<double>> raw_score;
    std::vector<int> predicted_class;
    std::vector<long> importance;
};

inline Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
    Matrix X(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
    }
    return X;
}

inline Fixture load_fixture(const std::string& name) {
    const auto dir = fixture_dir() / name;
    Fixture f;
    f.model = load_model(dir / "model.txt", ModelFormat::gbdt_text);
    f.model_json = load_model(dir / "model.json", ModelFormat::canonical_json);
    const auto samples = nlohmann::json::parse(read_file(dir / "samples.json"));
    f.X = to_matrix(samples.at("X").get<std::vector<std::vector<double>>>());
    const auto expected = nlohmann::json::parse(read_file(dir / "expected.json"));
    f.leaf_index = expected.at("leaf_index").get<std::vector<std::vector<int>>>();
    f.raw_score = expected.at("raw_score").get<std::vector<std::vector<double>>>();
    f.predicted_class = expected.at("class").get<std::vector<int>>();
    f.importance = expected.at("importance").get<std::vector<long>>();
    return f;
}

inline const std::vector<std::string>& fixture_names() {
    static const std::vector<std::string> names = {"binary_1tree", "binary_100tree", "multiclass_1round",
                                                   "multiclass_100round", "depth2"};
    return names;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// Random full binary tree with `nodes` splits. Shapes come from repeatedly
// splitting a random leaf; ids are shuffled so they carry no positional meaning.
inline TreeStructure random_tree(int nodes, int features, int width, std::mt19937_64& rng) {
    struct Slot {
        int parent;
        bool left;
    };
    TreeStructure t;
    std::vector<Slot> open;
    for (int i = 0; i < nodes; ++i) {
        SplitNode n;
        n.id = i;
        n.feature = uniform_int(rng, 0, features - 1);
        n.threshold = uniform(rng, -1.0, 1.0);
        if (i > 0) {
            const int pick = uniform_int(rng, 0, static_cast<int>(open.size()) - 1);
            const Slot s = open[pick];
            open.erase(open.begin() + pick);
            (s.left ? t.nodes[s.parent].left : t.nodes[s.parent].right) = ChildRef::node(i);
        }
        t.nodes.push_back(n);
        open.push_back({i, true});
        open.push_back({i, false});
    }
    std::vector<int> leaf_ids(nodes == 0 ? 1 : open.size());
    for (std::size_t i = 0; i < leaf_ids.size(); ++i) {
        leaf_ids[i] = static_cast<int>(i);
    }
    std::shuffle(leaf_ids.begin(), leaf_ids.end(), rng);
    for (std::size_t i = 0; i < open.size(); ++i) {
        (open[i].left ? t.nodes[open[i].parent].left : t.nodes[open[i].parent].right) = ChildRef::leaf(leaf_ids[i]);
    }
    for (int id = 0; id < static_cast<int>(leaf_ids.size()); ++id) {
        LeafNode leaf;
        leaf.id = id;
        for (int c = 0; c < width; ++c) {
            leaf.value.push_back(uniform(rng, -2.0, 2.0));
        }
        t.leaves.push_back(leaf);
    }
    return t;
}

// Random dense neural tree over a random topology.
inline NeuralTree random_neural_tree(int nodes, int features, int classes, double tau, std::mt19937_64& rng) {
    const auto tree = random_tree(nodes, features, classes, rng);
    NeuralTree nt;
    nt.Q = build_routing_matrix(tree);
    nt.W = Matrix::NullaryExpr(features, nodes, [&] { return uniform(rng, -1.5, 1.5); });
    nt.b = Vector::NullaryExpr(nodes, [&] { return uniform(rng, -1.0, 1.0); });
    nt.pi = Matrix::NullaryExpr(nt.Q.num_leaves(), classes, [&] { return uniform(rng, -2.0, 2.0); });
    nt.tau = tau;
    return nt;
}

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Leaf reach probabilities by explicit descent: the product over the path of
// logistic(2a) for a left turn and 1 - logistic(2a) for a right turn.
inline Vector descent_mu(const NeuralTree& nt, const Vector& x) {
    const auto& topo = nt.Q.topology();
    Vector mu = Vector::Zero(nt.num_leaves());
    std::function<void(TreeTopology::Child, double)> walk = [&](TreeTopology::Child c, double p) {
        if (c.is_leaf) {
            mu[c.index] = p;
            return;
        }
        double s = nt.b[c.index];
        for (int j = 0; j < nt.num_features(); ++j) {
            s += nt.W(j, c.index) * x[j];
        }
        const double left = logistic(2.0 * s / nt.tau);
        walk(topo.left[c.index], p * left);
        walk(topo.right[c.index], p * (1.0 - left));
    };
    walk(topo.root, 1.0);
    return mu;
}

// Leaf reached by following the sign of each node's margin (>= 0 goes left).
inline int descent_leaf(const NeuralTree& nt, const Vector& x) {
    const auto& topo = nt.Q.topology();
    TreeTopology::Child c = topo.root;
    while (!c.is_leaf) {
        double s = nt.b[c.index];
        for (int j = 0; j < nt.num_features(); ++j) {
            s += nt.W(j, c.index) * x[j];
        }
        c = s >= 0.0 ? topo.left[c.index] : topo.right[c.index];
    }
    return c.index;
}

// z = sum over leaves of mu_l pi_l, accumulated one term at a time.
inline Vector naive_logits(const Matrix& pi, const Vector& mu) {
    Vector z = Vector::Zero(pi.cols());
    for (int l = 0; l < pi.rows(); ++l) {
        for (int c = 0; c < pi.cols(); ++c) {
            z[c] += mu[l] * pi(l, c);
        }
    }
    return z;
}

// -log(exp(z_y) / sum exp(z)) evaluated literally.
inline double naive_cross_entropy(const Vector& z, int y) {
    double s = 0.0;
    for (int c = 0; c < z.size(); ++c) {
        s += std::exp(z[c]);
    }
    return -std::log(std::exp(z[y]) / s);
}

// Kendall tau-b by enumerating all pairs; NaN when either side is constant.
inline double brute_kendall(const std::vector<double>& a, const std::vector<double>& b) {
    long concordant = 0;
    long discordant = 0;
    long tie_a = 0;
    long tie_b = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            const double da = a[i] - a[j];
            const double db = b[i] - b[j];
            if (da == 0.0 && db == 0.0) {
                continue;
            }
            if (da == 0.0) {
                ++tie_a;
            } else if (db == 0.0) {
                ++tie_b;
            } else if ((da > 0) == (db > 0)) {
                ++concordant;
            } else {
                ++discordant;
            }
        }
    }
    const double n0 = static_cast<double>(concordant + discordant);
    const double denom = std::sqrt((n0 + static_cast<double>(tie_a)) * (n0 + static_cast<double>(tie_b)));
    return denom == 0.0 ? std::nan("") : static_cast<double>(concordant - discordant) / denom;
}

// Fourth-order central difference of f at x along coordinate i.
inline double central_difference(const std::function<double(double)>& f, double x, double h) {
    return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h);
}

inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Hard-concrete helpers written out from the distribution's definition.
inline double hc_expected(double log_alpha, double gamma, double zeta) {
    return std::clamp(logistic(log_alpha) * (zeta - gamma) + gamma, 0.0, 1.0);
}

inline double hc_open_probability(double log_alpha, double gamma, double zeta, double beta) {
    return logistic(log_alpha - beta * std::log(-gamma / zeta));
}

inline Dataset load_dataset(const std::string& name) {
    CsvOptions o;
    o.label = name == "glass" ? "type" : "class";
    return load_csv(data_dir() / (name + ".csv"), o);
}

// Train/test rows pinned in tests/fixtures/<name>_arch/reference.json.
inline std::pair<Dataset, Dataset> reference_split(const std::string& name) {
    const auto data = load_dataset(name);
    const auto ref = nlohmann::json::parse(read_file(fixture_dir() / (name + "_arch") / "reference.json"));
    return {subset(data, ref.at("split").at("train").get<std::vector<int>>()),
            subset(data, ref.at("split").at("test").get<std::vector<int>>())};
}

}  // namespace treexfer::oracle
