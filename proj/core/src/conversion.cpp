#include "treexfer/conversion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "treexfer/errors.hpp"

namespace treexfer {

namespace {

// True when x <= t and x > t map to distinct sides of fl(s*x) <= fl(s*t).
bool separates(double s, double t) {
    const double up = std::nextafter(t, std::numeric_limits<double>::infinity());
    return s * up > s * t;
}

double nearest_power_of_two(double s) {
    return std::exp2(std::round(std::log2(s)));
}

}  // namespace

std::vector<double> calibrate_sharpness(const TreeStructure& tree, const Matrix& samples, double tau) {
    if (!(tau > 0)) {
        throw std::invalid_argument("tau must be positive");
    }
    std::vector<double> sharpness(tree.nodes.size(), 1.0);
    if (samples.rows() == 0) {
        return sharpness;
    }
    for (const auto& node : tree.nodes) {
        if (node.feature >= samples.cols()) {
            throw std::invalid_argument("calibration samples have " + std::to_string(samples.cols()) +
                                        " features, tree uses feature " + std::to_string(node.feature));
        }
    }
    // Margins are collected from the samples that reach each node; nodes no
    // sample reaches fall back to all samples.
    const auto topo = resolve_topology(tree);
    std::vector<std::vector<double>> reached(tree.nodes.size());
    for (Eigen::Index r = 0; r < samples.rows(); ++r) {
        auto c = topo.root;
        while (!c.is_leaf) {
            const auto& node = tree.nodes[c.index];
            const double x = samples(r, node.feature);
            reached[c.index].push_back(std::abs(node.threshold - x));
            c = x <= node.threshold ? topo.left[c.index] : topo.right[c.index];
        }
    }
    std::vector<double> all(static_cast<std::size_t>(samples.rows()));
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
        auto& margins = reached[i];
        if (margins.empty()) {
            for (Eigen::Index r = 0; r < samples.rows(); ++r) {
                all[r] = std::abs(tree.nodes[i].threshold - samples(r, tree.nodes[i].feature));
            }
            margins = all;
        }
        auto mid = margins.begin() + static_cast<std::ptrdiff_t>(margins.size() / 2);
        std::nth_element(margins.begin(), mid, margins.end());
        double median = *mid;
        if (margins.size() % 2 == 0) {
            median = 0.5 * (median + *std::max_element(margins.begin(), mid));
        }
        if (median > 0 && std::isfinite(median)) {
            sharpness[i] = 4.0 * tau / median;
        }
    }
    return sharpness;
}

NeuralTree to_neural_tree(const TreeStructure& tree, const ConversionOptions& options) {
    if (!(options.tau > 0)) {
        throw std::invalid_argument("tau must be positive");
    }
    const auto topology = resolve_topology(tree);
    int max_feature = 0;
    for (const auto& node : tree.nodes) {
        max_feature = std::max(max_feature, node.feature + 1);
    }

    std::vector<double> sharpness;
    if (!options.sharpness.empty()) {
        if (options.sharpness.size() != tree.nodes.size()) {
            throw std::invalid_argument("sharpness has " + std::to_string(options.sharpness.size()) +
                                        " entries for " + std::to_string(tree.nodes.size()) + " nodes");
        }
        sharpness = options.sharpness;
    } else if (options.calibration != nullptr) {
        sharpness = calibrate_sharpness(tree, *options.calibration, options.tau);
    } else {
        sharpness.assign(tree.nodes.size(), 1.0);
    }

    const int n = tree.num_nodes();
    int k = options.feature_count > 0 ? options.feature_count : max_feature;
    if (options.calibration != nullptr) {
        if (options.feature_count > 0 && options.calibration->cols() != options.feature_count) {
            throw std::invalid_argument("calibration samples have " + std::to_string(options.calibration->cols()) +
                                        " features, expected " + std::to_string(options.feature_count));
        }
        k = static_cast<int>(options.calibration->cols());
    }
    if (k < max_feature) {
        throw std::invalid_argument("feature count " + std::to_string(k) + " is smaller than split feature " +
                                    std::to_string(max_feature - 1));
    }
    const int width = tree.leaves.empty() ? 0 : static_cast<int>(tree.leaves.front().value.size());

    NeuralTree nt;
    nt.tau = options.tau;
    nt.W = Matrix::Zero(k, n);
    nt.b = Vector::Zero(n);
    for (int i = 0; i < n; ++i) {
        const auto& node = tree.nodes[i];
        double s = sharpness[i];
        if (!(s > 0) || !std::isfinite(s)) {
            throw std::invalid_argument("sharpness must be positive and finite");
        }
        if (!separates(s, node.threshold)) {
            s = nearest_power_of_two(s);
        }
        nt.W(node.feature, i) = -s;
        nt.b[i] = s * node.threshold;
    }
    nt.pi.resize(tree.num_leaves(), width);
    for (int l = 0; l < tree.num_leaves(); ++l) {
        for (int c = 0; c < width; ++c) {
            nt.pi(l, c) = tree.leaves[l].value[c];
        }
    }
    nt.Q = RoutingMatrix::from_topology(topology);
    nt.check();
    return nt;
}

int node_l0(const NeuralTree& nt, int node) {
    return static_cast<int>((nt.W.col(node).array() != 0.0).count());
}

bool is_axis_parallel(const NeuralTree& nt) {
    for (int i = 0; i < nt.num_nodes(); ++i) {
        if (node_l0(nt, i) != 1) {
            return false;
        }
    }
    return true;
}

namespace {

// Largest double x with (w * x + b >= 0) == positive, for a monotone predicate.
double boundary(double w, double b, bool want_positive) {
    auto holds = [&](double x) { return (w * x + b >= 0.0) == want_positive; };
    constexpr double inf = std::numeric_limits<double>::infinity();
    double t = -b / w;
    if (!std::isfinite(t)) {
        throw StateError("node threshold is not finite");
    }
    for (int step = 0; step < 64 && !holds(t); ++step) {
        t = std::nextafter(t, -inf);
    }
    for (int step = 0; step < 64 && holds(std::nextafter(t, inf)); ++step) {
        t = std::nextafter(t, inf);
    }
    if (!holds(t)) {
        throw StateError("could not locate an exact axis threshold");
    }
    return t;
}

}  // namespace

TreeStructure export_axis_tree(const NeuralTree& nt, double leaf_scale) {
    const int n = nt.num_nodes();
    for (int i = 0; i < n; ++i) {
        if (node_l0(nt, i) != 1) {
            throw StateError("tree is oblique, sparsify first (node " + std::to_string(i) + " has " +
                             std::to_string(node_l0(nt, i)) + " nonzero weights)");
        }
    }
    const auto& topo = nt.Q.topology();
    auto ref = [](const TreeTopology::Child& c) { return c.is_leaf ? ChildRef::leaf(c.index) : ChildRef::node(c.index); };

    TreeStructure tree;
    tree.nodes.resize(n);
    for (int i = 0; i < n; ++i) {
        Eigen::Index j = 0;
        nt.W.col(i).cwiseAbs().maxCoeff(&j);
        const double w = nt.W(j, i);
        auto& node = tree.nodes[i];
        node.id = i;
        node.feature = static_cast<int>(j);
        if (w < 0) {
            // positive route iff x_j <= t
            node.threshold = boundary(w, nt.b[i], true);
            node.left = ref(topo.left[i]);
            node.right = ref(topo.right[i]);
        } else {
            // positive route iff x_j >= t; export the negative side as "<="
            node.threshold = boundary(w, nt.b[i], false);
            node.left = ref(topo.right[i]);
            node.right = ref(topo.left[i]);
        }
    }
    tree.leaves.resize(nt.num_leaves());
    for (int l = 0; l < nt.num_leaves(); ++l) {
        tree.leaves[l].id = l;
        tree.leaves[l].value.resize(nt.num_classes());
        for (int c = 0; c < nt.num_classes(); ++c) {
            tree.leaves[l].value[c] = leaf_scale * nt.pi(l, c);
        }
    }
    return tree;
}

}  // namespace treexfer
