#pragma once

#include <optional>
#include <vector>

#include "treexfer/neural_tree.hpp"
#include "treexfer/tree_model.hpp"

namespace treexfer {

struct ConversionOptions {
    double tau = default_tau;

    // Input dimension k. Zero means: calibration width, else 1 + max split feature.
    int feature_count = 0;

    // Calibration samples (rows = samples). When present, each node's
    // sharpness s_i is chosen so that the median |margin| over the samples
    // reaching the node equals 4 * tau; otherwise s_i = 1.
    const Matrix* calibration = nullptr;

    // Explicit per-node sharpness, overriding calibration when non-empty.
    std::vector<double> sharpness;
};

// Node i splitting on (feature j, threshold t) becomes w_i = -s_i e_j,
// b_i = s_i t, so the positive (left) route is taken iff x_j <= t. Hard
// routing reproduces the source traversal on every finite input. The rows
// of pi are the leaf value vectors as stored in the tree.
NeuralTree to_neural_tree(const TreeStructure& tree, const ConversionOptions& options);

// Per-node sharpness from calibration samples. Nodes that no sample reaches
// use the margins of all samples.
std::vector<double> calibrate_sharpness(const TreeStructure& tree, const Matrix& samples, double tau);

// Number of nonzero weights in node i's column.
int node_l0(const NeuralTree& nt, int node);

bool is_axis_parallel(const NeuralTree& nt);

// Inverse of to_neural_tree for axis-parallel trees. Thresholds are chosen
// so that `x <= threshold` matches the neural tree's hard route on every
// double input; nodes with a positive weight get their children swapped.
// Leaf values are the rows of pi, scaled by `leaf_scale`.
// Throws StateError("tree is oblique, sparsify first") otherwise.
TreeStructure export_axis_tree(const NeuralTree& nt, double leaf_scale = 1.0);

}  // namespace treexfer
