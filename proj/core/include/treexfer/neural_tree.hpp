#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "treexfer/tree_model.hpp"

namespace treexfer {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using VectorRef = Eigen::Ref<const Eigen::VectorXd>;

inline constexpr double default_tau = 0.1;

// Fixed binary routing matrix Q of shape leaves x 2n. Column i is the
// positive (left, x_j <= t) route of node i and column n+i its negative
// route. Stored sparsely: each leaf keeps the sorted list of its set columns.
class RoutingMatrix {
public:
    RoutingMatrix() = default;

    static RoutingMatrix from_topology(const TreeTopology& topology);

    // Rebuilds the matrix (and the tree topology) from a dense 0/1 matrix,
    // checking every invariant. Throws InputError when the rows do not
    // describe a full binary tree.
    static RoutingMatrix from_dense(const std::vector<std::vector<int>>& rows);

    int num_nodes() const { return topology_.num_nodes(); }
    int num_leaves() const { return static_cast<int>(paths_.size()); }
    int num_columns() const { return 2 * num_nodes(); }

    bool operator()(int leaf, int column) const;
    std::span<const int> path(int leaf) const { return paths_[leaf]; }
    std::vector<std::vector<int>> dense() const;
    const TreeTopology& topology() const { return topology_; }

    friend bool operator==(const RoutingMatrix& a, const RoutingMatrix& b) { return a.paths_ == b.paths_; }

private:
    std::vector<std::vector<int>> paths_;
    TreeTopology topology_;
};

RoutingMatrix build_routing_matrix(const TreeStructure& tree);

// Three-layer differentiable tree. Node layer (W, b), fixed routing layer Q,
// leaf layer pi. Pre-activation of node i is a_i = (W.col(i).x + b_i) / tau.
struct NeuralTree {
    Matrix W;    // features x nodes
    Vector b;    // nodes
    Matrix pi;   // leaves x classes
    RoutingMatrix Q;
    double tau = default_tau;

    int num_features() const { return static_cast<int>(W.rows()); }
    int num_nodes() const { return static_cast<int>(b.size()); }
    int num_leaves() const { return static_cast<int>(pi.rows()); }
    int num_classes() const { return static_cast<int>(pi.cols()); }

    // Throws std::invalid_argument when shapes disagree or tau <= 0.
    void check() const;
};

struct RouteProbabilities {
    Vector D;       // 2n route probabilities: D[i] + D[n+i] = 1
    Vector log_D;   // log of D, computed directly as log-sigmoid
    Vector mu;      // leaf reach probabilities, sums to 1
};

// a = (W^T x + b) / tau
Vector node_preactivation(const NeuralTree& nt, const VectorRef& x);

// Per-node pairwise softmax of (a_i, -a_i): D[i] = logistic(2 a_i).
Vector node_probabilities(const NeuralTree& nt, const VectorRef& x);

// Route probabilities from already computed pre-activations.
RouteProbabilities route_from_preactivation(const RoutingMatrix& Q, const VectorRef& a);

// mu = exp(Q log D), product pooling over each leaf's path.
RouteProbabilities route(const NeuralTree& nt, const VectorRef& x);

// Class logits z = pi^T mu.
Vector predict_soft(const NeuralTree& nt, const VectorRef& x);

// Column-per-sample variant of route_from_preactivation; A is nodes x samples.
struct BatchRoutes {
    Matrix D;       // 2n x samples
    Matrix log_D;   // 2n x samples
    Matrix mu;      // leaves x samples
};

BatchRoutes route_batch(const RoutingMatrix& Q, const Matrix& A);

// Soft logits for every row of X (samples x features); returns samples x classes.
Matrix predict_soft_batch(const NeuralTree& nt, const Matrix& X);

struct HardPrediction {
    int leaf = 0;
    Vector value;
};

// Deterministic descent: positive route iff W.col(i).x + b_i >= 0.
HardPrediction predict_hard(const NeuralTree& nt, const VectorRef& x);

// log(logistic(z)) without overflow.
double log_sigmoid(double z);

}  // namespace treexfer
