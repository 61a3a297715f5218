#include "treexfer/neural_tree.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "treexfer/errors.hpp"

namespace treexfer {

double log_sigmoid(double z) {
    return -(std::max(-z, 0.0) + std::log1p(std::exp(-std::abs(z))));
}

namespace {

double sigmoid(double z) {
    if (z >= 0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace

RoutingMatrix RoutingMatrix::from_topology(const TreeTopology& topology) {
    RoutingMatrix q;
    q.topology_ = topology;
    const int n = topology.num_nodes();
    q.paths_.assign(n + 1, {});

    struct Frame {
        TreeTopology::Child at;
        std::vector<int> path;
    };
    std::vector<Frame> stack{{topology.root, {}}};
    while (!stack.empty()) {
        auto frame = std::move(stack.back());
        stack.pop_back();
        if (frame.at.is_leaf) {
            std::sort(frame.path.begin(), frame.path.end());
            q.paths_.at(frame.at.index) = std::move(frame.path);
            continue;
        }
        const int i = frame.at.index;
        auto right = frame.path;
        right.push_back(n + i);
        frame.path.push_back(i);
        stack.push_back({topology.right[i], std::move(right)});
        stack.push_back({topology.left[i], std::move(frame.path)});
    }
    return q;
}

RoutingMatrix RoutingMatrix::from_dense(const std::vector<std::vector<int>>& rows) {
    const int leaves = static_cast<int>(rows.size());
    if (leaves < 1) {
        throw InputError("routing matrix has no rows");
    }
    const int n = leaves - 1;
    for (int l = 0; l < leaves; ++l) {
        if (static_cast<int>(rows[l].size()) != 2 * n) {
            throw InputError("routing matrix row " + std::to_string(l) + " has " + std::to_string(rows[l].size()) +
                             " columns, expected " + std::to_string(2 * n));
        }
        for (int c = 0; c < 2 * n; ++c) {
            if (rows[l][c] != 0 && rows[l][c] != 1) {
                throw InputError("routing matrix entries must be 0 or 1");
            }
        }
        for (int i = 0; i < n; ++i) {
            if (rows[l][i] && rows[l][n + i]) {
                throw InputError("routing matrix row " + std::to_string(l) + " takes both routes of node " +
                                 std::to_string(i));
            }
        }
    }

    TreeTopology topo;
    topo.left.resize(n);
    topo.right.resize(n);
    if (n == 0) {
        topo.root = {true, 0};
    } else {
        auto leaves_under = [&](int column) {
            std::vector<int> out;
            for (int l = 0; l < leaves; ++l) {
                if (rows[l][column]) {
                    out.push_back(l);
                }
            }
            return out;
        };
        std::vector<std::vector<int>> subtree(n);
        int root = -1;
        for (int i = 0; i < n; ++i) {
            auto l = leaves_under(i);
            auto r = leaves_under(n + i);
            if (l.empty() || r.empty()) {
                throw InputError("routing matrix node " + std::to_string(i) + " has an empty branch");
            }
            subtree[i] = l;
            subtree[i].insert(subtree[i].end(), r.begin(), r.end());
            std::sort(subtree[i].begin(), subtree[i].end());
            if (static_cast<int>(subtree[i].size()) == leaves) {
                if (root >= 0) {
                    throw InputError("routing matrix has more than one root node");
                }
                root = i;
            }
        }
        if (root < 0) {
            throw InputError("routing matrix has no root node");
        }
        topo.root = {false, root};
        auto child_for = [&](int i, const std::vector<int>& branch) -> TreeTopology::Child {
            if (branch.size() == 1) {
                return {true, branch.front()};
            }
            for (int j = 0; j < n; ++j) {
                if (j != i && subtree[j] == branch) {
                    return {false, j};
                }
            }
            throw InputError("routing matrix node " + std::to_string(i) + " has no child covering its branch");
        };
        for (int i = 0; i < n; ++i) {
            topo.left[i] = child_for(i, leaves_under(i));
            topo.right[i] = child_for(i, leaves_under(n + i));
        }
    }

    // Re-trace every root-to-leaf path; this rejects any matrix whose rows do
    // not enumerate the paths of the reconstructed tree exactly.
    RoutingMatrix q;
    try {
        q = from_topology(topo);
    } catch (const std::out_of_range&) {
        throw InputError("routing matrix does not describe a tree");
    }
    if (q.dense() != rows) {
        throw InputError("routing matrix rows do not trace root-to-leaf paths");
    }
    return q;
}

bool RoutingMatrix::operator()(int leaf, int column) const {
    const auto& p = paths_.at(leaf);
    return std::binary_search(p.begin(), p.end(), column);
}

std::vector<std::vector<int>> RoutingMatrix::dense() const {
    std::vector<std::vector<int>> rows(num_leaves(), std::vector<int>(num_columns(), 0));
    for (int l = 0; l < num_leaves(); ++l) {
        for (int c : paths_[l]) {
            rows[l][c] = 1;
        }
    }
    return rows;
}

RoutingMatrix build_routing_matrix(const TreeStructure& tree) {
    return RoutingMatrix::from_topology(resolve_topology(tree));
}

void NeuralTree::check() const {
    const int n = num_nodes();
    if (W.cols() != n) {
        throw std::invalid_argument("W has " + std::to_string(W.cols()) + " columns, expected " + std::to_string(n));
    }
    if (Q.num_nodes() != n || Q.num_leaves() != n + 1) {
        throw std::invalid_argument("routing matrix does not match node count");
    }
    if (pi.rows() != n + 1) {
        throw std::invalid_argument("pi has " + std::to_string(pi.rows()) + " rows, expected " +
                                    std::to_string(n + 1));
    }
    if (!(tau > 0)) {
        throw std::invalid_argument("tau must be positive");
    }
}

namespace {

void check_input(const NeuralTree& nt, const VectorRef& x) {
    if (x.size() != nt.num_features()) {
        throw std::invalid_argument("input has " + std::to_string(x.size()) + " features, tree expects " +
                                    std::to_string(nt.num_features()));
    }
}

}  // namespace

Vector node_preactivation(const NeuralTree& nt, const VectorRef& x) {
    check_input(nt, x);
    return (nt.W.transpose() * x + nt.b) / nt.tau;
}

Vector node_probabilities(const NeuralTree& nt, const VectorRef& x) {
    const Vector a = node_preactivation(nt, x);
    const int n = static_cast<int>(a.size());
    Vector D(2 * n);
    for (int i = 0; i < n; ++i) {
        D[i] = sigmoid(2.0 * a[i]);
        D[n + i] = sigmoid(-2.0 * a[i]);
    }
    return D;
}

RouteProbabilities route_from_preactivation(const RoutingMatrix& Q, const VectorRef& a) {
    const int n = static_cast<int>(a.size());
    RouteProbabilities r;
    r.D.resize(2 * n);
    r.log_D.resize(2 * n);
    for (int i = 0; i < n; ++i) {
        r.D[i] = sigmoid(2.0 * a[i]);
        r.D[n + i] = sigmoid(-2.0 * a[i]);
        r.log_D[i] = log_sigmoid(2.0 * a[i]);
        r.log_D[n + i] = log_sigmoid(-2.0 * a[i]);
    }
    r.mu.resize(Q.num_leaves());
    for (int l = 0; l < Q.num_leaves(); ++l) {
        double s = 0.0;
        for (int c : Q.path(l)) {
            s += r.log_D[c];
        }
        r.mu[l] = std::exp(s);
    }
    return r;
}

RouteProbabilities route(const NeuralTree& nt, const VectorRef& x) {
    return route_from_preactivation(nt.Q, node_preactivation(nt, x));
}

Vector predict_soft(const NeuralTree& nt, const VectorRef& x) {
    return nt.pi.transpose() * route(nt, x).mu;
}

BatchRoutes route_batch(const RoutingMatrix& Q, const Matrix& A) {
    const auto n = A.rows();
    const auto m = A.cols();
    BatchRoutes r;
    r.D.resize(2 * n, m);
    r.log_D.resize(2 * n, m);
    r.mu.resize(Q.num_leaves(), m);
    for (Eigen::Index s = 0; s < m; ++s) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double a2 = 2.0 * A(i, s);
            r.D(i, s) = sigmoid(a2);
            r.D(n + i, s) = sigmoid(-a2);
            r.log_D(i, s) = log_sigmoid(a2);
            r.log_D(n + i, s) = log_sigmoid(-a2);
        }
        for (int l = 0; l < Q.num_leaves(); ++l) {
            double acc = 0.0;
            for (int c : Q.path(l)) {
                acc += r.log_D(c, s);
            }
            r.mu(l, s) = std::exp(acc);
        }
    }
    return r;
}

Matrix predict_soft_batch(const NeuralTree& nt, const Matrix& X) {
    if (X.cols() != nt.num_features()) {
        throw std::invalid_argument("input has " + std::to_string(X.cols()) + " features, tree expects " +
                                    std::to_string(nt.num_features()));
    }
    const Matrix A = ((nt.W.transpose() * X.transpose()).colwise() + nt.b) / nt.tau;
    return (nt.pi.transpose() * route_batch(nt.Q, A).mu).transpose();
}

HardPrediction predict_hard(const NeuralTree& nt, const VectorRef& x) {
    check_input(nt, x);
    const auto& topo = nt.Q.topology();
    auto at = topo.root;
    while (!at.is_leaf) {
        const int i = at.index;
        const double margin = nt.W.col(i).dot(x) + nt.b[i];
        at = margin >= 0.0 ? topo.left[i] : topo.right[i];
    }
    return {at.index, nt.pi.row(at.index).transpose()};
}

}  // namespace treexfer
