#include "treexfer/ensemble.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "treexfer/errors.hpp"
#include "treexfer/parallel.hpp"

namespace treexfer {

void TreeEnsemble::check() const {
    if (v.size() != size()) {
        throw std::invalid_argument("stacking weights have " + std::to_string(v.size()) + " entries for " +
                                    std::to_string(size()) + " trees");
    }
    if (!gates.empty() && static_cast<int>(gates.size()) != size()) {
        throw std::invalid_argument("gate sets must be absent or one per tree");
    }
    for (int t = 0; t < size(); ++t) {
        const auto& nt = trees[t];
        nt.check();
        if (nt.num_features() != feature_count || nt.num_classes() != num_class) {
            throw std::invalid_argument("tree " + std::to_string(t) + " disagrees with ensemble shape (" +
                                        std::to_string(nt.num_features()) + " features, " +
                                        std::to_string(nt.num_classes()) + " classes)");
        }
        if (!gates.empty()) {
            gates[t].check();
            if (gates[t].num_features() != feature_count || gates[t].num_nodes() != nt.num_nodes()) {
                throw std::invalid_argument("gate set " + std::to_string(t) + " does not match its tree");
            }
        }
    }
}

Vector softmax(const VectorRef& logits) {
    if (logits.size() == 0) {
        return Vector();
    }
    const double m = logits.maxCoeff();
    Vector p = (logits.array() - m).exp();
    return p / p.sum();
}

namespace {

GateMode evaluation_mode(GateMode mode) {
    return mode == GateMode::gumbel_st ? GateMode::deterministic : mode;
}

}  // namespace

TreeEnsemble materialize_gates(const TreeEnsemble& e) {
    if (!e.has_gates()) {
        return e;
    }
    TreeEnsemble out = e;
    out.gates.clear();
    for (int t = 0; t < e.size(); ++t) {
        out.trees[t].W = e.trees[t].W.cwiseProduct(gate_matrix(e.gates[t], evaluation_mode(e.gate_mode)));
    }
    return out;
}

namespace {

Vector tree_output(const NeuralTree& nt, const VectorRef& x, PredictMode mode) {
    return mode == PredictMode::soft ? predict_soft(nt, x) : predict_hard(nt, x).value;
}

}  // namespace

EnsemblePrediction predict_ensemble(const TreeEnsemble& e, const VectorRef& x, PredictMode mode) {
    if (x.size() != e.feature_count) {
        throw std::invalid_argument("input has " + std::to_string(x.size()) + " features, ensemble expects " +
                                    std::to_string(e.feature_count));
    }
    const TreeEnsemble& model = e.has_gates() ? materialize_gates(e) : e;
    EnsemblePrediction p;
    p.logits = Vector::Zero(e.num_class);
    for (int t = 0; t < model.size(); ++t) {
        p.logits += model.v[t] * tree_output(model.trees[t], x, mode);
    }
    p.probs = softmax(p.logits);
    return p;
}

Matrix predict_logits(const TreeEnsemble& e, const Matrix& X, PredictMode mode, int threads) {
    if (X.cols() != e.feature_count) {
        throw std::invalid_argument("data has " + std::to_string(X.cols()) + " features, ensemble expects " +
                                    std::to_string(e.feature_count));
    }
    const TreeEnsemble model = materialize_gates(e);
    std::vector<Matrix> per_tree(model.size());
    parallel_for(model.size(), threads, [&](int t) {
        if (mode == PredictMode::soft) {
            per_tree[t] = predict_soft_batch(model.trees[t], X);
            return;
        }
        Matrix z(X.rows(), model.num_class);
        for (Eigen::Index r = 0; r < X.rows(); ++r) {
            z.row(r) = predict_hard(model.trees[t], X.row(r).transpose()).value.transpose();
        }
        per_tree[t] = std::move(z);
    });
    Matrix logits = Matrix::Zero(X.rows(), model.num_class);
    for (int t = 0; t < model.size(); ++t) {
        logits += model.v[t] * per_tree[t];
    }
    return logits;
}

std::vector<int> predict_classes(const TreeEnsemble& e, const Matrix& X, PredictMode mode, int threads) {
    const Matrix logits = predict_logits(e, X, mode, threads);
    std::vector<int> out(static_cast<std::size_t>(X.rows()));
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        Eigen::Index c = 0;
        logits.row(r).maxCoeff(&c);
        out[r] = static_cast<int>(c);
    }
    return out;
}

TreeEnsemble convert_ensemble(const CanonicalTreeModel& model, const ConversionOptions& options) {
    validate(model);
    if (model.trees.empty()) {
        throw InputError("model has no trees");
    }
    const int C = model.objective == Objective::binary ? 2 : model.num_class;
    if (model.objective == Objective::binary && model.num_class != 1) {
        throw InputError("unsupported objective: binary model with num_class != 1");
    }

    ConversionOptions opts = options;
    opts.feature_count = model.feature_count;

    TreeEnsemble e;
    e.num_class = C;
    e.feature_count = model.feature_count;
    e.v = Vector::Ones(static_cast<Eigen::Index>(model.trees.size()));
    e.trees.reserve(model.trees.size());
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
        NeuralTree nt = to_neural_tree(model.trees[t], opts);
        const Matrix leaves = nt.pi;
        if (leaves.cols() == C) {
            e.trees.push_back(std::move(nt));
            continue;
        }
        if (leaves.cols() != 1) {
            throw InputError("tree " + std::to_string(t) + " has leaf vectors of width " +
                             std::to_string(leaves.cols()));
        }
        const int column = model.objective == Objective::binary ? 1 : static_cast<int>(t % C);
        nt.pi = Matrix::Zero(leaves.rows(), C);
        nt.pi.col(column) = leaves.col(0);
        e.trees.push_back(std::move(nt));
    }
    e.check();
    return e;
}

CanonicalTreeModel export_ensemble(const TreeEnsemble& e) {
    if (e.has_gates()) {
        throw StateError("ensemble still carries gates; project to axis-parallel splits first");
    }
    CanonicalTreeModel model;
    model.feature_count = e.feature_count;
    if (e.num_class == 2) {
        model.objective = Objective::binary;
        model.num_class = 1;
    } else {
        model.objective = Objective::multiclass;
        model.num_class = e.num_class;
    }
    for (int t = 0; t < e.size(); ++t) {
        auto tree = export_axis_tree(e.trees[t], e.v[t]);
        if (e.num_class == 2) {
            for (auto& leaf : tree.leaves) {
                leaf.value = {leaf.value[1] - leaf.value[0]};
            }
        }
        model.trees.push_back(std::move(tree));
    }
    validate(model);
    return model;
}

TreeEnsemble truncate(const TreeEnsemble& e, int count) {
    if (count < 0 || count >= e.size()) {
        return e;
    }
    TreeEnsemble out = e;
    out.trees.resize(count);
    out.v.conservativeResize(count);
    if (out.has_gates()) {
        out.gates.resize(count);
    }
    return out;
}

}  // namespace treexfer
