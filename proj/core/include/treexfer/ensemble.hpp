#pragma once

#include <vector>

#include "treexfer/conversion.hpp"
#include "treexfer/gates.hpp"
#include "treexfer/neural_tree.hpp"
#include "treexfer/tree_model.hpp"

namespace treexfer {

// Stacked combination of neural trees: logits = sum_k v_k z_k(x).
struct TreeEnsemble {
    std::vector<NeuralTree> trees;
    Vector v;
    int num_class = 2;
    int feature_count = 0;

    // Empty, or one gate set per tree. gate_mode says how gates enter the
    // forward pass; evaluation replaces gumbel_st by its deterministic argmax.
    std::vector<GateSet> gates;
    GateMode gate_mode = GateMode::expected;

    int size() const { return static_cast<int>(trees.size()); }
    bool has_gates() const { return !gates.empty(); }

    // Throws std::invalid_argument on inconsistent shapes.
    void check() const;
};

enum class PredictMode { soft, hard };

struct EnsemblePrediction {
    Vector logits;
    Vector probs;
};

Vector softmax(const VectorRef& logits);

EnsemblePrediction predict_ensemble(const TreeEnsemble& e, const VectorRef& x, PredictMode mode);

// Ungated copy whose W holds the effective (gate-multiplied) weights used at
// evaluation time. Returns the ensemble unchanged when it has no gates.
TreeEnsemble materialize_gates(const TreeEnsemble& e);

// Batch logits (samples x classes), parallel over trees with a fixed reduction order.
Matrix predict_logits(const TreeEnsemble& e, const Matrix& X, PredictMode mode, int threads = 1);
std::vector<int> predict_classes(const TreeEnsemble& e, const Matrix& X, PredictMode mode, int threads = 1);

// One neural tree per source tree. Binary scalar leaves become (0, value);
// multiclass scalar leaves land in column (tree index mod num_class).
TreeEnsemble convert_ensemble(const CanonicalTreeModel& model, const ConversionOptions& options);

// Canonical model of an axis-parallel ensemble with v folded into the leaf
// values. Two-class ensembles export as binary with value z_1 - z_0.
CanonicalTreeModel export_ensemble(const TreeEnsemble& e);

// Keeps the first `count` trees.
TreeEnsemble truncate(const TreeEnsemble& e, int count);

}  // namespace treexfer
