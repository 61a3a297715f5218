#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "treexfer/dataset.hpp"
#include "treexfer/ensemble.hpp"
#include "treexfer/gates.hpp"
#include "treexfer/neural_tree.hpp"

namespace treexfer {

// -log softmax(logits)[label] via log-sum-exp. Throws InputError for a bad label.
double loss_cross_entropy(const VectorRef& logits, int label);

struct Gradients {
    Matrix dW;
    Vector db;
    Matrix dpi;
};

struct GateGradients {
    Matrix d_log_alpha;
    Matrix dv;
};

struct EnsembleGradients {
    std::vector<Gradients> trees;
    Vector dv;
    std::vector<GateGradients> gates;   // empty when the ensemble has no gates
    double loss = 0.0;                  // mean cross-entropy plus penalty
};

// Gradient of loss_cross_entropy(predict_soft(nt, x), label) w.r.t. W, b, pi.
Gradients backward(const NeuralTree& nt, const VectorRef& x, int label);

struct GradientOptions {
    double lambda_l0 = 0.0;
    double lambda_l1 = 0.0;
    // Gumbel draws for gumbel_st gates; `tree` is filled in per tree.
    NoiseKey noise;
    int threads = 1;
};

// Mean cross-entropy over the rows of X (soft mode) plus the gate penalty,
// and its gradient w.r.t. every tree, the stacking weights and the gates.
// gumbel_st gates use one draw per node for the whole batch.
EnsembleGradients ensemble_backward(const TreeEnsemble& e, const Matrix& X, const std::vector<int>& y,
                                    const GradientOptions& options = {});

struct Evaluation {
    double loss = 0.0;       // mean cross-entropy, no penalty
    double accuracy = 0.0;
};

Evaluation evaluate(const TreeEnsemble& e, const Dataset& data, PredictMode mode, int threads = 1);

// Keeps structure, Q and tau; W ~ U(-1/sqrt(k), 1/sqrt(k)), b = 0,
// pi ~ U(-0.1, 0.1), v = 1.
TreeEnsemble reinitialize(const TreeEnsemble& e, std::uint64_t seed);

enum class OptimizerKind { sgd, adam };

OptimizerKind parse_optimizer(const std::string& name);
std::string to_string(OptimizerKind kind);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

enum class TauDecay { constant, exponential };

// constant leaves every tree's tau alone; exponential sets
// tau = start (end/start)^(e/(epochs-1)) before epoch e.
struct TauSchedule {
    TauDecay decay = TauDecay::constant;
    double start = 1.0;
    double end = 0.1;

    double at(int epoch, int epochs) const;
};

struct Trainable {
    bool weights = true;    // W and b
    bool leaves = true;     // pi
    bool stacking = true;   // ensemble v
    bool gates = true;      // log_alpha and per-node selection logits
};

struct TrainConfig {
    double learning_rate = 0.01;
    int batch_size = 32;
    int epochs = 100;
    TauSchedule tau;
    double lambda_l0 = 0.0;
    double lambda_l1 = 0.0;
    std::uint64_t seed = 0;
    OptimizerConfig optimizer;
    Trainable trainable;
    bool freeze_support = false;   // W entries that are zero at the start stay zero
    PredictMode history_mode = PredictMode::soft;
    int threads = 1;

    void check() const;
};

struct EpochRecord {
    int epoch = 0;
    double loss = 0.0;   // full training set, cross-entropy plus penalty
    double acc = 0.0;
    double tau = 0.0;
};

std::string history_jsonl(const std::vector<EpochRecord>& history);

struct TrainResult {
    TreeEnsemble model;
    std::vector<EpochRecord> history;
};

// Trees (and gates) only; the stacking weights stay fixed.
TrainResult train(const TreeEnsemble& model, const Dataset& data, const TrainConfig& config);

// Joint optimization of trees, gates and stacking weights as flagged in config.trainable.
TrainResult train_ensemble(const TreeEnsemble& model, const Dataset& data, const TrainConfig& config);

struct FitOptions {
    bool standardize = true;                   // train in z-scored space, return a raw-space model
    std::optional<std::uint64_t> reinit_seed;  // random re-initialization, applied in training space
};

// train_ensemble wrapped in feature standardization. The model must be ungated when standardizing.
TrainResult fit(const TreeEnsemble& model, const Dataset& data, const TrainConfig& config, const FitOptions& options);

}  // namespace treexfer
