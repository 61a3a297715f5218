#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "treexfer/dataset.hpp"
#include "treexfer/ensemble.hpp"
#include "treexfer/gates.hpp"
#include "treexfer/train.hpp"

namespace treexfer {

// Reduces every node to one feature. The kept feature maximizes
// gate x |W|, where gate is the evaluation-time gate (expected gate, or the
// one-hot argmax selection in the gumbel and deterministic modes; 1 without
// gates). Ties go to the lowest index. The kept
// weight becomes sign(w_j) ||w_eff||_2 and b is scaled by ||w_eff|| / |w_j|,
// so the boundary's crossing of the kept axis is unchanged. Nodes whose
// effective weights already have one nonzero are copied exactly.
// Throws StateError("no selectable feature") when a node scores all zero.
NeuralTree project_axis_parallel(const NeuralTree& nt, const GateSet* gates = nullptr,
                                 GateMode mode = GateMode::expected);

// Projects every tree; the result carries no gates.
TreeEnsemble project_ensemble(const TreeEnsemble& e);

// Attaches fully open gates to every tree.
TreeEnsemble attach_gates(const TreeEnsemble& e, GateMode mode, const HardConcrete& hc = {},
                          double gumbel_tau = 1.0, double log_alpha_init = 3.0);

// Mean count per node of nonzero evaluation-time gates.
double mean_active_gates(const TreeEnsemble& e);

struct PipelineConfig {
    TrainConfig oblique;      // stage 1, penalty weights live here
    TrainConfig axis;         // stage 2, run with frozen support and no gates
    GateMode gate_mode = GateMode::expected;
    HardConcrete hc;
    double gumbel_tau = 1.0;
    double log_alpha_init = 3.0;
    bool standardize = true;  // train in z-scored feature space, report in raw space
    std::optional<std::uint64_t> reinit_seed;   // random re-initialization in training space
    PredictMode eval_mode = PredictMode::soft;
};

struct StageAccuracy {
    double train = 0.0;
    std::optional<double> test;
};

struct PipelineReport {
    StageAccuracy initial;
    StageAccuracy oblique;      // after stage 1
    StageAccuracy projected;    // right after projection
    StageAccuracy axis;         // after stage 2
    double mean_active_gates = 0.0;
    std::vector<EpochRecord> oblique_history;
    std::vector<EpochRecord> axis_history;
};

struct PipelineResult {
    TreeEnsemble model;     // axis-parallel, raw feature space
    TreeEnsemble oblique;   // stage-1 model with gates materialized, raw feature space
    PipelineReport report;
};

PipelineResult two_stage_pipeline(const TreeEnsemble& model, const Dataset& train, const Dataset* test,
                                  const PipelineConfig& config);

}  // namespace treexfer
