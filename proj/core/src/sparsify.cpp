#include "treexfer/sparsify.hpp"

#include <cmath>
#include <string>

#include "treexfer/conversion.hpp"
#include "treexfer/errors.hpp"

namespace treexfer {

NeuralTree project_axis_parallel(const NeuralTree& nt, const GateSet* gates, GateMode mode) {
    nt.check();
    Matrix G = Matrix::Ones(nt.num_features(), nt.num_nodes());
    if (gates != nullptr) {
        gates->check();
        if (gates->num_features() != nt.num_features() || gates->num_nodes() != nt.num_nodes()) {
            throw std::invalid_argument("gate set does not match the tree");
        }
        const GateMode eval = mode == GateMode::gumbel_st ? GateMode::deterministic : mode;
        G = gate_matrix(*gates, eval);
    }

    NeuralTree out = nt;
    for (int i = 0; i < nt.num_nodes(); ++i) {
        const Vector w = nt.W.col(i).cwiseProduct(G.col(i));
        const Vector score = G.col(i).cwiseProduct(nt.W.col(i).cwiseAbs());
        int keep = 0;
        for (int j = 1; j < score.size(); ++j) {
            if (score[j] > score[keep]) {
                keep = j;
            }
        }
        if (!(score[keep] > 0.0)) {
            throw StateError("no selectable feature at node " + std::to_string(i));
        }
        out.W.col(i).setZero();
        if ((w.array() != 0.0).count() == 1 && w[keep] != 0.0) {
            out.W(keep, i) = w[keep];
            continue;
        }
        const double norm = w.norm();
        const double wj = w[keep];
        if (wj == 0.0) {
            throw StateError("no selectable feature at node " + std::to_string(i));
        }
        out.W(keep, i) = std::copysign(norm, wj);
        out.b[i] = nt.b[i] * (norm / std::abs(wj));
    }
    return out;
}

TreeEnsemble project_ensemble(const TreeEnsemble& e) {
    e.check();
    TreeEnsemble out = e;
    out.gates.clear();
    for (int t = 0; t < e.size(); ++t) {
        out.trees[t] = project_axis_parallel(e.trees[t], e.has_gates() ? &e.gates[t] : nullptr, e.gate_mode);
    }
    return out;
}

TreeEnsemble attach_gates(const TreeEnsemble& e, GateMode mode, const HardConcrete& hc, double gumbel_tau,
                          double log_alpha_init) {
    TreeEnsemble out = e;
    out.gate_mode = mode;
    out.gates.clear();
    for (const auto& nt : e.trees) {
        auto g = GateSet::open(nt.num_features(), nt.num_nodes(), log_alpha_init);
        g.hc = hc;
        g.gumbel_tau = gumbel_tau;
        g.check();
        out.gates.push_back(std::move(g));
    }
    return out;
}

double mean_active_gates(const TreeEnsemble& e) {
    if (!e.has_gates()) {
        return 0.0;
    }
    const GateMode eval = e.gate_mode == GateMode::gumbel_st ? GateMode::deterministic : e.gate_mode;
    long active = 0;
    long nodes = 0;
    for (const auto& g : e.gates) {
        active += (gate_matrix(g, eval).array() != 0.0).count();
        nodes += g.num_nodes();
    }
    return nodes == 0 ? 0.0 : static_cast<double>(active) / static_cast<double>(nodes);
}

namespace {

StageAccuracy measure(const TreeEnsemble& e, const Dataset& train, const Dataset* test, PredictMode mode,
                      int threads) {
    StageAccuracy a;
    a.train = evaluate(e, train, mode, threads).accuracy;
    if (test != nullptr) {
        a.test = evaluate(e, *test, mode, threads).accuracy;
    }
    return a;
}

}  // namespace

PipelineResult two_stage_pipeline(const TreeEnsemble& model, const Dataset& train, const Dataset* test,
                                  const PipelineConfig& config) {
    model.check();
    if (model.has_gates()) {
        throw StateError("pipeline input must be ungated");
    }
    const int threads = config.oblique.threads;
    PipelineResult result;
    auto& report = result.report;
    report.initial = measure(model, train, test, config.eval_mode, threads);

    std::optional<Standardizer> z;
    if (config.standardize) {
        z = Standardizer::fit(train.X);
    }
    const Dataset train_z = z ? z->apply(train) : train;
    auto to_raw = [&](const TreeEnsemble& m) { return z ? z->fold(m) : m; };

    TreeEnsemble e = z ? z->unfold(model) : model;
    if (config.reinit_seed) {
        e = reinitialize(e, *config.reinit_seed);
        report.initial = measure(to_raw(e), train, test, config.eval_mode, threads);
    }
    e = attach_gates(e, config.gate_mode, config.hc, config.gumbel_tau, config.log_alpha_init);
    auto stage1 = train_ensemble(e, train_z, config.oblique);
    report.oblique_history = std::move(stage1.history);
    report.mean_active_gates = mean_active_gates(stage1.model);

    result.oblique = to_raw(materialize_gates(stage1.model));
    report.oblique = measure(result.oblique, train, test, config.eval_mode, threads);

    const TreeEnsemble projected = project_ensemble(stage1.model);
    report.projected = measure(to_raw(projected), train, test, config.eval_mode, threads);

    TrainConfig axis = config.axis;
    axis.freeze_support = true;
    auto stage2 = train_ensemble(projected, train_z, axis);
    report.axis_history = std::move(stage2.history);
    result.model = to_raw(stage2.model);
    report.axis = measure(result.model, train, test, config.eval_mode, threads);
    return result;
}

}  // namespace treexfer
