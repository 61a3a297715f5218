#include "treexfer/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "treexfer/errors.hpp"
#include "treexfer/parallel.hpp"

namespace treexfer {

double loss_cross_entropy(const VectorRef& logits, int label) {
    if (label < 0 || label >= logits.size()) {
        throw InputError("label " + std::to_string(label) + " outside [0, " + std::to_string(logits.size()) + ")");
    }
    const double m = logits.maxCoeff();
    return m + std::log((logits.array() - m).exp().sum()) - logits[label];
}

namespace {

struct TreeForward {
    Matrix G;        // gate values used in the forward pass (empty when ungated)
    Matrix W_eff;
    BatchRoutes routes;
    Matrix Z;        // classes x batch
};

Matrix forward_gates(const GateSet& gates, GateMode mode, const NoiseKey& key) {
    Matrix G(gates.num_features(), gates.num_nodes());
    for (int i = 0; i < gates.num_nodes(); ++i) {
        G.col(i) = node_gates(gates, i, mode, key);
    }
    return G;
}

TreeForward forward_tree(const NeuralTree& nt, const GateSet* gates, GateMode mode, const NoiseKey& key,
                         const Matrix& Xt) {
    TreeForward f;
    if (gates != nullptr) {
        f.G = forward_gates(*gates, mode, key);
        f.W_eff = nt.W.cwiseProduct(f.G);
    } else {
        f.W_eff = nt.W;
    }
    const Matrix A = ((f.W_eff.transpose() * Xt).colwise() + nt.b) / nt.tau;
    f.routes = route_batch(nt.Q, A);
    f.Z = nt.pi.transpose() * f.routes.mu;
    return f;
}

// dZ (classes x batch) -> gradients w.r.t. pi, b and the effective weights.
void backward_tree(const NeuralTree& nt, const TreeForward& f, const Matrix& Xt, const Matrix& dZ, Gradients& g,
                   Matrix& dW_eff) {
    const int n = nt.num_nodes();
    const auto B = Xt.cols();
    const auto& mu = f.routes.mu;
    const auto& D = f.routes.D;

    g.dpi = mu * dZ.transpose();
    const Matrix dMu = nt.pi * dZ;
    Matrix dLogD = Matrix::Zero(2 * n, B);
    for (Eigen::Index s = 0; s < B; ++s) {
        for (int l = 0; l < nt.num_leaves(); ++l) {
            const double d = dMu(l, s) * mu(l, s);
            for (int c : nt.Q.path(l)) {
                dLogD(c, s) += d;
            }
        }
    }
    Matrix dA(n, B);
    for (Eigen::Index s = 0; s < B; ++s) {
        for (int i = 0; i < n; ++i) {
            dA(i, s) = 2.0 * D(n + i, s) * dLogD(i, s) - 2.0 * D(i, s) * dLogD(n + i, s);
        }
    }
    dW_eff = Xt * dA.transpose() / nt.tau;
    g.db = dA.rowwise().sum() / nt.tau;
}

GateGradients gate_backward(const NeuralTree& nt, const GateSet& gates, GateMode mode, const NoiseKey& key,
                            const Matrix& dW_eff) {
    const int k = gates.num_features();
    const int n = gates.num_nodes();
    GateGradients gg{Matrix::Zero(k, n), Matrix::Zero(k, n)};
    const Matrix dG = dW_eff.cwiseProduct(nt.W);
    switch (mode) {
        case GateMode::expected:
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < k; ++j) {
                    gg.d_log_alpha(j, i) = dG(j, i) * expected_gate_grad(gates.log_alpha(j, i), gates.hc);
                }
            }
            break;
        case GateMode::gumbel_st:
            // Straight-through: forward used the one-hot, backward differentiates the soft sample.
            for (int i = 0; i < n; ++i) {
                const auto s =
                    gumbel_softmax_sample(gates.v.col(i), node_gumbel_noise(key, i, k), gates.gumbel_tau).soft;
                const double inner = s.dot(dG.col(i));
                gg.dv.col(i) = s.cwiseProduct((dG.col(i).array() - inner).matrix()) / gates.gumbel_tau;
            }
            break;
        case GateMode::deterministic:
            break;
    }
    return gg;
}

}  // namespace

EnsembleGradients ensemble_backward(const TreeEnsemble& e, const Matrix& X, const std::vector<int>& y,
                                    const GradientOptions& options) {
    if (X.cols() != e.feature_count) {
        throw InputError("data has " + std::to_string(X.cols()) + " features, model expects " +
                         std::to_string(e.feature_count));
    }
    if (static_cast<Eigen::Index>(y.size()) != X.rows() || X.rows() == 0) {
        throw InputError("batch is empty or labels do not match rows");
    }
    const int T = e.size();
    const auto B = X.rows();
    const Matrix Xt = X.transpose();

    auto key_for = [&](int t) {
        NoiseKey key = options.noise;
        key.tree = static_cast<std::uint64_t>(t);
        return key;
    };

    std::vector<TreeForward> fwd(T);
    parallel_for(T, options.threads, [&](int t) {
        fwd[t] = forward_tree(e.trees[t], e.has_gates() ? &e.gates[t] : nullptr, e.gate_mode, key_for(t), Xt);
    });

    Matrix logits = Matrix::Zero(e.num_class, B);
    for (int t = 0; t < T; ++t) {
        logits += e.v[t] * fwd[t].Z;
    }
    EnsembleGradients out;
    Matrix dLogits(e.num_class, B);
    double loss = 0.0;
    for (Eigen::Index s = 0; s < B; ++s) {
        loss += loss_cross_entropy(logits.col(s), y[s]);
        dLogits.col(s) = softmax(logits.col(s));
        dLogits(y[s], s) -= 1.0;
    }
    dLogits /= static_cast<double>(B);
    out.loss = loss / static_cast<double>(B);

    out.trees.resize(T);
    out.dv.resize(T);
    if (e.has_gates()) {
        out.gates.resize(T);
    }
    std::vector<double> penalty(T, 0.0);
    parallel_for(T, options.threads, [&](int t) {
        const auto& nt = e.trees[t];
        out.dv[t] = dLogits.cwiseProduct(fwd[t].Z).sum();
        Matrix dW_eff;
        backward_tree(nt, fwd[t], Xt, e.v[t] * dLogits, out.trees[t], dW_eff);
        if (!e.has_gates()) {
            out.trees[t].dW = std::move(dW_eff);
            return;
        }
        const auto& gates = e.gates[t];
        out.trees[t].dW = dW_eff.cwiseProduct(fwd[t].G);
        out.gates[t] = gate_backward(nt, gates, e.gate_mode, key_for(t), dW_eff);
        if (options.lambda_l0 != 0.0 || options.lambda_l1 != 0.0) {
            penalty[t] = l0_l1_penalty(gates, nt.W, options.lambda_l0, options.lambda_l1);
            const auto pg = l0_l1_penalty_grad(gates, nt.W, options.lambda_l0, options.lambda_l1);
            out.gates[t].d_log_alpha += pg.d_log_alpha;
            out.trees[t].dW += pg.dW;
        }
    });
    for (int t = 0; t < T; ++t) {
        out.loss += penalty[t];
    }
    return out;
}

Gradients backward(const NeuralTree& nt, const VectorRef& x, int label) {
    nt.check();
    TreeEnsemble e;
    e.trees = {nt};
    e.v = Vector::Ones(1);
    e.num_class = nt.num_classes();
    e.feature_count = nt.num_features();
    Matrix X = x.transpose();
    return ensemble_backward(e, X, {label}).trees.front();
}

Evaluation evaluate(const TreeEnsemble& e, const Dataset& data, PredictMode mode, int threads) {
    if (data.size() == 0) {
        throw InputError("empty dataset");
    }
    const Matrix logits = predict_logits(e, data.X, mode, threads);
    Evaluation ev;
    int correct = 0;
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        ev.loss += loss_cross_entropy(logits.row(r).transpose(), data.y[r]);
        Eigen::Index c = 0;
        logits.row(r).maxCoeff(&c);
        correct += static_cast<int>(c) == data.y[r];
    }
    ev.loss /= data.size();
    ev.accuracy = static_cast<double>(correct) / data.size();
    return ev;
}

namespace {

double unit_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

TreeEnsemble reinitialize(const TreeEnsemble& e, std::uint64_t seed) {
    TreeEnsemble out = e;
    std::mt19937_64 rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(1, e.feature_count)));
    for (auto& nt : out.trees) {
        for (Eigen::Index i = 0; i < nt.W.size(); ++i) {
            nt.W.data()[i] = bound * (2.0 * unit_uniform(rng) - 1.0);
        }
        nt.b.setZero();
        for (Eigen::Index i = 0; i < nt.pi.size(); ++i) {
            nt.pi.data()[i] = 0.1 * (2.0 * unit_uniform(rng) - 1.0);
        }
    }
    out.v = Vector::Ones(e.size());
    return out;
}

OptimizerKind parse_optimizer(const std::string& name) {
    if (name == "sgd") {
        return OptimizerKind::sgd;
    }
    if (name == "adam") {
        return OptimizerKind::adam;
    }
    throw InputError("unknown optimizer '" + name + "'");
}

std::string to_string(OptimizerKind kind) {
    return kind == OptimizerKind::sgd ? "sgd" : "adam";
}

double TauSchedule::at(int epoch, int epochs) const {
    if (decay == TauDecay::constant || epochs <= 1) {
        return start;
    }
    const double f = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
    return start * std::pow(end / start, f);
}

void TrainConfig::check() const {
    if (!(learning_rate > 0) || !std::isfinite(learning_rate)) {
        throw InputError("learning rate must be positive");
    }
    if (batch_size <= 0) {
        throw InputError("batch size must be positive");
    }
    if (epochs < 0) {
        throw InputError("epochs must be non-negative");
    }
    if (lambda_l0 < 0 || lambda_l1 < 0) {
        throw InputError("penalty weights must be non-negative");
    }
    if (tau.decay == TauDecay::exponential && !(tau.start > 0 && tau.end > 0 && tau.end <= tau.start)) {
        throw InputError("tau schedule needs 0 < end <= start");
    }
    if (optimizer.kind == OptimizerKind::adam &&
        !(optimizer.beta1 >= 0 && optimizer.beta1 < 1 && optimizer.beta2 >= 0 && optimizer.beta2 < 1 &&
          optimizer.epsilon > 0)) {
        throw InputError("adam needs beta1, beta2 in [0, 1) and epsilon > 0");
    }
}

std::string history_jsonl(const std::vector<EpochRecord>& history) {
    std::string out;
    for (const auto& r : history) {
        nlohmann::ordered_json j;
        j["epoch"] = r.epoch;
        j["loss"] = r.loss;
        j["acc"] = r.acc;
        j["tau"] = r.tau;
        out += j.dump();
        out += '\n';
    }
    return out;
}

namespace {

// Flat view of the trainable parameters in a fixed order, so one optimizer
// state covers trees, gates and stacking weights.
class ParameterLayout {
public:
    ParameterLayout(const TreeEnsemble& e, const Trainable& tr) : tr_(tr) {
        for (const auto& nt : e.trees) {
            if (tr_.weights) {
                size_ += nt.W.size() + nt.b.size();
            }
            if (tr_.leaves) {
                size_ += nt.pi.size();
            }
        }
        if (tr_.gates) {
            for (const auto& g : e.gates) {
                size_ += g.log_alpha.size() + g.v.size();
            }
        }
        if (tr_.stacking) {
            size_ += e.v.size();
        }
    }

    Eigen::Index size() const { return size_; }

    Vector pack(const TreeEnsemble& e) const {
        Vector out(size_);
        Eigen::Index at = 0;
        visit_model(e, [&](const auto& block) { put(out, at, block); });
        return out;
    }

    Vector pack(const EnsembleGradients& g) const {
        Vector out(size_);
        Eigen::Index at = 0;
        for (const auto& t : g.trees) {
            if (tr_.weights) {
                put(out, at, t.dW);
                put(out, at, t.db);
            }
            if (tr_.leaves) {
                put(out, at, t.dpi);
            }
        }
        if (tr_.gates) {
            for (const auto& gg : g.gates) {
                put(out, at, gg.d_log_alpha);
                put(out, at, gg.dv);
            }
        }
        if (tr_.stacking) {
            put(out, at, g.dv);
        }
        return out;
    }

    void unpack(const Vector& flat, TreeEnsemble& e) const {
        Eigen::Index at = 0;
        auto take = [&](auto& block) {
            for (Eigen::Index i = 0; i < block.size(); ++i) {
                block.data()[i] = flat[at++];
            }
        };
        for (auto& nt : e.trees) {
            if (tr_.weights) {
                take(nt.W);
                take(nt.b);
            }
            if (tr_.leaves) {
                take(nt.pi);
            }
        }
        if (tr_.gates) {
            for (auto& g : e.gates) {
                take(g.log_alpha);
                take(g.v);
            }
        }
        if (tr_.stacking) {
            take(e.v);
        }
    }

    // 1 where a parameter may move, 0 for W entries pinned by freeze_support.
    Vector support_mask(const TreeEnsemble& e) const {
        Vector mask = Vector::Ones(size_);
        if (!tr_.weights) {
            return mask;
        }
        Eigen::Index at = 0;
        for (const auto& nt : e.trees) {
            for (Eigen::Index i = 0; i < nt.W.size(); ++i) {
                mask[at++] = nt.W.data()[i] != 0.0 ? 1.0 : 0.0;
            }
            at += nt.b.size();
            if (tr_.leaves) {
                at += nt.pi.size();
            }
        }
        return mask;
    }

private:
    template <typename Fn>
    void visit_model(const TreeEnsemble& e, Fn&& fn) const {
        for (const auto& nt : e.trees) {
            if (tr_.weights) {
                fn(nt.W);
                fn(nt.b);
            }
            if (tr_.leaves) {
                fn(nt.pi);
            }
        }
        if (tr_.gates) {
            for (const auto& g : e.gates) {
                fn(g.log_alpha);
                fn(g.v);
            }
        }
        if (tr_.stacking) {
            fn(e.v);
        }
    }

    template <typename Block>
    static void put(Vector& out, Eigen::Index& at, const Block& block) {
        for (Eigen::Index i = 0; i < block.size(); ++i) {
            out[at++] = block.data()[i];
        }
    }

    Trainable tr_;
    Eigen::Index size_ = 0;
};

class Optimizer {
public:
    Optimizer(const OptimizerConfig& cfg, double lr, Eigen::Index size)
        : cfg_(cfg), lr_(lr), m_(Vector::Zero(size)), v_(Vector::Zero(size)) {}

    void step(Vector& params, const Vector& grad) {
        if (cfg_.kind == OptimizerKind::sgd) {
            params -= lr_ * grad;
            return;
        }
        ++t_;
        m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
        v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
        const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
        params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + cfg_.epsilon);
    }

private:
    OptimizerConfig cfg_;
    double lr_;
    Vector m_;
    Vector v_;
    int t_ = 0;
};

double training_objective(const TreeEnsemble& e, const Evaluation& ev, const TrainConfig& cfg) {
    double loss = ev.loss;
    if (e.has_gates() && (cfg.lambda_l0 != 0.0 || cfg.lambda_l1 != 0.0)) {
        for (int t = 0; t < e.size(); ++t) {
            loss += l0_l1_penalty(e.gates[t], e.trees[t].W, cfg.lambda_l0, cfg.lambda_l1);
        }
    }
    return loss;
}

}  // namespace

TrainResult train_ensemble(const TreeEnsemble& model, const Dataset& data, const TrainConfig& config) {
    config.check();
    model.check();
    data.check();
    if (data.size() == 0) {
        throw InputError("empty dataset");
    }
    if (data.num_features() != model.feature_count) {
        throw InputError("data has " + std::to_string(data.num_features()) + " features, model expects " +
                         std::to_string(model.feature_count));
    }
    if (data.class_count > model.num_class) {
        throw InputError("data has " + std::to_string(data.class_count) + " classes, model predicts " +
                         std::to_string(model.num_class));
    }

    TrainResult result{model, {}};
    TreeEnsemble& e = result.model;
    const ParameterLayout layout(e, config.trainable);
    const Vector mask = config.freeze_support ? layout.support_mask(e) : Vector::Ones(layout.size());
    Optimizer opt(config.optimizer, config.learning_rate, layout.size());

    std::mt19937_64 rng(config.seed);
    std::vector<int> order(static_cast<std::size_t>(data.size()));
    std::iota(order.begin(), order.end(), 0);

    GradientOptions gopt;
    gopt.lambda_l0 = config.lambda_l0;
    gopt.lambda_l1 = config.lambda_l1;
    gopt.noise.seed = config.seed;
    gopt.threads = config.threads;

    std::uint64_t step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        if (config.tau.decay == TauDecay::exponential) {
            const double tau = config.tau.at(epoch, config.epochs);
            for (auto& nt : e.trees) {
                nt.tau = tau;
            }
        }
        std::shuffle(order.begin(), order.end(), rng);
        int batch = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            const auto rows = static_cast<Eigen::Index>(stop - start);
            Matrix X(rows, data.num_features());
            std::vector<int> y(static_cast<std::size_t>(rows));
            for (Eigen::Index r = 0; r < rows; ++r) {
                X.row(r) = data.X.row(order[start + r]);
                y[r] = data.y[order[start + r]];
            }
            gopt.noise.draw = step++;
            const auto grads = ensemble_backward(e, X, y, gopt);
            Vector g = layout.pack(grads);
            if (!std::isfinite(grads.loss) || !g.allFinite()) {
                throw NumericalError("non-finite loss or gradient at epoch " + std::to_string(epoch + 1) +
                                     ", batch " + std::to_string(batch + 1));
            }
            g.array() *= mask.array();
            Vector params = layout.pack(e);
            opt.step(params, g);
            layout.unpack(params, e);
            ++batch;
        }
        const auto ev = evaluate(e, data, config.history_mode, config.threads);
        const double loss = training_objective(e, ev, config);
        if (!std::isfinite(loss)) {
            throw NumericalError("non-finite training loss after epoch " + std::to_string(epoch + 1));
        }
        result.history.push_back({epoch + 1, loss, ev.accuracy, e.trees.empty() ? 0.0 : e.trees.front().tau});
    }
    return result;
}

TrainResult train(const TreeEnsemble& model, const Dataset& data, const TrainConfig& config) {
    TrainConfig cfg = config;
    cfg.trainable.stacking = false;
    return train_ensemble(model, data, cfg);
}

TrainResult fit(const TreeEnsemble& model, const Dataset& data, const TrainConfig& config, const FitOptions& options) {
    if (!options.standardize) {
        const TreeEnsemble start = options.reinit_seed ? reinitialize(model, *options.reinit_seed) : model;
        return train_ensemble(start, data, config);
    }
    if (model.has_gates()) {
        throw StateError("cannot standardize a gated model; train without standardization");
    }
    const auto z = Standardizer::fit(data.X);
    TreeEnsemble start = z.unfold(model);
    if (options.reinit_seed) {
        start = reinitialize(start, *options.reinit_seed);
    }
    auto result = train_ensemble(start, z.apply(data), config);
    result.model = z.fold(result.model);
    return result;
}

}  // namespace treexfer
