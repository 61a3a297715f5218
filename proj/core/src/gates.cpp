#include "treexfer/gates.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace treexfer {

namespace {

double sigmoid(double z) {
    if (z >= 0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

int argmax_lowest(const VectorRef& v) {
    int best = 0;
    for (int j = 1; j < v.size(); ++j) {
        if (v[j] > v[best]) {
            best = j;
        }
    }
    return best;
}

}  // namespace

void HardConcrete::check() const {
    if (!(gamma < 0 && zeta > 1)) {
        throw std::invalid_argument("hard-concrete stretch requires gamma < 0 < 1 < zeta");
    }
    if (!(beta > 0 && beta <= 1)) {
        throw std::invalid_argument("hard-concrete beta must lie in (0, 1]");
    }
}

GateSet GateSet::open(int features, int nodes, double log_alpha_init) {
    GateSet g;
    g.log_alpha = Matrix::Constant(features, nodes, log_alpha_init);
    g.v = Matrix::Zero(features, nodes);
    return g;
}

void GateSet::check() const {
    hc.check();
    if (!(gumbel_tau > 0)) {
        throw std::invalid_argument("gumbel temperature must be positive");
    }
    if (v.rows() != log_alpha.rows() || v.cols() != log_alpha.cols()) {
        throw std::invalid_argument("gate matrices disagree in shape");
    }
}

GateMode parse_gate_mode(std::string_view name) {
    if (name == "expected") {
        return GateMode::expected;
    }
    if (name == "gumbel_st" || name == "gumbel") {
        return GateMode::gumbel_st;
    }
    if (name == "deterministic") {
        return GateMode::deterministic;
    }
    throw std::invalid_argument("unknown gate mode '" + std::string(name) + "'");
}

std::string_view to_string(GateMode mode) {
    switch (mode) {
        case GateMode::expected:
            return "expected";
        case GateMode::gumbel_st:
            return "gumbel_st";
        case GateMode::deterministic:
            return "deterministic";
    }
    return "expected";
}

double expected_gate(double log_alpha, const HardConcrete& hc) {
    const double s = sigmoid(log_alpha) * (hc.zeta - hc.gamma) + hc.gamma;
    return std::clamp(s, 0.0, 1.0);
}

double expected_gate_grad(double log_alpha, const HardConcrete& hc) {
    const double sg = sigmoid(log_alpha);
    const double s = sg * (hc.zeta - hc.gamma) + hc.gamma;
    if (s <= 0.0 || s >= 1.0) {
        return 0.0;
    }
    return sg * (1.0 - sg) * (hc.zeta - hc.gamma);
}

double gate_open_probability(double log_alpha, const HardConcrete& hc) {
    return sigmoid(log_alpha - hc.beta * std::log(-hc.gamma / hc.zeta));
}

double gate_open_probability_grad(double log_alpha, const HardConcrete& hc) {
    const double p = gate_open_probability(log_alpha, hc);
    return p * (1.0 - p);
}

double uniform_noise(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    std::uint64_t h = splitmix(seed);
    h = splitmix(h ^ a);
    h = splitmix(h ^ b);
    h = splitmix(h ^ c);
    return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
}

double gumbel_noise(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return -std::log(-std::log(uniform_noise(seed, a, b, c)));
}

GumbelSample gumbel_softmax_sample(const VectorRef& logits, const VectorRef& noise, double tau_g) {
    if (!(tau_g > 0)) {
        throw std::invalid_argument("gumbel temperature must be positive");
    }
    if (noise.size() != logits.size()) {
        throw std::invalid_argument("noise and logits differ in length");
    }
    const Vector perturbed = logits + noise;
    GumbelSample s;
    s.index = argmax_lowest(perturbed);
    s.one_hot = Vector::Zero(logits.size());
    s.one_hot[s.index] = 1.0;
    const Vector scaled = perturbed / tau_g;
    const double m = scaled.maxCoeff();
    s.soft = (scaled.array() - m).exp();
    s.soft /= s.soft.sum();
    return s;
}

GumbelSample gumbel_softmax_sample(const VectorRef& logits, double tau_g, std::uint64_t seed) {
    Vector noise(logits.size());
    for (int j = 0; j < logits.size(); ++j) {
        noise[j] = gumbel_noise(seed, 0, 0, static_cast<std::uint64_t>(j));
    }
    return gumbel_softmax_sample(logits, noise, tau_g);
}

Vector node_gumbel_noise(const NoiseKey& key, int node, int features) {
    Vector noise(features);
    for (int j = 0; j < features; ++j) {
        const auto slot = (static_cast<std::uint64_t>(node) << 32) | static_cast<std::uint64_t>(j);
        noise[j] = gumbel_noise(key.seed, key.draw, key.tree, slot);
    }
    return noise;
}

Vector node_gates(const GateSet& gates, int node, GateMode mode, const NoiseKey& key) {
    const int k = gates.num_features();
    switch (mode) {
        case GateMode::expected: {
            Vector g(k);
            for (int j = 0; j < k; ++j) {
                g[j] = expected_gate(gates.log_alpha(j, node), gates.hc);
            }
            return g;
        }
        case GateMode::gumbel_st:
            return gumbel_softmax_sample(gates.v.col(node), node_gumbel_noise(key, node, k), gates.gumbel_tau).one_hot;
        case GateMode::deterministic: {
            Vector g = Vector::Zero(k);
            g[argmax_lowest(gates.v.col(node))] = 1.0;
            return g;
        }
    }
    throw std::invalid_argument("unknown gate mode");
}

Matrix gate_matrix(const GateSet& gates, GateMode mode) {
    if (mode == GateMode::gumbel_st) {
        throw std::invalid_argument("gumbel_st gates are stochastic; use node_gates with a noise key");
    }
    Matrix g(gates.num_features(), gates.num_nodes());
    for (int i = 0; i < gates.num_nodes(); ++i) {
        g.col(i) = node_gates(gates, i, mode);
    }
    return g;
}

double gated_node_logit(const NeuralTree& nt, int node, const VectorRef& x, const GateSet& gates, GateMode mode,
                        const NoiseKey& key) {
    if (x.size() != nt.num_features() || gates.num_features() != nt.num_features() ||
        gates.num_nodes() != nt.num_nodes()) {
        throw std::invalid_argument("gated_node_logit: shape mismatch");
    }
    const Vector g = node_gates(gates, node, mode, key);
    return ((g.array() * nt.W.col(node).array() * x.array()).sum() + nt.b[node]) / nt.tau;
}

double l0_l1_penalty(const GateSet& gates, const Matrix& W, double lambda_l0, double lambda_l1) {
    double l0 = 0.0;
    double l1 = 0.0;
    for (int i = 0; i < gates.num_nodes(); ++i) {
        for (int j = 0; j < gates.num_features(); ++j) {
            const double la = gates.log_alpha(j, i);
            if (lambda_l0 != 0.0) {
                l0 += gate_open_probability(la, gates.hc);
            }
            if (lambda_l1 != 0.0) {
                l1 += std::abs(W(j, i) * expected_gate(la, gates.hc));
            }
        }
    }
    return lambda_l0 * l0 + lambda_l1 * l1;
}

PenaltyGradient l0_l1_penalty_grad(const GateSet& gates, const Matrix& W, double lambda_l0, double lambda_l1) {
    PenaltyGradient g{Matrix::Zero(W.rows(), W.cols()), Matrix::Zero(W.rows(), W.cols())};
    for (int i = 0; i < gates.num_nodes(); ++i) {
        for (int j = 0; j < gates.num_features(); ++j) {
            const double la = gates.log_alpha(j, i);
            const double w = W(j, i);
            g.d_log_alpha(j, i) = lambda_l0 * gate_open_probability_grad(la, gates.hc) +
                                  lambda_l1 * std::abs(w) * expected_gate_grad(la, gates.hc);
            const double sign = (w > 0) - (w < 0);
            g.dW(j, i) = lambda_l1 * sign * expected_gate(la, gates.hc);
        }
    }
    return g;
}

double mean_active_gates(const GateSet& gates) {
    if (gates.num_nodes() == 0) {
        return 0.0;
    }
    int active = 0;
    for (int i = 0; i < gates.num_nodes(); ++i) {
        for (int j = 0; j < gates.num_features(); ++j) {
            active += expected_gate(gates.log_alpha(j, i), gates.hc) > 0.0;
        }
    }
    return static_cast<double>(active) / gates.num_nodes();
}

}  // namespace treexfer
