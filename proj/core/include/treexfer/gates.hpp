#pragma once

#include <cstdint>
#include <span>
#include <string_view>

#include "treexfer/neural_tree.hpp"

namespace treexfer {

// Stretch (gamma, zeta) and temperature beta of the hard-concrete distribution.
struct HardConcrete {
    double gamma = -0.1;
    double zeta = 1.1;
    double beta = 2.0 / 3.0;

    void check() const;
};

// Per-node feature-selection parameters, laid out like W (features x nodes):
// column i holds node i's stacking logits v_i and gate log-alphas.
struct GateSet {
    Matrix log_alpha;
    Matrix v;
    HardConcrete hc;
    double gumbel_tau = 1.0;

    // Gates fully open (expected gate exactly 1) and uniform stacking logits.
    static GateSet open(int features, int nodes, double log_alpha_init = 3.0);

    int num_features() const { return static_cast<int>(log_alpha.rows()); }
    int num_nodes() const { return static_cast<int>(log_alpha.cols()); }
    void check() const;
};

enum class GateMode { expected, gumbel_st, deterministic };

GateMode parse_gate_mode(std::string_view name);
std::string_view to_string(GateMode mode);

// Test-time hard-concrete estimate: clamp(sigmoid(log_alpha) (zeta - gamma) + gamma, 0, 1).
double expected_gate(double log_alpha, const HardConcrete& hc);
// Derivative of expected_gate w.r.t. log_alpha (zero where clamped).
double expected_gate_grad(double log_alpha, const HardConcrete& hc);

// P(gate != 0) = sigmoid(log_alpha - beta log(-gamma / zeta)).
double gate_open_probability(double log_alpha, const HardConcrete& hc);
double gate_open_probability_grad(double log_alpha, const HardConcrete& hc);

// Counter-based uniform in (0,1); identical regardless of evaluation order.
double uniform_noise(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c);
double gumbel_noise(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c);

struct GumbelSample {
    Vector one_hot;
    Vector soft;
    int index = 0;
};

// one_hot = argmax(logits + g), soft = softmax((logits + g) / tau_g) with the
// same Gumbel noise g. Forward consumers use one_hot; gradients flow through soft.
GumbelSample gumbel_softmax_sample(const VectorRef& logits, const VectorRef& noise, double tau_g);
GumbelSample gumbel_softmax_sample(const VectorRef& logits, double tau_g, std::uint64_t seed);

// Noise stream address for one node's gumbel draw.
struct NoiseKey {
    std::uint64_t seed = 0;
    std::uint64_t draw = 0;   // e.g. sample counter
    std::uint64_t tree = 0;
};

Vector node_gumbel_noise(const NoiseKey& key, int node, int features);

// Gate values used in the forward pass for node i (length = features).
Vector node_gates(const GateSet& gates, int node, GateMode mode, const NoiseKey& key = {});

// Full gate matrix (features x nodes) for the deterministic modes.
Matrix gate_matrix(const GateSet& gates, GateMode mode);

// Pre-activation of node i with gated weights:
// a_i = (sum_j g_ij W_ji x_j + b_i) / tau.
double gated_node_logit(const NeuralTree& nt, int node, const VectorRef& x, const GateSet& gates, GateMode mode,
                        const NoiseKey& key = {});

// lambda_l0 * sum P(gate != 0) + lambda_l1 * sum |W . E[g]|.
double l0_l1_penalty(const GateSet& gates, const Matrix& W, double lambda_l0, double lambda_l1);

struct PenaltyGradient {
    Matrix d_log_alpha;
    Matrix dW;
};

PenaltyGradient l0_l1_penalty_grad(const GateSet& gates, const Matrix& W, double lambda_l0, double lambda_l1);

// Mean count per node of gates with a nonzero expected value.
double mean_active_gates(const GateSet& gates);

}  // namespace treexfer
