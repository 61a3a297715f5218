#pragma once

#include <optional>
#include <string>
#include <vector>

#include "treexfer/ensemble.hpp"
#include "treexfer/tree_model.hpp"

namespace treexfer {

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

// counts[j] = internal nodes (over all trees) splitting on feature j.
using ImportanceVector = std::vector<long>;

// Throws StateError("importance undefined for oblique splits") unless every node has one nonzero weight.
ImportanceVector feature_importance_split(const TreeEnsemble& e);
ImportanceVector feature_importance_split(const CanonicalTreeModel& model);

// Tie-corrected Kendall tau-b. nullopt when either side is constant.
std::optional<double> kendall_tau_b(const std::vector<double>& a, const std::vector<double>& b);
std::optional<double> kendall_tau_b(const ImportanceVector& a, const ImportanceVector& b);

// accuracy[d][m] for dataset d and model m.
struct AccuracyTable {
    std::vector<std::string> datasets;
    std::vector<std::string> models;
    std::vector<std::vector<double>> accuracy;

    void check() const;
};

struct TournamentResult {
    std::vector<int> wins;
    std::vector<double> mrr;
    std::vector<std::vector<int>> ranks;   // ranks[d][m], ties share the best rank (1, 1, 3)
};

TournamentResult tournament(const AccuracyTable& table);

}  // namespace treexfer
