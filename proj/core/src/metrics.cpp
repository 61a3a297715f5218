#include "treexfer/metrics.hpp"

#include <cmath>
#include <string>

#include "treexfer/conversion.hpp"
#include "treexfer/errors.hpp"

namespace treexfer {

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.size() != truth.size()) {
        throw std::invalid_argument("prediction and label counts differ");
    }
    if (truth.empty()) {
        throw InputError("accuracy of an empty set");
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        hits += predicted[i] == truth[i];
    }
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

ImportanceVector feature_importance_split(const TreeEnsemble& e) {
    if (e.has_gates()) {
        return feature_importance_split(materialize_gates(e));
    }
    ImportanceVector counts(static_cast<std::size_t>(e.feature_count), 0);
    for (const auto& nt : e.trees) {
        for (int i = 0; i < nt.num_nodes(); ++i) {
            if (node_l0(nt, i) != 1) {
                throw StateError("importance undefined for oblique splits");
            }
            Eigen::Index j = 0;
            nt.W.col(i).cwiseAbs().maxCoeff(&j);
            ++counts[j];
        }
    }
    return counts;
}

ImportanceVector feature_importance_split(const CanonicalTreeModel& model) {
    ImportanceVector counts(static_cast<std::size_t>(model.feature_count), 0);
    for (const auto& tree : model.trees) {
        for (const auto& node : tree.nodes) {
            if (node.feature < 0 || node.feature >= model.feature_count) {
                throw InputError("split feature " + std::to_string(node.feature) + " out of range");
            }
            ++counts[node.feature];
        }
    }
    return counts;
}

std::optional<double> kendall_tau_b(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) {
        throw std::invalid_argument("kendall tau needs two vectors of equal length >= 2");
    }
    long long concordant = 0;
    long long discordant = 0;
    long long tied_a = 0;
    long long tied_b = 0;
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double da = a[i] - a[j];
            const double db = b[i] - b[j];
            if (da == 0 && db == 0) {
                ++tied_a;
                ++tied_b;
            } else if (da == 0) {
                ++tied_a;
            } else if (db == 0) {
                ++tied_b;
            } else if ((da > 0) == (db > 0)) {
                ++concordant;
            } else {
                ++discordant;
            }
        }
    }
    const long long pairs = static_cast<long long>(n * (n - 1) / 2);
    const double denom = std::sqrt(static_cast<double>(pairs - tied_a) * static_cast<double>(pairs - tied_b));
    if (denom == 0.0) {
        return std::nullopt;
    }
    return static_cast<double>(concordant - discordant) / denom;
}

std::optional<double> kendall_tau_b(const ImportanceVector& a, const ImportanceVector& b) {
    return kendall_tau_b(std::vector<double>(a.begin(), a.end()), std::vector<double>(b.begin(), b.end()));
}

void AccuracyTable::check() const {
    if (accuracy.size() != datasets.size()) {
        throw InputError("accuracy table has " + std::to_string(accuracy.size()) + " rows for " +
                         std::to_string(datasets.size()) + " datasets");
    }
    for (std::size_t d = 0; d < accuracy.size(); ++d) {
        if (accuracy[d].size() != models.size()) {
            throw InputError("accuracy row '" + datasets[d] + "' has " + std::to_string(accuracy[d].size()) +
                             " entries for " + std::to_string(models.size()) + " models");
        }
        for (double v : accuracy[d]) {
            if (!std::isfinite(v)) {
                throw InputError("accuracy row '" + datasets[d] + "' has a non-finite entry");
            }
        }
    }
}

TournamentResult tournament(const AccuracyTable& table) {
    table.check();
    const std::size_t M = table.models.size();
    TournamentResult r;
    r.wins.assign(M, 0);
    r.mrr.assign(M, 0.0);
    for (const auto& row : table.accuracy) {
        std::vector<int> ranks(M);
        for (std::size_t m = 0; m < M; ++m) {
            int better = 0;
            for (std::size_t o = 0; o < M; ++o) {
                better += row[o] > row[m];
            }
            ranks[m] = better + 1;
            r.wins[m] += ranks[m] == 1;
            r.mrr[m] += 1.0 / ranks[m];
        }
        r.ranks.push_back(std::move(ranks));
    }
    if (!table.accuracy.empty()) {
        for (auto& v : r.mrr) {
            v /= static_cast<double>(table.accuracy.size());
        }
    }
    return r;
}

}  // namespace treexfer
