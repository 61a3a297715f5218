#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "treexfer/ensemble.hpp"
#include "treexfer/gates.hpp"
#include "treexfer/neural_tree.hpp"

namespace treexfer {

// Tree: {"W": [[...]], "b": [...], "pi": [[...]], "Q": [[0/1,...]], "tau": x,
//        "gates": {"log_alpha", "v", "gamma", "zeta", "beta", "gumbel_tau"}?}
// Matrices are row-major arrays of rows; W is features x nodes.
std::string tree_checkpoint_json(const NeuralTree& nt, const GateSet* gates = nullptr);

struct TreeCheckpoint {
    NeuralTree tree;
    std::optional<GateSet> gates;
};

TreeCheckpoint parse_tree_checkpoint(std::string_view text);

// Ensemble: {"num_class": C, "feature_count": k, "gate_mode": "...", "v": [...], "trees": [<tree>, ...]}
std::string ensemble_checkpoint_json(const TreeEnsemble& e);
TreeEnsemble parse_ensemble_checkpoint(std::string_view text);

TreeEnsemble read_checkpoint(const std::filesystem::path& path);
void write_checkpoint(const std::filesystem::path& path, const TreeEnsemble& e);

// Writes through a temporary sibling and renames, so readers never see a partial file.
void write_text_file(const std::filesystem::path& path, std::string_view content);

}  // namespace treexfer
