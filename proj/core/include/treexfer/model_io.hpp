#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "treexfer/tree_model.hpp"

namespace treexfer {

// Parses the LightGBM-style text dump subset: header keys `num_class`,
// `objective`, `max_feature_idx`, then `Tree=<idx>` blocks with
// `num_leaves`, `split_feature`, `threshold`, `left_child`, `right_child`,
// `leaf_value` (space separated). Negative child -(m+1) is leaf m.
// Everything after `end of trees` is ignored, as are unknown keys.
// Categorical splits, missing-value handling and linear leaves are rejected.
CanonicalTreeModel parse_gbdt_text(std::string_view text);

// Parses the canonical JSON schema. Errors name the offending JSON path.
CanonicalTreeModel parse_canonical_json(std::string_view text);

// Serializes with shortest round-trip formatting for every real.
std::string to_canonical_json(const CanonicalTreeModel& model);

enum class ModelFormat { gbdt_text, canonical_json };

std::string read_file(const std::filesystem::path& path);
CanonicalTreeModel load_model(const std::filesystem::path& path, ModelFormat format);

}  // namespace treexfer
