#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "treexfer/ensemble.hpp"
#include "treexfer/neural_tree.hpp"

namespace treexfer {

struct Dataset {
    Matrix X;                 // samples x features
    std::vector<int> y;       // class indices in [0, class_count)
    std::vector<std::string> feature_names;
    std::vector<std::string> class_names;
    int class_count = 0;

    int size() const { return static_cast<int>(y.size()); }
    int num_features() const { return static_cast<int>(X.cols()); }

    // Throws InputError on shape mismatch, non-finite cells or bad labels.
    void check() const;
};

enum class CategoricalEncoding { ordinal, onehot };

CategoricalEncoding parse_encoding(std::string_view name);

struct CsvOptions {
    char delimiter = ',';
    std::string label;                     // empty: last column
    std::vector<std::string> categorical;  // encoded per `encoding`, categories in first-occurrence order
    CategoricalEncoding encoding = CategoricalEncoding::ordinal;
    std::vector<std::string> drop;
    bool skip_missing = false;             // drop rows with empty, "?" or "NA" cells instead of failing
};

Dataset parse_csv(std::string_view text, const CsvOptions& options = {});
Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options = {});

Dataset subset(const Dataset& data, const std::vector<int>& rows);

struct Split {
    Dataset train;
    Dataset test;
    std::vector<int> train_index;   // sorted
    std::vector<int> test_index;    // sorted
    std::string warning;            // set when stratification fell back to a plain split
};

Split split(const Dataset& data, double test_fraction, std::uint64_t seed, bool stratified = true);

// Per-feature z-scoring. fold/unfold move an ungated ensemble between the
// standardized space it was trained in and raw feature space.
struct Standardizer {
    Vector mean;
    Vector scale;

    static Standardizer fit(const Matrix& X);
    Matrix apply(const Matrix& X) const;
    Dataset apply(const Dataset& data) const;
    TreeEnsemble fold(const TreeEnsemble& standardized) const;
    TreeEnsemble unfold(const TreeEnsemble& raw) const;
};

struct ManifestEntry {
    std::string name;
    std::filesystem::path path;   // resolved against the manifest's directory
    std::string label;
    std::vector<std::string> categorical;
    CategoricalEncoding encoding = CategoricalEncoding::ordinal;

    CsvOptions csv_options() const;
};

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);
const ManifestEntry& find_entry(const std::vector<ManifestEntry>& manifest, std::string_view name);

}  // namespace treexfer
