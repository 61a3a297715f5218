#include "treexfer/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "treexfer/errors.hpp"
#include "treexfer/model_io.hpp"

namespace treexfer {

void Dataset::check() const {
    if (static_cast<Eigen::Index>(y.size()) != X.rows()) {
        throw InputError("dataset has " + std::to_string(X.rows()) + " rows but " + std::to_string(y.size()) +
                         " labels");
    }
    if (!feature_names.empty() && static_cast<Eigen::Index>(feature_names.size()) != X.cols()) {
        throw InputError("feature name count does not match the column count");
    }
    if (!X.allFinite()) {
        throw InputError("dataset contains non-finite values");
    }
    for (int label : y) {
        if (label < 0 || label >= class_count) {
            throw InputError("label " + std::to_string(label) + " outside [0, " + std::to_string(class_count) + ")");
        }
    }
}

CategoricalEncoding parse_encoding(std::string_view name) {
    if (name == "ordinal") {
        return CategoricalEncoding::ordinal;
    }
    if (name == "onehot") {
        return CategoricalEncoding::onehot;
    }
    throw InputError("unknown categorical encoding '" + std::string(name) + "'");
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

// Splits delimited text into records; double quotes group fields and "" escapes a quote.
std::vector<std::vector<std::string>> read_records(std::string_view text, char delimiter) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false;
    bool was_quoted = false;
    bool any = false;
    std::size_t line = 1;

    auto end_field = [&] {
        record.push_back(was_quoted ? field : std::string(trim(field)));
        field.clear();
        was_quoted = false;
    };
    auto end_record = [&] {
        end_field();
        const bool blank = record.size() == 1 && record.front().empty();
        if (!blank) {
            records.push_back(std::move(record));
        }
        record.clear();
        any = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') {
                    ++line;
                }
                field.push_back(c);
            }
            continue;
        }
        if (c == '"' && trim(field).empty()) {
            field.clear();
            quoted = true;
            was_quoted = true;
            any = true;
        } else if (c == delimiter) {
            end_field();
            any = true;
        } else if (c == '\n') {
            end_record();
            ++line;
        } else {
            field.push_back(c);
            any = true;
        }
    }
    if (quoted) {
        throw InputError("unterminated quoted field near line " + std::to_string(line));
    }
    if (any || !field.empty()) {
        end_record();
    }
    return records;
}

bool is_missing(const std::string& cell) {
    return cell.empty() || cell == "?" || cell == "NA" || cell == "NaN" || cell == "nan";
}

bool parse_real(const std::string& cell, double& out) {
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (first != last && *first == '+') {
        ++first;
    }
    const auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && std::isfinite(out);
}

bool contains(const std::vector<std::string>& names, const std::string& name) {
    return std::find(names.begin(), names.end(), name) != names.end();
}

}  // namespace

Dataset parse_csv(std::string_view text, const CsvOptions& options) {
    const auto records = read_records(text, options.delimiter);
    if (records.empty()) {
        throw InputError("empty file");
    }
    const auto& header = records.front();
    const std::size_t width = header.size();

    int label_col = static_cast<int>(width) - 1;
    if (!options.label.empty()) {
        const auto it = std::find(header.begin(), header.end(), options.label);
        if (it == header.end()) {
            throw InputError("missing label column '" + options.label + "'");
        }
        label_col = static_cast<int>(it - header.begin());
    }
    for (const auto& name : options.categorical) {
        if (!contains(header, name)) {
            throw InputError("categorical column '" + name + "' not in header");
        }
    }
    for (const auto& name : options.drop) {
        if (!contains(header, name)) {
            throw InputError("dropped column '" + name + "' not in header");
        }
    }

    std::vector<int> kept;
    for (std::size_t c = 0; c < width; ++c) {
        if (static_cast<int>(c) != label_col && !contains(options.drop, header[c])) {
            kept.push_back(static_cast<int>(c));
        }
    }

    std::vector<const std::vector<std::string>*> rows;
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.size() != width) {
            throw InputError("row " + std::to_string(r) + ": expected " + std::to_string(width) + " cells, got " +
                             std::to_string(rec.size()));
        }
        bool missing = is_missing(rec[label_col]);
        for (int c : kept) {
            missing = missing || is_missing(rec[c]);
        }
        if (missing) {
            if (options.skip_missing) {
                continue;
            }
            throw InputError("row " + std::to_string(r) + ": missing value");
        }
        rows.push_back(&rec);
    }
    if (rows.empty()) {
        throw InputError("no data rows");
    }

    // Category levels per categorical column, in first-occurrence order.
    std::map<int, std::vector<std::string>> levels;
    for (int c : kept) {
        if (!contains(options.categorical, header[c])) {
            continue;
        }
        auto& lv = levels[c];
        for (const auto* rec : rows) {
            if (!contains(lv, (*rec)[c])) {
                lv.push_back((*rec)[c]);
            }
        }
    }

    Dataset d;
    for (int c : kept) {
        const auto it = levels.find(c);
        if (it != levels.end() && options.encoding == CategoricalEncoding::onehot) {
            for (const auto& level : it->second) {
                d.feature_names.push_back(header[c] + "=" + level);
            }
        } else {
            d.feature_names.push_back(header[c]);
        }
    }
    d.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d.feature_names.size()));
    d.X.setZero();
    d.y.reserve(rows.size());

    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& rec = *rows[r];
        Eigen::Index col = 0;
        for (int c : kept) {
            const auto it = levels.find(c);
            if (it == levels.end()) {
                double v = 0.0;
                if (!parse_real(rec[c], v)) {
                    throw InputError("row " + std::to_string(r + 1) + ", column '" + header[c] +
                                     "': cannot parse '" + rec[c] + "' as a number");
                }
                d.X(r, col++) = v;
                continue;
            }
            const auto& lv = it->second;
            const auto pos = static_cast<Eigen::Index>(std::find(lv.begin(), lv.end(), rec[c]) - lv.begin());
            if (options.encoding == CategoricalEncoding::onehot) {
                d.X(r, col + pos) = 1.0;
                col += static_cast<Eigen::Index>(lv.size());
            } else {
                d.X(r, col++) = static_cast<double>(pos);
            }
        }
        const auto& label = rec[label_col];
        auto it = std::find(d.class_names.begin(), d.class_names.end(), label);
        if (it == d.class_names.end()) {
            d.class_names.push_back(label);
            it = d.class_names.end() - 1;
        }
        d.y.push_back(static_cast<int>(it - d.class_names.begin()));
    }
    d.class_count = static_cast<int>(d.class_names.size());
    d.check();
    return d;
}

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options) {
    try {
        return parse_csv(read_file(path), options);
    } catch (const InputError& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

Dataset subset(const Dataset& data, const std::vector<int>& rows) {
    Dataset out;
    out.feature_names = data.feature_names;
    out.class_names = data.class_names;
    out.class_count = data.class_count;
    out.X.resize(static_cast<Eigen::Index>(rows.size()), data.X.cols());
    out.y.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] < 0 || rows[i] >= data.size()) {
            throw InputError("row index " + std::to_string(rows[i]) + " out of range");
        }
        out.X.row(static_cast<Eigen::Index>(i)) = data.X.row(rows[i]);
        out.y.push_back(data.y[rows[i]]);
    }
    return out;
}

Split split(const Dataset& data, double test_fraction, std::uint64_t seed, bool stratified) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw InputError("test fraction must lie in (0, 1)");
    }
    std::mt19937_64 rng(seed);
    Split s;
    std::vector<std::vector<int>> groups;
    if (stratified) {
        groups.assign(static_cast<std::size_t>(data.class_count), {});
        for (int i = 0; i < data.size(); ++i) {
            groups[data.y[i]].push_back(i);
        }
        for (std::size_t c = 0; c < groups.size(); ++c) {
            if (groups[c].size() == 1) {
                s.warning = "class '" + (c < data.class_names.size() ? data.class_names[c] : std::to_string(c)) +
                            "' has fewer than 2 samples; using a plain split";
                break;
            }
        }
        if (!s.warning.empty()) {
            groups.clear();
        }
    }
    if (groups.empty()) {
        groups.emplace_back(static_cast<std::size_t>(data.size()));
        std::iota(groups.front().begin(), groups.front().end(), 0);
    }
    for (auto& g : groups) {
        if (g.empty()) {
            continue;
        }
        std::shuffle(g.begin(), g.end(), rng);
        const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(g.size())));
        s.test_index.insert(s.test_index.end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(n_test));
        s.train_index.insert(s.train_index.end(), g.begin() + static_cast<std::ptrdiff_t>(n_test), g.end());
    }
    std::sort(s.train_index.begin(), s.train_index.end());
    std::sort(s.test_index.begin(), s.test_index.end());
    s.train = subset(data, s.train_index);
    s.test = subset(data, s.test_index);
    return s;
}

Standardizer Standardizer::fit(const Matrix& X) {
    if (X.rows() == 0) {
        throw InputError("cannot standardize an empty dataset");
    }
    Standardizer s;
    s.mean = X.colwise().mean().transpose();
    s.scale.resize(X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const double var = (X.col(j).array() - s.mean[j]).square().mean();
        s.scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return s;
}

Matrix Standardizer::apply(const Matrix& X) const {
    if (X.cols() != mean.size()) {
        throw InputError("standardizer fitted on " + std::to_string(mean.size()) + " features, got " +
                         std::to_string(X.cols()));
    }
    return (X.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

Dataset Standardizer::apply(const Dataset& data) const {
    Dataset out = data;
    out.X = apply(data.X);
    return out;
}

// Standardized pre-activation sum_j W_j (x_j - m_j)/s_j + b equals the raw
// one with W'_j = W_j/s_j and b' = b - sum_j W_j m_j/s_j.
TreeEnsemble Standardizer::fold(const TreeEnsemble& standardized) const {
    if (standardized.has_gates()) {
        throw StateError("cannot fold a gated ensemble; materialize gates first");
    }
    TreeEnsemble out = standardized;
    for (auto& nt : out.trees) {
        const Matrix W = nt.W.array().colwise() / scale.array();
        nt.b -= W.transpose() * mean;
        nt.W = W;
    }
    return out;
}

TreeEnsemble Standardizer::unfold(const TreeEnsemble& raw) const {
    if (raw.has_gates()) {
        throw StateError("cannot unfold a gated ensemble; materialize gates first");
    }
    TreeEnsemble out = raw;
    for (auto& nt : out.trees) {
        nt.b += nt.W.transpose() * mean;
        nt.W = nt.W.array().colwise() * scale.array();
    }
    return out;
}

CsvOptions ManifestEntry::csv_options() const {
    CsvOptions o;
    o.label = label;
    o.categorical = categorical;
    o.encoding = encoding;
    return o;
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
    const auto text = read_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError(path.string() + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("datasets") || !j["datasets"].is_array()) {
        throw InputError(path.string() + ": manifest needs a \"datasets\" array");
    }
    std::vector<ManifestEntry> out;
    const auto base = path.parent_path();
    for (std::size_t i = 0; i < j["datasets"].size(); ++i) {
        const auto& d = j["datasets"][i];
        const std::string where = path.string() + ": /datasets/" + std::to_string(i);
        try {
            ManifestEntry e;
            e.name = d.at("name").get<std::string>();
            e.path = base / d.at("path").get<std::string>();
            e.label = d.value("label", std::string());
            e.categorical = d.value("categorical", std::vector<std::string>{});
            e.encoding = parse_encoding(d.value("encoding", std::string("ordinal")));
            out.push_back(std::move(e));
        } catch (const nlohmann::json::exception& e) {
            throw InputError(where + ": " + e.what());
        }
    }
    return out;
}

const ManifestEntry& find_entry(const std::vector<ManifestEntry>& manifest, std::string_view name) {
    for (const auto& e : manifest) {
        if (e.name == name) {
            return e;
        }
    }
    throw InputError("dataset '" + std::string(name) + "' not in manifest");
}

}  // namespace treexfer
