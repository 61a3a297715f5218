#include "treexfer/model_io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "treexfer/errors.hpp"

namespace treexfer {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

struct Entry {
    std::string value;
    std::size_t line = 0;
};

using Block = std::map<std::string, Entry, std::less<>>;

template <typename T>
T parse_scalar(std::string_view token, std::size_t line, const std::string& key) {
    T value{};
    const auto* end = token.data() + token.size();
    auto [ptr, ec] = std::from_chars(token.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        throw ParseError(line, key, "invalid number '" + std::string(token) + "'");
    }
    return value;
}

template <typename T>
std::vector<T> parse_array(const Entry& entry, const std::string& key) {
    std::vector<T> out;
    std::string_view rest = entry.value;
    while (true) {
        rest = trim(rest);
        if (rest.empty()) {
            break;
        }
        const auto space = rest.find_first_of(" \t");
        const auto token = rest.substr(0, space);
        out.push_back(parse_scalar<T>(token, entry.line, key));
        if (space == std::string_view::npos) {
            break;
        }
        rest.remove_prefix(space);
    }
    return out;
}

const Entry& require(const Block& block, const std::string& key, std::size_t block_line) {
    auto it = block.find(key);
    if (it == block.end()) {
        throw ParseError(block_line, key, "missing required key");
    }
    return it->second;
}

Objective parse_objective(const Entry& entry) {
    const auto name = trim(std::string_view(entry.value).substr(0, entry.value.find(' ')));
    if (name == "binary") {
        return Objective::binary;
    }
    if (name == "multiclass" || name == "multiclassova" || name == "softmax" || name == "multiclass_ova") {
        return Objective::multiclass;
    }
    throw ParseError(entry.line, "objective", "unsupported objective '" + std::string(name) + "'");
}

TreeStructure parse_tree_block(const Block& block, std::size_t block_line) {
    const auto& leaves_entry = require(block, "num_leaves", block_line);
    const int num_leaves = parse_scalar<int>(trim(leaves_entry.value), leaves_entry.line, "num_leaves");
    if (num_leaves < 1) {
        throw ParseError(leaves_entry.line, "num_leaves", "must be at least 1");
    }
    const std::size_t n = static_cast<std::size_t>(num_leaves - 1);

    if (auto it = block.find("num_cat"); it != block.end()) {
        if (parse_scalar<int>(trim(it->second.value), it->second.line, "num_cat") != 0) {
            throw ParseError(it->second.line, "num_cat", "categorical splits are not supported");
        }
    }
    if (auto it = block.find("is_linear"); it != block.end()) {
        if (parse_scalar<int>(trim(it->second.value), it->second.line, "is_linear") != 0) {
            throw ParseError(it->second.line, "is_linear", "linear-leaf models are not supported");
        }
    }

    auto sized = [&](const std::string& key, std::size_t expected, auto tag) {
        using T = decltype(tag);
        const auto& entry = require(block, key, block_line);
        auto values = parse_array<T>(entry, key);
        if (values.size() != expected) {
            throw ParseError(entry.line, key,
                             "array length mismatch (expected " + std::to_string(expected) + ", got " +
                                 std::to_string(values.size()) + ")");
        }
        return values;
    };

    const auto leaf_value = sized("leaf_value", static_cast<std::size_t>(num_leaves), double{});

    TreeStructure tree;
    tree.leaves.resize(num_leaves);
    for (int m = 0; m < num_leaves; ++m) {
        tree.leaves[m] = {m, {leaf_value[m]}};
    }
    if (n == 0) {
        return tree;
    }

    const auto split_feature = sized("split_feature", n, int{});
    const auto threshold = sized("threshold", n, double{});
    const auto left_child = sized("left_child", n, int{});
    const auto right_child = sized("right_child", n, int{});

    if (auto it = block.find("decision_type"); it != block.end()) {
        const auto types = sized("decision_type", n, int{});
        for (auto t : types) {
            if (t & 1) {
                throw ParseError(it->second.line, "decision_type", "categorical splits are not supported");
            }
            if ((t >> 2) & 3) {
                throw ParseError(it->second.line, "decision_type",
                                 "missing-value default directions are not supported");
            }
        }
    }

    auto child = [&](int raw, const std::string& key) {
        if (raw >= 0) {
            if (static_cast<std::size_t>(raw) >= n) {
                throw ParseError(require(block, key, block_line).line, key,
                                 "dangling child index " + std::to_string(raw));
            }
            return ChildRef::node(raw);
        }
        const int leaf = -(raw + 1);
        if (leaf >= num_leaves) {
            throw ParseError(require(block, key, block_line).line, key,
                             "dangling child index " + std::to_string(raw));
        }
        return ChildRef::leaf(leaf);
    };

    tree.nodes.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        tree.nodes[i] = {static_cast<int>(i), split_feature[i], threshold[i], child(left_child[i], "left_child"),
                         child(right_child[i], "right_child")};
    }
    return tree;
}

}  // namespace

CanonicalTreeModel parse_gbdt_text(std::string_view text) {
    Block header;
    std::vector<std::pair<std::size_t, Block>> blocks;
    Block* current = &header;

    std::size_t line_no = 0;
    std::size_t first_tree_line = 0;
    while (!text.empty()) {
        const auto eol = text.find('\n');
        const auto raw = text.substr(0, eol);
        text.remove_prefix(eol == std::string_view::npos ? text.size() : eol + 1);
        ++line_no;

        const auto line = trim(raw);
        if (line.empty()) {
            continue;
        }
        if (line == "end of trees") {
            break;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            if (current == &header && line == "tree") {
                continue;
            }
            throw ParseError(line_no, std::string(line), "malformed key (expected key=value)");
        }
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ParseError(line_no, "", "malformed key (empty)");
        }
        if (key == "Tree") {
            if (first_tree_line == 0) {
                first_tree_line = line_no;
            }
            blocks.emplace_back(line_no, Block{});
            current = &blocks.back().second;
            continue;
        }
        if (!current->emplace(std::string(key), Entry{std::string(value), line_no}).second) {
            throw ParseError(line_no, std::string(key), "duplicate key");
        }
    }

    const std::size_t header_end = first_tree_line == 0 ? line_no : first_tree_line;
    CanonicalTreeModel model;
    const auto& num_class = require(header, "num_class", header_end);
    const int classes = parse_scalar<int>(num_class.value, num_class.line, "num_class");
    model.objective = parse_objective(require(header, "objective", header_end));
    const auto& max_feature = require(header, "max_feature_idx", header_end);
    model.feature_count = parse_scalar<int>(max_feature.value, max_feature.line, "max_feature_idx") + 1;
    model.num_class = classes;

    model.trees.reserve(blocks.size());
    for (const auto& [line, block] : blocks) {
        model.trees.push_back(parse_tree_block(block, line));
        for (const auto& node : model.trees.back().nodes) {
            if (node.feature < 0 || node.feature >= model.feature_count) {
                throw ParseError(require(block, "split_feature", line).line, "split_feature",
                                 "feature index " + std::to_string(node.feature) + " exceeds max_feature_idx");
            }
        }
    }
    validate(model);
    return model;
}

namespace {

using nlohmann::json;

[[noreturn]] void schema_error(const std::string& path, const std::string& what) {
    throw InputError("schema violation at " + (path.empty() ? std::string("/") : path) + ": " + what);
}

const json& field(const json& obj, const std::string& path, const char* key) {
    if (!obj.is_object()) {
        schema_error(path, "expected object");
    }
    auto it = obj.find(key);
    if (it == obj.end()) {
        schema_error(path + "/" + key, "missing");
    }
    return *it;
}

int as_int(const json& j, const std::string& path) {
    if (!j.is_number_integer()) {
        schema_error(path, "expected integer");
    }
    return j.get<int>();
}

double as_real(const json& j, const std::string& path) {
    if (!j.is_number()) {
        schema_error(path, "expected number");
    }
    return j.get<double>();
}

const json& as_array(const json& j, const std::string& path) {
    if (!j.is_array()) {
        schema_error(path, "expected array");
    }
    return j;
}

ChildRef as_child(const json& j, const std::string& path) {
    if (!j.is_object() || j.size() != 1) {
        schema_error(path, "expected {\"node\": id} or {\"leaf\": id}");
    }
    if (j.contains("node")) {
        return ChildRef::node(as_int(j["node"], path + "/node"));
    }
    if (j.contains("leaf")) {
        return ChildRef::leaf(as_int(j["leaf"], path + "/leaf"));
    }
    schema_error(path, "expected {\"node\": id} or {\"leaf\": id}");
}

}  // namespace

CanonicalTreeModel parse_canonical_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError(std::string("invalid JSON: ") + e.what());
    }

    CanonicalTreeModel model;
    model.num_class = as_int(field(doc, "", "num_class"), "/num_class");
    const auto& objective = field(doc, "", "objective");
    if (objective == "binary") {
        model.objective = Objective::binary;
    } else if (objective == "multiclass") {
        model.objective = Objective::multiclass;
    } else {
        schema_error("/objective", "expected \"binary\" or \"multiclass\"");
    }
    model.feature_count = as_int(field(doc, "", "feature_count"), "/feature_count");
    if (model.feature_count < 1) {
        schema_error("/feature_count", "must be positive");
    }

    const auto& trees = as_array(field(doc, "", "trees"), "/trees");
    for (std::size_t t = 0; t < trees.size(); ++t) {
        const std::string tpath = "/trees/" + std::to_string(t);
        TreeStructure tree;
        const auto& nodes = as_array(field(trees[t], tpath, "nodes"), tpath + "/nodes");
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const std::string npath = tpath + "/nodes/" + std::to_string(i);
            SplitNode node;
            node.id = as_int(field(nodes[i], npath, "id"), npath + "/id");
            node.feature = as_int(field(nodes[i], npath, "feature"), npath + "/feature");
            if (node.feature < 0 || node.feature >= model.feature_count) {
                schema_error(npath + "/feature", "feature index " + std::to_string(node.feature) +
                                                     " outside [0, feature_count)");
            }
            node.threshold = as_real(field(nodes[i], npath, "threshold"), npath + "/threshold");
            node.left = as_child(field(nodes[i], npath, "left"), npath + "/left");
            node.right = as_child(field(nodes[i], npath, "right"), npath + "/right");
            tree.nodes.push_back(node);
        }
        const auto& leaves = as_array(field(trees[t], tpath, "leaves"), tpath + "/leaves");
        for (std::size_t l = 0; l < leaves.size(); ++l) {
            const std::string lpath = tpath + "/leaves/" + std::to_string(l);
            LeafNode leaf;
            leaf.id = as_int(field(leaves[l], lpath, "id"), lpath + "/id");
            const auto& value = as_array(field(leaves[l], lpath, "value"), lpath + "/value");
            for (std::size_t c = 0; c < value.size(); ++c) {
                leaf.value.push_back(as_real(value[c], lpath + "/value/" + std::to_string(c)));
            }
            tree.leaves.push_back(std::move(leaf));
        }
        try {
            validate(tree, model.feature_count);
        } catch (const InputError& e) {
            schema_error(tpath, e.what());
        }
        model.trees.push_back(std::move(tree));
    }
    validate(model);
    return model;
}

std::string to_canonical_json(const CanonicalTreeModel& model) {
    json doc;
    doc["num_class"] = model.num_class;
    doc["objective"] = to_string(model.objective);
    doc["feature_count"] = model.feature_count;
    auto child = [](const ChildRef& c) { return json{{c.is_leaf ? "leaf" : "node", c.id}}; };
    json trees = json::array();
    for (const auto& tree : model.trees) {
        json nodes = json::array();
        for (const auto& n : tree.nodes) {
            nodes.push_back({{"id", n.id},
                             {"feature", n.feature},
                             {"threshold", n.threshold},
                             {"left", child(n.left)},
                             {"right", child(n.right)}});
        }
        json leaves = json::array();
        for (const auto& l : tree.leaves) {
            leaves.push_back({{"id", l.id}, {"value", l.value}});
        }
        trees.push_back({{"nodes", std::move(nodes)}, {"leaves", std::move(leaves)}});
    }
    doc["trees"] = std::move(trees);
    return doc.dump(1);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError("cannot open '" + path.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CanonicalTreeModel load_model(const std::filesystem::path& path, ModelFormat format) {
    const auto text = read_file(path);
    return format == ModelFormat::gbdt_text ? parse_gbdt_text(text) : parse_canonical_json(text);
}

}  // namespace treexfer
