#include "treexfer/checkpoint.hpp"

#include <fstream>
#include <system_error>

#include <nlohmann/json.hpp>

#include "treexfer/errors.hpp"
#include "treexfer/model_io.hpp"

namespace treexfer {

using json = nlohmann::ordered_json;

namespace {

json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            row.push_back(m(r, c));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

json vector_json(const Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        out.push_back(v[i]);
    }
    return out;
}

json tree_json(const NeuralTree& nt, const GateSet* gates) {
    json j;
    j["W"] = matrix_json(nt.W);
    j["b"] = vector_json(nt.b);
    j["pi"] = matrix_json(nt.pi);
    j["Q"] = nt.Q.dense();
    j["tau"] = nt.tau;
    if (gates != nullptr) {
        json g;
        g["log_alpha"] = matrix_json(gates->log_alpha);
        g["v"] = matrix_json(gates->v);
        g["gamma"] = gates->hc.gamma;
        g["zeta"] = gates->hc.zeta;
        g["beta"] = gates->hc.beta;
        g["gumbel_tau"] = gates->gumbel_tau;
        j["gates"] = std::move(g);
    }
    return j;
}

[[noreturn]] void schema_error(const std::string& path, const std::string& what) {
    throw InputError("schema violation at " + path + ": " + what);
}

const json& field(const json& j, const char* key, const std::string& path) {
    if (!j.is_object()) {
        schema_error(path, "expected an object");
    }
    const auto it = j.find(key);
    if (it == j.end()) {
        schema_error(path + "/" + key, "missing");
    }
    return *it;
}

double number(const json& j, const std::string& path) {
    if (!j.is_number()) {
        schema_error(path, "expected a number");
    }
    return j.get<double>();
}

// rows == -1 / cols == -1 accept any size; an empty array is a 0 x cols matrix.
Matrix parse_matrix(const json& j, const std::string& path, Eigen::Index cols = -1) {
    if (!j.is_array()) {
        schema_error(path, "expected an array of rows");
    }
    const auto rows = static_cast<Eigen::Index>(j.size());
    if (rows > 0) {
        if (!j[0].is_array()) {
            schema_error(path + "/0", "expected an array");
        }
        cols = static_cast<Eigen::Index>(j[0].size());
    }
    Matrix m(rows, cols < 0 ? 0 : cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = j[r];
        const std::string rp = path + "/" + std::to_string(r);
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != m.cols()) {
            schema_error(rp, "ragged matrix row");
        }
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            m(r, c) = number(row[c], rp + "/" + std::to_string(c));
        }
    }
    return m;
}

Vector parse_vector(const json& j, const std::string& path) {
    if (!j.is_array()) {
        schema_error(path, "expected an array");
    }
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        v[i] = number(j[i], path + "/" + std::to_string(i));
    }
    return v;
}

TreeCheckpoint parse_tree(const json& j, const std::string& path) {
    TreeCheckpoint out;
    auto& nt = out.tree;
    nt.b = parse_vector(field(j, "b", path), path + "/b");
    nt.W = parse_matrix(field(j, "W", path), path + "/W", nt.b.size());
    nt.pi = parse_matrix(field(j, "pi", path), path + "/pi");
    nt.tau = number(field(j, "tau", path), path + "/tau");

    const auto& q = field(j, "Q", path);
    std::vector<std::vector<int>> rows;
    if (!q.is_array()) {
        schema_error(path + "/Q", "expected an array of rows");
    }
    for (std::size_t r = 0; r < q.size(); ++r) {
        if (!q[r].is_array()) {
            schema_error(path + "/Q/" + std::to_string(r), "expected an array");
        }
        std::vector<int> row;
        for (std::size_t c = 0; c < q[r].size(); ++c) {
            const auto& cell = q[r][c];
            if (!cell.is_number_integer()) {
                schema_error(path + "/Q/" + std::to_string(r) + "/" + std::to_string(c), "expected 0 or 1");
            }
            row.push_back(cell.get<int>());
        }
        rows.push_back(std::move(row));
    }
    try {
        nt.Q = RoutingMatrix::from_dense(rows);
    } catch (const InputError& e) {
        schema_error(path + "/Q", e.what());
    }
    try {
        nt.check();
    } catch (const std::invalid_argument& e) {
        schema_error(path, e.what());
    }

    if (j.contains("gates")) {
        const std::string gp = path + "/gates";
        const auto& g = j["gates"];
        GateSet gates;
        gates.log_alpha = parse_matrix(field(g, "log_alpha", gp), gp + "/log_alpha", nt.b.size());
        gates.v = parse_matrix(field(g, "v", gp), gp + "/v", nt.b.size());
        gates.hc.gamma = number(field(g, "gamma", gp), gp + "/gamma");
        gates.hc.zeta = number(field(g, "zeta", gp), gp + "/zeta");
        gates.hc.beta = number(field(g, "beta", gp), gp + "/beta");
        if (g.contains("gumbel_tau")) {
            gates.gumbel_tau = number(g["gumbel_tau"], gp + "/gumbel_tau");
        }
        try {
            gates.check();
        } catch (const std::invalid_argument& e) {
            schema_error(gp, e.what());
        }
        if (gates.num_features() != nt.num_features() || gates.num_nodes() != nt.num_nodes()) {
            schema_error(gp, "gate matrices must match W in shape");
        }
        out.gates = std::move(gates);
    }
    return out;
}

json parse_json(std::string_view text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError(std::string("invalid JSON: ") + e.what());
    }
}

}  // namespace

std::string tree_checkpoint_json(const NeuralTree& nt, const GateSet* gates) {
    return tree_json(nt, gates).dump(1);
}

TreeCheckpoint parse_tree_checkpoint(std::string_view text) {
    return parse_tree(parse_json(text), "");
}

std::string ensemble_checkpoint_json(const TreeEnsemble& e) {
    e.check();
    json j;
    j["num_class"] = e.num_class;
    j["feature_count"] = e.feature_count;
    if (e.has_gates()) {
        j["gate_mode"] = std::string(to_string(e.gate_mode));
    }
    j["v"] = vector_json(e.v);
    json trees = json::array();
    for (int t = 0; t < e.size(); ++t) {
        trees.push_back(tree_json(e.trees[t], e.has_gates() ? &e.gates[t] : nullptr));
    }
    j["trees"] = std::move(trees);
    return j.dump(1) + "\n";
}

TreeEnsemble parse_ensemble_checkpoint(std::string_view text) {
    const json j = parse_json(text);
    TreeEnsemble e;
    const auto& nc = field(j, "num_class", "");
    if (!nc.is_number_integer() || nc.get<int>() < 2) {
        schema_error("/num_class", "expected an integer >= 2");
    }
    e.num_class = nc.get<int>();
    e.v = parse_vector(field(j, "v", ""), "/v");
    if (j.contains("gate_mode")) {
        try {
            e.gate_mode = parse_gate_mode(j["gate_mode"].get<std::string>());
        } catch (const std::exception& ex) {
            schema_error("/gate_mode", ex.what());
        }
    }
    const auto& trees = field(j, "trees", "");
    if (!trees.is_array() || trees.empty()) {
        schema_error("/trees", "expected a non-empty array");
    }
    int gated = 0;
    for (std::size_t t = 0; t < trees.size(); ++t) {
        auto tc = parse_tree(trees[t], "/trees/" + std::to_string(t));
        e.trees.push_back(std::move(tc.tree));
        if (tc.gates) {
            e.gates.push_back(std::move(*tc.gates));
            ++gated;
        }
    }
    if (gated != 0 && gated != e.size()) {
        schema_error("/trees", "gates must be present on every tree or on none");
    }
    e.feature_count = e.trees.front().num_features();
    if (j.contains("feature_count")) {
        const auto& fc = j["feature_count"];
        if (!fc.is_number_integer() || fc.get<int>() != e.feature_count) {
            schema_error("/feature_count", "does not match the tree weights");
        }
    }
    try {
        e.check();
    } catch (const std::invalid_argument& ex) {
        schema_error("", ex.what());
    }
    return e;
}

TreeEnsemble read_checkpoint(const std::filesystem::path& path) {
    try {
        return parse_ensemble_checkpoint(read_file(path));
    } catch (const InputError& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

void write_checkpoint(const std::filesystem::path& path, const TreeEnsemble& e) {
    write_text_file(path, ensemble_checkpoint_json(e));
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw InputError("cannot write '" + path.string() + "'");
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw InputError("cannot write '" + path.string() + "'");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw InputError("cannot write '" + path.string() + "'");
    }
}

}  // namespace treexfer
