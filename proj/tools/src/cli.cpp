#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "treexfer/checkpoint.hpp"
#include "treexfer/conversion.hpp"
#include "treexfer/dataset.hpp"
#include "treexfer/ensemble.hpp"
#include "treexfer/errors.hpp"
#include "treexfer/metrics.hpp"
#include "treexfer/model_io.hpp"
#include "treexfer/sparsify.hpp"
#include "treexfer/train.hpp"

namespace treexfer::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const InputError*>(&e) != nullptr || dynamic_cast<const CLI::Error*>(&e) != nullptr ||
        dynamic_cast<const std::invalid_argument*>(&e) != nullptr) {
        return 2;
    }
    if (dynamic_cast<const StateError*>(&e) != nullptr) {
        return 3;
    }
    if (dynamic_cast<const NumericalError*>(&e) != nullptr) {
        return 4;
    }
    return 1;
}

namespace {

std::string format_fraction(double v) {
    if (v == 1.0) {
        return "1.0";
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// Files of one run, written together at the end. If any write fails the
// ones already written are removed, so a failed run leaves nothing behind.
class Outputs {
public:
    void add(fs::path path, std::string content) { pending_.emplace_back(std::move(path), std::move(content)); }

    void commit() {
        std::vector<fs::path> written;
        try {
            for (const auto& [path, content] : pending_) {
                write_text_file(path, content);
                written.push_back(path);
            }
        } catch (...) {
            for (const auto& p : written) {
                std::error_code ec;
                fs::remove(p, ec);
            }
            throw;
        }
        pending_.clear();
    }

private:
    std::vector<std::pair<fs::path, std::string>> pending_;
};

fs::path sibling(const fs::path& out, const std::string& suffix) {
    auto p = out;
    p += suffix;
    return p;
}

// Every option of the subcommand with its effective value, in declaration order.
std::string resolved_config(const CLI::App& sub) {
    json options;
    for (const CLI::Option* opt : sub.get_options()) {
        if (opt->get_name() == "--help" || opt->get_name().empty()) {
            continue;
        }
        std::string name = opt->get_lnames().empty() ? opt->get_name() : opt->get_lnames().front();
        const bool is_flag = opt->get_items_expected_max() == 0;
        const bool is_list = !is_flag && opt->get_expected_max() > 1;
        json value;
        if (is_flag) {
            value = opt->count() > 0;
        } else if (is_list) {
            value = opt->results();
        } else if (opt->count() > 0) {
            value = opt->results().back();
        } else {
            value = opt->get_default_str();
        }
        options[name] = std::move(value);
    }
    json j;
    j["command"] = sub.get_name();
    j["options"] = std::move(options);
    return j.dump(2) + "\n";
}

struct DataArgs {
    std::string data;
    std::string label;
    std::vector<std::string> categorical;
    std::string encoding = "ordinal";
    std::string manifest;
    std::string dataset;
    std::string split_file;
    double test_fraction = 0.3;
    std::uint64_t split_seed = 0;
    bool skip_missing = false;
};

void add_data_options(CLI::App* sub, DataArgs& a) {
    sub->add_option("--data", a.data, "Delimited data file with a header row");
    sub->add_option("--label", a.label, "Label column (default: last column)");
    sub->add_option("--categorical", a.categorical, "Categorical columns")->delimiter(',');
    sub->add_option("--encoding", a.encoding, "Categorical encoding")->check(CLI::IsMember({"ordinal", "onehot"}));
    sub->add_option("--manifest", a.manifest, "Dataset manifest JSON");
    sub->add_option("--dataset", a.dataset, "Dataset name in the manifest");
    sub->add_option("--split", a.split_file, "JSON with \"train\" and \"test\" row indices");
    sub->add_option("--test-fraction", a.test_fraction, "Held-out fraction when no split file is given");
    sub->add_option("--split-seed", a.split_seed, "Seed of the stratified split");
    sub->add_flag("--skip-missing", a.skip_missing, "Drop rows with missing cells");
}

struct LoadedData {
    Dataset all;
    Dataset train;
    Dataset test;
};

std::vector<int> index_array(const json& j, const std::string& key, const std::string& file) {
    if (!j.contains(key) || !j[key].is_array()) {
        throw InputError(file + ": split needs a \"" + key + "\" index array");
    }
    try {
        return j[key].get<std::vector<int>>();
    } catch (const json::exception&) {
        throw InputError(file + ": \"" + key + "\" must hold integer row indices");
    }
}

LoadedData load_data(const DataArgs& a, std::ostream& err) {
    LoadedData d;
    if (!a.manifest.empty()) {
        if (a.dataset.empty()) {
            throw InputError("--manifest requires --dataset");
        }
        const auto manifest = load_manifest(a.manifest);
        const auto& entry = find_entry(manifest, a.dataset);
        auto opts = entry.csv_options();
        opts.skip_missing = a.skip_missing;
        d.all = load_csv(entry.path, opts);
    } else if (!a.data.empty()) {
        CsvOptions opts;
        opts.label = a.label;
        opts.categorical = a.categorical;
        opts.encoding = parse_encoding(a.encoding);
        opts.skip_missing = a.skip_missing;
        d.all = load_csv(a.data, opts);
    } else {
        throw InputError("no data given; use --data or --manifest with --dataset");
    }

    if (!a.split_file.empty()) {
        json j;
        try {
            j = json::parse(read_file(a.split_file));
        } catch (const json::parse_error& e) {
            throw InputError(a.split_file + ": " + e.what());
        }
        const json& s = j.contains("split") ? j["split"] : j;
        d.train = subset(d.all, index_array(s, "train", a.split_file));
        d.test = subset(d.all, index_array(s, "test", a.split_file));
    } else {
        auto s = split(d.all, a.test_fraction, a.split_seed, true);
        if (!s.warning.empty()) {
            err << "warning: " << s.warning << "\n";
        }
        d.train = std::move(s.train);
        d.test = std::move(s.test);
    }
    return d;
}

struct TrainArgs {
    int epochs = 100;
    double learning_rate = 0.01;
    int batch_size = 32;
    std::string optimizer = "adam";
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::string tau_schedule = "constant";
    double tau_start = 1.0;
    double tau_end = 0.1;
    double lambda_l0 = 0.0;
    double lambda_l1 = 0.0;
    std::uint64_t seed = 0;
    int threads = 1;
    bool fixed_stacking = false;
    bool no_standardize = false;
};

void add_train_options(CLI::App* sub, TrainArgs& a) {
    sub->add_option("--epochs", a.epochs, "Training epochs")->check(CLI::NonNegativeNumber);
    sub->add_option("--lr", a.learning_rate, "Learning rate")->check(CLI::PositiveNumber);
    sub->add_option("--batch-size", a.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
    sub->add_option("--optimizer", a.optimizer, "Optimizer")->check(CLI::IsMember({"adam", "sgd"}));
    sub->add_option("--beta1", a.beta1, "Adam beta1");
    sub->add_option("--beta2", a.beta2, "Adam beta2");
    sub->add_option("--epsilon", a.epsilon, "Adam epsilon");
    sub->add_option("--tau-schedule", a.tau_schedule, "Temperature schedule")
        ->check(CLI::IsMember({"constant", "exponential"}));
    sub->add_option("--tau-start", a.tau_start, "Initial temperature of the exponential schedule");
    sub->add_option("--tau-end", a.tau_end, "Final temperature of the exponential schedule");
    sub->add_option("--lambda-l0", a.lambda_l0, "L0 gate penalty weight");
    sub->add_option("--lambda-l1", a.lambda_l1, "L1 gated-weight penalty weight");
    sub->add_option("--seed", a.seed, "Seed for shuffling, initialization and gumbel noise");
    sub->add_option("--threads", a.threads, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--fixed-stacking", a.fixed_stacking, "Keep the per-tree stacking weights fixed");
    sub->add_flag("--no-standardize", a.no_standardize, "Train on raw feature values");
}

TrainConfig to_config(const TrainArgs& a) {
    TrainConfig c;
    c.epochs = a.epochs;
    c.learning_rate = a.learning_rate;
    c.batch_size = a.batch_size;
    c.optimizer.kind = parse_optimizer(a.optimizer);
    c.optimizer.beta1 = a.beta1;
    c.optimizer.beta2 = a.beta2;
    c.optimizer.epsilon = a.epsilon;
    c.tau.decay = a.tau_schedule == "exponential" ? TauDecay::exponential : TauDecay::constant;
    c.tau.start = a.tau_start;
    c.tau.end = a.tau_end;
    c.lambda_l0 = a.lambda_l0;
    c.lambda_l1 = a.lambda_l1;
    c.seed = a.seed;
    c.threads = a.threads;
    c.trainable.stacking = !a.fixed_stacking;
    c.check();
    return c;
}

void check_shape(const TreeEnsemble& e, int num_trees, int max_leaves) {
    for (int t = 0; t < e.size() && t < num_trees; ++t) {
        if (e.trees[t].num_leaves() > max_leaves) {
            throw InputError("tree " + std::to_string(t) + " has " + std::to_string(e.trees[t].num_leaves()) +
                             " leaves, more than --max-leaves " + std::to_string(max_leaves));
        }
    }
}

void check_data(const TreeEnsemble& e, const Dataset& d) {
    if (d.num_features() != e.feature_count) {
        throw InputError("data has " + std::to_string(d.num_features()) + " features, model expects " +
                         std::to_string(e.feature_count));
    }
    if (d.class_count > e.num_class) {
        throw InputError("data has " + std::to_string(d.class_count) + " classes, model predicts " +
                         std::to_string(e.num_class));
    }
}

json evaluation_json(const Evaluation& ev) {
    json j;
    j["accuracy"] = ev.accuracy;
    j["loss"] = ev.loss;
    return j;
}

json history_json(const std::vector<EpochRecord>& h) {
    json arr = json::array();
    for (const auto& r : h) {
        json j;
        j["epoch"] = r.epoch;
        j["loss"] = r.loss;
        j["acc"] = r.acc;
        j["tau"] = r.tau;
        arr.push_back(std::move(j));
    }
    return arr;
}

json stage_json(const StageAccuracy& s) {
    json j;
    j["train"] = s.train;
    j["test"] = s.test ? json(*s.test) : json(nullptr);
    return j;
}

// Source traversal vs converted hard routing; probes straddle every threshold
// when no calibration data is given.
Matrix probe_points(const CanonicalTreeModel& m) {
    std::vector<std::vector<double>> rows;
    std::vector<double> base(static_cast<std::size_t>(m.feature_count), 0.0);
    for (const auto& tree : m.trees) {
        for (const auto& node : tree.nodes) {
            base[node.feature] = node.threshold;
        }
    }
    constexpr double inf = std::numeric_limits<double>::infinity();
    for (const auto& tree : m.trees) {
        for (const auto& node : tree.nodes) {
            for (double v : {node.threshold, std::nextafter(node.threshold, inf), std::nextafter(node.threshold, -inf)}) {
                auto x = base;
                x[node.feature] = v;
                rows.push_back(std::move(x));
            }
        }
    }
    if (rows.empty()) {
        rows.push_back(base);
    }
    Matrix X(static_cast<Eigen::Index>(rows.size()), m.feature_count);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (int j = 0; j < m.feature_count; ++j) {
            X(static_cast<Eigen::Index>(r), j) = rows[r][j];
        }
    }
    return X;
}

double fidelity(const CanonicalTreeModel& m, const TreeEnsemble& e, const Matrix& X) {
    std::size_t agree = 0;
    std::vector<double> x(static_cast<std::size_t>(X.cols()));
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            x[j] = X(r, j);
        }
        bool same = true;
        for (std::size_t t = 0; t < m.trees.size() && same; ++t) {
            same = traverse(m.trees[t], x) == predict_hard(e.trees[t], X.row(r).transpose()).leaf;
        }
        agree += same;
    }
    return X.rows() == 0 ? 1.0 : static_cast<double>(agree) / static_cast<double>(X.rows());
}

ModelFormat detect_format(const std::string& flag, const fs::path& path) {
    if (flag == "json") {
        return ModelFormat::canonical_json;
    }
    if (flag == "gbdt") {
        return ModelFormat::gbdt_text;
    }
    return path.extension() == ".json" ? ModelFormat::canonical_json : ModelFormat::gbdt_text;
}

void print_table(std::ostream& out, const AccuracyTable& t, const TournamentResult& r) {
    char buf[64];
    std::size_t width = 8;
    for (const auto& d : t.datasets) {
        width = std::max(width, d.size() + 2);
    }
    auto pad = [&](const std::string& s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 1, ' '); };
    out << pad("dataset", width);
    for (const auto& m : t.models) {
        out << pad(m, 12);
    }
    out << "\n";
    for (std::size_t d = 0; d < t.datasets.size(); ++d) {
        out << pad(t.datasets[d], width);
        for (std::size_t m = 0; m < t.models.size(); ++m) {
            std::snprintf(buf, sizeof buf, "%.3f%s", t.accuracy[d][m], r.ranks[d][m] == 1 ? "*" : "");
            out << pad(buf, 12);
        }
        out << "\n";
    }
    out << pad("wins", width);
    for (int w : r.wins) {
        out << pad(std::to_string(w), 12);
    }
    out << "\n" << pad("mrr", width);
    for (double v : r.mrr) {
        std::snprintf(buf, sizeof buf, "%.3f", v);
        out << pad(buf, 12);
    }
    out << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Convert, fine-tune and sparsify gradient-boosted tree ensembles as differentiable trees", "treexfer"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();

    // convert
    auto* convert = app.add_subcommand("convert", "Convert a tree-model dump into a neural tree checkpoint");
    std::string conv_model;
    std::string conv_format = "auto";
    std::string conv_out;
    double conv_tau = default_tau;
    DataArgs conv_data;
    convert->add_option("--model", conv_model, "Model dump (text) or canonical JSON")->required();
    convert->add_option("--format", conv_format, "Model format")->check(CLI::IsMember({"auto", "gbdt", "json"}));
    convert->add_option("--tau", conv_tau, "Routing temperature")->check(CLI::PositiveNumber);
    convert->add_option("--out", conv_out, "Checkpoint path")->required();
    convert->add_option("--calib", conv_data.data, "Calibration data for sharpness and the fidelity check");
    convert->add_option("--label", conv_data.label, "Label column of the calibration data");

    // train
    auto* train_cmd = app.add_subcommand("train", "Fine-tune a checkpoint with gradient descent");
    std::string tr_ckpt;
    std::string tr_out;
    int tr_num_trees = 100;
    int tr_max_leaves = 32;
    bool tr_reinit = false;
    DataArgs tr_data;
    TrainArgs tr_args;
    train_cmd->add_option("--checkpoint", tr_ckpt, "Input checkpoint")->required();
    train_cmd->add_option("--out", tr_out, "Output checkpoint")->required();
    train_cmd->add_option("--num-trees", tr_num_trees, "Keep the first N trees")->check(CLI::PositiveNumber);
    train_cmd->add_option("--max-leaves", tr_max_leaves, "Largest accepted leaf count per tree")
        ->check(CLI::PositiveNumber);
    train_cmd->add_flag("--reinit", tr_reinit, "Randomly re-initialize all weights, keeping the structure");
    add_data_options(train_cmd, tr_data);
    add_train_options(train_cmd, tr_args);

    // sparsify
    auto* sparsify_cmd = app.add_subcommand("sparsify", "Two-stage oblique then axis-parallel training");
    std::string sp_ckpt;
    std::string sp_out;
    int sp_num_trees = 100;
    int sp_max_leaves = 32;
    bool sp_reinit = false;
    int sp_axis_epochs = 20;
    std::string sp_gate_mode = "gumbel_st";
    double sp_gumbel_tau = 1.0;
    double sp_log_alpha = 3.0;
    DataArgs sp_data;
    TrainArgs sp_args;
    sparsify_cmd->add_option("--checkpoint", sp_ckpt, "Input checkpoint")->required();
    sparsify_cmd->add_option("--out", sp_out, "Output (axis-parallel) checkpoint")->required();
    sparsify_cmd->add_option("--num-trees", sp_num_trees, "Keep the first N trees")->check(CLI::PositiveNumber);
    sparsify_cmd->add_option("--max-leaves", sp_max_leaves, "Largest accepted leaf count per tree")
        ->check(CLI::PositiveNumber);
    sparsify_cmd->add_flag("--reinit", sp_reinit, "Randomly re-initialize all weights, keeping the structure");
    sparsify_cmd->add_option("--axis-epochs", sp_axis_epochs, "Fine-tuning epochs after projection")
        ->check(CLI::NonNegativeNumber);
    sparsify_cmd->add_option("--gate-mode", sp_gate_mode, "Gate mode of the oblique stage")
        ->check(CLI::IsMember({"expected", "gumbel_st", "deterministic"}));
    sparsify_cmd->add_option("--gumbel-tau", sp_gumbel_tau, "Gumbel-softmax temperature")
        ->check(CLI::PositiveNumber);
    sparsify_cmd->add_option("--log-alpha-init", sp_log_alpha, "Initial gate log-alpha");
    add_data_options(sparsify_cmd, sp_data);
    add_train_options(sparsify_cmd, sp_args);

    // evaluate
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Accuracy, loss and split importance of a checkpoint");
    std::string ev_ckpt;
    std::string ev_out;
    std::string ev_subset = "test";
    std::string ev_mode = "both";
    int ev_threads = 1;
    DataArgs ev_data;
    evaluate_cmd->add_option("--checkpoint", ev_ckpt, "Checkpoint")->required();
    evaluate_cmd->add_option("--out", ev_out, "Write the JSON report here as well");
    evaluate_cmd->add_option("--subset", ev_subset, "Rows to evaluate")->check(CLI::IsMember({"all", "train", "test"}));
    evaluate_cmd->add_option("--mode", ev_mode, "Routing mode")->check(CLI::IsMember({"soft", "hard", "both"}));
    evaluate_cmd->add_option("--threads", ev_threads, "Worker threads")->check(CLI::PositiveNumber);
    add_data_options(evaluate_cmd, ev_data);

    // export
    auto* export_cmd = app.add_subcommand("export", "Export an axis-parallel checkpoint as canonical JSON");
    std::string ex_ckpt;
    std::string ex_out;
    export_cmd->add_option("--checkpoint", ex_ckpt, "Checkpoint")->required();
    export_cmd->add_option("--out", ex_out, "Canonical JSON path")->required();

    // report
    auto* report_cmd = app.add_subcommand("report", "Wins, mean reciprocal rank and Kendall tau summaries");
    std::string rp_table;
    std::string rp_importance;
    std::string rp_out;
    report_cmd->add_option("--table", rp_table, "Accuracy table JSON {datasets, models, accuracy}")->required();
    report_cmd->add_option("--importance", rp_importance, "Importance JSON {models, vectors}");
    report_cmd->add_option("--out", rp_out, "Write the JSON report here as well");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
            out << sub->help();
            return 0;
        }
        err << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        Outputs outputs;
        if (convert->parsed()) {
            const auto model = load_model(conv_model, detect_format(conv_format, conv_model));
            ConversionOptions co;
            co.tau = conv_tau;
            co.feature_count = model.feature_count;
            std::optional<Dataset> calib;
            if (!conv_data.data.empty()) {
                CsvOptions opts;
                opts.label = conv_data.label;
                calib = load_csv(conv_data.data, opts);
                if (calib->num_features() != model.feature_count) {
                    throw InputError("calibration data has " + std::to_string(calib->num_features()) +
                                     " features, model expects " + std::to_string(model.feature_count));
                }
                co.calibration = &calib->X;
            }
            const auto e = convert_ensemble(model, co);
            const double fid = fidelity(model, e, calib ? calib->X : probe_points(model));
            outputs.add(conv_out, ensemble_checkpoint_json(e));
            outputs.add(sibling(conv_out, ".config.json"), resolved_config(*convert));
            outputs.commit();
            out << "trees: " << e.size() << "\n";
            out << "classes: " << e.num_class << "\n";
            out << "fidelity: " << format_fraction(fid) << "\n";
            return fid == 1.0 ? 0 : 3;
        }

        if (train_cmd->parsed()) {
            auto e = truncate(read_checkpoint(tr_ckpt), tr_num_trees);
            check_shape(e, tr_num_trees, tr_max_leaves);
            const auto data = load_data(tr_data, err);
            check_data(e, data.train);
            const auto cfg = to_config(tr_args);
            FitOptions fo;
            fo.standardize = !tr_args.no_standardize;
            if (tr_reinit) {
                fo.reinit_seed = tr_args.seed;
            }
            const auto result = fit(e, data.train, cfg, fo);
            const auto test = evaluate(result.model, data.test, PredictMode::soft, cfg.threads);
            outputs.add(tr_out, ensemble_checkpoint_json(result.model));
            outputs.add(sibling(tr_out, ".history.jsonl"), history_jsonl(result.history));
            outputs.add(sibling(tr_out, ".config.json"), resolved_config(*train_cmd));
            outputs.commit();
            if (!result.history.empty()) {
                const auto& last = result.history.back();
                out << "epochs: " << last.epoch << "\ntrain loss: " << last.loss << "\ntrain accuracy: " << last.acc
                    << "\n";
            }
            out << "test accuracy: " << test.accuracy << "\n";
            return 0;
        }

        if (sparsify_cmd->parsed()) {
            auto e = truncate(read_checkpoint(sp_ckpt), sp_num_trees);
            check_shape(e, sp_num_trees, sp_max_leaves);
            if (e.has_gates()) {
                e = materialize_gates(e);
            }
            const auto data = load_data(sp_data, err);
            check_data(e, data.train);
            PipelineConfig pc;
            pc.oblique = to_config(sp_args);
            pc.axis = pc.oblique;
            pc.axis.epochs = sp_axis_epochs;
            pc.axis.lambda_l0 = 0.0;
            pc.axis.lambda_l1 = 0.0;
            pc.axis.trainable.gates = false;
            pc.gate_mode = parse_gate_mode(sp_gate_mode);
            pc.gumbel_tau = sp_gumbel_tau;
            pc.log_alpha_init = sp_log_alpha;
            pc.standardize = !sp_args.no_standardize;
            if (sp_reinit) {
                pc.reinit_seed = sp_args.seed;
            }
            const auto result = two_stage_pipeline(e, data.train, &data.test, pc);
            const auto& r = result.report;
            json rep;
            rep["initial"] = stage_json(r.initial);
            rep["oblique"] = stage_json(r.oblique);
            rep["projected"] = stage_json(r.projected);
            rep["axis"] = stage_json(r.axis);
            rep["mean_active_gates"] = r.mean_active_gates;
            rep["oblique_history"] = history_json(r.oblique_history);
            rep["axis_history"] = history_json(r.axis_history);
            outputs.add(sp_out, ensemble_checkpoint_json(result.model));
            outputs.add(sibling(sp_out, ".oblique.json"), ensemble_checkpoint_json(result.oblique));
            outputs.add(sibling(sp_out, ".report.json"), rep.dump(2) + "\n");
            outputs.add(sibling(sp_out, ".config.json"), resolved_config(*sparsify_cmd));
            outputs.commit();
            char buf[160];
            std::snprintf(buf, sizeof buf, "oblique test accuracy: %.4f\naxis-parallel test accuracy: %.4f\n",
                          r.oblique.test.value_or(0.0), r.axis.test.value_or(0.0));
            out << buf << "mean active gates: " << r.mean_active_gates << "\n";
            return 0;
        }

        if (evaluate_cmd->parsed()) {
            const auto e = read_checkpoint(ev_ckpt);
            const auto data = load_data(ev_data, err);
            const Dataset& rows = ev_subset == "all" ? data.all : ev_subset == "train" ? data.train : data.test;
            check_data(e, rows);
            json rep;
            rep["checkpoint"] = fs::path(ev_ckpt).filename().string();
            rep["subset"] = ev_subset;
            rep["samples"] = rows.size();
            if (ev_mode != "hard") {
                rep["soft"] = evaluation_json(evaluate(e, rows, PredictMode::soft, ev_threads));
            }
            if (ev_mode != "soft") {
                rep["hard"] = evaluation_json(evaluate(e, rows, PredictMode::hard, ev_threads));
            }
            try {
                rep["importance"] = feature_importance_split(e);
            } catch (const StateError&) {
                rep["importance"] = nullptr;
            }
            const auto text = rep.dump(2) + "\n";
            if (!ev_out.empty()) {
                outputs.add(ev_out, text);
                outputs.add(sibling(ev_out, ".config.json"), resolved_config(*evaluate_cmd));
                outputs.commit();
            }
            out << text;
            return 0;
        }

        if (export_cmd->parsed()) {
            const auto e = read_checkpoint(ex_ckpt);
            outputs.add(ex_out, to_canonical_json(export_ensemble(e)) + "\n");
            outputs.add(sibling(ex_out, ".config.json"), resolved_config(*export_cmd));
            outputs.commit();
            out << "exported " << e.size() << " trees\n";
            return 0;
        }

        if (report_cmd->parsed()) {
            json t;
            try {
                t = json::parse(read_file(rp_table));
            } catch (const json::parse_error& ex) {
                throw InputError(rp_table + ": " + ex.what());
            }
            AccuracyTable table;
            try {
                table.datasets = t.at("datasets").get<std::vector<std::string>>();
                table.models = t.at("models").get<std::vector<std::string>>();
                table.accuracy = t.at("accuracy").get<std::vector<std::vector<double>>>();
            } catch (const json::exception& ex) {
                throw InputError(rp_table + ": " + ex.what());
            }
            const auto result = tournament(table);
            json rep;
            rep["datasets"] = table.datasets;
            rep["models"] = table.models;
            rep["accuracy"] = table.accuracy;
            rep["ranks"] = result.ranks;
            rep["wins"] = result.wins;
            rep["mrr"] = result.mrr;
            if (!rp_importance.empty()) {
                json imp;
                std::vector<std::string> names;
                std::vector<std::vector<double>> vectors;
                try {
                    imp = json::parse(read_file(rp_importance));
                    names = imp.at("models").get<std::vector<std::string>>();
                    vectors = imp.at("vectors").get<std::vector<std::vector<double>>>();
                } catch (const json::exception& ex) {
                    throw InputError(rp_importance + ": " + ex.what());
                }
                if (names.size() != vectors.size()) {
                    throw InputError(rp_importance + ": one importance vector per model required");
                }
                json tau = json::array();
                for (const auto& a : vectors) {
                    json row = json::array();
                    for (const auto& b : vectors) {
                        if (a.size() != b.size() || a.size() < 2) {
                            throw InputError(rp_importance + ": importance vectors need equal length >= 2");
                        }
                        const auto v = kendall_tau_b(a, b);
                        row.push_back(v ? json(*v) : json(nullptr));
                    }
                    tau.push_back(std::move(row));
                }
                rep["importance"] = {{"models", names}, {"vectors", vectors}, {"kendall_tau", tau}};
            }
            if (!rp_out.empty()) {
                outputs.add(rp_out, rep.dump(2) + "\n");
                outputs.add(sibling(rp_out, ".config.json"), resolved_config(*report_cmd));
                outputs.commit();
            }
            print_table(out, table, result);
            return 0;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    return 2;
}

}  // namespace treexfer::cli
