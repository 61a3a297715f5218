// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "treexfer/conversion.hpp"
#include "treexfer/metrics.hpp"
#include "treexfer/sparsify.hpp"

using namespace treexfer;

namespace {

int failures = 0;

void report(const char* name, bool pass, const std::string& detail) {
    std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name, detail.c_str());
    std::fflush(stdout);
    failures += !pass;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

void conversion_fidelity() {
    long samples = 0;
    long class_hits = 0;
    double worst = 0.0;
    for (const auto& name : oracle::fixture_names()) {
        const auto f = oracle::load_fixture(name);
        const auto e = convert_ensemble(f.model, {});
        const Matrix L = predict_logits(e, f.X, PredictMode::hard);
        const auto classes = predict_classes(e, f.X, PredictMode::hard);
        for (Eigen::Index r = 0; r < f.X.rows(); ++r) {
            ++samples;
            class_hits += classes[r] == f.predicted_class[r];
            if (f.model.objective == Objective::binary) {
                worst = std::max(worst, std::abs(L(r, 1) - L(r, 0) - f.raw_score[r][0]));
            } else {
                for (Eigen::Index c = 0; c < L.cols(); ++c) {
                    worst = std::max(worst, std::abs(L(r, c) - f.raw_score[r][c]));
                }
            }
        }
    }
    report("conversion-fidelity", class_hits == samples && worst <= 1e-10,
           fmt("%.0f/%.0f classes match, max raw-score error %.3g (tol 1e-10)", double(class_hits), double(samples),
               worst));
}

void iris_example() {
    const auto dir = oracle::fixture_dir() / "iris_example";
    const auto model = load_model(dir / "tree.json", ModelFormat::canonical_json);
    const auto c = nlohmann::json::parse(read_file(dir / "case.json"));
    ConversionOptions o;
    o.tau = c.at("tau");
    o.feature_count = model.feature_count;
    o.sharpness = c.at("sharpness").get<std::vector<double>>();
    const auto nt = to_neural_tree(model.trees[0], o);
    const auto xs = c.at("x").get<std::vector<double>>();
    const Vector x = Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
    const Vector mu = route(nt, x).mu;
    const Vector y = predict_soft(nt, x);
    const double tol = c.at("tolerance");
    const auto want_mu = c.at("mu").get<std::vector<double>>();
    const auto want_y = c.at("y").get<std::vector<double>>();
    double err_mu = 0.0;
    double err_y = 0.0;
    for (std::size_t i = 0; i < want_mu.size(); ++i) {
        err_mu = std::max(err_mu, std::abs(mu[static_cast<Eigen::Index>(i)] - want_mu[i]));
    }
    for (std::size_t i = 0; i < want_y.size(); ++i) {
        err_y = std::max(err_y, std::abs(y[static_cast<Eigen::Index>(i)] - want_y[i]));
    }
    Eigen::Index arg = 0;
    y.maxCoeff(&arg);
    report("iris-example", err_mu <= tol && err_y <= tol && arg == c.at("argmax").get<int>(),
           fmt("mu=(%.4f %.4f %.4f %.4f) ", mu[0], mu[1], mu[2], mu[3]) +
               fmt("y=(%.3f %.3f %.3f) ", y[0], y[1], y[2]) +
               fmt("max |err| mu %.4f y %.4f (tol %.3f), argmax class index %.0f", err_mu, err_y, tol, double(arg)));
}

void gradient_suite() {
    std::mt19937_64 rng(2024);
    const int per_mode = 30;
    double main_err = 0.0;
    double gate_err = 0.0;
    int instances = 0;
    long checked = 0;
    for (int mode = 0; mode < 4; ++mode) {
        for (int i = 0; i < per_mode; ++i) {
            const auto inst = oracle::random_grad_instance(rng, mode);
            const auto e = oracle::check_gradients(inst);
            main_err = std::max({main_err, e.W, e.b, e.pi, e.v});
            gate_err = std::max({gate_err, e.log_alpha, e.gate_v});
            checked += e.checked;
            ++instances;
        }
    }
    report("gradient-suite", instances >= 100 && main_err < 1e-5 && gate_err < 1e-4,
           fmt("%.0f instances, %.0f partials; max rel err W/b/pi/v %.3g (tol 1e-5), gates %.3g (tol 1e-4)",
               double(instances), double(checked), main_err, gate_err));
}

void routing_invariants() {
    std::mt19937_64 rng(4242);
    const int instances = 10000;
    const double taus[] = {1.0, 0.1, 0.01};
    double sum_err = 0.0;
    double product_err = 0.0;
    int agree[3] = {0, 0, 0};
    int off_boundary = 0;
    for (int n = 0; n < instances; ++n) {
        const int k = oracle::uniform_int(rng, 1, 10);
        auto nt = oracle::random_neural_tree(oracle::uniform_int(rng, 1, 7), k, oracle::uniform_int(rng, 2, 4),
                                             oracle::uniform(rng, 0.05, 2.0), rng);
        const Vector x = Vector::NullaryExpr(k, [&] { return oracle::uniform(rng, -2.0, 2.0); });
        const Vector mu = route(nt, x).mu;
        sum_err = std::max(sum_err, std::abs(mu.sum() - 1.0));
        product_err = std::max(product_err, (mu - oracle::descent_mu(nt, x)).cwiseAbs().maxCoeff());

        const Vector margin = nt.W.transpose() * x + nt.b;
        if (margin.cwiseAbs().minCoeff() < 0.05) {
            continue;
        }
        ++off_boundary;
        const int hard = predict_hard(nt, x).leaf;
        for (int t = 0; t < 3; ++t) {
            nt.tau = taus[t];
            Eigen::Index arg = 0;
            route(nt, x).mu.maxCoeff(&arg);
            agree[t] += arg == hard;
        }
    }
    const double a0 = double(agree[0]) / off_boundary;
    const double a1 = double(agree[1]) / off_boundary;
    const double a2 = double(agree[2]) / off_boundary;
    report("routing-invariants", sum_err <= 1e-9 && product_err <= 1e-10 && agree[2] == off_boundary,
           fmt("%.0f instances; max |sum mu - 1| %.3g (tol 1e-9), max |exp-log - product| %.3g (tol 1e-10); ",
               double(instances), sum_err, product_err) +
               fmt("hard/soft leaf agreement on %.0f off-boundary samples: tau 1 %.4f, 0.1 %.4f, 0.01 %.4f",
                   double(off_boundary), a0, a1, a2));
}

struct DeskRun {
    std::string dataset;
    int trees = 0;
    PipelineReport report;
    bool all_l0_one = true;
    double seconds = 0.0;
};

DeskRun desk_run(const std::string& name, int trees, int stage1, int stage2) {
    const auto [train, test] = oracle::reference_split(name);
    const auto dir = oracle::fixture_dir() / (name + "_arch");
    const auto model = load_model(dir / "model.txt", ModelFormat::gbdt_text);
    ConversionOptions co;
    co.feature_count = model.feature_count;
    const auto e = truncate(convert_ensemble(model, co), trees);

    PipelineConfig pc;
    pc.reinit_seed = 0;
    pc.gate_mode = GateMode::gumbel_st;
    pc.oblique.epochs = stage1;
    pc.oblique.learning_rate = 0.01;
    pc.oblique.batch_size = 32;
    pc.oblique.seed = 0;
    pc.oblique.lambda_l0 = 0.0;
    pc.oblique.lambda_l1 = 0.0;
    pc.axis = pc.oblique;
    pc.axis.epochs = stage2;
    pc.axis.trainable.gates = false;

    const auto t0 = std::chrono::steady_clock::now();
    auto r = two_stage_pipeline(e, train, &test, pc);
    DeskRun out;
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.dataset = name;
    out.trees = e.size();
    out.report = r.report;
    for (const auto& nt : r.model.trees) {
        for (int i = 0; i < nt.num_nodes(); ++i) {
            out.all_l0_one = out.all_l0_one && node_l0(nt, i) == 1;
        }
    }
    std::printf("  run %s trees=%d leaves=%d: oblique test %.4f, axis test %.4f, %.1fs\n", name.c_str(), out.trees,
                e.trees[0].num_leaves(), *r.report.oblique.test, *r.report.axis.test, out.seconds);
    return out;
}

void sparsify_and_desk_scale() {
    struct Target {
        const char* dataset;
        int trees;
        int stage1;
        int stage2;
        double floor;
    };
    const Target targets[] = {
        {"glass", 1, 200, 20, 0.60},
        {"yeast", 1, 200, 20, 0.47},
        {"glass", 100, 60, 3, 0.70},
        {"yeast", 100, 60, 3, 0.52},
    };
    std::vector<DeskRun> runs;
    for (const auto& t : targets) {
        runs.push_back(desk_run(t.dataset, t.trees, t.stage1, t.stage2));
    }

    bool sparse_ok = true;
    std::string sparse_detail;
    for (const auto& r : runs) {
        const double drop = *r.report.oblique.test - *r.report.axis.test;
        sparse_ok = sparse_ok && r.all_l0_one && drop <= 0.05;
        sparse_detail += r.dataset + "/" + std::to_string(r.trees) + (r.all_l0_one ? " l0=1 " : " l0!=1 ") +
                         fmt("drop %+.4f; ", drop);
    }
    report("sparsification", sparse_ok, sparse_detail + "(tol drop <= 0.05)");

    bool desk_ok = true;
    std::string desk_detail;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const double acc = *runs[i].report.axis.test;
        const bool ok = acc >= targets[i].floor && runs[i].seconds <= 900.0;
        desk_ok = desk_ok && ok;
        desk_detail += runs[i].dataset + "/" + std::to_string(runs[i].trees) +
                       fmt(" %.4f (>= %.2f, %.0fs); ", acc, targets[i].floor, runs[i].seconds);
    }
    report("desk-scale", desk_ok, desk_detail);
}

AccuracyTable load_table(const std::string& name) {
    const auto j = nlohmann::json::parse(read_file(oracle::fixture_dir() / "tournament" / (name + ".json")));
    return {j.at("datasets").get<std::vector<std::string>>(), j.at("models").get<std::vector<std::string>>(),
            j.at("accuracy").get<std::vector<std::vector<double>>>()};
}

void metrics_oracle() {
    std::mt19937_64 rng(31337);
    int exact = 0;
    for (int i = 0; i < 1000; ++i) {
        const int n = oracle::uniform_int(rng, 2, 60);
        const int la = oracle::uniform_int(rng, 1, 8);
        const int lb = oracle::uniform_int(rng, 1, 8);
        std::vector<double> a(n);
        std::vector<double> b(n);
        for (int j = 0; j < n; ++j) {
            a[j] = oracle::uniform_int(rng, 0, la - 1);
            b[j] = oracle::uniform_int(rng, 0, lb - 1);
        }
        const auto got = kendall_tau_b(a, b);
        const double want = oracle::brute_kendall(a, b);
        exact += std::isnan(want) ? !got.has_value() : (got.has_value() && *got == want);
    }
    const auto single = tournament(load_table("single_tree"));
    const auto boosted = tournament(load_table("boosted"));
    auto near3 = [](const std::vector<double>& v, double a, double b, double c) {
        return std::abs(v[0] - a) < 5e-4 && std::abs(v[1] - b) < 5e-4 && std::abs(v[2] - c) < 5e-4;
    };
    const bool ok = exact == 1000 && single.wins == std::vector<int>{4, 1, 2} &&
                    boosted.wins == std::vector<int>{4, 3, 1} && near3(single.mrr, 0.762, 0.452, 0.619) &&
                    near3(boosted.mrr, 0.762, 0.714, 0.429);
    report("metrics-oracle", ok,
           fmt("kendall exact on %.0f/1000 tied vectors; ", double(exact)) +
               fmt("single wins %.0f/%.0f/%.0f ", single.wins[0], single.wins[1], single.wins[2]) +
               fmt("mrr %.3f/%.3f/%.3f; ", single.mrr[0], single.mrr[1], single.mrr[2]) +
               fmt("boosted wins %.0f/%.0f/%.0f ", boosted.wins[0], boosted.wins[1], boosted.wins[2]) +
               fmt("mrr %.3f/%.3f/%.3f", boosted.mrr[0], boosted.mrr[1], boosted.mrr[2]));
}

template <class F>
void guarded(const char* name, F f) {
    try {
        f();
    } catch (const std::exception& e) {
        report(name, false, std::string("threw: ") + e.what());
    }
}

}  // namespace

int main() {
    guarded("conversion-fidelity", conversion_fidelity);
    guarded("iris-example", iris_example);
    guarded("gradient-suite", gradient_suite);
    guarded("routing-invariants", routing_invariants);
    guarded("sparsification/desk-scale", sparsify_and_desk_scale);
    guarded("metrics-oracle", metrics_oracle);
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
