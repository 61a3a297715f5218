#include <benchmark/benchmark.h>

#include <filesystem>
#include <random>

#include "treexfer/conversion.hpp"
#include "treexfer/dataset.hpp"
#include "treexfer/ensemble.hpp"
#include "treexfer/model_io.hpp"
#include "treexfer/train.hpp"

namespace {

using namespace treexfer;

const std::filesystem::path fixtures = TREEXFER_FIXTURE_DIR;

struct Glass {
    TreeEnsemble model;
    Dataset data;
};

const Glass& glass() {
    static const Glass g = [] {
        CsvOptions o;
        o.label = "type";
        Glass out;
        out.data = load_csv(std::filesystem::path(TREEXFER_DATA_DIR) / "glass.csv", o);
        out.model = convert_ensemble(load_model(fixtures / "glass_arch" / "model.txt", ModelFormat::gbdt_text), {});
        return out;
    }();
    return g;
}

void BM_RouteSingleTree(benchmark::State& state) {
    const auto& g = glass();
    const auto& nt = g.model.trees[0];
    const Vector x = g.data.X.row(0).transpose();
    for (auto _ : state) {
        benchmark::DoNotOptimize(predict_soft(nt, x));
    }
}
BENCHMARK(BM_RouteSingleTree);

void BM_PredictBatch(benchmark::State& state) {
    const auto& g = glass();
    const auto e = truncate(g.model, static_cast<int>(state.range(0)));
    const auto mode = state.range(1) == 0 ? PredictMode::soft : PredictMode::hard;
    for (auto _ : state) {
        benchmark::DoNotOptimize(predict_logits(e, g.data.X, mode));
    }
    state.SetItemsProcessed(state.iterations() * g.data.size());
}
BENCHMARK(BM_PredictBatch)->ArgsProduct({{6, 100}, {0, 1}})->Unit(benchmark::kMicrosecond);

void BM_Backward(benchmark::State& state) {
    const auto& g = glass();
    const auto e = truncate(g.model, static_cast<int>(state.range(0)));
    const Matrix X = g.data.X.topRows(32);
    const std::vector<int> y(g.data.y.begin(), g.data.y.begin() + 32);
    for (auto _ : state) {
        benchmark::DoNotOptimize(ensemble_backward(e, X, y));
    }
    state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_Backward)->Arg(1)->Arg(6)->Arg(100)->Unit(benchmark::kMicrosecond);

void BM_TrainEpoch(benchmark::State& state) {
    const auto& g = glass();
    const auto e = reinitialize(truncate(g.model, static_cast<int>(state.range(0))), 0);
    TrainConfig c;
    c.epochs = 1;
    for (auto _ : state) {
        benchmark::DoNotOptimize(train(e, g.data, c));
    }
}
BENCHMARK(BM_TrainEpoch)->Arg(1)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
