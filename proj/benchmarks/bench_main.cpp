#include <cmath>
#include <numeric>

#include <benchmark/benchmark.h>

#include "ehrcvd/baselines.hpp"
#include "ehrcvd/metrics.hpp"
#include "ehrcvd/recurrent.hpp"
#include "ehrcvd/rng.hpp"

using namespace ehrcvd;

namespace {

TrainingSet make_batch(std::size_t n, std::size_t days, std::size_t features, std::size_t outputs) {
  Rng rng(7);
  TrainingSet s;
  s.labels = Tensor2(n, outputs);
  s.masks = Tensor2(n, outputs, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    PatientSequence seq;
    seq.patient_id = std::to_string(i);
    seq.matrix = Tensor2(days, features);
    const std::size_t real = 1 + rng.below(days);
    for (std::size_t t = 0; t < days; ++t) {
      const bool is_real = t >= days - real;
      seq.days.push_back(is_real ? static_cast<std::int64_t>(t) : kPaddingDay);
      seq.mask.push_back(is_real);
      if (is_real) {
        for (auto& v : seq.matrix.row(t)) v = rng.uniform();
      }
    }
    s.sequences.push_back(std::move(seq));
    for (std::size_t k = 0; k < outputs; ++k) s.labels(i, k) = rng.bernoulli(0.5);
  }
  return s;
}

void BM_RecurrentLossAndGradient(benchmark::State& state) {
  const auto hidden = static_cast<std::size_t>(state.range(0));
  const bool attention = state.range(1) != 0;
  const std::size_t features = 65, outputs = 4;
  const auto data = make_batch(32, 30, features, outputs);
  const auto params = init_params(features, hidden, outputs, attention, 3);
  std::vector<std::size_t> batch(data.size());
  std::iota(batch.begin(), batch.end(), 0);
  RecurrentParams grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(loss_and_gradient(params, data, batch, &grad));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
}
BENCHMARK(BM_RecurrentLossAndGradient)->ArgsProduct({{8, 16, 32}, {0, 1}})->Unit(benchmark::kMicrosecond);

void BM_RocAuc(benchmark::State& state) {
  Rng rng(11);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> s(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = rng.bernoulli(0.3);
    s[i] = rng.uniform() + 0.3 * y[i];
  }
  for (auto _ : state) benchmark::DoNotOptimize(roc_auc(s, y));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RocAuc)->RangeMultiplier(10)->Range(100, 100000);

void BM_LogRegTrain(benchmark::State& state) {
  Rng rng(5);
  const std::size_t n = 1000, d = static_cast<std::size_t>(state.range(0));
  Tensor2 X(n, d);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : X.row(i)) v = rng.normal();
    y[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-X(i, 0) + X(i, 1))));
  }
  for (auto _ : state) benchmark::DoNotOptimize(logreg_train(X, y, 1e-2).intercept);
}
BENCHMARK(BM_LogRegTrain)->Arg(50)->Arg(500)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
