// Serial reference vs OpenMP for the estimator kernels, plus the two hot
// loops of fine-tuning (song evaluation and one AWAC step).

#include <benchmark/benchmark.h>

#include <random>

#include "emgrl/awac.hpp"
#include "emgrl/kernels.hpp"
#include "emgrl/metrics.hpp"

using namespace emgrl;

namespace {

struct Data {
  kernels::SampleMatrix x;
  std::vector<int> labels;
};

Data make_data(Eigen::Index n, Eigen::Index d) {
  Rng rng = make_rng(1, "bench");
  std::normal_distribution<double> n01;
  Data out{kernels::SampleMatrix(n, d), std::vector<int>(static_cast<std::size_t>(n))};
  for (Eigen::Index i = 0; i < n; ++i) {
    const int l = static_cast<int>(i % kNumMovements);
    out.labels[static_cast<std::size_t>(i)] = l;
    for (Eigen::Index j = 0; j < d; ++j) out.x(i, j) = 0.3 * l + n01(rng);
  }
  return out;
}

void BM_KnnSerial(benchmark::State& state) {
  const Data d = make_data(state.range(0), kStateDim);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::knn_counts_serial(d.x, d.labels, 3));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_KnnOmp(benchmark::State& state) {
  const Data d = make_data(state.range(0), kStateDim);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::knn_counts_omp(d.x, d.labels, 3));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_PerFeatureMiSerial(benchmark::State& state) {
  const Data d = make_data(state.range(0), kStateDim);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::per_feature_mi_serial(d.x, d.labels, 3));
}

void BM_PerFeatureMiOmp(benchmark::State& state) {
  const Data d = make_data(state.range(0), kStateDim);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::per_feature_mi_omp(d.x, d.labels, 3));
}

void BM_Psi(benchmark::State& state) {
  const Data p = make_data(state.range(0), kStateDim);
  const Data q = make_data(state.range(0), kStateDim);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::psi(p.x, q.x));
}

ReplayBuffer make_buffer(const NoteChart& chart, int episodes) {
  Rng rng = make_rng(2, "bench-buffer");
  std::normal_distribution<double> n01;
  ReplayBuffer buf;
  for (int e = 0; e < episodes; ++e) {
    std::vector<TickRecord> log;
    for (int t = 0; t < chart.ticks(); ++t) {
      TickRecord r;
      r.tick = t;
      r.ideal = chart.ideal[static_cast<std::size_t>(t)];
      for (auto& v : r.state) v = n01(rng);
      r.action = encode(uniform_random_movement(rng));
      r.reward = reward(r.action, r.ideal);
      log.push_back(r);
    }
    buf.append(episode_from_log(log, e), 0.9, rng);
  }
  return buf;
}

void BM_SongEvaluation(benchmark::State& state) {
  const NoteChart chart = build_chart(7);
  const ReplayBuffer buf = make_buffer(chart, static_cast<int>(state.range(0)));
  const PolicyNet policy(PolicyArchitecture{}, 3);
  const SongEvaluator eval(buf, chart, policy.standardizer());
  for (auto _ : state) benchmark::DoNotOptimize(eval.total_return(policy));
}

void BM_AwacStep(benchmark::State& state) {
  const NoteChart chart = build_chart(7);
  const ReplayBuffer buf = make_buffer(chart, 2);
  AwacTrainer trainer(PolicyNet(PolicyArchitecture{}, 3), AwacConfig{}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step(buf));
}

}  // namespace

BENCHMARK(BM_KnnSerial)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_KnnOmp)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PerFeatureMiSerial)->Arg(2740)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PerFeatureMiOmp)->Arg(2740)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Psi)->Arg(2740)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SongEvaluation)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AwacStep)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
