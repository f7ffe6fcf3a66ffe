// Microbenchmarks for the hot paths: filtering, smoothing, EM iterations,
// first-passage prediction and POMDP backups.

#include <benchmark/benchmark.h>

#include <vector>

#include "prognos/pomdp.hpp"
#include "prognos/prognostics.hpp"
#include "prognos/rng.hpp"
#include "prognos/tmhmm.hpp"

namespace {

using namespace prognos;

TiedMixtureHmm chain_model(int n_states, int n_components, int dim) {
  TiedMixtureHmm m;
  m.terminal = n_states - 1;
  m.mask = TiedMixtureHmm::absorbing_mask(n_states);
  m.initial = Eigen::VectorXd::Zero(n_states);
  m.initial[0] = 1.0;
  m.trans = Eigen::MatrixXd::Zero(n_states, n_states);
  for (int i = 0; i < n_states - 1; ++i) {
    m.trans(i, i) = 0.9;
    double rest = 0.1;
    for (int j = i + 1; j < n_states; ++j) {
      const double p = j == n_states - 1 ? rest : rest * 0.6;
      m.trans(i, j) = p;
      rest -= p;
    }
    m.trans.row(i) /= m.trans.row(i).sum();
  }
  m.trans(n_states - 1, n_states - 1) = 1.0;
  m.mix_weights = Eigen::MatrixXd::Constant(n_states, n_components, 1.0 / n_components);
  for (int c = 0; c < n_components; ++c) {
    std::vector<DimParams> dims;
    for (int d = 0; d < dim; ++d) dims.push_back(DimParams::gaussian(2.0 * c + 0.1 * d, 1.0));
    m.components.emplace_back(std::move(dims));
  }
  return m;
}

std::vector<ObservationSequence> sample_data(const TiedMixtureHmm& m, int count, int maxlen,
                                             std::uint64_t seed) {
  std::vector<ObservationSequence> out;
  Rng rng = make_rng(seed);
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(sample_sequence(m, maxlen, rng).seq);
  return out;
}

void BM_forward_filter(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const TiedMixtureHmm m = chain_model(n, 3, 4);
  const auto data = sample_data(m, 1, 200, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(forward_filter(m, data.front()).loglik);
  }
  state.SetItemsProcessed(state.iterations() * data.front().length());
}
BENCHMARK(BM_forward_filter)->Arg(4)->Arg(8)->Arg(16);

void BM_forward_backward(benchmark::State& state) {
  const TiedMixtureHmm m = chain_model(static_cast<int>(state.range(0)), 3, 4);
  const auto data = sample_data(m, 1, 200, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(forward_backward(m, data.front()).loglik);
  }
}
BENCHMARK(BM_forward_backward)->Arg(4)->Arg(8);

void BM_em_iteration(benchmark::State& state) {
  const TiedMixtureHmm m = chain_model(4, 3, 4);
  const auto data = sample_data(m, 64, 80, 3);
  EmConfig cfg;
  cfg.max_iters = 1;
  cfg.dirichlet_alpha = 1.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(em_fit(m, data, cfg).loglik_trace.back());
  }
}
BENCHMARK(BM_em_iteration);

void BM_failure_time_distribution(benchmark::State& state) {
  const TiedMixtureHmm m = chain_model(8, 3, 4);
  const Belief b = initial_belief(m);
  for (auto _ : state) {
    benchmark::DoNotOptimize(failure_time_distribution(m, b, static_cast<int>(state.range(0))));
  }
}
BENCHMARK(BM_failure_time_distribution)->Arg(20)->Arg(100);

void BM_value_iteration(benchmark::State& state) {
  const TiedMixtureHmm m = chain_model(4, 3, 4);
  const MaintenancePomdp p = build_pomdp(m, PomdpBuildSpec{});
  ValueIterationConfig cfg;
  cfg.horizon = static_cast<int>(state.range(0));
  cfg.early_stop_tol = 0.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(value_iteration(p, cfg).solved_horizon());
  }
}
BENCHMARK(BM_value_iteration)->Arg(5)->Arg(15);

}  // namespace

BENCHMARK_MAIN();
