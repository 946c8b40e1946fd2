// Serial reference kernels against their OpenMP versions, plus a full batch
// gradient through both execution paths.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "trade/corpus/synth.hpp"
#include "trade/corpus/vocabulary.hpp"
#include "trade/model/trainer.hpp"
#include "trade/numkit/kernels.hpp"

namespace kernels = trade::numkit::kernels;

namespace {

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

template <bool Parallel>
void BM_Matvec(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto w = random_vector(n * n, 1), x = random_vector(n, 2);
  std::vector<double> y(n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::parallel::matvec(w, n, n, x, y);
    } else {
      kernels::serial::matvec(w, n, n, x, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}

template <bool Parallel>
void BM_MatvecTransposed(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto w = random_vector(n * n, 1), g = random_vector(n, 2);
  std::vector<double> y(n, 0.0);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::parallel::matvec_transposed_acc(w, n, n, g, y);
    } else {
      kernels::serial::matvec_transposed_acc(w, n, n, g, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}

template <bool Parallel>
void BM_OuterAcc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto w = random_vector(n * n, 1);
  const auto g = random_vector(n, 2), x = random_vector(n, 3);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::parallel::outer_acc(w, n, n, g, x);
    } else {
      kernels::serial::outer_acc(w, n, n, g, x);
    }
    benchmark::DoNotOptimize(w.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}

template <trade::model::Execution Exec>
void BM_BatchLoss(benchmark::State& state) {
  auto spec = trade::corpus::SynthSpec::default_spec();
  spec.dialogues = 20;
  const auto data = trade::corpus::synth_corpus(spec, 1).corpus;
  trade::model::ModelConfig c;
  c.emb_dim = c.hidden_dim = static_cast<std::size_t>(state.range(0));
  trade::model::TradeModel m(c, trade::corpus::Vocabulary::build(data), data.registry, 1);
  auto samples = trade::model::make_samples(m, data);
  samples.resize(16);
  for (auto _ : state) {
    auto r = trade::model::batch_loss(m, samples, trade::model::ForwardOptions{true, 7}, Exec);
    benchmark::DoNotOptimize(r.loss.total);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(samples.size()));
}

}  // namespace

BENCHMARK(BM_Matvec<false>)->Name("matvec/serial")->Arg(64)->Arg(256)->Arg(1024);
BENCHMARK(BM_Matvec<true>)->Name("matvec/parallel")->Arg(64)->Arg(256)->Arg(1024);
BENCHMARK(BM_MatvecTransposed<false>)->Name("matvec_transposed/serial")->Arg(64)->Arg(256)->Arg(1024);
BENCHMARK(BM_MatvecTransposed<true>)->Name("matvec_transposed/parallel")->Arg(64)->Arg(256)->Arg(1024);
BENCHMARK(BM_OuterAcc<false>)->Name("outer_acc/serial")->Arg(64)->Arg(256)->Arg(1024);
BENCHMARK(BM_OuterAcc<true>)->Name("outer_acc/parallel")->Arg(64)->Arg(256)->Arg(1024);
BENCHMARK(BM_BatchLoss<trade::model::Execution::kSerial>)->Name("batch_loss/serial")->Arg(32)->Arg(64)
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchLoss<trade::model::Execution::kParallel>)->Name("batch_loss/parallel")->Arg(32)->Arg(64)
    ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
