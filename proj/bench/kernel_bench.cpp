// Parallel kernels against the serial reference loops.

#include <benchmark/benchmark.h>

#include "hdet/kernels.hpp"
#include "hdet/rng.hpp"

namespace k = hdet::kernels;
using hdet::Tensor;

namespace {

Tensor random_tensor(hdet::Shape shape, std::uint64_t seed) {
  hdet::Rng rng(seed);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

// args: batch, in channels, out channels, spatial size, stride
void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({16, 3, 8, 64, 1})->Args({16, 16, 16, 64, 1})->Args({16, 16, 32, 32, 2})->Args({16, 64, 64, 4, 1});
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  const auto n = state.range(0), cin = state.range(1), cout = state.range(2), s = state.range(3);
  const k::ConvGeometry g{static_cast<std::size_t>(state.range(4)), 1};
  Tensor x = random_tensor({std::size_t(n), std::size_t(cin), std::size_t(s), std::size_t(s)}, 1);
  Tensor w = random_tensor({std::size_t(cout), std::size_t(cin), 3, 3}, 2);
  for (auto _ : state) {
    Tensor y = Parallel ? k::conv2d_forward(x, w, nullptr, g) : k::reference::conv2d_forward(x, w, nullptr, g);
    benchmark::DoNotOptimize(y.data().data());
  }
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
  const auto n = state.range(0), cin = state.range(1), cout = state.range(2), s = state.range(3);
  const k::ConvGeometry g{static_cast<std::size_t>(state.range(4)), 1};
  Tensor x = random_tensor({std::size_t(n), std::size_t(cin), std::size_t(s), std::size_t(s)}, 1);
  Tensor w = random_tensor({std::size_t(cout), std::size_t(cin), 3, 3}, 2);
  Tensor dy = random_tensor(k::conv2d_output_shape(x.shape(), w.shape(), g), 3);
  Tensor dx, dw;
  for (auto _ : state) {
    if (Parallel)
      k::conv2d_backward(x, w, dy, g, &dx, &dw, nullptr);
    else
      k::reference::conv2d_backward(x, w, dy, g, &dx, &dw, nullptr);
    benchmark::DoNotOptimize(dx.data().data());
  }
}

template <bool Parallel>
void BM_BatchNormTrain(benchmark::State& state) {
  const std::size_t c = state.range(0), s = state.range(1);
  Tensor x = random_tensor({16, c, s, s}, 4), gamma(hdet::Shape{c}, 1.0), beta(hdet::Shape{c}, 0.0);
  Tensor dy = random_tensor(x.shape(), 5);
  k::BatchStats stats;
  Tensor norm, dx, dg, db;
  for (auto _ : state) {
    Tensor y = Parallel ? k::batchnorm_train_forward(x, gamma, beta, 1e-5, stats, norm)
                        : k::reference::batchnorm_train_forward(x, gamma, beta, 1e-5, stats, norm);
    if (Parallel)
      k::batchnorm_train_backward(dy, norm, gamma, stats, &dx, &dg, &db);
    else
      k::reference::batchnorm_train_backward(dy, norm, gamma, stats, &dx, &dg, &db);
    benchmark::DoNotOptimize(y.data().data());
  }
}

}  // namespace

BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/parallel")->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/reference")->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/parallel")->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/reference")->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchNormTrain<true>)->Name("batchnorm_train/parallel")->Args({16, 64})->Args({64, 8})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchNormTrain<false>)->Name("batchnorm_train/reference")->Args({16, 64})->Args({64, 8})->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
