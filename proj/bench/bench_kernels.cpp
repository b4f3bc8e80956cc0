// Serial reference loops against the OpenMP kernels on layer shapes taken from
// the full-scale model. Thread count follows JMOD2_THREADS / OMP_NUM_THREADS.
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "jmod2/kernels.hpp"
#include "jmod2/parallel.hpp"
#include "jmod2/reference_kernels.hpp"

namespace {

using jmod2::Tensor;

Tensor random_tensor(int c, int h, int w, unsigned seed) {
  Tensor t(c, h, w);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& v : t.data()) v = u(rng);
  return t;
}

std::vector<double> random_vector(std::size_t n, unsigned seed) {
  std::vector<double> v(n);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (double& x : v) x = u(rng);
  return v;
}

// args: channels in, channels out, height, width
struct ConvCase {
  Tensor in, out, grad_out, grad_in;
  std::vector<double> w, b, gw, gb;
  explicit ConvCase(const benchmark::State& s)
      : in(random_tensor(s.range(0), s.range(2), s.range(3), 1)),
        out(s.range(1), s.range(2), s.range(3)),
        grad_out(random_tensor(s.range(1), s.range(2), s.range(3), 2)),
        grad_in(s.range(0), s.range(2), s.range(3)),
        w(random_vector(s.range(0) * s.range(1) * 9, 3)),
        b(random_vector(s.range(1), 4)),
        gw(w.size()),
        gb(b.size()) {}
};

void conv_shapes(benchmark::internal::Benchmark* b) {
  b->Args({3, 16, 160, 256})->Args({16, 16, 160, 256})->Args({32, 32, 80, 128})->Args({128, 128, 10, 16});
}

void BM_ConvForwardSerial(benchmark::State& state) {
  ConvCase c(state);
  for (auto _ : state) {
    jmod2::reference::conv2d_forward(c.in, c.w, c.b, 3, c.out);
    benchmark::DoNotOptimize(c.out.data().data());
  }
}
BENCHMARK(BM_ConvForwardSerial)->Apply(conv_shapes)->Unit(benchmark::kMillisecond);

void BM_ConvForwardParallel(benchmark::State& state) {
  ConvCase c(state);
  for (auto _ : state) {
    jmod2::kernels::conv2d_forward(c.in, c.w, c.b, 3, c.out);
    benchmark::DoNotOptimize(c.out.data().data());
  }
}
BENCHMARK(BM_ConvForwardParallel)->Apply(conv_shapes)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_ConvBackwardSerial(benchmark::State& state) {
  ConvCase c(state);
  for (auto _ : state) {
    jmod2::reference::conv2d_backward(c.in, c.w, 3, c.grad_out, &c.grad_in, c.gw, c.gb);
    benchmark::DoNotOptimize(c.grad_in.data().data());
  }
}
BENCHMARK(BM_ConvBackwardSerial)->Apply(conv_shapes)->Unit(benchmark::kMillisecond);

void BM_ConvBackwardParallel(benchmark::State& state) {
  ConvCase c(state);
  for (auto _ : state) {
    jmod2::kernels::conv2d_backward(c.in, c.w, 3, c.grad_out, &c.grad_in, c.gw, c.gb);
    benchmark::DoNotOptimize(c.grad_in.data().data());
  }
}
BENCHMARK(BM_ConvBackwardParallel)->Apply(conv_shapes)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_BilinearSerial(benchmark::State& state) {
  const Tensor in = random_tensor(state.range(0), 80, 128, 5);
  Tensor out(state.range(0), 160, 256);
  for (auto _ : state) {
    jmod2::reference::upsample_bilinear2_forward(in, out);
    benchmark::DoNotOptimize(out.data().data());
  }
}
BENCHMARK(BM_BilinearSerial)->Arg(16)->Unit(benchmark::kMicrosecond);

void BM_BilinearParallel(benchmark::State& state) {
  const Tensor in = random_tensor(state.range(0), 80, 128, 5);
  Tensor out(state.range(0), 160, 256);
  for (auto _ : state) {
    jmod2::kernels::upsample_bilinear2_forward(in, out);
    benchmark::DoNotOptimize(out.data().data());
  }
}
BENCHMARK(BM_BilinearParallel)->Arg(16)->Unit(benchmark::kMicrosecond)->UseRealTime();

}  // namespace

int main(int argc, char** argv) {
  jmod2::configure_threads_from_env();
  benchmark::Initialize(&argc, argv);
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
