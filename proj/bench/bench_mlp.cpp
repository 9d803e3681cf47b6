#include <benchmark/benchmark.h>

#include <random>

#include "ergo/nnet.hpp"

namespace {

using namespace ergo::nn;

struct Fixture {
  Mlp net;
  Matrix x, grad;
  BatchCache cache;
  Matrix y;
  Gradients g;

  // one_hot mimics the DQN loss: one nonzero output gradient per row.
  Fixture(int batch, int hidden, bool one_hot = false)
      : net(Mlp::init(2, hidden, 35, 3)), x(batch, 2), grad(batch, 35) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1, 1);
    for (auto& v : x.data) v = u(rng);
    if (one_hot) {
      for (int i = 0; i < batch; ++i) grad.at(i, static_cast<int>(rng() % 35)) = u(rng) / batch;
    } else {
      for (auto& v : grad.data) v = u(rng) / batch;
    }
    g = Gradients::like(net);
  }
};

void BM_ForwardSerial(benchmark::State& st) {
  Fixture f(static_cast<int>(st.range(0)), static_cast<int>(st.range(1)));
  for (auto _ : st) {
    forward_batch_serial(f.net, f.x, f.cache, f.y);
    benchmark::DoNotOptimize(f.y.data.data());
  }
}

void BM_ForwardParallel(benchmark::State& st) {
  Fixture f(static_cast<int>(st.range(0)), static_cast<int>(st.range(1)));
  for (auto _ : st) {
    forward_batch(f.net, f.x, f.cache, f.y);
    benchmark::DoNotOptimize(f.y.data.data());
  }
}

void BM_BackwardSerial(benchmark::State& st) {
  Fixture f(static_cast<int>(st.range(0)), static_cast<int>(st.range(1)), st.range(2) != 0);
  forward_batch_serial(f.net, f.x, f.cache, f.y);
  for (auto _ : st) {
    f.g.zero();
    backward_batch_serial(f.net, f.cache, f.grad, f.g);
    benchmark::DoNotOptimize(f.g.w1.data());
  }
}

void BM_BackwardParallel(benchmark::State& st) {
  Fixture f(static_cast<int>(st.range(0)), static_cast<int>(st.range(1)), st.range(2) != 0);
  forward_batch(f.net, f.x, f.cache, f.y);
  for (auto _ : st) {
    f.g.zero();
    backward_batch(f.net, f.cache, f.grad, f.g);
    benchmark::DoNotOptimize(f.g.w1.data());
  }
}

#define SHAPES ->Args({64, 128})->Args({64, 512})->Args({256, 512})

BENCHMARK(BM_ForwardSerial) SHAPES;
BENCHMARK(BM_ForwardParallel) SHAPES;
#define GRAD_SHAPES \
  ->Args({64, 128, 0})->Args({64, 512, 0})->Args({256, 512, 0})->Args({64, 512, 1})

BENCHMARK(BM_BackwardSerial) GRAD_SHAPES;
BENCHMARK(BM_BackwardParallel) GRAD_SHAPES;

}  // namespace

BENCHMARK_MAIN();
