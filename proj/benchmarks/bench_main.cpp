#include <benchmark/benchmark.h>

#include "sisn/metrics.hpp"
#include "sisn/model.hpp"
#include "sisn/ops.hpp"
#include "sisn/rng.hpp"

namespace {

using namespace sisn;

Tensor<float> filled(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform() * 2 - 1);
  return t;
}

// args: channels, spatial size
void BM_Conv3x3Forward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), n = static_cast<int>(state.range(1));
  const auto x = filled(Shape{1, c, n, n}, 1);
  const auto w = filled(Shape{c, c, 3, 3}, 2);
  const auto b = filled(Shape{1, c, 1, 1}, 3);
  for (auto _ : state) {
    Tape<float> tape;
    const Var y = conv2d(tape, tape.constant(x), tape.constant(w), tape.constant(b), 1);
    benchmark::DoNotOptimize(tape.value(y).data().data());
  }
  state.SetItemsProcessed(state.iterations() * 9LL * c * c * n * n);
}
BENCHMARK(BM_Conv3x3Forward)->Args({16, 32})->Args({64, 32})->Args({64, 64});

void BM_Conv3x3ForwardBackward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), n = static_cast<int>(state.range(1));
  const auto x = filled(Shape{1, c, n, n}, 1);
  const auto w = filled(Shape{c, c, 3, 3}, 2);
  const auto b = filled(Shape{1, c, 1, 1}, 3);
  for (auto _ : state) {
    Tape<float> tape;
    const Var xv = tape.leaf(x, true);
    const Var y = sum_all(tape, conv2d(tape, xv, tape.leaf(w, true), tape.leaf(b, true), 1));
    tape.backward(y);
    benchmark::DoNotOptimize(tape.grad(xv).data().data());
  }
}
BENCHMARK(BM_Conv3x3ForwardBackward)->Args({16, 32})->Args({64, 32});

// arg: LR spatial size
void BM_ToyModelInference(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto model = ModelParams<float>::initialize(SisnConfig::toy(), 1);
  const auto x = filled(Shape{1, 3, n, n}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(infer(model, x).data().data());
}
BENCHMARK(BM_ToyModelInference)->Arg(16)->Arg(32)->Arg(64);

void BM_Ssim(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(5);
  ImageU8 a(n, n), b(n, n);
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    a.pixels[i] = static_cast<std::uint8_t>(rng.below(256));
    b.pixels[i] = static_cast<std::uint8_t>(rng.below(256));
  }
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim)->Arg(128)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
