// SPDX-License-Identifier: Apache-2.0
//
// Serial reference vs OpenMP kernels on a 12-mic, 513-bin, 20 s grid.
// Pass --benchmark_filter to narrow; OMP_NUM_THREADS sets the team size.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "defarray/kernels.hpp"

namespace k = defarray::kernels;

namespace {

constexpr k::Shape kShape{625, 513, 12};

struct Fixture {
  std::vector<k::cplx> source, data, weights, out, out_apply, sums;
  std::vector<double> delays, omegas;
  std::vector<std::size_t> labels, slots;
  std::size_t states = 10, outputs = 5;

  Fixture() {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g;
    auto fill = [&](std::vector<k::cplx>& v, std::size_t n) {
      v.resize(n);
      for (auto& x : v) x = {g(rng), g(rng)};
    };
    const std::size_t cells = kShape.frames * kShape.bins;
    fill(source, cells);
    fill(data, cells * kShape.mics);
    fill(weights, states * kShape.bins * outputs * kShape.mics);
    out.resize(cells * kShape.mics);
    out_apply.resize(cells * outputs);
    sums.resize(states * kShape.bins * kShape.mics * kShape.mics);
    delays.resize(kShape.frames * kShape.mics);
    for (auto& d : delays) d = 1e-4 * g(rng);
    omegas.resize(kShape.bins);
    for (std::size_t f = 0; f < kShape.bins; ++f) omegas[f] = 98.17 * static_cast<double>(f);
    labels.resize(kShape.frames);
    slots.resize(kShape.frames);
    for (std::size_t t = 0; t < kShape.frames; ++t) labels[t] = slots[t] = t % states;
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

template <auto Fn>
void bm_render(benchmark::State& st) {
  auto& f = fixture();
  for (auto _ : st) {
    Fn(f.source, f.delays, f.omegas, kShape, f.out);
    benchmark::DoNotOptimize(f.out.data());
  }
}

template <auto Fn>
void bm_noise(benchmark::State& st) {
  auto& f = fixture();
  for (auto _ : st) {
    Fn(7, 1.0, kShape, f.out);
    benchmark::DoNotOptimize(f.out.data());
  }
}

template <auto Fn>
void bm_covariance(benchmark::State& st) {
  auto& f = fixture();
  for (auto _ : st) {
    std::fill(f.sums.begin(), f.sums.end(), k::cplx{});
    Fn(f.data, kShape, f.labels, f.states, f.sums);
    benchmark::DoNotOptimize(f.sums.data());
  }
}

template <auto Fn>
void bm_apply(benchmark::State& st) {
  auto& f = fixture();
  for (auto _ : st) {
    Fn(f.weights, f.outputs, f.slots, f.data, kShape, f.out_apply);
    benchmark::DoNotOptimize(f.out_apply.data());
  }
}

}  // namespace

BENCHMARK(bm_render<k::serial::render_image>)->Name("render_image/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(bm_render<k::omp::render_image>)->Name("render_image/omp")->Unit(benchmark::kMillisecond);
BENCHMARK(bm_noise<k::serial::add_diffuse_noise>)->Name("add_diffuse_noise/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(bm_noise<k::omp::add_diffuse_noise>)->Name("add_diffuse_noise/omp")->Unit(benchmark::kMillisecond);
BENCHMARK(bm_covariance<k::serial::accumulate_covariance>)
    ->Name("accumulate_covariance/serial")
    ->Unit(benchmark::kMillisecond);
BENCHMARK(bm_covariance<k::omp::accumulate_covariance>)
    ->Name("accumulate_covariance/omp")
    ->Unit(benchmark::kMillisecond);
BENCHMARK(bm_apply<k::serial::apply_weights>)->Name("apply_weights/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(bm_apply<k::omp::apply_weights>)->Name("apply_weights/omp")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
