// SPDX-License-Identifier: Apache-2.0

#include "defarray/kernels.hpp"

#include <cmath>
#include <random>

#include "defarray/random.hpp"

namespace defarray::kernels {

namespace {

inline void image_cell(const cplx s, const double* delays, double omega, std::size_t mics, cplx* out) {
  for (std::size_t m = 0; m < mics; ++m) out[m] = s * std::polar(1.0, omega * delays[m]);
}

inline void noise_cell(std::uint64_t seed, double stddev, std::size_t t, std::size_t f, std::size_t mics,
                       cplx* out) {
  auto rng = make_cell_stream(seed, StreamTag::noise, t, f);
  std::normal_distribution<double> g(0.0, stddev);
  for (std::size_t m = 0; m < mics; ++m) {
    const double re = g(rng);
    const double im = g(rng);
    out[m] += cplx(re, im);
  }
}

inline void covariance_bin(const cplx* data, Shape shape, const std::size_t* labels, std::size_t state_count,
                           std::size_t f, cplx* sums) {
  const std::size_t mm = shape.mics * shape.mics;
  for (std::size_t t = 0; t < shape.frames; ++t) {
    const std::size_t s = labels[t];
    if (s >= state_count) continue;
    const cplx* x = data + (t * shape.bins + f) * shape.mics;
    cplx* acc = sums + (s * shape.bins + f) * mm;
    for (std::size_t j = 0; j < shape.mics; ++j) {
      const cplx xj = std::conj(x[j]);
      for (std::size_t i = 0; i < shape.mics; ++i) acc[j * shape.mics + i] += x[i] * xj;
    }
  }
}

inline void apply_cell(const cplx* w, std::size_t outputs, std::size_t mics, const cplx* x, cplx* y) {
  for (std::size_t n = 0; n < outputs; ++n) {
    cplx acc(0.0, 0.0);
    for (std::size_t m = 0; m < mics; ++m) acc += w[m * outputs + n] * x[m];
    y[n] = acc;
  }
}

}  // namespace

namespace serial {

void render_image(std::span<const cplx> source, std::span<const double> delays, std::span<const double> omegas,
                  Shape shape, std::span<cplx> out) {
  for (std::size_t t = 0; t < shape.frames; ++t)
    for (std::size_t f = 0; f < shape.bins; ++f)
      image_cell(source[t * shape.bins + f], delays.data() + t * shape.mics, omegas[f], shape.mics,
                 out.data() + (t * shape.bins + f) * shape.mics);
}

void add_diffuse_noise(std::uint64_t seed, double variance, Shape shape, std::span<cplx> out) {
  const double stddev = std::sqrt(0.5 * variance);
  for (std::size_t t = 0; t < shape.frames; ++t)
    for (std::size_t f = 0; f < shape.bins; ++f)
      noise_cell(seed, stddev, t, f, shape.mics, out.data() + (t * shape.bins + f) * shape.mics);
}

void accumulate_covariance(std::span<const cplx> data, Shape shape, std::span<const std::size_t> labels,
                           std::size_t state_count, std::span<cplx> sums) {
  for (std::size_t f = 0; f < shape.bins; ++f)
    covariance_bin(data.data(), shape, labels.data(), state_count, f, sums.data());
}

void apply_weights(std::span<const cplx> weights, std::size_t outputs, std::span<const std::size_t> slots,
                   std::span<const cplx> data, Shape shape, std::span<cplx> out) {
  const std::size_t per_bin = outputs * shape.mics;
  for (std::size_t t = 0; t < shape.frames; ++t)
    for (std::size_t f = 0; f < shape.bins; ++f)
      apply_cell(weights.data() + (slots[t] * shape.bins + f) * per_bin, outputs, shape.mics,
                 data.data() + (t * shape.bins + f) * shape.mics, out.data() + (t * shape.bins + f) * outputs);
}

}  // namespace serial

namespace omp {

void render_image(std::span<const cplx> source, std::span<const double> delays, std::span<const double> omegas,
                  Shape shape, std::span<cplx> out) {
  const long long cells = static_cast<long long>(shape.frames * shape.bins);
#pragma omp parallel for schedule(static)
  for (long long c = 0; c < cells; ++c) {
    const std::size_t t = static_cast<std::size_t>(c) / shape.bins;
    const std::size_t f = static_cast<std::size_t>(c) % shape.bins;
    image_cell(source[static_cast<std::size_t>(c)], delays.data() + t * shape.mics, omegas[f], shape.mics,
               out.data() + static_cast<std::size_t>(c) * shape.mics);
  }
}

void add_diffuse_noise(std::uint64_t seed, double variance, Shape shape, std::span<cplx> out) {
  const double stddev = std::sqrt(0.5 * variance);
  const long long cells = static_cast<long long>(shape.frames * shape.bins);
#pragma omp parallel for schedule(static)
  for (long long c = 0; c < cells; ++c) {
    const std::size_t t = static_cast<std::size_t>(c) / shape.bins;
    const std::size_t f = static_cast<std::size_t>(c) % shape.bins;
    noise_cell(seed, stddev, t, f, shape.mics, out.data() + static_cast<std::size_t>(c) * shape.mics);
  }
}

void accumulate_covariance(std::span<const cplx> data, Shape shape, std::span<const std::size_t> labels,
                           std::size_t state_count, std::span<cplx> sums) {
#pragma omp parallel for schedule(dynamic, 8)
  for (long long f = 0; f < static_cast<long long>(shape.bins); ++f)
    covariance_bin(data.data(), shape, labels.data(), state_count, static_cast<std::size_t>(f), sums.data());
}

void apply_weights(std::span<const cplx> weights, std::size_t outputs, std::span<const std::size_t> slots,
                   std::span<const cplx> data, Shape shape, std::span<cplx> out) {
  const std::size_t per_bin = outputs * shape.mics;
  const long long cells = static_cast<long long>(shape.frames * shape.bins);
#pragma omp parallel for schedule(static)
  for (long long c = 0; c < cells; ++c) {
    const std::size_t t = static_cast<std::size_t>(c) / shape.bins;
    const std::size_t f = static_cast<std::size_t>(c) % shape.bins;
    apply_cell(weights.data() + (slots[t] * shape.bins + f) * per_bin, outputs, shape.mics,
               data.data() + static_cast<std::size_t>(c) * shape.mics,
               out.data() + static_cast<std::size_t>(c) * outputs);
  }
}

}  // namespace omp

}  // namespace defarray::kernels
