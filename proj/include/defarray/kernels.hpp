// SPDX-License-Identifier: Apache-2.0
//
// Data-parallel inner loops. Every kernel has a serial reference in
// `kernels::serial` and an OpenMP version in `kernels::omp`; the two
// produce bit-identical results because each output element is computed
// by the same sequence of floating-point operations.

#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>

namespace defarray::kernels {

using cplx = std::complex<double>;

struct Shape {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::size_t mics = 0;
};

namespace serial {

/// out[t,f,m] = source[t,f] * exp(j * omegas[f] * delays[t,m]).
void render_image(std::span<const cplx> source, std::span<const double> delays,
                  std::span<const double> omegas, Shape shape, std::span<cplx> out);

/// out[t,f,m] += CN(0, variance) drawn from the (seed, t, f) stream.
void add_diffuse_noise(std::uint64_t seed, double variance, Shape shape, std::span<cplx> out);

/// sums[s][f] += x[t,f] x[t,f]^H over frames with labels[t] == s.
/// `sums` is laid out (state, bin, column-major M x M); frames whose label
/// is >= state_count are skipped.
void accumulate_covariance(std::span<const cplx> data, Shape shape, std::span<const std::size_t> labels,
                           std::size_t state_count, std::span<cplx> sums);

/// out[t,f,n] = sum_m W[slots[t]][f](n, m) x[t,f,m]. `weights` is laid out
/// (slot, bin, column-major N x M).
void apply_weights(std::span<const cplx> weights, std::size_t outputs, std::span<const std::size_t> slots,
                   std::span<const cplx> data, Shape shape, std::span<cplx> out);

}  // namespace serial

namespace omp {

void render_image(std::span<const cplx> source, std::span<const double> delays,
                  std::span<const double> omegas, Shape shape, std::span<cplx> out);
void add_diffuse_noise(std::uint64_t seed, double variance, Shape shape, std::span<cplx> out);
void accumulate_covariance(std::span<const cplx> data, Shape shape, std::span<const std::size_t> labels,
                           std::size_t state_count, std::span<cplx> sums);
void apply_weights(std::span<const cplx> weights, std::size_t outputs, std::span<const std::size_t> slots,
                   std::span<const cplx> data, Shape shape, std::span<cplx> out);

}  // namespace omp

}  // namespace defarray::kernels
