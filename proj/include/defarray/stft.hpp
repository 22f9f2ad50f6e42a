// SPDX-License-Identifier: Apache-2.0
//
// Short-time Fourier analysis/synthesis on multichannel real signals and the
// dense (frame, bin, mic) coefficient tensor the rest of the library uses.

#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace defarray {

using cplx = std::complex<double>;

/// Multichannel real samples, one vector per channel.
using Signal = std::vector<std::vector<double>>;

/// Complex STFT coefficients indexed (t, f, m), mic index fastest.
class SpectralFrameTensor {
 public:
  SpectralFrameTensor() = default;
  SpectralFrameTensor(std::size_t frames, std::size_t bins, std::size_t mics, double sample_rate,
                      std::size_t fft_size, std::size_t hop);

  std::size_t frame_count() const { return frames_; }
  std::size_t bin_count() const { return bins_; }
  std::size_t mic_count() const { return mics_; }
  double sample_rate() const { return sample_rate_; }
  std::size_t fft_size() const { return fft_size_; }
  std::size_t hop() const { return hop_; }

  cplx& operator()(std::size_t t, std::size_t f, std::size_t m) {
    return data_[(t * bins_ + f) * mics_ + m];
  }
  const cplx& operator()(std::size_t t, std::size_t f, std::size_t m) const {
    return data_[(t * bins_ + f) * mics_ + m];
  }

  /// The M coefficients of one (frame, bin) cell.
  std::span<cplx> cell(std::size_t t, std::size_t f) {
    return {data_.data() + (t * bins_ + f) * mics_, mics_};
  }
  std::span<const cplx> cell(std::size_t t, std::size_t f) const {
    return {data_.data() + (t * bins_ + f) * mics_, mics_};
  }

  std::span<cplx> data() { return data_; }
  std::span<const cplx> data() const { return data_; }

  double bin_hz(std::size_t f) const;
  double bin_omega(std::size_t f) const;
  std::vector<double> omegas() const;

  /// Same grid, single channel m.
  SpectralFrameTensor channel(std::size_t m) const;

  /// Same grid and channel count, all zero.
  SpectralFrameTensor zeros_like() const;

  bool same_grid(const SpectralFrameTensor& other) const;

 private:
  std::size_t frames_ = 0;
  std::size_t bins_ = 0;
  std::size_t mics_ = 0;
  double sample_rate_ = 0.0;
  std::size_t fft_size_ = 0;
  std::size_t hop_ = 0;
  std::vector<cplx> data_;
};

enum class WindowKind {
  sqrt_hann,  // sqrt-Hann analysis and synthesis
  hann,       // Hann analysis, rectangular synthesis
  rect,       // rectangular analysis and synthesis
};

WindowKind parse_window(const std::string& name);
std::string window_name(WindowKind kind);

struct StftConfig {
  std::size_t fft_size = 1024;
  std::size_t hop = 512;
  WindowKind window = WindowKind::sqrt_hann;
  double sample_rate = 16000.0;

  std::size_t bin_count() const { return fft_size / 2 + 1; }
};

/// Max relative deviation of the overlap-added analysis*synthesis window
/// product from its mean over one hop period.
double cola_residual(const StftConfig& cfg);

/// Analysis/synthesis engine. The constructor rejects window/hop pairs
/// that do not overlap-add to a constant (residual >= 1e-10).
class Stft {
 public:
  explicit Stft(const StftConfig& cfg);
  ~Stft();
  Stft(const Stft&) = delete;
  Stft& operator=(const Stft&) = delete;
  Stft(Stft&&) noexcept;
  Stft& operator=(Stft&&) noexcept;

  const StftConfig& config() const { return cfg_; }
  const std::vector<double>& analysis_window() const { return analysis_; }
  const std::vector<double>& synthesis_window() const { return synthesis_; }

  /// Overlap-added analysis*synthesis product (constant by construction).
  double cola_gain() const { return cola_gain_; }

  std::size_t frame_count(std::size_t samples) const;

  SpectralFrameTensor analyze(const Signal& signal) const;

  /// Inverse transform with overlap-add; length (T - 1) * hop + fft_size.
  Signal synthesize(const SpectralFrameTensor& tensor) const;

 private:
  struct Plans;
  StftConfig cfg_;
  std::vector<double> analysis_;
  std::vector<double> synthesis_;
  double cola_gain_ = 1.0;
  std::unique_ptr<Plans> plans_;
};

}  // namespace defarray
