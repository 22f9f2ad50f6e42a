// SPDX-License-Identifier: Apache-2.0

#include "defarray/stft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <limits>
#include <cmath>
#include <mutex>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace defarray {

namespace {

// The FFTW planner is not thread safe; plan execution is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

std::vector<double> periodic_hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

}  // namespace

SpectralFrameTensor::SpectralFrameTensor(std::size_t frames, std::size_t bins, std::size_t mics,
                                         double sample_rate, std::size_t fft_size, std::size_t hop)
    : frames_(frames),
      bins_(bins),
      mics_(mics),
      sample_rate_(sample_rate),
      fft_size_(fft_size),
      hop_(hop),
      data_(frames * bins * mics) {}

double SpectralFrameTensor::bin_hz(std::size_t f) const {
  return static_cast<double>(f) * sample_rate_ / static_cast<double>(fft_size_);
}

double SpectralFrameTensor::bin_omega(std::size_t f) const {
  return 2.0 * std::numbers::pi * bin_hz(f);
}

std::vector<double> SpectralFrameTensor::omegas() const {
  std::vector<double> out(bins_);
  for (std::size_t f = 0; f < bins_; ++f) out[f] = bin_omega(f);
  return out;
}

SpectralFrameTensor SpectralFrameTensor::channel(std::size_t m) const {
  if (m >= mics_) throw std::out_of_range("SpectralFrameTensor::channel: index out of range");
  SpectralFrameTensor out(frames_, bins_, 1, sample_rate_, fft_size_, hop_);
  for (std::size_t t = 0; t < frames_; ++t)
    for (std::size_t f = 0; f < bins_; ++f) out(t, f, 0) = (*this)(t, f, m);
  return out;
}

SpectralFrameTensor SpectralFrameTensor::zeros_like() const {
  return SpectralFrameTensor(frames_, bins_, mics_, sample_rate_, fft_size_, hop_);
}

bool SpectralFrameTensor::same_grid(const SpectralFrameTensor& other) const {
  return frames_ == other.frames_ && bins_ == other.bins_ && sample_rate_ == other.sample_rate_ &&
         fft_size_ == other.fft_size_ && hop_ == other.hop_;
}

WindowKind parse_window(const std::string& name) {
  if (name == "sqrt_hann" || name == "sqrthann") return WindowKind::sqrt_hann;
  if (name == "hann") return WindowKind::hann;
  if (name == "rect") return WindowKind::rect;
  throw std::invalid_argument("unknown window '" + name + "' (expected sqrt_hann, hann or rect)");
}

std::string window_name(WindowKind kind) {
  switch (kind) {
    case WindowKind::sqrt_hann: return "sqrt_hann";
    case WindowKind::hann: return "hann";
    case WindowKind::rect: return "rect";
  }
  return "unknown";
}

namespace {

void make_windows(const StftConfig& cfg, std::vector<double>& analysis, std::vector<double>& synthesis) {
  const std::size_t n = cfg.fft_size;
  switch (cfg.window) {
    case WindowKind::sqrt_hann: {
      analysis = periodic_hann(n);
      for (auto& v : analysis) v = std::sqrt(v);
      synthesis = analysis;
      break;
    }
    case WindowKind::hann:
      analysis = periodic_hann(n);
      synthesis.assign(n, 1.0);
      break;
    case WindowKind::rect:
      analysis.assign(n, 1.0);
      synthesis.assign(n, 1.0);
      break;
  }
}

// Overlap-added product over one hop period; returns {mean, max relative deviation}.
std::pair<double, double> cola_profile(const std::vector<double>& a, const std::vector<double>& s,
                                       std::size_t hop) {
  const std::size_t n = a.size();
  std::vector<double> acc(hop, 0.0);
  for (std::size_t i = 0; i < n; ++i) acc[i % hop] += a[i] * s[i];
  double mean = 0.0;
  for (double v : acc) mean += v;
  mean /= static_cast<double>(hop);
  double dev = 0.0;
  for (double v : acc) dev = std::max(dev, std::abs(v - mean));
  return {mean, mean > 0.0 ? dev / mean : std::numeric_limits<double>::infinity()};
}

}  // namespace

double cola_residual(const StftConfig& cfg) {
  if (cfg.fft_size < 2 || cfg.hop == 0 || cfg.hop > cfg.fft_size) {
    return std::numeric_limits<double>::infinity();
  }
  std::vector<double> a, s;
  make_windows(cfg, a, s);
  return cola_profile(a, s, cfg.hop).second;
}

struct Stft::Plans {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

Stft::Stft(const StftConfig& cfg) : cfg_(cfg), plans_(std::make_unique<Plans>()) {
  if (cfg.fft_size < 2 || cfg.fft_size % 2 != 0) {
    throw std::invalid_argument("Stft: fft_size must be even and >= 2");
  }
  if (cfg.hop == 0 || cfg.hop > cfg.fft_size) {
    throw std::invalid_argument("Stft: hop must be in [1, fft_size]");
  }
  if (!(cfg.sample_rate > 0.0)) throw std::invalid_argument("Stft: sample_rate must be > 0");
  make_windows(cfg_, analysis_, synthesis_);
  const auto [gain, residual] = cola_profile(analysis_, synthesis_, cfg_.hop);
  if (!(residual < 1e-10)) {
    std::ostringstream os;
    os << "Stft: window " << window_name(cfg.window) << " with fft_size " << cfg.fft_size
       << " and hop " << cfg.hop << " is not constant overlap-add (residual " << residual << ")";
    throw std::invalid_argument(os.str());
  }
  cola_gain_ = gain;

  const int n = static_cast<int>(cfg_.fft_size);
  std::vector<double> rbuf(cfg_.fft_size);
  std::vector<fftw_complex> cbuf(cfg_.bin_count());
  std::lock_guard<std::mutex> lock(planner_mutex());
  plans_->forward = fftw_plan_dft_r2c_1d(n, rbuf.data(), cbuf.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  plans_->inverse = fftw_plan_dft_c2r_1d(n, cbuf.data(), rbuf.data(),
                                         FFTW_ESTIMATE | FFTW_UNALIGNED | FFTW_DESTROY_INPUT);
}

Stft::~Stft() {
  if (!plans_) return;
  std::lock_guard<std::mutex> lock(planner_mutex());
  if (plans_->forward) fftw_destroy_plan(plans_->forward);
  if (plans_->inverse) fftw_destroy_plan(plans_->inverse);
}

Stft::Stft(Stft&&) noexcept = default;
Stft& Stft::operator=(Stft&&) noexcept = default;

std::size_t Stft::frame_count(std::size_t samples) const {
  if (samples < cfg_.fft_size) return 0;
  return (samples - cfg_.fft_size) / cfg_.hop + 1;
}

SpectralFrameTensor Stft::analyze(const Signal& signal) const {
  if (signal.empty()) throw std::invalid_argument("Stft::analyze: no channels");
  const std::size_t len = signal.front().size();
  for (const auto& ch : signal) {
    if (ch.size() != len) throw std::invalid_argument("Stft::analyze: channel length mismatch");
  }
  if (len < cfg_.fft_size) {
    throw std::invalid_argument("Stft::analyze: signal shorter than fft_size");
  }
  const std::size_t frames = frame_count(len);
  const std::size_t bins = cfg_.bin_count();
  const std::size_t mics = signal.size();
  const std::size_t n = cfg_.fft_size;
  SpectralFrameTensor out(frames, bins, mics, cfg_.sample_rate, n, cfg_.hop);

  const long long jobs = static_cast<long long>(frames * mics);
#pragma omp parallel
  {
    std::vector<double> rbuf(n);
    std::vector<fftw_complex> cbuf(bins);
#pragma omp for schedule(static)
    for (long long job = 0; job < jobs; ++job) {
      const std::size_t t = static_cast<std::size_t>(job) / mics;
      const std::size_t m = static_cast<std::size_t>(job) % mics;
      const double* x = signal[m].data() + t * cfg_.hop;
      for (std::size_t i = 0; i < n; ++i) rbuf[i] = analysis_[i] * x[i];
      fftw_execute_dft_r2c(plans_->forward, rbuf.data(), cbuf.data());
      for (std::size_t f = 0; f < bins; ++f) out(t, f, m) = cplx(cbuf[f][0], cbuf[f][1]);
    }
  }
  return out;
}

Signal Stft::synthesize(const SpectralFrameTensor& tensor) const {
  if (tensor.fft_size() != cfg_.fft_size || tensor.hop() != cfg_.hop ||
      tensor.bin_count() != cfg_.bin_count() || tensor.sample_rate() != cfg_.sample_rate) {
    throw std::invalid_argument("Stft::synthesize: tensor was produced with a different STFT config");
  }
  const std::size_t frames = tensor.frame_count();
  const std::size_t mics = tensor.mic_count();
  const std::size_t bins = tensor.bin_count();
  const std::size_t n = cfg_.fft_size;
  const std::size_t len = frames == 0 ? 0 : (frames - 1) * cfg_.hop + n;
  Signal out(mics, std::vector<double>(len, 0.0));
  const double scale = 1.0 / (static_cast<double>(n) * cola_gain_);

#pragma omp parallel
  {
    std::vector<double> rbuf(n);
    std::vector<fftw_complex> cbuf(bins);
#pragma omp for schedule(static)
    for (long long mm = 0; mm < static_cast<long long>(mics); ++mm) {
      const std::size_t m = static_cast<std::size_t>(mm);
      auto& y = out[m];
      for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t f = 0; f < bins; ++f) {
          cbuf[f][0] = tensor(t, f, m).real();
          cbuf[f][1] = tensor(t, f, m).imag();
        }
        fftw_execute_dft_c2r(plans_->inverse, cbuf.data(), rbuf.data());
        double* dst = y.data() + t * cfg_.hop;
        for (std::size_t i = 0; i < n; ++i) dst[i] += synthesis_[i] * rbuf[i] * scale;
      }
    }
  }
  return out;
}

}  // namespace defarray
