// SPDX-License-Identifier: Apache-2.0

#include "defarray/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "defarray/kernels.hpp"
#include "defarray/random.hpp"

namespace defarray {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Point rotate_about(Point p, Point pivot, double angle_rad) {
  const double c = std::cos(angle_rad);
  const double s = std::sin(angle_rad);
  const double dx = p.x - pivot.x;
  const double dy = p.y - pivot.y;
  return {pivot.x + c * dx - s * dy, pivot.y + s * dx + c * dy};
}

double arrival_delay(Point p, double azimuth_deg, double c) {
  const double ux = std::cos(azimuth_deg * kDeg);
  const double uy = std::sin(azimuth_deg * kDeg);
  return -(ux * p.x + uy * p.y) / c;
}

}  // namespace

void ArrayGeometry::validate() const {
  if (nominal.empty()) throw std::invalid_argument("ArrayGeometry: no microphones");
  if (reference >= nominal.size()) throw std::invalid_argument("ArrayGeometry: reference index out of range");
}

ArrayGeometry ArrayGeometry::uniform_linear(std::size_t count, double spacing, std::size_t reference) {
  ArrayGeometry g;
  g.reference = reference;
  const double center = 0.5 * static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) g.nominal.push_back({(static_cast<double>(i) - center) * spacing, 0.0});
  g.validate();
  return g;
}

ArrayGeometry ArrayGeometry::arc(std::size_t count, double radius, double span_deg, std::size_t reference) {
  ArrayGeometry g;
  g.reference = reference;
  for (std::size_t i = 0; i < count; ++i) {
    const double frac = count == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(count - 1);
    const double ang = (90.0 - 0.5 * span_deg + frac * span_deg) * kDeg;
    g.nominal.push_back({radius * std::cos(ang), radius * std::sin(ang)});
  }
  g.validate();
  return g;
}

MotionModel MotionModel::still() { return MotionModel{}; }

MotionModel MotionModel::jitter(double sigma_pos, std::uint64_t seed, bool jitter_reference) {
  MotionModel m;
  m.kind = MotionKind::gaussian_jitter;
  m.sigma_pos = sigma_pos;
  m.seed = seed;
  m.jitter_reference = jitter_reference;
  return m;
}

MotionModel MotionModel::rotation(double min_deg, double max_deg, double period_s, std::size_t states) {
  MotionModel m;
  m.kind = MotionKind::rotation_sweep;
  m.min_deg = min_deg;
  m.max_deg = max_deg;
  m.period_s = period_s;
  m.state_count = states;
  return m;
}

void MotionModel::validate() const {
  switch (kind) {
    case MotionKind::static_array:
      break;
    case MotionKind::gaussian_jitter:
      if (!(sigma_pos >= 0.0)) throw std::invalid_argument("MotionModel: sigma_pos must be >= 0");
      break;
    case MotionKind::rotation_sweep:
      if (state_count == 0) throw std::invalid_argument("MotionModel: rotation needs at least one state");
      if (!(period_s > 0.0)) throw std::invalid_argument("MotionModel: rotation period must be > 0");
      if (!(max_deg >= min_deg)) throw std::invalid_argument("MotionModel: rotation max_deg < min_deg");
      break;
  }
}

void StateSequence::validate() const {
  if (state_count == 0) throw std::invalid_argument("StateSequence: empty state set");
  for (std::size_t l : labels) {
    if (l >= state_count) throw std::invalid_argument("StateSequence: label out of range");
  }
}

std::vector<std::size_t> StateSequence::histogram() const {
  std::vector<std::size_t> h(state_count, 0);
  for (std::size_t l : labels) ++h.at(l);
  return h;
}

StateSequence state_sequence(const MotionModel& motion, std::size_t frame_count, double frame_rate) {
  motion.validate();
  if (frame_count == 0) throw std::invalid_argument("state_sequence: frame_count must be >= 1");
  StateSequence seq;
  seq.labels.resize(frame_count, 0);
  switch (motion.kind) {
    case MotionKind::static_array:
      seq.state_count = 1;
      break;
    case MotionKind::gaussian_jitter:
      seq.iid = true;
      seq.state_count = frame_count;
      for (std::size_t t = 0; t < frame_count; ++t) seq.labels[t] = t;
      break;
    case MotionKind::rotation_sweep: {
      seq.state_count = motion.state_count;
      const double k = static_cast<double>(motion.state_count);
      for (std::size_t t = 0; t < frame_count; ++t) {
        const double time = static_cast<double>(t) / frame_rate;
        const double phase = std::fmod(time / motion.period_s, 1.0);
        const double tri = phase < 0.5 ? 2.0 * phase : 2.0 - 2.0 * phase;
        const auto q = static_cast<std::size_t>(std::floor(tri * k));
        seq.labels[t] = std::min(q, motion.state_count - 1);
      }
      break;
    }
  }
  return seq;
}

double rotation_state_angle(const MotionModel& motion, std::size_t state) {
  const double k = static_cast<double>(motion.state_count);
  return motion.min_deg + (static_cast<double>(state) + 0.5) * (motion.max_deg - motion.min_deg) / k;
}

std::vector<Point> state_positions(const ArrayGeometry& geometry, const MotionModel& motion, std::size_t state) {
  std::vector<Point> pos = geometry.nominal;
  switch (motion.kind) {
    case MotionKind::static_array:
      break;
    case MotionKind::rotation_sweep: {
      const double ang = rotation_state_angle(motion, state) * kDeg;
      for (std::size_t m = 0; m < pos.size(); ++m) {
        if (m != geometry.reference) pos[m] = rotate_about(pos[m], geometry.pivot, ang);
      }
      break;
    }
    case MotionKind::gaussian_jitter: {
      for (std::size_t m = 0; m < pos.size(); ++m) {
        if (m == geometry.reference && !motion.jitter_reference) continue;
        auto rng = make_cell_stream(motion.seed, StreamTag::jitter, state, m);
        std::normal_distribution<double> g(0.0, 1.0);
        pos[m].x += motion.sigma_pos * g(rng);
        pos[m].y += motion.sigma_pos * g(rng);
      }
      break;
    }
  }
  return pos;
}

SteeringVector steering_vector(std::span<const Point> positions, double azimuth_deg, double omega,
                               double speed_of_sound) {
  if (!(speed_of_sound > 0.0)) throw std::invalid_argument("steering_vector: speed of sound must be > 0");
  SteeringVector a;
  a.omega = omega;
  a.entries.resize(static_cast<Eigen::Index>(positions.size()));
  for (std::size_t m = 0; m < positions.size(); ++m) {
    a.entries(static_cast<Eigen::Index>(m)) = std::polar(1.0, omega * arrival_delay(positions[m], azimuth_deg, speed_of_sound));
  }
  return a;
}

std::vector<std::size_t> pilot_bins(const PilotConfig& pilot, std::size_t slots, const StftConfig& stft) {
  const double bin_hz = stft.sample_rate / static_cast<double>(stft.fft_size);
  std::vector<std::size_t> bins;
  for (std::size_t s = 0; s < slots; ++s) {
    const double hz = pilot.frequency_hz + static_cast<double>(s) * pilot.spacing_hz;
    bins.push_back(static_cast<std::size_t>(std::lround(hz / bin_hz)));
  }
  return bins;
}

void SceneSpec::validate(const StftConfig& stft) const {
  geometry.validate();
  motion.validate();
  if (!(speed_of_sound > 0.0)) throw std::invalid_argument("SceneSpec: speed_of_sound must be > 0");
  if (!(reference_power > 0.0)) throw std::invalid_argument("SceneSpec: reference_power must be > 0");
  std::set<double> seen;
  for (const auto& s : sources) {
    if (!seen.insert(s.azimuth_deg).second) {
      throw std::invalid_argument("SceneSpec: source azimuths must be distinct");
    }
  }
  if (pilot) {
    const double nyquist = 0.5 * stft.sample_rate;
    std::size_t slots = 0;
    for (const auto& s : sources) slots = std::max(slots, s.pilot_slot + 1);
    const double bin_hz = stft.sample_rate / static_cast<double>(stft.fft_size);
    for (std::size_t b : pilot_bins(*pilot, slots, stft)) {
      const double hz = static_cast<double>(b) * bin_hz;
      if (!(hz > 0.8 * nyquist && hz < nyquist)) {
        std::ostringstream os;
        os << "SceneSpec: pilot frequency " << hz << " Hz outside (0.8 Nyquist, Nyquist)";
        throw std::invalid_argument(os.str());
      }
    }
  }
}

RenderedScene render(const SceneSpec& spec, const Stft& stft, double duration_s, std::uint64_t seed) {
  const StftConfig& cfg = stft.config();
  spec.validate(cfg);
  if (!(duration_s > 0.0)) throw std::invalid_argument("render: duration must be > 0");
  const auto samples = static_cast<std::size_t>(std::llround(duration_s * cfg.sample_rate));
  if (samples < cfg.fft_size) throw std::invalid_argument("render: duration shorter than one STFT frame");
  for (std::size_t n = 0; n < spec.sources.size(); ++n) {
    if (spec.sources[n].signal.size() < samples) {
      std::ostringstream os;
      os << "render: source " << n << " has " << spec.sources[n].signal.size() << " samples, " << samples
         << " required";
      throw std::invalid_argument(os.str());
    }
  }

  const std::size_t mics = spec.geometry.mic_count();
  const std::size_t ref = spec.geometry.reference;
  const std::size_t frames = stft.frame_count(samples);
  const std::size_t bins = cfg.bin_count();
  const kernels::Shape shape{frames, bins, mics};

  RenderedScene out;
  out.truth_states = state_sequence(spec.motion, frames, cfg.sample_rate / static_cast<double>(cfg.hop));
  out.mixture = SpectralFrameTensor(frames, bins, mics, cfg.sample_rate, cfg.fft_size, cfg.hop);
  out.noise = out.mixture.zeros_like();

  // Positions per state, then per-frame geometry.
  std::vector<std::vector<Point>> positions(out.truth_states.state_count);
  for (std::size_t s = 0; s < positions.size(); ++s) positions[s] = state_positions(spec.geometry, spec.motion, s);

  auto frame_delays = [&](double azimuth) {
    std::vector<double> d(frames * mics);
    for (std::size_t t = 0; t < frames; ++t) {
      const auto& p = positions[out.truth_states.labels[t]];
      const double tref = arrival_delay(p[ref], azimuth, spec.speed_of_sound);
      for (std::size_t m = 0; m < mics; ++m) {
        d[t * mics + m] = m == ref ? 0.0 : arrival_delay(p[m], azimuth, spec.speed_of_sound) - tref;
      }
    }
    return d;
  };

  const std::vector<double> omegas = out.mixture.omegas();
  auto truncated = [&](const std::vector<double>& x) {
    return Signal{std::vector<double>(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(samples))};
  };

  for (const auto& src : spec.sources) {
    SpectralFrameTensor s = stft.analyze(truncated(src.signal));
    SpectralFrameTensor image = out.mixture.zeros_like();
    const auto delays = frame_delays(src.azimuth_deg);
    kernels::omp::render_image(s.data(), delays, omegas, shape, image.data());
    out.desired.push_back(std::move(s));
    out.images.push_back(std::move(image));
  }

  if (spec.noise_level_db) {
    double window_energy = 0.0;
    for (double w : stft.analysis_window()) window_energy += w * w;
    const double variance = std::pow(10.0, *spec.noise_level_db / 10.0) * spec.reference_power * window_energy;
    kernels::omp::add_diffuse_noise(seed, variance, shape, out.noise.data());
  }

  if (spec.pilot) {
    std::size_t slots = 0;
    for (const auto& s : spec.sources) slots = std::max(slots, s.pilot_slot + 1);
    const auto all_bins = pilot_bins(*spec.pilot, slots, cfg);
    const double amp = std::sqrt(2.0 * spec.reference_power * std::pow(10.0, spec.pilot->level_db / 10.0));
    SpectralFrameTensor scratch = out.mixture.zeros_like();
    for (const auto& src : spec.sources) {
      const std::size_t bin = all_bins[src.pilot_slot];
      const double hz = static_cast<double>(bin) * cfg.sample_rate / static_cast<double>(cfg.fft_size);
      std::vector<double> tone(samples);
      for (std::size_t i = 0; i < samples; ++i) {
        tone[i] = amp * std::cos(2.0 * std::numbers::pi * hz * static_cast<double>(i) / cfg.sample_rate);
      }
      const SpectralFrameTensor p = stft.analyze(Signal{std::move(tone)});
      const auto delays = frame_delays(src.azimuth_deg);
      kernels::omp::render_image(p.data(), delays, omegas, shape, scratch.data());
      auto dst = out.noise.data();
      auto add = scratch.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += add[i];
      out.pilot_bins.push_back(bin);
    }
  }

  auto mix = out.mixture.data();
  for (const auto& image : out.images) {
    auto src = image.data();
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] += src[i];
  }
  auto nz = out.noise.data();
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] += nz[i];
  return out;
}

std::vector<double> white_noise(std::size_t samples, std::uint64_t seed, std::uint64_t stream) {
  auto rng = make_stream(seed, StreamTag::source, stream);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> x(samples);
  for (auto& v : x) v = g(rng);
  return x;
}

namespace {

// Two-pole resonator at `hz` with bandwidth `bw`.
struct Resonator {
  double y1 = 0.0, y2 = 0.0;
  double step(double x, double hz, double bw, double fs) {
    const double r = std::exp(-std::numbers::pi * bw / fs);
    const double a1 = 2.0 * r * std::cos(2.0 * std::numbers::pi * hz / fs);
    const double a2 = -r * r;
    const double y = (1.0 - r) * x + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

}  // namespace

std::vector<double> speech_like(std::size_t samples, double fs, std::uint64_t seed) {
  auto rng = make_stream(seed, StreamTag::source, 0x5eec4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  const double f0_base = 100.0 + 80.0 * u(rng);
  const double syllable_hz = 3.0 + 2.0 * u(rng);
  const double drift = 2.0 * std::numbers::pi * u(rng);

  std::vector<double> x(samples);
  Resonator r1, r2, r3, fric;
  double phase = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double t = static_cast<double>(i) / fs;
    const double f0 = f0_base * (1.0 + 0.15 * std::sin(2.0 * std::numbers::pi * 0.4 * t + drift));
    phase += f0 / fs;
    double excitation = 0.0;
    if (phase >= 1.0) {
      phase -= 1.0;
      excitation = 1.0;
    }
    const double syl = std::sin(2.0 * std::numbers::pi * syllable_hz * t + drift);
    const double voiced_env = syl > 0.0 ? std::sqrt(syl) : 0.0;
    const double unvoiced_env = syl < -0.8 ? 0.3 : 0.0;
    const double f1 = 500.0 + 250.0 * std::sin(2.0 * std::numbers::pi * 1.3 * t);
    const double f2 = 1500.0 + 600.0 * std::sin(2.0 * std::numbers::pi * 0.9 * t + 1.0);
    const double f3 = 2700.0 + 200.0 * std::sin(2.0 * std::numbers::pi * 0.5 * t + 2.0);
    const double e = voiced_env * excitation;
    const double voiced = r1.step(e, f1, 80.0, fs) + 0.6 * r2.step(e, f2, 120.0, fs) + 0.3 * r3.step(e, f3, 200.0, fs);
    const double unvoiced = fric.step(unvoiced_env * g(rng), 0.35 * fs, 0.1 * fs, fs);
    x[i] = voiced + unvoiced;
  }
  double power = 0.0;
  for (double v : x) power += v * v;
  power /= static_cast<double>(std::max<std::size_t>(samples, 1));
  if (power > 0.0) {
    const double s = 1.0 / std::sqrt(power);
    for (auto& v : x) v *= s;
  }
  return x;
}

}  // namespace defarray
