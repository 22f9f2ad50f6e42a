// SPDX-License-Identifier: Apache-2.0
//
// Far-field scene simulation for deformable arrays. Sources are plane waves
// in the horizontal plane; every frame has exactly one array state, and the
// source images are rendered in the STFT domain as per-bin phase shifts
// relative to the (nonmoving) reference microphone.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "defarray/covmath.hpp"
#include "defarray/stft.hpp"

namespace defarray {

inline constexpr double kSpeedOfSound = 343.0;

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Nominal microphone layout. Motion models derive per-state positions
/// from it; the reference microphone never moves unless a jitter model
/// explicitly asks for it.
struct ArrayGeometry {
  std::vector<Point> nominal;
  std::size_t reference = 0;
  Point pivot{};

  std::size_t mic_count() const { return nominal.size(); }
  void validate() const;

  /// `count` mics on the x axis, centered on the origin.
  static ArrayGeometry uniform_linear(std::size_t count, double spacing, std::size_t reference = 0);
  /// `count` mics evenly spread over an arc of `span_deg` degrees, centered on +y.
  static ArrayGeometry arc(std::size_t count, double radius, double span_deg, std::size_t reference = 0);
};

enum class MotionKind { static_array, gaussian_jitter, rotation_sweep };

struct MotionModel {
  MotionKind kind = MotionKind::static_array;
  // gaussian_jitter: per-axis position std (m), redrawn every frame.
  double sigma_pos = 0.0;
  bool jitter_reference = false;
  // rotation_sweep: triangle wave over [min_deg, max_deg], quantized.
  double min_deg = 0.0;
  double max_deg = 0.0;
  double period_s = 1.0;
  std::size_t state_count = 1;
  std::uint64_t seed = 0;

  static MotionModel still();
  static MotionModel jitter(double sigma_pos, std::uint64_t seed, bool jitter_reference = false);
  static MotionModel rotation(double min_deg, double max_deg, double period_s, std::size_t states);

  void validate() const;
};

/// Discrete state label per frame. `iid` marks jitter sequences where every
/// frame is its own state (label == frame index).
struct StateSequence {
  std::vector<std::size_t> labels;
  std::size_t state_count = 1;
  bool iid = false;

  void validate() const;
  std::vector<std::size_t> histogram() const;
};

StateSequence state_sequence(const MotionModel& motion, std::size_t frame_count, double frame_rate);

/// Rotation angle (degrees) at the center of a rotation_sweep state.
double rotation_state_angle(const MotionModel& motion, std::size_t state);

/// Microphone positions for a state label of `motion`.
std::vector<Point> state_positions(const ArrayGeometry& geometry, const MotionModel& motion,
                                   std::size_t state);

/// a_m = exp(j omega tau_m), tau_m = -(u . p_m) / c, u the unit vector
/// pointing from the array toward the source at `azimuth_deg`.
SteeringVector steering_vector(std::span<const Point> positions, double azimuth_deg, double omega,
                               double speed_of_sound = kSpeedOfSound);

struct SourceSpec {
  double azimuth_deg = 0.0;
  std::vector<double> signal;
  // Offset index of this source's pilot tone.
  std::size_t pilot_slot = 0;
};

struct PilotConfig {
  double frequency_hz = 7000.0;
  double level_db = -20.0;
  double spacing_hz = 62.5;
};

struct SceneSpec {
  ArrayGeometry geometry;
  std::vector<SourceSpec> sources;
  // Diffuse noise level relative to `reference_power`; nullopt disables it.
  std::optional<double> noise_level_db = -30.0;
  // Time-domain power that 0 dB refers to (unit-variance sources by default).
  double reference_power = 1.0;
  MotionModel motion;
  std::optional<PilotConfig> pilot;
  double speed_of_sound = kSpeedOfSound;

  void validate(const StftConfig& stft) const;
};

/// STFT bin carrying the pilot tone of each slot in [0, slots).
std::vector<std::size_t> pilot_bins(const PilotConfig& pilot, std::size_t slots, const StftConfig& stft);

struct RenderedScene {
  SpectralFrameTensor mixture;
  std::vector<SpectralFrameTensor> images;
  // Diffuse noise plus pilot tones.
  SpectralFrameTensor noise;
  StateSequence truth_states;
  // Single-channel source STFTs as seen at the reference microphone.
  std::vector<SpectralFrameTensor> desired;
  std::vector<std::size_t> pilot_bins;
};

/// Renders `duration_s` seconds. Diffuse noise draws come from `seed`;
/// jitter draws come from spec.motion.seed.
RenderedScene render(const SceneSpec& spec, const Stft& stft, double duration_s, std::uint64_t seed);

/// Seeded white Gaussian noise with unit variance.
std::vector<double> white_noise(std::size_t samples, std::uint64_t seed, std::uint64_t stream = 0);

/// Deterministic voiced-speech-like test signal: a glottal pulse train with
/// drifting pitch shaped by moving formant resonances, syllable-rate
/// amplitude modulation and short unvoiced gaps. Unit variance.
std::vector<double> speech_like(std::size_t samples, double sample_rate, std::uint64_t seed);

}  // namespace defarray
