// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration and the simulate -> train -> beamform -> analyze
// orchestration shared by the CLI and the acceptance suite.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "defarray/beamform.hpp"
#include "defarray/covest.hpp"
#include "defarray/eval.hpp"
#include "defarray/scene.hpp"
#include "defarray/stft.hpp"

namespace defarray {

enum class SyntheticSource { speech_like, white };

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string scene_id = "scene";
  StftConfig stft;
  ArrayGeometry geometry;
  std::vector<double> azimuths_deg;
  std::vector<std::filesystem::path> source_wavs;  // empty: synthesize
  SyntheticSource synthetic = SyntheticSource::speech_like;
  std::optional<double> noise_level_db = -30.0;
  MotionModel motion;
  std::optional<PilotConfig> pilot;
  double speed_of_sound = kSpeedOfSound;
  double training_duration_s = 20.0;
  double test_duration_s = 20.0;
  std::vector<BeamformerMode> modes{BeamformerMode::static_full_rank};
  StateSource state_source = StateSource::oracle;
  double regularization = kDefaultLoading;
  std::vector<double> theory_sigma_pos_m{0.002, 0.005, 0.01};
  bool write_output_wavs = true;

  std::size_t source_count() const { return azimuths_deg.size(); }
  /// Source whose azimuth is the median one.
  std::size_t central_source() const;

  void validate() const;

  /// Parses the JSON config schema documented in docs/config.md. Relative
  /// paths resolve against `base_dir`. The seed is mandatory.
  static ExperimentConfig from_json(const std::string& text, const std::filesystem::path& base_dir = {});
  /// Canonical JSON snapshot (stable key order) of every resolved field.
  std::string to_json() const;
};

ExperimentConfig load_config(const std::filesystem::path& path);

/// Seed for an independent pipeline stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct ModeRun {
  BeamformerBank bank;
  StateSequence states;
  SpectralFrameTensor outputs;
  GainReport report;
  // Fraction of frames whose state label matches the truth (dynamic only).
  std::optional<double> state_agreement;
};

struct DivergenceAnalysis {
  CurveTable ensemble;               // outer vs central, ensemble covariances
  std::optional<CurveTable> states;  // within-state and between-state curves
};

class Experiment {
 public:
  explicit Experiment(ExperimentConfig cfg);

  const ExperimentConfig& config() const { return cfg_; }
  const Stft& stft() const { return stft_; }

  /// Test-time source signals (WAV files or synthetic), unit variance.
  std::vector<std::vector<double>> test_signals() const;

  SceneSpec scene_spec(std::vector<std::vector<double>> signals, std::uint64_t motion_seed) const;

  RenderedScene render_test() const;

  /// Isolated-source training renders of seeded white noise plus one
  /// source-free render for the noise covariance.
  CovarianceSet train() const;

  ModeRun run_mode(const CovarianceSet& covs, const RenderedScene& scene, BeamformerMode mode) const;

  DivergenceAnalysis analyze(const CovarianceSet& covs) const;

  /// Closed-form divergence (outer vs central, averaged) on the nominal
  /// geometry for every configured theory sigma, bins 1..F-1.
  CurveTable theory() const;

 private:
  ExperimentConfig cfg_;
  Stft stft_;
};

/// Hex SHA-256 of a file or of a byte string.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_bytes(const std::string& bytes);

}  // namespace defarray
