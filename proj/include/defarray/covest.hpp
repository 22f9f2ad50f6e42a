// SPDX-License-Identifier: Apache-2.0
//
// Sample covariance estimation from training renders (per state, ensemble,
// noise) and pilot-band state estimation at test time.

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "defarray/covmath.hpp"
#include "defarray/scene.hpp"
#include "defarray/stft.hpp"

namespace defarray {

/// (1/T') sum_t x[t,f] x[t,f]^H over the listed frames, for every bin.
HermitianSpectrum sample_covariance(const SpectralFrameTensor& frames, std::span<const std::size_t> subset);

/// All frames.
HermitianSpectrum sample_covariance(const SpectralFrameTensor& frames);

/// Per-state covariances of the pilot bins, used to classify test frames.
struct PilotTemplates {
  std::vector<std::size_t> bins;
  // One spectrum per state; entry k of each spectrum belongs to bins[k].
  std::vector<HermitianSpectrum> per_state;
};

struct CovarianceSet {
  using Key = std::pair<std::size_t, std::size_t>;  // (source, state)

  std::size_t source_count = 0;
  std::size_t state_count = 1;
  std::map<Key, HermitianSpectrum> per_state;
  std::map<Key, std::size_t> frame_counts;
  std::vector<HermitianSpectrum> ensemble;
  HermitianSpectrum noise;
  std::optional<PilotTemplates> pilots;

  /// Checks the frame-count-weighted average identity and the Hermitian
  /// PSD invariants of every member.
  void validate(double tolerance = 1e-9) const;

  /// (source, state) pairs with no training frames.
  std::vector<Key> starved() const;
};

/// One isolated-source training capture and its true state track.
struct TrainingCapture {
  std::size_t source = 0;
  const SpectralFrameTensor* capture = nullptr;
  const StateSequence* states = nullptr;
};

/// Builds per-state and ensemble covariances for every source, the noise
/// covariance from a source-free capture, and, when `pilot_bins` is given,
/// per-state pilot templates (pilot_bins[n] is taken from source n's capture).
///
/// iid state sequences (per-frame jitter) are pooled into a single state.
CovarianceSet train(std::span<const TrainingCapture> captures, const SpectralFrameTensor& noise_capture,
                    std::optional<std::vector<std::size_t>> pilot_bins = std::nullopt);

inline constexpr std::size_t kPilotSmoothing = 2;
inline constexpr double kPilotLoading = 1e-2;

/// Per frame, picks the state whose pilot template is closest (Gaussian
/// divergence summed over pilot bins) to the frame's pilot-bin outer
/// product averaged over +-2 frames and diagonally loaded. Ties go to the
/// lower state index.
StateSequence estimate_states(const SpectralFrameTensor& mixture, const PilotTemplates& templates);

enum class StateSource { pilot, oracle };

/// Pilot estimation, or the ground-truth track passed straight through.
StateSequence resolve_states(StateSource source, const SpectralFrameTensor& mixture,
                             const std::optional<PilotTemplates>& templates, const StateSequence& truth);

}  // namespace defarray
