// SPDX-License-Identifier: Apache-2.0
//
// Per-frequency enhancement gain and divergence-vs-frequency curves.

#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "defarray/covest.hpp"
#include "defarray/scene.hpp"
#include "defarray/stft.hpp"

namespace defarray {

enum class BinStatus {
  ok,
  infinite_gain,  // some output error is exactly zero
  undefined,      // some input error is exactly zero
};

struct BandMean {
  double mean_db = 0.0;
  std::size_t bins_used = 0;
  std::size_t bins_flagged = 0;
};

struct GainReport {
  std::string scene_id;
  std::string mode;
  std::vector<double> frequency_hz;
  std::vector<double> gain_db;  // meaningful where status == ok
  std::vector<BinStatus> status;
  // [source][bin] squared-error sums.
  std::vector<std::vector<double>> input_error;
  std::vector<std::vector<double>> output_error;

  std::size_t flagged() const;
  /// Mean gain over unflagged bins with lo_hz <= frequency < hi_hz.
  BandMean band_mean(double lo_hz, double hi_hz) const;
};

/// Gain[f] = 1/N sum_n 10 log10( sum_t |X_ref - D_n|^2 / sum_t |Y_n - D_n|^2 ).
/// `outputs` has one channel per source, `reference` is the single-channel
/// reference-mic STFT, `desired` the single-channel targets.
GainReport gain(const SpectralFrameTensor& outputs, const SpectralFrameTensor& reference,
                std::span<const SpectralFrameTensor> desired);

/// Frequency axis plus named columns, written as CSV with a `frequency_hz`
/// first column.
struct CurveTable {
  std::vector<double> frequency_hz;
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;

  void add(std::string name, std::vector<double> values);
  const std::vector<double>& column(const std::string& name) const;
};

void write_csv(std::ostream& os, const CurveTable& table);
CurveTable read_csv(std::istream& is);

/// frequency_hz, gain_db, status, then input/output error sums per source.
CurveTable gain_table(const GainReport& report);

/// A covariance slot: a source in one state, or its ensemble.
struct CovSlot {
  std::size_t source = 0;
  std::optional<std::size_t> state;

  std::string label() const;
};

struct DivergencePair {
  CovSlot first;
  CovSlot second;

  std::string label() const;
};

/// Per bin, gaussian_divergence of the two (diagonally loaded) slots.
CurveTable divergence_curve(const CovarianceSet& covs, std::span<const DivergencePair> pairs,
                            double epsilon_rel = kDefaultLoading);

/// Pairs (outer source, central source) for every source but `central`.
std::vector<DivergencePair> outer_vs_central(std::size_t source_count, std::size_t central,
                                             std::optional<std::size_t> state = std::nullopt);

/// Row-wise mean of the named columns.
std::vector<double> mean_of_columns(const CurveTable& table, std::span<const std::string> names);

/// Closed-form far-field divergence per delay-jitter sigma (seconds), averaged
/// over the given azimuth pairs, on the nominal positions.
CurveTable theory_curve(std::span<const Point> positions, std::span<const std::pair<double, double>> azimuth_pairs,
                        std::span<const double> sigmas, std::span<const double> frequencies_hz,
                        double speed_of_sound = kSpeedOfSound);

}  // namespace defarray
