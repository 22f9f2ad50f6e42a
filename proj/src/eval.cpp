// SPDX-License-Identifier: Apache-2.0

#include "defarray/eval.hpp"

#include "defarray/parallel.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace defarray {

std::size_t GainReport::flagged() const {
  std::size_t n = 0;
  for (auto s : status) n += s != BinStatus::ok;
  return n;
}

BandMean GainReport::band_mean(double lo_hz, double hi_hz) const {
  BandMean out;
  double acc = 0.0;
  for (std::size_t f = 0; f < frequency_hz.size(); ++f) {
    if (frequency_hz[f] < lo_hz || frequency_hz[f] >= hi_hz) continue;
    if (status[f] != BinStatus::ok) {
      ++out.bins_flagged;
      continue;
    }
    acc += gain_db[f];
    ++out.bins_used;
  }
  out.mean_db = out.bins_used ? acc / static_cast<double>(out.bins_used) : std::numeric_limits<double>::quiet_NaN();
  return out;
}

GainReport gain(const SpectralFrameTensor& outputs, const SpectralFrameTensor& reference,
                std::span<const SpectralFrameTensor> desired) {
  const std::size_t n_src = desired.size();
  if (n_src == 0) throw std::invalid_argument("gain: no sources");
  if (outputs.mic_count() != n_src) throw std::invalid_argument("gain: need one output channel per source");
  if (reference.mic_count() != 1) throw std::invalid_argument("gain: reference must be a single channel");
  if (!outputs.same_grid(reference)) throw std::invalid_argument("gain: outputs and reference differ in (T, F)");
  for (const auto& d : desired) {
    if (d.mic_count() != 1 || !d.same_grid(reference)) {
      throw std::invalid_argument("gain: desired series must be single channel on the reference grid");
    }
  }
  const std::size_t frames = reference.frame_count();
  const std::size_t bins = reference.bin_count();

  GainReport r;
  r.frequency_hz.resize(bins);
  r.gain_db.assign(bins, 0.0);
  r.status.assign(bins, BinStatus::ok);
  r.input_error.assign(n_src, std::vector<double>(bins, 0.0));
  r.output_error.assign(n_src, std::vector<double>(bins, 0.0));

  for (std::size_t f = 0; f < bins; ++f) {
    r.frequency_hz[f] = reference.bin_hz(f);
    double acc = 0.0;
    for (std::size_t n = 0; n < n_src; ++n) {
      double in = 0.0, out = 0.0;
      for (std::size_t t = 0; t < frames; ++t) {
        const cplx d = desired[n](t, f, 0);
        in += std::norm(reference(t, f, 0) - d);
        out += std::norm(outputs(t, f, n) - d);
      }
      r.input_error[n][f] = in;
      r.output_error[n][f] = out;
      if (out == 0.0) {
        r.status[f] = BinStatus::infinite_gain;
      } else if (in == 0.0 && r.status[f] == BinStatus::ok) {
        r.status[f] = BinStatus::undefined;
      }
      acc += 10.0 * std::log10(in / out);
    }
    r.gain_db[f] = r.status[f] == BinStatus::ok ? acc / static_cast<double>(n_src)
                                                : std::numeric_limits<double>::quiet_NaN();
  }
  return r;
}

void CurveTable::add(std::string name, std::vector<double> values) {
  if (values.size() != frequency_hz.size()) throw std::invalid_argument("CurveTable: column length mismatch");
  names.push_back(std::move(name));
  columns.push_back(std::move(values));
}

const std::vector<double>& CurveTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return columns[i];
  throw std::out_of_range("CurveTable: no column '" + name + "'");
}

namespace {

std::string number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_number(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("read_csv: bad number '" + s + "'");
  return v;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

void write_csv(std::ostream& os, const CurveTable& table) {
  os << "frequency_hz";
  for (const auto& n : table.names) os << ',' << n;
  os << '\n';
  for (std::size_t f = 0; f < table.frequency_hz.size(); ++f) {
    os << number(table.frequency_hz[f]);
    for (const auto& c : table.columns) os << ',' << number(c[f]);
    os << '\n';
  }
}

CurveTable read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("read_csv: empty input");
  auto header = split(line);
  if (header.empty() || header.front() != "frequency_hz") {
    throw std::invalid_argument("read_csv: first column must be frequency_hz");
  }
  CurveTable t;
  t.names.assign(header.begin() + 1, header.end());
  t.columns.resize(t.names.size());
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != header.size()) throw std::invalid_argument("read_csv: ragged row");
    t.frequency_hz.push_back(parse_number(cells[0]));
    for (std::size_t i = 1; i < cells.size(); ++i) t.columns[i - 1].push_back(parse_number(cells[i]));
  }
  return t;
}

CurveTable gain_table(const GainReport& report) {
  CurveTable t;
  t.frequency_hz = report.frequency_hz;
  t.add("gain_db", report.gain_db);
  std::vector<double> status;
  for (auto s : report.status) status.push_back(static_cast<double>(static_cast<int>(s)));
  t.add("status", std::move(status));
  for (std::size_t n = 0; n < report.input_error.size(); ++n) {
    t.add("input_error_src" + std::to_string(n), report.input_error[n]);
    t.add("output_error_src" + std::to_string(n), report.output_error[n]);
  }
  return t;
}

std::string CovSlot::label() const {
  std::string s = "src" + std::to_string(source) + "_";
  s += state ? "st" + std::to_string(*state) : std::string("ens");
  return s;
}

std::string DivergencePair::label() const { return first.label() + "__" + second.label(); }

namespace {

const HermitianSpectrum& lookup(const CovarianceSet& covs, const CovSlot& slot) {
  if (!slot.state) {
    if (slot.source >= covs.ensemble.size() || covs.ensemble[slot.source].bin_count() == 0) {
      throw std::invalid_argument("divergence_curve: no ensemble covariance for " + slot.label());
    }
    return covs.ensemble[slot.source];
  }
  auto it = covs.per_state.find({slot.source, *slot.state});
  if (it == covs.per_state.end()) throw std::invalid_argument("divergence_curve: no covariance for " + slot.label());
  return it->second;
}

}  // namespace

CurveTable divergence_curve(const CovarianceSet& covs, std::span<const DivergencePair> pairs, double epsilon_rel) {
  CurveTable t;
  if (pairs.empty()) return t;
  // Resolve everything up front so a missing entry is reported before any work.
  std::vector<std::pair<const HermitianSpectrum*, const HermitianSpectrum*>> resolved;
  for (const auto& p : pairs) resolved.emplace_back(&lookup(covs, p.first), &lookup(covs, p.second));
  const std::size_t bins = resolved.front().first->bin_count();
  const auto& omegas = resolved.front().first->omegas();
  for (std::size_t f = 0; f < bins; ++f) t.frequency_hz.push_back(std::round(omegas[f] / (2.0 * std::numbers::pi) * 1e6) / 1e6);

  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& [a, b] = resolved[i];
    std::vector<double> col(bins);
    ExceptionCollector errors;
#pragma omp parallel for schedule(dynamic, 8)
    for (long long ff = 0; ff < static_cast<long long>(bins); ++ff) {
      const auto f = static_cast<std::size_t>(ff);
      errors.capture([&] {
        col[f] = gaussian_divergence(regularize((*a)[f], epsilon_rel), regularize((*b)[f], epsilon_rel));
      });
    }
    errors.rethrow();
    t.add(pairs[i].label(), std::move(col));
  }
  return t;
}

std::vector<DivergencePair> outer_vs_central(std::size_t source_count, std::size_t central,
                                             std::optional<std::size_t> state) {
  std::vector<DivergencePair> out;
  for (std::size_t n = 0; n < source_count; ++n) {
    if (n == central) continue;
    out.push_back({{n, state}, {central, state}});
  }
  return out;
}

std::vector<double> mean_of_columns(const CurveTable& table, std::span<const std::string> names) {
  if (names.empty()) throw std::invalid_argument("mean_of_columns: no columns");
  std::vector<double> out(table.frequency_hz.size(), 0.0);
  for (const auto& n : names) {
    const auto& c = table.column(n);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c[i];
  }
  for (auto& v : out) v /= static_cast<double>(names.size());
  return out;
}

CurveTable theory_curve(std::span<const Point> positions, std::span<const std::pair<double, double>> azimuth_pairs,
                        std::span<const double> sigmas, std::span<const double> frequencies_hz, double speed_of_sound) {
  if (azimuth_pairs.empty()) throw std::invalid_argument("theory_curve: no source pairs");
  for (double s : sigmas) {
    if (!(s > 0.0)) throw std::invalid_argument("theory_curve: sigma must be > 0 (divergence is unbounded at 0)");
  }
  CurveTable t;
  t.frequency_hz.assign(frequencies_hz.begin(), frequencies_hz.end());
  for (double sigma : sigmas) {
    const PerturbationModel model(sigma);
    std::vector<double> col;
    for (double hz : frequencies_hz) {
      const double omega = 2.0 * std::numbers::pi * hz;
      double acc = 0.0;
      for (const auto& [az1, az2] : azimuth_pairs) {
        acc += far_field_divergence(steering_vector(positions, az1, omega, speed_of_sound),
                                    steering_vector(positions, az2, omega, speed_of_sound), model);
      }
      col.push_back(acc / static_cast<double>(azimuth_pairs.size()));
    }
    char name[64];
    std::snprintf(name, sizeof name, "sigma_%.6gs", sigma);
    t.add(name, std::move(col));
  }
  return t;
}

}  // namespace defarray
