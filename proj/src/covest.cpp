// SPDX-License-Identifier: Apache-2.0

#include "defarray/covest.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "defarray/kernels.hpp"
#include "defarray/parallel.hpp"

namespace defarray {

namespace {

kernels::Shape shape_of(const SpectralFrameTensor& x) { return {x.frame_count(), x.bin_count(), x.mic_count()}; }

std::vector<CMatrix> unpack_sums(std::span<const cplx> sums, std::size_t state, std::size_t bins, std::size_t mics,
                                 double scale) {
  std::vector<CMatrix> out(bins);
  const std::size_t mm = mics * mics;
  for (std::size_t f = 0; f < bins; ++f) {
    const cplx* src = sums.data() + (state * bins + f) * mm;
    out[f] = Eigen::Map<const CMatrix>(src, static_cast<Eigen::Index>(mics), static_cast<Eigen::Index>(mics)) * scale;
  }
  return out;
}

}  // namespace

HermitianSpectrum sample_covariance(const SpectralFrameTensor& frames, std::span<const std::size_t> subset) {
  if (subset.empty()) throw NumericalError("sample_covariance: empty frame subset");
  const auto shape = shape_of(frames);
  // Frames outside the subset get a label past the single state slot.
  std::vector<std::size_t> labels(shape.frames, 1);
  for (std::size_t t : subset) {
    if (t >= shape.frames) throw std::out_of_range("sample_covariance: frame index out of range");
    labels[t] = 0;
  }
  const std::size_t used = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::size_t{0}));
  std::vector<cplx> sums(shape.bins * shape.mics * shape.mics);
  kernels::omp::accumulate_covariance(frames.data(), shape, labels, 1, sums);
  return HermitianSpectrum(unpack_sums(sums, 0, shape.bins, shape.mics, 1.0 / static_cast<double>(used)),
                           frames.omegas());
}

HermitianSpectrum sample_covariance(const SpectralFrameTensor& frames) {
  std::vector<std::size_t> all(frames.frame_count());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return sample_covariance(frames, all);
}

void CovarianceSet::validate(double tolerance) const {
  for (const auto& [key, spec] : per_state) spec.validate();
  for (const auto& e : ensemble) e.validate();
  noise.validate();
  for (std::size_t n = 0; n < source_count; ++n) {
    std::size_t total = 0;
    std::vector<CMatrix> avg;
    for (std::size_t s = 0; s < state_count; ++s) {
      auto it = per_state.find({n, s});
      if (it == per_state.end()) continue;
      const std::size_t c = frame_counts.at({n, s});
      total += c;
      if (avg.empty()) avg.assign(it->second.bin_count(), CMatrix::Zero(it->second.mic_count(), it->second.mic_count()));
      for (std::size_t f = 0; f < avg.size(); ++f) avg[f] += static_cast<double>(c) * it->second[f];
    }
    if (total == 0) continue;
    const auto& ens = ensemble.at(n);
    for (std::size_t f = 0; f < avg.size(); ++f) {
      const CMatrix diff = avg[f] / static_cast<double>(total) - ens[f];
      const double scale = std::max(ens[f].cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
      if (diff.cwiseAbs().maxCoeff() > tolerance * scale) {
        std::ostringstream os;
        os << "CovarianceSet: ensemble of source " << n << " differs from the weighted per-state average at bin " << f;
        throw NumericalError(os.str());
      }
    }
  }
}

std::vector<CovarianceSet::Key> CovarianceSet::starved() const {
  std::vector<Key> out;
  for (std::size_t n = 0; n < source_count; ++n)
    for (std::size_t s = 0; s < state_count; ++s)
      if (!per_state.contains({n, s})) out.emplace_back(n, s);
  return out;
}

CovarianceSet train(std::span<const TrainingCapture> captures, const SpectralFrameTensor& noise_capture,
                    std::optional<std::vector<std::size_t>> pilot_bins) {
  if (captures.empty()) throw std::invalid_argument("train: no training captures");
  CovarianceSet set;
  std::size_t max_source = 0;
  std::optional<std::size_t> states;
  for (const auto& c : captures) {
    if (!c.capture || !c.states) throw std::invalid_argument("train: capture without data or states");
    if (c.states->labels.size() != c.capture->frame_count()) {
      throw std::invalid_argument("train: state track length differs from capture frame count");
    }
    if (c.capture->fft_size() != noise_capture.fft_size() || c.capture->mic_count() != noise_capture.mic_count() ||
        c.capture->bin_count() != noise_capture.bin_count()) {
      throw std::invalid_argument("train: captures do not share a mic count and bin grid");
    }
    max_source = std::max(max_source, c.source);
    const std::size_t sc = c.states->iid ? 1 : c.states->state_count;
    if (states && *states != sc) throw std::invalid_argument("train: captures disagree on the state count");
    states = sc;
  }
  set.source_count = max_source + 1;
  set.state_count = *states;
  set.ensemble.resize(set.source_count);

  const std::size_t bins = noise_capture.bin_count();
  const std::size_t mics = noise_capture.mic_count();
  const auto omegas = noise_capture.omegas();

  for (const auto& c : captures) {
    const auto shape = shape_of(*c.capture);
    std::vector<std::size_t> labels = c.states->labels;
    if (c.states->iid) std::fill(labels.begin(), labels.end(), std::size_t{0});
    std::vector<std::size_t> counts(set.state_count, 0);
    for (std::size_t l : labels) ++counts.at(l);

    std::vector<cplx> sums(set.state_count * bins * mics * mics);
    kernels::omp::accumulate_covariance(c.capture->data(), shape, labels, set.state_count, sums);

    std::vector<CMatrix> weighted(bins, CMatrix::Zero(static_cast<Eigen::Index>(mics), static_cast<Eigen::Index>(mics)));
    std::size_t total = 0;
    for (std::size_t s = 0; s < set.state_count; ++s) {
      if (counts[s] == 0) continue;
      HermitianSpectrum spec(unpack_sums(sums, s, bins, mics, 1.0 / static_cast<double>(counts[s])), omegas);
      for (std::size_t f = 0; f < bins; ++f) weighted[f] += static_cast<double>(counts[s]) * spec[f];
      total += counts[s];
      set.frame_counts[{c.source, s}] = counts[s];
      set.per_state.emplace(CovarianceSet::Key{c.source, s}, std::move(spec));
    }
    for (auto& w : weighted) w /= static_cast<double>(total);
    set.ensemble[c.source] = HermitianSpectrum(std::move(weighted), omegas);
  }
  for (std::size_t n = 0; n < set.source_count; ++n) {
    if (set.ensemble[n].bin_count() == 0) {
      std::ostringstream os;
      os << "train: no training capture for source " << n;
      throw std::invalid_argument(os.str());
    }
  }
  set.noise = sample_covariance(noise_capture);

  if (pilot_bins) {
    if (pilot_bins->size() != set.source_count) {
      throw std::invalid_argument("train: need one pilot bin per source");
    }
    const auto hungry = set.starved();
    if (!hungry.empty()) {
      std::ostringstream os;
      os << "train: pilot templates need every state populated; starved (source, state):";
      for (const auto& [n, s] : hungry) os << " (" << n << ", " << s << ")";
      throw NumericalError(os.str());
    }
    PilotTemplates tpl;
    tpl.bins = *pilot_bins;
    std::vector<double> pilot_omegas;
    for (std::size_t b : tpl.bins) pilot_omegas.push_back(omegas.at(b));
    for (std::size_t s = 0; s < set.state_count; ++s) {
      std::vector<CMatrix> mats;
      for (std::size_t n = 0; n < set.source_count; ++n) mats.push_back(set.per_state.at({n, s})[tpl.bins[n]]);
      tpl.per_state.emplace_back(std::move(mats), pilot_omegas);
    }
    set.pilots = std::move(tpl);
  }
  return set;
}

StateSequence estimate_states(const SpectralFrameTensor& mixture, const PilotTemplates& templates) {
  if (templates.per_state.empty() || templates.bins.empty()) {
    throw std::invalid_argument("estimate_states: no pilot templates (pilot disabled?)");
  }
  const std::size_t frames = mixture.frame_count();
  const std::size_t mics = mixture.mic_count();
  const std::size_t states = templates.per_state.size();
  const std::size_t nbins = templates.bins.size();
  for (std::size_t b : templates.bins) {
    if (b >= mixture.bin_count()) throw std::invalid_argument("estimate_states: pilot bin outside the mixture grid");
  }

  std::vector<std::vector<CMatrix>> loaded(states);
  for (std::size_t s = 0; s < states; ++s) {
    if (templates.per_state[s].mic_count() != mics) {
      throw std::invalid_argument("estimate_states: template mic count differs from the mixture");
    }
    for (std::size_t k = 0; k < nbins; ++k) loaded[s].push_back(regularize(templates.per_state[s][k], kDefaultLoading));
  }

  StateSequence out;
  out.state_count = states;
  out.labels.assign(frames, 0);
  const auto m = static_cast<Eigen::Index>(mics);

  ExceptionCollector errors;
#pragma omp parallel for schedule(dynamic, 4)
  for (long long tt = 0; tt < static_cast<long long>(frames); ++tt) {
    errors.capture([&] {
      const auto t = static_cast<std::size_t>(tt);
      const std::size_t lo = t >= kPilotSmoothing ? t - kPilotSmoothing : 0;
      const std::size_t hi = std::min(frames - 1, t + kPilotSmoothing);
      std::vector<CMatrix> local(nbins);
      for (std::size_t k = 0; k < nbins; ++k) {
        CMatrix acc = CMatrix::Zero(m, m);
        for (std::size_t u = lo; u <= hi; ++u) {
          const auto cell = mixture.cell(u, templates.bins[k]);
          const Eigen::Map<const CVector> x(cell.data(), m);
          acc += x * x.adjoint();
        }
        local[k] = regularize(acc / static_cast<double>(hi - lo + 1), kPilotLoading);
      }
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_state = 0;
      for (std::size_t s = 0; s < states; ++s) {
        double score = 0.0;
        for (std::size_t k = 0; k < nbins; ++k) score += gaussian_divergence(local[k], loaded[s][k]);
        if (score < best) {
          best = score;
          best_state = s;
        }
      }
      out.labels[t] = best_state;
    });
  }
  errors.rethrow();
  return out;
}

StateSequence resolve_states(StateSource source, const SpectralFrameTensor& mixture,
                             const std::optional<PilotTemplates>& templates, const StateSequence& truth) {
  if (source == StateSource::oracle) return truth;
  if (!templates) throw std::invalid_argument("state estimation: pilot tones were not enabled during training");
  return estimate_states(mixture, *templates);
}

}  // namespace defarray
