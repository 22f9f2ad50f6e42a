// SPDX-License-Identifier: Apache-2.0

#include "defarray/beamform.hpp"

#include <sstream>
#include <stdexcept>

#include "defarray/kernels.hpp"

namespace defarray {

BeamformerMode parse_mode(const std::string& name) {
  if (name == "static") return BeamformerMode::static_full_rank;
  if (name == "dynamic") return BeamformerMode::dynamic;
  if (name == "rank1" || name == "rank_one_static") return BeamformerMode::rank_one_static;
  throw std::invalid_argument("unknown beamformer mode '" + name + "' (expected static, dynamic or rank1)");
}

std::string mode_name(BeamformerMode mode) {
  switch (mode) {
    case BeamformerMode::static_full_rank: return "static";
    case BeamformerMode::dynamic: return "dynamic";
    case BeamformerMode::rank_one_static: return "rank1";
  }
  return "unknown";
}

void BeamformerBank::validate() const {
  if (weights.empty()) throw NumericalError("BeamformerBank: no weights");
  const std::size_t bins = bin_count();
  for (const auto& [slot, per_bin] : weights) {
    if (per_bin.size() != bins) throw NumericalError("BeamformerBank: slots differ in bin count");
    for (std::size_t f = 0; f < per_bin.size(); ++f) {
      const auto& w = per_bin[f];
      if (static_cast<std::size_t>(w.rows()) != source_count || static_cast<std::size_t>(w.cols()) != mic_count) {
        throw NumericalError("BeamformerBank: weight matrix has the wrong shape");
      }
      if (!w.allFinite()) {
        std::ostringstream os;
        os << "BeamformerBank: non-finite weights in slot " << slot << ", bin " << f;
        throw NumericalError(os.str());
      }
    }
  }
}

std::vector<CMatrix> mwf_weights(std::span<const HermitianSpectrum> sources, const HermitianSpectrum& noise,
                                 std::size_t reference, double epsilon_rel) {
  if (sources.empty()) throw std::invalid_argument("mwf_weights: no sources");
  const std::size_t bins = noise.bin_count();
  const std::size_t mics = noise.mic_count();
  for (const auto& s : sources) {
    if (s.bin_count() != bins || s.mic_count() != mics) {
      throw std::invalid_argument("mwf_weights: source and noise spectra differ in mic count or bin grid");
    }
  }
  if (reference >= mics) throw std::invalid_argument("mwf_weights: reference index out of range");
  if (epsilon_rel < 0.0) throw std::invalid_argument("mwf_weights: epsilon_rel must be >= 0");

  const auto n_src = static_cast<Eigen::Index>(sources.size());
  const auto m = static_cast<Eigen::Index>(mics);
  std::vector<CMatrix> out(bins);
  std::vector<std::string> failures(bins);

#pragma omp parallel for schedule(dynamic, 8)
  for (long long ff = 0; ff < static_cast<long long>(bins); ++ff) {
    const auto f = static_cast<std::size_t>(ff);
    CMatrix total = noise[f];
    CMatrix rows(n_src, m);
    for (Eigen::Index n = 0; n < n_src; ++n) {
      const CMatrix& r = sources[static_cast<std::size_t>(n)][f];
      total += r;
      rows.row(n) = r.row(static_cast<Eigen::Index>(reference));
    }
    total = hermitian_part(total);
    if (epsilon_rel > 0.0) total = regularize(total, epsilon_rel);
    const double cond = condition_number(total);
    if (!(cond <= kMaxConditionNumber)) {
      std::ostringstream os;
      os << "mwf_weights: summed covariance at bin " << f << " is ill-conditioned (condition " << cond << ")";
      failures[f] = os.str();
      continue;
    }
    // W = B T^-1 with T Hermitian  <=>  W^H = T^-1 B^H.
    Eigen::LLT<CMatrix> llt(total);
    out[f] = llt.solve(rows.adjoint()).adjoint();
  }
  for (const auto& msg : failures) {
    if (!msg.empty()) throw NumericalError(msg);
  }
  return out;
}

CMatrix rank_one_reduction(const CMatrix& r) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitian_part(r));
  const Eigen::Index top = r.rows() - 1;  // eigenvalues ascending
  const double lambda = es.eigenvalues()(top);
  const CVector u = es.eigenvectors().col(top);
  return lambda * u * u.adjoint();
}

namespace {

std::vector<HermitianSpectrum> reduced_ensemble(const CovarianceSet& covs) {
  std::vector<HermitianSpectrum> out;
  for (const auto& e : covs.ensemble) {
    std::vector<CMatrix> bins(e.bin_count());
    for (std::size_t f = 0; f < bins.size(); ++f) bins[f] = rank_one_reduction(e[f]);
    out.emplace_back(std::move(bins), e.omegas());
  }
  return out;
}

}  // namespace

BeamformerBank build(const CovarianceSet& covs, BeamformerMode mode, std::size_t reference, double epsilon_rel) {
  BeamformerBank bank;
  bank.mode = mode;
  bank.reference = reference;
  bank.source_count = covs.source_count;
  bank.mic_count = covs.noise.mic_count();
  switch (mode) {
    case BeamformerMode::static_full_rank:
      bank.weights[0] = mwf_weights(covs.ensemble, covs.noise, reference, epsilon_rel);
      break;
    case BeamformerMode::rank_one_static:
      bank.weights[0] = mwf_weights(reduced_ensemble(covs), covs.noise, reference, epsilon_rel);
      break;
    case BeamformerMode::dynamic: {
      const auto hungry = covs.starved();
      if (!hungry.empty()) {
        std::ostringstream os;
        os << "build: dynamic beamformer has states without training frames; starved (source, state):";
        for (const auto& [n, s] : hungry) os << " (" << n << ", " << s << ")";
        throw NumericalError(os.str());
      }
      for (std::size_t s = 0; s < covs.state_count; ++s) {
        std::vector<HermitianSpectrum> per_source;
        for (std::size_t n = 0; n < covs.source_count; ++n) per_source.push_back(covs.per_state.at({n, s}));
        bank.weights[s] = mwf_weights(per_source, covs.noise, reference, epsilon_rel);
      }
      break;
    }
  }
  bank.validate();
  return bank;
}

SpectralFrameTensor apply(const BeamformerBank& bank, const SpectralFrameTensor& mixture, const StateSequence* states) {
  if (mixture.mic_count() != bank.mic_count || mixture.bin_count() != bank.bin_count()) {
    throw std::invalid_argument("apply: mixture grid does not match the beamformer bank");
  }
  const std::size_t frames = mixture.frame_count();
  const std::size_t bins = mixture.bin_count();
  const std::size_t per_bin = bank.source_count * bank.mic_count;

  // Dense slot table: slot index -> position in the packed weight array.
  std::vector<std::size_t> slot_ids;
  std::map<std::size_t, std::size_t> packed_index;
  for (const auto& [slot, w] : bank.weights) {
    packed_index[slot] = slot_ids.size();
    slot_ids.push_back(slot);
  }
  std::vector<cplx> packed(slot_ids.size() * bins * per_bin);
  for (std::size_t i = 0; i < slot_ids.size(); ++i) {
    const auto& w = bank.weights.at(slot_ids[i]);
    for (std::size_t f = 0; f < bins; ++f) {
      std::copy(w[f].data(), w[f].data() + per_bin, packed.begin() + static_cast<std::ptrdiff_t>((i * bins + f) * per_bin));
    }
  }

  std::vector<std::size_t> slots(frames, 0);
  if (bank.mode == BeamformerMode::dynamic) {
    if (!states) throw std::invalid_argument("apply: dynamic beamformer needs a state sequence");
    if (states->labels.size() != frames) throw std::invalid_argument("apply: state sequence length differs from frame count");
    for (std::size_t t = 0; t < frames; ++t) {
      auto it = packed_index.find(states->labels[t]);
      if (it == packed_index.end()) {
        std::ostringstream os;
        os << "apply: no weights for state " << states->labels[t] << " at frame " << t;
        throw NumericalError(os.str());
      }
      slots[t] = it->second;
    }
  } else {
    slots.assign(frames, packed_index.begin()->second);
  }

  SpectralFrameTensor out(frames, bins, bank.source_count, mixture.sample_rate(), mixture.fft_size(), mixture.hop());
  kernels::omp::apply_weights(packed, bank.source_count, slots, mixture.data(),
                              {frames, bins, mixture.mic_count()}, out.data());
  return out;
}

}  // namespace defarray
