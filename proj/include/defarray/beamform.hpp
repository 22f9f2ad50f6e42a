// SPDX-License-Identifier: Apache-2.0
//
// Multichannel Wiener filter banks: static (ensemble covariances), dynamic
// (one weight set per array state) and a rank-one static baseline.

#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "defarray/covest.hpp"
#include "defarray/covmath.hpp"
#include "defarray/scene.hpp"
#include "defarray/stft.hpp"

namespace defarray {

enum class BeamformerMode { static_full_rank, dynamic, rank_one_static };

BeamformerMode parse_mode(const std::string& name);
std::string mode_name(BeamformerMode mode);

/// Per-bin N x M weight matrices for each state slot. Static banks use the
/// single slot 0.
struct BeamformerBank {
  BeamformerMode mode = BeamformerMode::static_full_rank;
  std::size_t reference = 0;
  std::size_t source_count = 0;
  std::size_t mic_count = 0;
  std::map<std::size_t, std::vector<CMatrix>> weights;

  std::size_t bin_count() const { return weights.empty() ? 0 : weights.begin()->second.size(); }
  void validate() const;
};

/// Row n of W[f] is e_ref^T R_n[f] (sum_k R_k[f] + R_v[f])^-1. The summed
/// covariance is diagonally loaded with `epsilon_rel` first (0 disables
/// loading). Throws NumericalError naming the bin if it stays
/// ill-conditioned.
std::vector<CMatrix> mwf_weights(std::span<const HermitianSpectrum> sources, const HermitianSpectrum& noise,
                                 std::size_t reference, double epsilon_rel = kDefaultLoading);

/// lambda_1 u_1 u_1^H of a Hermitian matrix.
CMatrix rank_one_reduction(const CMatrix& r);

BeamformerBank build(const CovarianceSet& covs, BeamformerMode mode, std::size_t reference,
                     double epsilon_rel = kDefaultLoading);

/// Y[t,f] = W_slot[f] X[t,f]; the returned tensor has N channels, one per
/// source. Dynamic banks need `states`; static banks ignore it.
SpectralFrameTensor apply(const BeamformerBank& bank, const SpectralFrameTensor& mixture,
                          const StateSequence* states = nullptr);

}  // namespace defarray
