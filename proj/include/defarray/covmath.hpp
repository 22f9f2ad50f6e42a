// SPDX-License-Identifier: Apache-2.0
//
// Complex Hermitian matrix utilities, the Gaussian divergence between
// zero-mean covariance models, and the random-offset perturbation model
// for far-field steering vectors.

#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace defarray {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

/// Raised for numerical preconditions that fail at run time (singular
/// covariances, dimension mismatches, starved states, ...).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kHermitianTolerance = 1e-12;
inline constexpr double kPsdTolerance = 1e-10;
inline constexpr double kMaxConditionNumber = 1e12;
inline constexpr double kDefaultLoading = 1e-3;

/// One complex Hermitian PSD matrix per frequency bin.
///
/// `omegas` holds the physical angular frequency (rad/s) of each bin.
class HermitianSpectrum {
 public:
  HermitianSpectrum() = default;
  HermitianSpectrum(std::vector<CMatrix> bins, std::vector<double> omegas);

  std::size_t bin_count() const { return bins_.size(); }
  std::size_t mic_count() const { return mic_count_; }

  const CMatrix& operator[](std::size_t f) const { return bins_[f]; }
  CMatrix& operator[](std::size_t f) { return bins_[f]; }
  const std::vector<CMatrix>& bins() const { return bins_; }
  const std::vector<double>& omegas() const { return omegas_; }

  /// Throws NumericalError describing the first violated invariant.
  void validate() const;

 private:
  std::vector<CMatrix> bins_;
  std::vector<double> omegas_;
  std::size_t mic_count_ = 0;
};

struct SteeringVector {
  CVector entries;
  double omega = 0.0;  // rad/s
};

/// Per-microphone delay offsets are i.i.d. N(0, sigma^2), sigma in seconds.
class PerturbationModel {
 public:
  explicit PerturbationModel(double sigma);
  double sigma() const { return sigma_; }

 private:
  double sigma_;
};

bool is_hermitian(const CMatrix& r, double rel_tol = kHermitianTolerance);

/// Eigenvalues all >= -kPsdTolerance * trace / M.
bool is_psd(const CMatrix& r);

/// lambda_max / lambda_min of a Hermitian matrix; +inf if lambda_min <= 0.
double condition_number(const CMatrix& r);

/// KL divergence (nats) between CN(0, r1) and CN(0, r2) in the real-Gaussian
/// form  1/2 [ tr(r1 r2^-1 - I) - ln(det r1 / det r2) ].
///
/// Both matrices must be positive definite; r2 must have condition number
/// at most 1e12 (regularize() first if it does not).
double gaussian_divergence(const CMatrix& r1, const CMatrix& r2);

/// Ensemble covariance of a unit-diagonal steering outer product whose
/// delays carry i.i.d. Gaussian offsets: off-diagonals shrink by
/// exp(-omega^2 sigma^2), the diagonal is kept.
CMatrix perturbed_covariance(const CMatrix& r, double omega, const PerturbationModel& model);

/// Closed-form divergence between two perturbed far-field covariances:
///   (M^2 - |a1^H a2|^2) / (2 (e^x - 1)(e^x - 1 + M)),   x = omega^2 sigma^2.
double far_field_divergence(const SteeringVector& a1, const SteeringVector& a2,
                            const PerturbationModel& model);

/// Diagonal loading: r + eps I with eps = epsilon_rel * trace(r) / M, or
/// eps = epsilon_rel when the trace vanishes.
CMatrix regularize(const CMatrix& r, double epsilon_rel);

/// Hermitian part (r + r^H) / 2.
CMatrix hermitian_part(const CMatrix& r);

}  // namespace defarray
