// SPDX-License-Identifier: Apache-2.0

#include "defarray/covmath.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace defarray {

HermitianSpectrum::HermitianSpectrum(std::vector<CMatrix> bins, std::vector<double> omegas)
    : bins_(std::move(bins)), omegas_(std::move(omegas)) {
  if (bins_.size() != omegas_.size()) {
    throw NumericalError("HermitianSpectrum: bins and frequencies differ in length");
  }
  mic_count_ = bins_.empty() ? 0 : static_cast<std::size_t>(bins_.front().rows());
  for (const auto& b : bins_) {
    if (static_cast<std::size_t>(b.rows()) != mic_count_ ||
        static_cast<std::size_t>(b.cols()) != mic_count_) {
      throw NumericalError("HermitianSpectrum: inconsistent matrix dimensions");
    }
  }
}

void HermitianSpectrum::validate() const {
  for (std::size_t f = 0; f < bins_.size(); ++f) {
    if (!is_hermitian(bins_[f])) {
      std::ostringstream os;
      os << "HermitianSpectrum: bin " << f << " is not Hermitian";
      throw NumericalError(os.str());
    }
    if (!is_psd(bins_[f])) {
      std::ostringstream os;
      os << "HermitianSpectrum: bin " << f << " is not positive semidefinite";
      throw NumericalError(os.str());
    }
  }
}

PerturbationModel::PerturbationModel(double sigma) : sigma_(sigma) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw std::invalid_argument("PerturbationModel: sigma must be finite and >= 0");
  }
}

bool is_hermitian(const CMatrix& r, double rel_tol) {
  if (r.rows() != r.cols()) return false;
  const double scale = std::max(r.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  return (r - r.adjoint()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

bool is_psd(const CMatrix& r) {
  if (r.rows() == 0) return true;
  Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitian_part(r), Eigen::EigenvaluesOnly);
  const double m = static_cast<double>(r.rows());
  const double floor = -kPsdTolerance * std::abs(r.trace().real()) / m;
  return es.eigenvalues().minCoeff() >= floor;
}

double condition_number(const CMatrix& r) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitian_part(r), Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (lo <= 0.0) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

CMatrix hermitian_part(const CMatrix& r) { return 0.5 * (r + r.adjoint()); }

double gaussian_divergence(const CMatrix& r1, const CMatrix& r2) {
  if (r1.rows() != r1.cols() || r2.rows() != r2.cols() || r1.rows() != r2.rows()) {
    throw NumericalError("gaussian_divergence: dimension mismatch");
  }
  const double cond = condition_number(r2);
  if (!(cond <= kMaxConditionNumber)) {
    std::ostringstream os;
    os << "gaussian_divergence: second covariance is singular or ill-conditioned (condition "
       << cond << "); regularize it first";
    throw NumericalError(os.str());
  }
  const CMatrix h1 = hermitian_part(r1);
  Eigen::LLT<CMatrix> llt2(hermitian_part(r2));
  if (llt2.info() != Eigen::Success) {
    throw NumericalError("gaussian_divergence: covariance is not positive definite; regularize it first");
  }
  // Whitened matrix L^-1 R1 L^-H; the divergence is 1/2 sum (mu - ln(1 + mu))
  // over its eigenvalues 1 + mu.
  const auto l = llt2.matrixL();
  const CMatrix half = l.solve(h1);
  const CMatrix whitened = l.solve(half.adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitian_part(whitened), Eigen::EigenvaluesOnly);
  double d = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double mu = es.eigenvalues()(i) - 1.0;
    if (!(mu > -1.0)) {
      throw NumericalError("gaussian_divergence: covariance is not positive definite; regularize it first");
    }
    d += mu - std::log1p(mu);
  }
  return 0.5 * d;
}

CMatrix perturbed_covariance(const CMatrix& r, double omega, const PerturbationModel& model) {
  const double x = omega * omega * model.sigma() * model.sigma();
  const double keep = std::exp(-x);
  CMatrix out = keep * r;
  out.diagonal() = r.diagonal();
  return out;
}

double far_field_divergence(const SteeringVector& a1, const SteeringVector& a2,
                            const PerturbationModel& model) {
  if (a1.entries.size() != a2.entries.size()) {
    throw NumericalError("far_field_divergence: steering vectors differ in length");
  }
  if (a1.omega != a2.omega) {
    throw NumericalError("far_field_divergence: steering vectors at different frequencies");
  }
  if (model.sigma() == 0.0) {
    throw NumericalError(
        "far_field_divergence: sigma = 0 gives rank-deficient covariances; divergence is unbounded");
  }
  const double m = static_cast<double>(a1.entries.size());
  // M^2 - |a1^H a2|^2 through the Lagrange identity, a sum of nonnegative
  // terms that stays accurate when the two vectors are nearly parallel.
  double gap = 0.0;
  const Eigen::Index n = a1.entries.size();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      gap += std::norm(a1.entries(i) * a2.entries(j) - a1.entries(j) * a2.entries(i));
  const double em1 = std::expm1(a1.omega * a1.omega * model.sigma() * model.sigma());
  return gap / (2.0 * em1 * (em1 + m));
}

CMatrix regularize(const CMatrix& r, double epsilon_rel) {
  if (!(epsilon_rel > 0.0)) {
    throw std::invalid_argument("regularize: epsilon_rel must be > 0");
  }
  const double m = static_cast<double>(r.rows());
  const double tr = r.trace().real();
  const double eps = tr > 0.0 ? epsilon_rel * tr / m : epsilon_rel;
  CMatrix out = r;
  out.diagonal().array() += eps;
  return out;
}

}  // namespace defarray
