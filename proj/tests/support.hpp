// SPDX-License-Identifier: Apache-2.0
//
// Random instance generators and small reference routines shared by tests.

#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "defarray/covmath.hpp"
#include "defarray/stft.hpp"

namespace testsupport {

using defarray::CMatrix;
using defarray::CVector;
using defarray::cplx;

inline CMatrix random_complex(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::normal_distribution<double> g;
  CMatrix a(rows, cols);
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, j) = cplx(g(rng), g(rng));
  return a;
}

/// A A^H + floor I, A of size M x (M + 2): well conditioned for floor ~ 0.1.
inline CMatrix random_pd(std::mt19937_64& rng, std::size_t m, double floor = 0.1) {
  const CMatrix a = random_complex(rng, m, m + 2);
  CMatrix r = a * a.adjoint() / static_cast<double>(m + 2);
  r.diagonal().array() += floor;
  return r;
}

/// Unit-modulus vector with entry 0 equal to 1.
inline CVector random_phasor(std::mt19937_64& rng, std::size_t m) {
  std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
  CVector a(m);
  a(0) = 1.0;
  for (std::size_t i = 1; i < m; ++i) a(static_cast<Eigen::Index>(i)) = std::polar(1.0, u(rng));
  return a;
}

/// Divergence via the eigenvalues of r2^{-1/2} r1 r2^{-1/2}:
/// 1/2 sum (lambda - 1 - ln lambda).
inline double divergence_by_eigenvalues(const CMatrix& r1, const CMatrix& r2) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(r2);
  const Eigen::VectorXd inv_sqrt = es.eigenvalues().array().rsqrt();
  const CMatrix w = es.eigenvectors() * inv_sqrt.cast<cplx>().asDiagonal() * es.eigenvectors().adjoint();
  const CMatrix whitened = w * r1 * w;
  Eigen::SelfAdjointEigenSolver<CMatrix> ew((whitened + whitened.adjoint()) / 2.0, Eigen::EigenvaluesOnly);
  double d = 0.0;
  for (Eigen::Index i = 0; i < ew.eigenvalues().size(); ++i) {
    const double l = ew.eigenvalues()(i);
    d += l - 1.0 - std::log(l);
  }
  return 0.5 * d;
}

inline std::vector<double> gaussian_signal(std::size_t n, std::uint64_t seed, double stddev = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, stddev);
  std::vector<double> x(n);
  for (auto& v : x) v = g(rng);
  return x;
}

/// Relative error |a - b| / max(|b|, tiny).
inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

inline double max_abs_diff(const CMatrix& a, const CMatrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace testsupport
