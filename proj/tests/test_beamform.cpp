// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "defarray/beamform.hpp"
#include "defarray/eval.hpp"
#include "support.hpp"

using namespace defarray;
using namespace testsupport;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

HermitianSpectrum constant_spectrum(const CMatrix& r, std::size_t bins = 1) {
  std::vector<double> omegas(bins);
  for (std::size_t f = 0; f < bins; ++f) omegas[f] = static_cast<double>(f);
  return HermitianSpectrum(std::vector<CMatrix>(bins, r), omegas);
}

CovarianceSet single_state_set(std::mt19937_64& rng, std::size_t sources, std::size_t mics, std::size_t bins) {
  CovarianceSet c;
  c.source_count = sources;
  c.state_count = 1;
  std::vector<double> omegas(bins, 1.0);
  for (std::size_t n = 0; n < sources; ++n) {
    std::vector<CMatrix> per_bin;
    for (std::size_t f = 0; f < bins; ++f) per_bin.push_back(random_pd(rng, mics, 0.01));
    HermitianSpectrum s(per_bin, omegas);
    c.per_state.emplace(CovarianceSet::Key{n, 0}, s);
    c.frame_counts[{n, 0}] = 10;
    c.ensemble.push_back(s);
  }
  c.noise = HermitianSpectrum(std::vector<CMatrix>(bins, 0.1 * CMatrix::Identity(mics, mics)), omegas);
  return c;
}

}  // namespace

TEST_CASE("rank-one source in white noise", "[beamform]") {
  std::mt19937_64 rng(1);
  for (std::size_t m : {2u, 4u, 12u}) {
    const CVector a = random_phasor(rng, m);  // a(0) = 1, the reference
    const double sigma2 = 0.3;
    const auto r1 = constant_spectrum(a * a.adjoint());
    const auto rv = constant_spectrum(sigma2 * CMatrix::Identity(m, m));
    const std::vector<HermitianSpectrum> src{r1};

    const CMatrix expected = std::conj(a(0)) * a.adjoint() / (sigma2 + static_cast<double>(m));
    CHECK(max_abs_diff(mwf_weights(src, rv, 0, 0.0)[0], expected) < 1e-12);

    // Diagonal loading acts as extra white noise of eps * (1 + sigma^2).
    const double eps = 1e-3;
    const CMatrix loaded = a.adjoint() / (sigma2 + eps * (1.0 + sigma2) + static_cast<double>(m));
    CHECK(max_abs_diff(mwf_weights(src, rv, 0, eps)[0], loaded) < 1e-12);
  }
}

TEST_CASE("single microphone reduces to scalar Wiener gains", "[beamform]") {
  const std::vector<double> powers{1.0, 2.0, 0.5};
  std::vector<HermitianSpectrum> src;
  for (double p : powers) src.push_back(constant_spectrum(CMatrix::Constant(1, 1, p)));
  const auto rv = constant_spectrum(CMatrix::Constant(1, 1, 0.25));
  const auto w = mwf_weights(src, rv, 0, 0.0)[0];
  for (std::size_t n = 0; n < powers.size(); ++n) {
    CHECK_THAT(w(static_cast<Eigen::Index>(n), 0).real(), WithinRel(powers[n] / 3.75, 1e-14));
    CHECK(w(static_cast<Eigen::Index>(n), 0).imag() == 0.0);
  }
}

TEST_CASE("two equal diagonal sources split power evenly", "[beamform]") {
  CMatrix d = CMatrix::Zero(3, 3);
  d.diagonal() << 1.0, 2.0, 3.0;
  const std::vector<HermitianSpectrum> src{constant_spectrum(d), constant_spectrum(d)};
  const auto w = mwf_weights(src, constant_spectrum(CMatrix::Zero(3, 3)), 1, 0.0)[0];
  for (Eigen::Index n = 0; n < 2; ++n) {
    for (Eigen::Index m = 0; m < 3; ++m) CHECK_THAT(std::abs(w(n, m) - (m == 1 ? 0.5 : 0.0)), WithinAbs(0.0, 1e-14));
  }
}

TEST_CASE("ill-conditioned totals name the bin", "[beamform]") {
  std::mt19937_64 rng(2);
  const CVector a = random_phasor(rng, 3);
  std::vector<CMatrix> bins{CMatrix::Identity(3, 3), a * a.adjoint()};
  const HermitianSpectrum src(bins, {0.0, 1.0});
  const HermitianSpectrum rv(std::vector<CMatrix>(2, CMatrix::Zero(3, 3)), {0.0, 1.0});
  try {
    mwf_weights(std::vector<HermitianSpectrum>{src}, rv, 0, 0.0);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("bin 1") != std::string::npos);
  }
  CHECK_NOTHROW(mwf_weights(std::vector<HermitianSpectrum>{src}, rv, 0, 1e-3));
  CHECK_THROWS_AS(mwf_weights(std::vector<HermitianSpectrum>{src}, rv, 7, 1e-3), std::invalid_argument);
}

TEST_CASE("rank-one reduction keeps the principal eigenpair", "[beamform]") {
  CMatrix r(2, 2);
  r << 1.2, 1.0, 1.0, 1.2;  // eigenvalues 2.2 and 0.2
  const CMatrix p = rank_one_reduction(r);
  CMatrix expected(2, 2);
  expected << 1.1, 1.1, 1.1, 1.1;
  CHECK(max_abs_diff(p, expected) < 1e-12);

  std::mt19937_64 rng(3);
  const CVector a = 1.7 * random_phasor(rng, 5);
  CHECK(max_abs_diff(rank_one_reduction(a * a.adjoint()), a * a.adjoint()) < 1e-12);
}

TEST_CASE("bank construction", "[beamform]") {
  std::mt19937_64 rng(4);
  const CovarianceSet c = single_state_set(rng, 2, 3, 5);

  SECTION("single state: static and dynamic agree") {
    const auto s = build(c, BeamformerMode::static_full_rank, 0);
    const auto d = build(c, BeamformerMode::dynamic, 0);
    REQUIRE(d.weights.size() == 1);
    for (std::size_t f = 0; f < 5; ++f) CHECK(max_abs_diff(s.weights.at(0)[f], d.weights.at(0)[f]) <= 1e-12);
  }

  SECTION("rank-one ensemble: rank1 equals static") {
    CovarianceSet r1 = c;
    for (auto& e : r1.ensemble) {
      std::vector<CMatrix> bins;
      for (std::size_t f = 0; f < e.bin_count(); ++f) {
        const CVector a = random_phasor(rng, 3);
        bins.push_back(a * a.adjoint());
      }
      e = HermitianSpectrum(bins, e.omegas());
    }
    const auto s = build(r1, BeamformerMode::static_full_rank, 0);
    const auto o = build(r1, BeamformerMode::rank_one_static, 0);
    for (std::size_t f = 0; f < 5; ++f) CHECK(max_abs_diff(s.weights.at(0)[f], o.weights.at(0)[f]) <= 1e-9);
  }

  SECTION("starved states block the dynamic bank") {
    CovarianceSet starved = c;
    starved.state_count = 2;
    CHECK_THROWS_AS(build(starved, BeamformerMode::dynamic, 0), NumericalError);
    CHECK_NOTHROW(build(starved, BeamformerMode::static_full_rank, 0));
  }

  SECTION("parse and name modes") {
    CHECK(parse_mode("rank1") == BeamformerMode::rank_one_static);
    CHECK(parse_mode("rank_one_static") == BeamformerMode::rank_one_static);
    CHECK(mode_name(parse_mode("dynamic")) == "dynamic");
    CHECK_THROWS_AS(parse_mode("mvdr"), std::invalid_argument);
  }
}

TEST_CASE("ten-state rotation gives ten weight sets", "[beamform]") {
  std::mt19937_64 rng(5);
  CovarianceSet c = single_state_set(rng, 2, 3, 4);
  c.state_count = 10;
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t s = 1; s < 10; ++s) {
      c.per_state.emplace(CovarianceSet::Key{n, s}, c.per_state.at({n, 0}));
      c.frame_counts[{n, s}] = 10;
    }
  const auto bank = build(c, BeamformerMode::dynamic, 0);
  CHECK(bank.weights.size() == 10);
  CHECK_NOTHROW(bank.validate());
}

TEST_CASE("applying banks", "[beamform]") {
  std::mt19937_64 rng(6);
  const std::size_t frames = 6, bins = 3, mics = 2;
  SpectralFrameTensor x(frames, bins, mics, 16000.0, 4, 2);
  for (auto& v : x.data()) v = cplx(std::normal_distribution<double>()(rng), 1.0);

  BeamformerBank identity;
  identity.source_count = mics;
  identity.mic_count = mics;
  identity.weights[0] = std::vector<CMatrix>(bins, CMatrix::Identity(mics, mics));
  const auto y = apply(identity, x);
  CHECK(y.mic_count() == mics);
  for (std::size_t i = 0; i < x.data().size(); ++i) CHECK(y.data()[i] == x.data()[i]);

  const auto zero = apply(identity, x.zeros_like());
  for (const auto& v : zero.data()) CHECK(v == cplx(0.0, 0.0));

  BeamformerBank dyn = identity;
  dyn.mode = BeamformerMode::dynamic;
  dyn.weights[1] = std::vector<CMatrix>(bins, 2.0 * CMatrix::Identity(mics, mics));
  StateSequence st;
  st.state_count = 2;
  st.labels = {0, 1, 0, 1, 1, 0};
  const auto yd = apply(dyn, x, &st);
  CHECK(yd(1, 2, 1) == 2.0 * x(1, 2, 1));
  CHECK(yd(2, 2, 1) == x(2, 2, 1));

  CHECK_THROWS_AS(apply(dyn, x), std::invalid_argument);
  st.labels[3] = 5;
  st.state_count = 6;
  CHECK_THROWS_AS(apply(dyn, x, &st), NumericalError);
}

TEST_CASE("small-instance apply matches a naive loop", "[beamform][property]") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + trial % 3, f_count = 1 + trial % 4, t_count = 1 + trial % 8, n_out = 1 + trial % 2;
    SpectralFrameTensor x(t_count, f_count, m, 16000.0, 2 * (f_count - 1) + 2, 1);
    for (auto& v : x.data()) v = random_complex(rng, 1, 1)(0, 0);
    BeamformerBank bank;
    bank.mode = BeamformerMode::dynamic;
    bank.source_count = n_out;
    bank.mic_count = m;
    for (std::size_t s = 0; s < 2; ++s) {
      std::vector<CMatrix> w;
      for (std::size_t f = 0; f < f_count; ++f) w.push_back(random_complex(rng, n_out, m));
      bank.weights[s] = w;
    }
    StateSequence st;
    st.state_count = 2;
    for (std::size_t t = 0; t < t_count; ++t) st.labels.push_back((t * 7 + trial) % 2);
    const auto y = apply(bank, x, &st);
    for (std::size_t t = 0; t < t_count; ++t)
      for (std::size_t f = 0; f < f_count; ++f) {
        CVector xv(m);
        for (std::size_t i = 0; i < m; ++i) xv(static_cast<Eigen::Index>(i)) = x(t, f, i);
        const CVector ref = bank.weights.at(st.labels[t])[f] * xv;
        for (std::size_t n = 0; n < n_out; ++n) CHECK(std::abs(y(t, f, n) - ref(static_cast<Eigen::Index>(n))) <= 1e-12);
      }
  }
}

TEST_CASE("oracle weights minimize the empirical squared error", "[beamform][property]") {
  // Sources and noise are active in disjoint frames, so sample covariances
  // add up exactly and the filter is the least-squares solution.
  std::mt19937_64 rng(8);
  const std::size_t n_src = 2, m = 3, frames = 60;
  const std::vector<std::size_t> bins_to_check{0, 1, 2};
  SpectralFrameTensor x(frames, bins_to_check.size(), m, 16000.0, 4, 2);
  std::vector<SpectralFrameTensor> images(n_src, x.zeros_like());
  SpectralFrameTensor noise = x.zeros_like();
  for (std::size_t f = 0; f < bins_to_check.size(); ++f) {
    std::vector<CVector> steer;
    for (std::size_t n = 0; n < n_src; ++n) steer.push_back(random_phasor(rng, m));
    for (std::size_t t = 0; t < frames; ++t) {
      const std::size_t who = t % (n_src + 1);
      const cplx s = random_complex(rng, 1, 1)(0, 0);
      for (std::size_t i = 0; i < m; ++i) {
        const cplx v = who < n_src ? s * steer[who](static_cast<Eigen::Index>(i)) : 0.3 * random_complex(rng, 1, 1)(0, 0);
        (who < n_src ? images[who] : noise)(t, f, i) = v;
        x(t, f, i) = v;
      }
    }
  }
  std::vector<HermitianSpectrum> rs;
  for (const auto& img : images) rs.push_back(sample_covariance(img));
  const auto w = mwf_weights(rs, sample_covariance(noise), 0, 0.0);

  std::normal_distribution<double> g(0.0, 1e-3);
  for (std::size_t f = 0; f < bins_to_check.size(); ++f) {
    for (std::size_t n = 0; n < n_src; ++n) {
      auto mse = [&](const CMatrix& wf) {
        double e = 0.0;
        for (std::size_t t = 0; t < frames; ++t) {
          cplx y(0.0, 0.0);
          for (std::size_t i = 0; i < m; ++i) y += wf(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(i)) * x(t, f, i);
          e += std::norm(y - images[n](t, f, 0));
        }
        return e;
      };
      const double best = mse(w[f]);
      for (int k = 0; k < 100; ++k) {
        CMatrix d = w[f];
        for (Eigen::Index i = 0; i < d.size(); ++i) d(i) += cplx(g(rng), g(rng));
        CHECK(mse(d) >= best);
      }
    }
  }
}

TEST_CASE("noiseless static source with oracle covariances", "[beamform]") {
  const Stft stft{StftConfig{}};
  SceneSpec s;
  s.geometry = ArrayGeometry::uniform_linear(4, 0.05);
  s.noise_level_db.reset();
  s.sources.push_back({60.0, white_noise(64000, 1), 0});
  const RenderedScene r = render(s, stft, 4.0, 1);
  const std::vector<HermitianSpectrum> rs{sample_covariance(r.images[0])};
  BeamformerBank bank;
  bank.source_count = 1;
  bank.mic_count = 4;
  bank.weights[0] = mwf_weights(rs, sample_covariance(r.noise), 0, 1e-6);
  const auto y = apply(bank, r.mixture);

  // The reference channel is itself the target, so measure the residual directly.
  double err = 0.0, sig = 0.0;
  for (std::size_t t = 0; t < y.frame_count(); ++t)
    for (std::size_t f = 0; f < y.bin_count(); ++f) {
      err += std::norm(y(t, f, 0) - r.desired[0](t, f, 0));
      sig += std::norm(r.desired[0](t, f, 0));
    }
  CHECK(10.0 * std::log10(sig / err) >= 40.0);
}
