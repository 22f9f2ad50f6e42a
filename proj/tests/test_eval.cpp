// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "defarray/covest.hpp"
#include "defarray/eval.hpp"
#include "support.hpp"

using namespace defarray;
using namespace testsupport;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

SpectralFrameTensor random_tensor(std::mt19937_64& rng, std::size_t frames, std::size_t bins, std::size_t ch) {
  SpectralFrameTensor x(frames, bins, ch, 16000.0, 2 * (bins - 1), bins - 1);
  std::normal_distribution<double> g;
  for (auto& v : x.data()) v = cplx(g(rng), g(rng));
  return x;
}

}  // namespace

TEST_CASE("passing the reference through gives zero gain", "[eval]") {
  std::mt19937_64 rng(1);
  const auto ref = random_tensor(rng, 20, 9, 1);
  const std::vector<SpectralFrameTensor> desired{random_tensor(rng, 20, 9, 1), random_tensor(rng, 20, 9, 1)};
  SpectralFrameTensor out(20, 9, 2, 16000.0, 16, 8);
  for (std::size_t t = 0; t < 20; ++t)
    for (std::size_t f = 0; f < 9; ++f) out(t, f, 0) = out(t, f, 1) = ref(t, f, 0);
  const auto r = gain(out, ref, desired);
  CHECK(r.flagged() == 0);
  for (double g : r.gain_db) CHECK_THAT(g, WithinAbs(0.0, 1e-12));
  CHECK_THAT(r.frequency_hz[8], WithinAbs(8000.0, 1e-9));
}

TEST_CASE("gain matches a scalar error-ratio oracle", "[eval]") {
  // One frame, one bin: X_ref - D = 5^{1/2}, Y - D = 1.
  SpectralFrameTensor ref(1, 2, 1, 16000.0, 2, 1), d(1, 2, 1, 16000.0, 2, 1), y(1, 2, 1, 16000.0, 2, 1);
  ref(0, 0, 0) = cplx(1.0, 2.0);
  y(0, 0, 0) = cplx(0.0, 1.0);
  ref(0, 1, 0) = 3.0;
  y(0, 1, 0) = 1.0;
  const std::vector<SpectralFrameTensor> desired{d};
  const auto r = gain(y, ref, desired);
  CHECK_THAT(r.gain_db[0], WithinAbs(10.0 * std::log10(5.0), 1e-12));
  CHECK_THAT(r.gain_db[1], WithinAbs(10.0 * std::log10(9.0), 1e-12));
  CHECK(r.input_error[0][0] == 5.0);
  CHECK(r.output_error[0][1] == 1.0);
}

TEST_CASE("scaling the residual shifts the gain", "[eval][property]") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.05, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto ref = random_tensor(rng, 12, 5, 1);
    const std::vector<SpectralFrameTensor> desired{random_tensor(rng, 12, 5, 1), random_tensor(rng, 12, 5, 1)};
    const double a0 = u(rng), a1 = u(rng);
    SpectralFrameTensor y(12, 5, 2, 16000.0, 8, 4);
    for (std::size_t t = 0; t < 12; ++t)
      for (std::size_t f = 0; f < 5; ++f) {
        y(t, f, 0) = desired[0](t, f, 0) + a0 * (ref(t, f, 0) - desired[0](t, f, 0));
        y(t, f, 1) = desired[1](t, f, 0) + a1 * (ref(t, f, 0) - desired[1](t, f, 0));
      }
    const auto r = gain(y, ref, desired);
    const double expected = -10.0 * (std::log10(a0) + std::log10(a1));  // mean of -20 log10 a_n
    for (double g : r.gain_db) CHECK_THAT(g, WithinAbs(expected, 1e-9));
  }
}

TEST_CASE("zero errors are flagged, not averaged", "[eval]") {
  std::mt19937_64 rng(3);
  const auto ref = random_tensor(rng, 4, 3, 1);
  const std::vector<SpectralFrameTensor> desired{random_tensor(rng, 4, 3, 1)};
  SpectralFrameTensor y = random_tensor(rng, 4, 3, 1);
  for (std::size_t t = 0; t < 4; ++t) y(t, 1, 0) = desired[0](t, 1, 0);
  const auto r = gain(y, ref, desired);
  CHECK(r.status[1] == BinStatus::infinite_gain);
  CHECK(std::isnan(r.gain_db[1]));
  CHECK(r.flagged() == 1);
  const auto band = r.band_mean(0.0, 1e9);
  CHECK(band.bins_used == 2);
  CHECK(band.bins_flagged == 1);
  CHECK_THAT(band.mean_db, WithinAbs(0.5 * (r.gain_db[0] + r.gain_db[2]), 1e-12));

  const std::vector<SpectralFrameTensor> same_as_ref{ref};
  CHECK(gain(y, ref, same_as_ref).status[0] == BinStatus::undefined);

  const std::vector<SpectralFrameTensor> two{desired[0], desired[0]};
  CHECK_THROWS_AS(gain(y, ref, two), std::invalid_argument);
}

TEST_CASE("curve tables survive a CSV round trip", "[eval]") {
  CurveTable t;
  t.frequency_hz = {0.0, 15.625, 8000.0};
  t.add("a", {1.0 / 3.0, -2.5e-300, std::numeric_limits<double>::infinity()});
  t.add("b", {std::numeric_limits<double>::quiet_NaN(), 7.0, -0.0});
  std::stringstream ss;
  write_csv(ss, t);
  CHECK(ss.str().substr(0, 17) == "frequency_hz,a,b\n");
  const CurveTable back = read_csv(ss);
  CHECK(back.names == t.names);
  CHECK(back.frequency_hz == t.frequency_hz);
  CHECK(back.column("a") == t.column("a"));
  CHECK(std::isnan(back.column("b")[0]));
  CHECK(back.column("b")[1] == 7.0);

  CHECK_THROWS_AS(t.add("c", {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(t.column("zzz"), std::out_of_range);
  std::stringstream bad("freq,a\n1,2\n");
  CHECK_THROWS_AS(read_csv(bad), std::invalid_argument);
  std::stringstream ragged("frequency_hz,a\n1,2,3\n");
  CHECK_THROWS_AS(read_csv(ragged), std::invalid_argument);
}

TEST_CASE("divergence curves over covariance slots", "[eval]") {
  std::mt19937_64 rng(4);
  CovarianceSet c;
  c.source_count = 3;
  c.state_count = 2;
  const std::vector<double> omegas{0.0, 2.0 * std::numbers::pi * 15.625};
  for (std::size_t n = 0; n < 3; ++n) {
    c.ensemble.emplace_back(std::vector<CMatrix>{random_pd(rng, 3), random_pd(rng, 3)}, omegas);
    for (std::size_t s = 0; s < 2; ++s)
      c.per_state.emplace(CovarianceSet::Key{n, s},
                          HermitianSpectrum({random_pd(rng, 3), random_pd(rng, 3)}, omegas));
  }

  const std::vector<DivergencePair> pairs{{{0, std::nullopt}, {0, std::nullopt}}, {{1, 0}, {2, 1}}};
  const auto t = divergence_curve(c, pairs, 1e-3);
  CHECK(t.names == std::vector<std::string>{"src0_ens__src0_ens", "src1_st0__src2_st1"});
  CHECK(t.frequency_hz == std::vector<double>{0.0, 15.625});
  for (double v : t.columns[0]) CHECK_THAT(v, WithinAbs(0.0, 1e-12));
  for (std::size_t f = 0; f < 2; ++f) {
    const double oracle = divergence_by_eigenvalues(regularize(c.per_state.at({1, 0})[f], 1e-3),
                                                    regularize(c.per_state.at({2, 1})[f], 1e-3));
    CHECK_THAT(t.columns[1][f], WithinRel(oracle, 1e-9));
  }

  const std::vector<DivergencePair> missing{{{0, 5}, {1, 0}}};
  CHECK_THROWS_AS(divergence_curve(c, missing), std::invalid_argument);

  const auto ovc = outer_vs_central(5, 2, 3);
  REQUIRE(ovc.size() == 4);
  CHECK(ovc[2].label() == "src3_st3__src2_st3");

  const std::vector<std::string> names{"src0_ens__src0_ens", "src1_st0__src2_st1"};
  const auto m = mean_of_columns(t, names);
  CHECK_THAT(m[1], WithinAbs(0.5 * t.columns[1][1], 1e-15));
}

TEST_CASE("closed-form curve behaviour", "[eval]") {
  const auto pos = ArrayGeometry::uniform_linear(4, 0.05).nominal;
  const std::vector<std::pair<double, double>> pairs{{0.0, 90.0}, {45.0, 90.0}};
  const std::vector<double> sigmas{1e-6, 1e-5, 1e-4};
  std::vector<double> hz;
  for (double f = 100.0; f <= 8000.0; f += 100.0) hz.push_back(f);
  const auto t = theory_curve(pos, pairs, sigmas, hz);
  REQUIRE(t.columns.size() == 3);
  CHECK(t.names[1] == "sigma_1e-05s");

  // Larger jitter lowers the divergence at every frequency.
  for (std::size_t f = 0; f < hz.size(); ++f) {
    CHECK(t.columns[0][f] > t.columns[1][f]);
    CHECK(t.columns[1][f] > t.columns[2][f]);
  }

  // Column value equals the mean of the two per-pair closed forms.
  const double omega = 2.0 * std::numbers::pi * hz[30];
  const PerturbationModel model(sigmas[2]);
  const double d0 = far_field_divergence(steering_vector(pos, 0.0, omega), steering_vector(pos, 90.0, omega), model);
  const double d1 = far_field_divergence(steering_vector(pos, 45.0, omega), steering_vector(pos, 90.0, omega), model);
  CHECK_THAT(t.columns[2][30], WithinRel(0.5 * (d0 + d1), 1e-12));

  const std::vector<double> zero{0.0};
  CHECK_THROWS_AS(theory_curve(pos, pairs, zero, hz), std::invalid_argument);
}

TEST_CASE("closed form predicts the divergence of simulated jitter", "[eval][property]") {
  // Every microphone, the reference included, jitters by sigma_pos; the
  // projected delay jitter is then sigma_pos / c for any direction. A
  // rectangular non-overlapping frame grid keeps frames independent, and the
  // capture is rendered in chunks so the long training fits in memory.
  const double sigma_pos = 0.01;
  StftConfig cfg;
  cfg.window = WindowKind::rect;
  cfg.fft_size = 256;
  cfg.hop = 256;
  const Stft stft(cfg);
  const auto geom = ArrayGeometry::uniform_linear(4, 0.05);
  const std::vector<double> az{30.0, 100.0};
  const double chunk_seconds = 150.0;
  const std::size_t chunks = 8;
  const auto samples = static_cast<std::size_t>(chunk_seconds * 16000.0);

  CovarianceSet covs;
  covs.source_count = az.size();
  for (std::size_t n = 0; n < az.size(); ++n) {
    std::vector<CMatrix> sum;
    std::vector<double> omegas;
    std::size_t frames = 0;
    for (std::size_t k = 0; k < chunks; ++k) {
      SceneSpec s;
      s.geometry = geom;
      s.motion = MotionModel::jitter(sigma_pos, 17 + 100 * k + n, true);
      s.noise_level_db.reset();
      s.sources.push_back({az[n], white_noise(samples, 40 + 100 * k + n), n});
      const auto r = render(s, stft, chunk_seconds, 60 + 100 * k + n);
      const auto part = sample_covariance(r.mixture);
      const auto t = static_cast<double>(r.mixture.frame_count());
      if (sum.empty()) {
        sum.assign(part.bin_count(), CMatrix::Zero(4, 4));
        omegas = part.omegas();
      }
      for (std::size_t f = 0; f < part.bin_count(); ++f) sum[f] += t * part[f];
      frames += r.mixture.frame_count();
    }
    for (auto& m : sum) m /= static_cast<double>(frames);
    covs.ensemble.emplace_back(sum, omegas);
  }

  const std::vector<DivergencePair> pairs{{{0, std::nullopt}, {1, std::nullopt}}};
  const auto sim = divergence_curve(covs, pairs, 1e-6);
  const std::vector<std::pair<double, double>> az_pairs{{az[0], az[1]}};
  const std::vector<double> sig{sigma_pos / kSpeedOfSound};
  const auto theory = theory_curve(geom.nominal, az_pairs, sig, sim.frequency_hz);

  std::size_t compared = 0, within = 0;
  double worst = 0.0;
  for (std::size_t f = 1; f < sim.frequency_hz.size(); ++f) {
    const double a = sim.columns[0][f], b = theory.columns[0][f];
    if (a <= 0.01 || b <= 0.01) continue;
    ++compared;
    const double r = std::abs(a - b) / b;
    worst = std::max(worst, r);
    within += r <= 0.2;
  }
  INFO("bins compared " << compared << ", worst relative deviation " << worst);
  CHECK(compared > 100);
  CHECK(within == compared);
}
