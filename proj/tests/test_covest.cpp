// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <algorithm>

#include "defarray/covest.hpp"
#include "defarray/scene.hpp"
#include "support.hpp"

using namespace defarray;

namespace {

struct Rig {
  Stft stft{StftConfig{}};
  std::vector<RenderedScene> renders;
  RenderedScene noise;
};

Rig training_rig(const MotionModel& motion, double seconds, bool pilots, std::optional<double> noise_db = -30.0) {
  Rig rig;
  const std::vector<double> az{40.0, 90.0, 140.0};
  const auto samples = static_cast<std::size_t>(seconds * 16000.0);
  for (std::size_t n = 0; n < az.size(); ++n) {
    SceneSpec s;
    s.geometry = ArrayGeometry::uniform_linear(4, 0.05);
    s.motion = motion;
    s.noise_level_db = noise_db;
    if (pilots) s.pilot = PilotConfig{};
    s.sources.push_back({az[n], white_noise(samples, 100 + n), n});
    rig.renders.push_back(render(s, rig.stft, seconds, 200 + n));
  }
  SceneSpec quiet;
  quiet.geometry = ArrayGeometry::uniform_linear(4, 0.05);
  quiet.motion = motion;
  quiet.noise_level_db = noise_db ? noise_db : -60.0;
  rig.noise = render(quiet, rig.stft, seconds, 300);
  return rig;
}

CovarianceSet train_rig(const Rig& rig, bool pilots) {
  std::vector<TrainingCapture> tc;
  for (std::size_t n = 0; n < rig.renders.size(); ++n) tc.push_back({n, &rig.renders[n].mixture, &rig.renders[n].truth_states});
  std::optional<std::vector<std::size_t>> bins;
  if (pilots) bins = pilot_bins(PilotConfig{}, rig.renders.size(), rig.stft.config());
  return train(tc, rig.noise.mixture, bins);
}

}  // namespace

TEST_CASE("sample covariance by hand", "[covest]") {
  SpectralFrameTensor x(3, 1, 2, 16000.0, 2, 1);
  x(0, 0, 0) = {1.0, 0.0};
  x(0, 0, 1) = {0.0, 1.0};
  x(1, 0, 0) = {2.0, 0.0};
  x(1, 0, 1) = {0.0, 0.0};
  x(2, 0, 0) = {100.0, 0.0};
  const std::vector<std::size_t> subset{0, 1};
  const auto r = sample_covariance(x, subset);
  // 1/2 ( [1, -j; j, 1] + [4, 0; 0, 0] )
  CHECK(std::abs(r[0](0, 0) - cplx(2.5, 0.0)) < 1e-15);
  CHECK(std::abs(r[0](1, 0) - cplx(0.0, 0.5)) < 1e-15);
  CHECK(std::abs(r[0](0, 1) - cplx(0.0, -0.5)) < 1e-15);
  CHECK(std::abs(r[0](1, 1) - cplx(0.5, 0.0)) < 1e-15);

  CHECK_THROWS_AS(sample_covariance(x, std::vector<std::size_t>{}), NumericalError);
  CHECK_THROWS_AS(sample_covariance(x, std::vector<std::size_t>{5}), std::out_of_range);
}

TEST_CASE("static training: per-state equals ensemble", "[covest]") {
  const Rig rig = training_rig(MotionModel::still(), 2.0, false);
  const CovarianceSet covs = train_rig(rig, false);
  CHECK(covs.source_count == 3);
  CHECK(covs.state_count == 1);
  CHECK_NOTHROW(covs.validate());
  for (std::size_t n = 0; n < 3; ++n) {
    const auto& ps = covs.per_state.at({n, 0});
    for (std::size_t f = 0; f < ps.bin_count(); f += 37) {
      CHECK(testsupport::max_abs_diff(ps[f], covs.ensemble[n][f]) <= 1e-12 * ps[f].cwiseAbs().maxCoeff());
    }
  }
}

TEST_CASE("rotation training populates every state", "[covest]") {
  const Rig rig = training_rig(MotionModel::rotation(-45.0, 45.0, 20.0, 10), 20.0, false);
  const CovarianceSet covs = train_rig(rig, false);
  CHECK(covs.state_count == 10);
  CHECK(covs.starved().empty());
  CHECK(covs.per_state.size() == 30);
  CHECK_NOTHROW(covs.validate(1e-9));

  // The identity check catches a corrupted ensemble.
  CovarianceSet broken = covs;
  broken.ensemble[1][200](0, 0) *= 1.01;
  CHECK_THROWS_AS(broken.validate(1e-9), NumericalError);
}

TEST_CASE("i.i.d. jitter is pooled into one state", "[covest]") {
  const Rig rig = training_rig(MotionModel::jitter(0.005, 9), 2.0, false);
  const CovarianceSet covs = train_rig(rig, false);
  CHECK(covs.state_count == 1);
  CHECK(covs.frame_counts.at({0, 0}) == rig.renders[0].mixture.frame_count());
  CHECK_NOTHROW(covs.validate());
}

TEST_CASE("starved states are reported", "[covest]") {
  const Rig rig = training_rig(MotionModel::still(), 1.0, true);
  std::vector<StateSequence> tracks(3);
  std::vector<TrainingCapture> tc;
  for (std::size_t n = 0; n < 3; ++n) {
    tracks[n].state_count = 3;
    tracks[n].labels.assign(rig.renders[n].mixture.frame_count(), n == 2 ? 1 : 0);
    tc.push_back({n, &rig.renders[n].mixture, &tracks[n]});
  }
  const CovarianceSet covs = train(tc, rig.noise.mixture);
  const auto hungry = covs.starved();
  CHECK(hungry.size() == 6);
  CHECK(std::find(hungry.begin(), hungry.end(), CovarianceSet::Key{2, 0}) != hungry.end());
  CHECK_NOTHROW(covs.validate());

  const auto bins = pilot_bins(PilotConfig{}, 3, rig.stft.config());
  CHECK_THROWS_AS(train(tc, rig.noise.mixture, bins), NumericalError);
}

TEST_CASE("training input validation", "[covest]") {
  const Rig rig = training_rig(MotionModel::still(), 1.0, false);
  StateSequence short_track;
  short_track.labels.assign(3, 0);
  const std::vector<TrainingCapture> bad{{0, &rig.renders[0].mixture, &short_track}};
  CHECK_THROWS_AS(train(bad, rig.noise.mixture), std::invalid_argument);
  CHECK_THROWS_AS(train(std::vector<TrainingCapture>{}, rig.noise.mixture), std::invalid_argument);
}

TEST_CASE("pilot state estimation on a rotating array", "[covest]") {
  const auto motion = MotionModel::rotation(-45.0, 45.0, 20.0, 10);
  const Rig rig = training_rig(motion, 20.0, true, std::nullopt);
  const CovarianceSet covs = train_rig(rig, true);
  REQUIRE(covs.pilots);
  CHECK(covs.pilots->per_state.size() == 10);
  CHECK(covs.pilots->bins.size() == 3);

  // Test mixture: all three sources together, different signals, same motion.
  SceneSpec s;
  s.geometry = ArrayGeometry::uniform_linear(4, 0.05);
  s.motion = motion;
  s.noise_level_db.reset();
  s.pilot = PilotConfig{};
  const std::vector<double> az{40.0, 90.0, 140.0};
  for (std::size_t n = 0; n < 3; ++n) s.sources.push_back({az[n], speech_like(160000, 16000.0, 50 + n), n});
  const Stft stft{StftConfig{}};
  const RenderedScene test = render(s, stft, 10.0, 77);

  const StateSequence est = estimate_states(test.mixture, *covs.pilots);
  std::size_t agree = 0;
  for (std::size_t t = 0; t < est.labels.size(); ++t) agree += est.labels[t] == test.truth_states.labels[t];
  CHECK(static_cast<double>(agree) / static_cast<double>(est.labels.size()) >= 0.95);

  const StateSequence oracle = resolve_states(StateSource::oracle, test.mixture, covs.pilots, test.truth_states);
  CHECK(oracle.labels == test.truth_states.labels);
  CHECK_THROWS_AS(resolve_states(StateSource::pilot, test.mixture, std::nullopt, test.truth_states),
                  std::invalid_argument);
}

TEST_CASE("pilot estimation on a static array and tie-breaking", "[covest]") {
  const Rig rig = training_rig(MotionModel::still(), 4.0, true);
  const CovarianceSet covs = train_rig(rig, true);
  const StateSequence est = estimate_states(rig.renders[0].mixture, *covs.pilots);
  CHECK(est.state_count == 1);
  for (std::size_t l : est.labels) CHECK(l == 0);

  // Two identical templates: every frame resolves to the lower index.
  PilotTemplates twin = *covs.pilots;
  twin.per_state.push_back(twin.per_state.front());
  const StateSequence tie = estimate_states(rig.renders[0].mixture, twin);
  CHECK(tie.state_count == 2);
  for (std::size_t l : tie.labels) CHECK(l == 0);
}
