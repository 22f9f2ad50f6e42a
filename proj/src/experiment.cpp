// SPDX-License-Identifier: Apache-2.0

#include "defarray/experiment.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "defarray/random.hpp"
#include "defarray/wav.hpp"

namespace defarray {

using nlohmann::json;

namespace {

// Stream ids for derive_seed.
constexpr std::uint64_t kTrainSignal = 1000;
constexpr std::uint64_t kTrainMotion = 2000;
constexpr std::uint64_t kTrainNoise = 3000;
constexpr std::uint64_t kTrainNoiseOnly = 3999;
constexpr std::uint64_t kTestSignal = 4000;
constexpr std::uint64_t kTestMotion = 5000;
constexpr std::uint64_t kTestNoise = 6000;

std::string motion_kind_name(MotionKind k) {
  switch (k) {
    case MotionKind::static_array: return "static";
    case MotionKind::gaussian_jitter: return "gaussian_jitter";
    case MotionKind::rotation_sweep: return "rotation_sweep";
  }
  return "unknown";
}

MotionKind parse_motion_kind(const std::string& s) {
  if (s == "static") return MotionKind::static_array;
  if (s == "gaussian_jitter") return MotionKind::gaussian_jitter;
  if (s == "rotation_sweep") return MotionKind::rotation_sweep;
  throw std::invalid_argument("config: unknown motion kind '" + s + "'");
}

std::vector<Point> read_geometry_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("config: cannot open geometry file " + path.string());
  std::vector<Point> pts;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    Point p;
    if (!(ss >> p.x >> p.y)) throw std::invalid_argument("config: bad geometry line '" + line + "'");
    pts.push_back(p);
  }
  return pts;
}

void normalize_unit_variance(std::vector<double>& x) {
  double p = 0.0;
  for (double v : x) p += v * v;
  p /= static_cast<double>(std::max<std::size_t>(x.size(), 1));
  if (p > 0.0) {
    const double s = 1.0 / std::sqrt(p);
    for (auto& v : x) v *= s;
  }
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 0x51ed270b27f1c3a5ULL));
}

std::size_t ExperimentConfig::central_source() const {
  std::vector<std::size_t> idx(azimuths_deg.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return azimuths_deg[a] < azimuths_deg[b]; });
  return idx.empty() ? 0 : idx[idx.size() / 2];
}

void ExperimentConfig::validate() const {
  geometry.validate();
  motion.validate();
  if (azimuths_deg.empty()) throw std::invalid_argument("config: at least one source azimuth is required");
  if (!source_wavs.empty() && source_wavs.size() != azimuths_deg.size()) {
    throw std::invalid_argument("config: need one WAV per source azimuth");
  }
  for (const auto& p : source_wavs) {
    if (!std::filesystem::exists(p)) throw std::invalid_argument("config: source WAV not found: " + p.string());
  }
  if (!(training_duration_s > 0.0)) throw std::invalid_argument("config: training_duration_s must be > 0");
  if (!(test_duration_s > 0.0)) throw std::invalid_argument("config: test_duration_s must be > 0");
  if (!(regularization > 0.0)) throw std::invalid_argument("config: regularization must be > 0");
  if (modes.empty()) throw std::invalid_argument("config: no beamformer modes requested");
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  ExperimentConfig c;
  try {
    if (!j.contains("seed")) throw std::invalid_argument("config: 'seed' is mandatory");
    c.seed = j.at("seed").get<std::uint64_t>();
    c.scene_id = j.value("scene_id", c.scene_id);
    c.stft.sample_rate = j.value("sample_rate", c.stft.sample_rate);
    if (j.contains("stft")) {
      const auto& s = j["stft"];
      c.stft.fft_size = s.value("fft_size", c.stft.fft_size);
      c.stft.hop = s.value("hop", c.stft.hop);
      c.stft.window = parse_window(s.value("window", window_name(c.stft.window)));
    }

    const json arr = j.value("array", json::object());
    const std::string layout = arr.value("layout", "linear");
    const std::size_t reference = arr.value("reference", std::size_t{0});
    if (layout == "linear") {
      c.geometry = ArrayGeometry::uniform_linear(arr.value("count", std::size_t{12}), arr.value("spacing", 0.05), reference);
    } else if (layout == "arc") {
      c.geometry = ArrayGeometry::arc(arr.value("count", std::size_t{12}), arr.value("radius", 0.3),
                                      arr.value("span_deg", 180.0), reference);
    } else if (layout == "file") {
      c.geometry.nominal = read_geometry_file(base_dir / arr.at("path").get<std::string>());
      c.geometry.reference = reference;
    } else if (layout == "positions") {
      for (const auto& p : arr.at("positions")) c.geometry.nominal.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      c.geometry.reference = reference;
    } else {
      throw std::invalid_argument("config: unknown array layout '" + layout + "'");
    }
    if (arr.contains("pivot")) c.geometry.pivot = {arr["pivot"].at(0).get<double>(), arr["pivot"].at(1).get<double>()};

    const json src = j.value("sources", json::object());
    c.azimuths_deg = src.value("azimuths_deg", std::vector<double>{-90.0, -45.0, 0.0, 45.0, 90.0});
    if (src.contains("wavs")) {
      for (const auto& w : src["wavs"]) c.source_wavs.push_back(base_dir / w.get<std::string>());
    }
    const std::string synth = src.value("synthetic", "speech_like");
    if (synth == "speech_like") c.synthetic = SyntheticSource::speech_like;
    else if (synth == "white") c.synthetic = SyntheticSource::white;
    else throw std::invalid_argument("config: unknown synthetic source '" + synth + "'");

    if (j.contains("noise_level_db")) {
      if (j["noise_level_db"].is_null()) c.noise_level_db.reset();
      else c.noise_level_db = j["noise_level_db"].get<double>();
    }

    const json mot = j.value("motion", json::object());
    c.motion.kind = parse_motion_kind(mot.value("kind", "static"));
    c.motion.sigma_pos = mot.value("sigma_pos_m", 0.0);
    c.motion.jitter_reference = mot.value("jitter_reference", false);
    c.motion.min_deg = mot.value("min_deg", 0.0);
    c.motion.max_deg = mot.value("max_deg", 0.0);
    c.motion.period_s = mot.value("period_s", 20.0);
    c.motion.state_count = mot.value("states", std::size_t{1});

    if (j.contains("pilot") && !j["pilot"].is_null()) {
      PilotConfig p;
      p.frequency_hz = j["pilot"].value("frequency_hz", p.frequency_hz);
      p.level_db = j["pilot"].value("level_db", p.level_db);
      p.spacing_hz = j["pilot"].value("spacing_hz", p.spacing_hz);
      c.pilot = p;
    }
    c.speed_of_sound = j.value("speed_of_sound", c.speed_of_sound);
    c.training_duration_s = j.value("training_duration_s", c.training_duration_s);
    c.test_duration_s = j.value("test_duration_s", c.test_duration_s);
    if (j.contains("modes")) {
      c.modes.clear();
      for (const auto& m : j["modes"]) c.modes.push_back(parse_mode(m.get<std::string>()));
    }
    const std::string ss = j.value("state_source", c.pilot ? "pilot" : "oracle");
    if (ss == "pilot") c.state_source = StateSource::pilot;
    else if (ss == "oracle") c.state_source = StateSource::oracle;
    else throw std::invalid_argument("config: unknown state_source '" + ss + "'");
    c.regularization = j.value("regularization", c.regularization);
    if (j.contains("theory")) c.theory_sigma_pos_m = j["theory"].value("sigma_pos_m", c.theory_sigma_pos_m);
    c.write_output_wavs = j.value("write_output_wavs", c.write_output_wavs);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  return c;
}

std::string ExperimentConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["scene_id"] = scene_id;
  j["sample_rate"] = stft.sample_rate;
  j["stft"] = {{"fft_size", stft.fft_size}, {"hop", stft.hop}, {"window", window_name(stft.window)}};
  json pos = json::array();
  for (const auto& p : geometry.nominal) pos.push_back({p.x, p.y});
  j["array"] = {{"layout", "positions"},
                {"positions", pos},
                {"reference", geometry.reference},
                {"pivot", {geometry.pivot.x, geometry.pivot.y}}};
  json wavs = json::array();
  for (const auto& w : source_wavs) wavs.push_back(w.string());
  j["sources"] = {{"azimuths_deg", azimuths_deg},
                  {"wavs", wavs},
                  {"synthetic", synthetic == SyntheticSource::white ? "white" : "speech_like"}};
  j["noise_level_db"] = noise_level_db ? json(*noise_level_db) : json(nullptr);
  j["motion"] = {{"kind", motion_kind_name(motion.kind)}, {"sigma_pos_m", motion.sigma_pos},
                 {"jitter_reference", motion.jitter_reference}, {"min_deg", motion.min_deg},
                 {"max_deg", motion.max_deg}, {"period_s", motion.period_s}, {"states", motion.state_count}};
  j["pilot"] = pilot ? json{{"frequency_hz", pilot->frequency_hz}, {"level_db", pilot->level_db},
                            {"spacing_hz", pilot->spacing_hz}}
                     : json(nullptr);
  j["speed_of_sound"] = speed_of_sound;
  j["training_duration_s"] = training_duration_s;
  j["test_duration_s"] = test_duration_s;
  json ms = json::array();
  for (auto m : modes) ms.push_back(mode_name(m));
  j["modes"] = ms;
  j["state_source"] = state_source == StateSource::pilot ? "pilot" : "oracle";
  j["regularization"] = regularization;
  j["theory"] = {{"sigma_pos_m", theory_sigma_pos_m}};
  j["write_output_wavs"] = write_output_wavs;
  return j.dump(2);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("config: cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ExperimentConfig::from_json(ss.str(), path.parent_path());
}

Experiment::Experiment(ExperimentConfig cfg) : cfg_(std::move(cfg)), stft_(cfg_.stft) { cfg_.validate(); }

std::vector<std::vector<double>> Experiment::test_signals() const {
  const auto samples = static_cast<std::size_t>(std::llround(cfg_.test_duration_s * cfg_.stft.sample_rate));
  std::vector<std::vector<double>> out;
  for (std::size_t n = 0; n < cfg_.source_count(); ++n) {
    std::vector<double> x;
    if (!cfg_.source_wavs.empty()) {
      WavData w = read_wav(cfg_.source_wavs[n]);
      if (w.sample_rate != cfg_.stft.sample_rate) {
        std::ostringstream os;
        os << "source WAV " << cfg_.source_wavs[n].string() << " has sample rate " << w.sample_rate
           << " Hz, expected " << cfg_.stft.sample_rate << " Hz (no resampling is performed)";
        throw std::invalid_argument(os.str());
      }
      x = std::move(w.channels.front());
      if (x.size() < samples) {
        std::ostringstream os;
        os << "source WAV " << cfg_.source_wavs[n].string() << " is shorter than the test duration";
        throw std::invalid_argument(os.str());
      }
      x.resize(samples);
    } else if (cfg_.synthetic == SyntheticSource::white) {
      x = white_noise(samples, derive_seed(cfg_.seed, kTestSignal + n));
    } else {
      x = speech_like(samples, cfg_.stft.sample_rate, derive_seed(cfg_.seed, kTestSignal + n));
    }
    normalize_unit_variance(x);
    out.push_back(std::move(x));
  }
  return out;
}

SceneSpec Experiment::scene_spec(std::vector<std::vector<double>> signals, std::uint64_t motion_seed) const {
  SceneSpec s;
  s.geometry = cfg_.geometry;
  s.noise_level_db = cfg_.noise_level_db;
  s.motion = cfg_.motion;
  s.motion.seed = motion_seed;
  s.pilot = cfg_.pilot;
  s.speed_of_sound = cfg_.speed_of_sound;
  for (std::size_t n = 0; n < signals.size(); ++n) {
    s.sources.push_back({cfg_.azimuths_deg.at(n), std::move(signals[n]), n});
  }
  return s;
}

RenderedScene Experiment::render_test() const {
  return render(scene_spec(test_signals(), derive_seed(cfg_.seed, kTestMotion)), stft_, cfg_.test_duration_s,
                derive_seed(cfg_.seed, kTestNoise));
}

CovarianceSet Experiment::train() const {
  const auto samples = static_cast<std::size_t>(std::llround(cfg_.training_duration_s * cfg_.stft.sample_rate));
  const std::size_t n_src = cfg_.source_count();
  std::vector<SpectralFrameTensor> captures;
  std::vector<StateSequence> states;
  captures.reserve(n_src);
  states.reserve(n_src);
  for (std::size_t n = 0; n < n_src; ++n) {
    SceneSpec spec = scene_spec({}, derive_seed(cfg_.seed, kTrainMotion + n));
    spec.sources.push_back({cfg_.azimuths_deg[n], white_noise(samples, derive_seed(cfg_.seed, kTrainSignal + n)), n});
    RenderedScene r = render(spec, stft_, cfg_.training_duration_s, derive_seed(cfg_.seed, kTrainNoise + n));
    captures.push_back(std::move(r.mixture));
    states.push_back(std::move(r.truth_states));
  }
  SceneSpec quiet = scene_spec({}, derive_seed(cfg_.seed, kTrainMotion + n_src));
  quiet.pilot.reset();
  RenderedScene noise = render(quiet, stft_, cfg_.training_duration_s, derive_seed(cfg_.seed, kTrainNoiseOnly));

  std::vector<TrainingCapture> tc;
  for (std::size_t n = 0; n < n_src; ++n) tc.push_back({n, &captures[n], &states[n]});
  std::optional<std::vector<std::size_t>> bins;
  if (cfg_.pilot) bins = pilot_bins(*cfg_.pilot, n_src, cfg_.stft);
  return defarray::train(tc, noise.mixture, bins);
}

ModeRun Experiment::run_mode(const CovarianceSet& covs, const RenderedScene& scene, BeamformerMode mode) const {
  ModeRun run;
  run.bank = build(covs, mode, cfg_.geometry.reference, cfg_.regularization);
  if (mode == BeamformerMode::dynamic) {
    if (scene.truth_states.iid) {
      throw std::invalid_argument("dynamic beamforming needs a finite state set; gaussian_jitter redraws the array every frame");
    }
    run.states = resolve_states(cfg_.state_source, scene.mixture, covs.pilots, scene.truth_states);
    std::size_t agree = 0;
    for (std::size_t t = 0; t < run.states.labels.size(); ++t) agree += run.states.labels[t] == scene.truth_states.labels[t];
    run.state_agreement = static_cast<double>(agree) / static_cast<double>(std::max<std::size_t>(run.states.labels.size(), 1));
  } else {
    run.states = scene.truth_states;
  }
  run.outputs = apply(run.bank, scene.mixture, &run.states);
  run.report = gain(run.outputs, scene.mixture.channel(cfg_.geometry.reference), scene.desired);
  run.report.scene_id = cfg_.scene_id;
  run.report.mode = mode_name(mode);
  return run;
}

DivergenceAnalysis Experiment::analyze(const CovarianceSet& covs) const {
  DivergenceAnalysis out;
  const std::size_t central = cfg_.central_source();
  const auto pairs = outer_vs_central(covs.source_count, central);
  out.ensemble = divergence_curve(covs, pairs, cfg_.regularization);
  std::vector<std::string> names;
  for (const auto& p : pairs) names.push_back(p.label());
  const auto ensemble_mean = mean_of_columns(out.ensemble, names);
  out.ensemble.add("mean_outer_vs_central", ensemble_mean);

  if (covs.state_count > 1 && covs.starved().empty()) {
    CurveTable st;
    st.frequency_hz = out.ensemble.frequency_hz;
    std::vector<double> within_mean(st.frequency_hz.size(), 0.0);
    for (std::size_t s = 0; s < covs.state_count; ++s) {
      const auto sp = outer_vs_central(covs.source_count, central, s);
      const CurveTable t = divergence_curve(covs, sp, cfg_.regularization);
      std::vector<std::string> sn;
      for (const auto& p : sp) sn.push_back(p.label());
      auto m = mean_of_columns(t, sn);
      for (std::size_t f = 0; f < m.size(); ++f) within_mean[f] += m[f] / static_cast<double>(covs.state_count);
      st.add("within_state_st" + std::to_string(s), std::move(m));
    }
    st.add("within_state_mean", std::move(within_mean));
    const std::vector<DivergencePair> between{{{central, 0}, {central, covs.state_count - 1}}};
    const CurveTable b = divergence_curve(covs, between, cfg_.regularization);
    st.add("between_states_extreme", b.columns.front());
    st.add("ensemble_mean_outer_vs_central", ensemble_mean);
    out.states = std::move(st);
  }
  return out;
}

CurveTable Experiment::theory() const {
  const std::size_t central = cfg_.central_source();
  std::vector<std::pair<double, double>> az;
  for (std::size_t n = 0; n < cfg_.source_count(); ++n) {
    if (n != central) az.emplace_back(cfg_.azimuths_deg[n], cfg_.azimuths_deg[central]);
  }
  if (az.empty()) throw std::invalid_argument("theory: need at least two sources");
  std::vector<double> sigmas;
  for (double s : cfg_.theory_sigma_pos_m) sigmas.push_back(s / cfg_.speed_of_sound);
  std::vector<double> hz;
  const double bin_hz = cfg_.stft.sample_rate / static_cast<double>(cfg_.stft.fft_size);
  for (std::size_t f = 1; f < cfg_.stft.bin_count(); ++f) hz.push_back(static_cast<double>(f) * bin_hz);
  return theory_curve(cfg_.geometry.nominal, az, sigmas, hz, cfg_.speed_of_sound);
}

std::string sha256_bytes(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256: digest failed");
  }
  std::ostringstream os;
  os << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < len; ++i) os << std::setw(2) << static_cast<int>(digest[i]);
  return os.str();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("sha256: cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return sha256_bytes(ss.str());
}

}  // namespace defarray
