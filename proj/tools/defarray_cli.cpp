// SPDX-License-Identifier: Apache-2.0
//
// defarray: simulate, train, beamform and analyze deformable-array scenes.

#include <omp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "defarray/container.hpp"
#include "defarray/experiment.hpp"
#include "defarray/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace defarray;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::vector<std::string> modes;
  int threads = 0;
  std::vector<std::string> report_inputs;
};

class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

template <class F>
auto stage(const std::string& name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

// Tracks the config snapshot, the hashes of every input file and, for every
// output file, its own hash and the hash of the inputs that produced it.
class Manifest {
 public:
  Manifest(const fs::path& dir, const ExperimentConfig& cfg) : path_(dir / "manifest.json") {
    config_ = json::parse(cfg.to_json());
    config_hash_ = sha256_bytes(config_.dump());
    for (const auto& w : cfg.source_wavs) inputs_[w.string()] = sha256_file(w);
    if (fs::exists(path_)) {
      std::ifstream is(path_);
      json old = json::parse(is, nullptr, false);
      if (!old.is_discarded() && old.value("config_sha256", "") == config_hash_ && old.contains("outputs")) {
        outputs_ = old["outputs"];
        if (old.contains("inputs")) {
          for (auto& [k, v] : old["inputs"].items()) inputs_.emplace(k, v.get<std::string>());
        }
      }
    }
  }

  void add_input(const fs::path& p) { inputs_[p.string()] = sha256_file(p); }

  void add_output(const fs::path& p, const std::string& stage_name) {
    json in = {{"config_sha256", config_hash_}, {"inputs", inputs_}};
    outputs_[p.filename().string()] = {{"sha256", sha256_file(p)},
                                       {"inputs_hash", sha256_bytes(in.dump())},
                                       {"stage", stage_name}};
  }

  void save() const {
    json j;
    j["config"] = config_;
    j["config_sha256"] = config_hash_;
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    std::ofstream os(path_);
    if (!os) throw std::runtime_error("cannot write " + path_.string());
    os << j.dump(2) << '\n';
  }

 private:
  fs::path path_;
  json config_;
  std::string config_hash_;
  std::map<std::string, std::string> inputs_;
  json outputs_ = json::object();
};

void write_table(const fs::path& path, const CurveTable& table) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  write_csv(os, table);
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

Signal trimmed(Signal s, std::size_t samples) {
  for (auto& c : s) c.resize(std::min(c.size(), samples));
  return s;
}

struct Context {
  Options opt;
  ExperimentConfig cfg;
  fs::path out;

  std::size_t test_samples() const {
    return static_cast<std::size_t>(std::llround(cfg.test_duration_s * cfg.stft.sample_rate));
  }
};

Context make_context(const Options& opt) {
  Context ctx;
  ctx.opt = opt;
  ctx.cfg = stage("config", [&] {
    if (opt.config.empty()) throw std::invalid_argument("--config is required");
    ExperimentConfig c = load_config(opt.config);
    if (opt.seed) c.seed = *opt.seed;
    if (!opt.modes.empty()) {
      c.modes.clear();
      for (const auto& m : opt.modes) c.modes.push_back(parse_mode(m));
    }
    c.validate();
    return c;
  });
  ctx.out = opt.out;
  stage("output", [&] {
    std::error_code ec;
    fs::create_directories(ctx.out, ec);
    if (ec || !fs::is_directory(ctx.out)) throw std::runtime_error("cannot create output directory " + ctx.out.string());
    const fs::path probe = ctx.out / ".write_probe";
    std::ofstream os(probe);
    if (!os) throw std::runtime_error("output directory " + ctx.out.string() + " is not writable");
    os.close();
    fs::remove(probe);
  });
  return ctx;
}

void run_simulate(const Context& ctx, Manifest& manifest) {
  Experiment exp(ctx.cfg);
  RenderedScene scene = stage("simulate", [&] { return exp.render_test(); });
  stage("write", [&] {
    const double fs_hz = ctx.cfg.stft.sample_rate;
    const fs::path mix = ctx.out / "mixture.wav";
    write_wav(mix, trimmed(exp.stft().synthesize(scene.mixture), ctx.test_samples()), fs_hz);
    manifest.add_output(mix, "simulate");
    for (std::size_t n = 0; n < scene.images.size(); ++n) {
      const fs::path p = ctx.out / ("image_" + std::to_string(n) + ".wav");
      write_wav(p, trimmed(exp.stft().synthesize(scene.images[n]), ctx.test_samples()), fs_hz);
      manifest.add_output(p, "simulate");
    }
    const fs::path states = ctx.out / "states.csv";
    {
      std::ofstream os(states);
      os << "frame,state\n";
      for (std::size_t t = 0; t < scene.truth_states.labels.size(); ++t) {
        os << t << ',' << scene.truth_states.labels[t] << '\n';
      }
      if (!os) throw std::runtime_error("write failed for " + states.string());
    }
    manifest.add_output(states, "simulate");
  });
}

CovarianceSet run_train(const Context& ctx, Manifest& manifest) {
  Experiment exp(ctx.cfg);
  CovarianceSet covs = stage("train", [&] {
    CovarianceSet c = exp.train();
    c.validate();
    return c;
  });
  stage("write", [&] {
    const fs::path p = ctx.out / "covariances.dacv";
    save_container(p, &covs, {});
    manifest.add_output(p, "train");
  });
  return covs;
}

CovarianceSet obtain_covariances(const Context& ctx, Manifest& manifest) {
  const fs::path p = ctx.out / "covariances.dacv";
  if (fs::exists(p)) {
    return stage("load", [&] {
      ModelFile m = load_container(p);
      if (!m.covariances) throw std::runtime_error(p.string() + " holds no covariances");
      if (m.covariances->source_count != ctx.cfg.source_count()) {
        throw std::runtime_error(p.string() + " was trained for a different source count");
      }
      manifest.add_input(p);
      return std::move(*m.covariances);
    });
  }
  return run_train(ctx, manifest);
}

void run_beamform(const Context& ctx, Manifest& manifest) {
  Experiment exp(ctx.cfg);
  CovarianceSet covs = obtain_covariances(ctx, manifest);
  RenderedScene scene = stage("simulate", [&] { return exp.render_test(); });
  std::vector<BeamformerBank> banks;
  for (BeamformerMode mode : ctx.cfg.modes) {
    const std::string name = mode_name(mode);
    ModeRun run = stage("beamform[" + name + "]", [&] { return exp.run_mode(covs, scene, mode); });
    stage("write", [&] {
      const fs::path csv = ctx.out / ("gain_" + name + ".csv");
      write_table(csv, gain_table(run.report));
      manifest.add_output(csv, "beamform");
      if (ctx.cfg.write_output_wavs) {
        const fs::path wav = ctx.out / ("output_" + name + ".wav");
        write_wav(wav, trimmed(exp.stft().synthesize(run.outputs), ctx.test_samples()), ctx.cfg.stft.sample_rate);
        manifest.add_output(wav, "beamform");
      }
    });
    const BandMean all = run.report.band_mean(0.0, 1e300);
    std::fprintf(stderr, "beamform[%s]: mean gain %.3f dB over %zu bins (%zu flagged)", name.c_str(), all.mean_db,
                 all.bins_used, all.bins_flagged);
    if (run.state_agreement) std::fprintf(stderr, ", state agreement %.3f", *run.state_agreement);
    std::fprintf(stderr, "\n");
    banks.push_back(std::move(run.bank));
  }
  stage("write", [&] {
    const fs::path model = ctx.out / "model.dacv";
    save_container(model, &covs, banks);
    manifest.add_output(model, "beamform");
  });
}

void run_analyze(const Context& ctx, Manifest& manifest) {
  Experiment exp(ctx.cfg);
  CovarianceSet covs = obtain_covariances(ctx, manifest);
  DivergenceAnalysis a = stage("analyze", [&] { return exp.analyze(covs); });
  stage("write", [&] {
    const fs::path ens = ctx.out / "divergence_ensemble.csv";
    write_table(ens, a.ensemble);
    manifest.add_output(ens, "analyze");
    if (a.states) {
      const fs::path st = ctx.out / "divergence_states.csv";
      write_table(st, *a.states);
      manifest.add_output(st, "analyze");
    }
  });
}

void run_theory(const Context& ctx, Manifest& manifest) {
  Experiment exp(ctx.cfg);
  CurveTable t = stage("theory", [&] { return exp.theory(); });
  stage("write", [&] {
    const fs::path p = ctx.out / "theory.csv";
    write_table(p, t);
    manifest.add_output(p, "theory");
  });
}

void run_report(const Context& ctx, Manifest& manifest) {
  std::vector<fs::path> inputs;
  for (const auto& s : ctx.opt.report_inputs) inputs.emplace_back(s);
  if (inputs.empty()) {
    std::set<fs::path> found;
    for (const auto& e : fs::directory_iterator(ctx.out)) {
      if (e.path().extension() == ".csv" && e.path().filename() != "report.csv" && e.path().filename() != "states.csv") {
        found.insert(e.path());
      }
    }
    inputs.assign(found.begin(), found.end());
  }
  if (inputs.empty()) throw StageError("report", "no CSV files to merge in " + ctx.out.string());
  CurveTable merged = stage("report", [&] {
    CurveTable out;
    for (const auto& p : inputs) {
      std::ifstream is(p);
      if (!is) throw std::runtime_error("cannot open " + p.string());
      CurveTable t = read_csv(is);
      if (out.frequency_hz.empty()) {
        out.frequency_hz = t.frequency_hz;
      } else if (t.frequency_hz != out.frequency_hz) {
        // Align on the frequency axis: keep rows present in both.
        std::map<double, std::size_t> row;
        for (std::size_t i = 0; i < t.frequency_hz.size(); ++i) row[t.frequency_hz[i]] = i;
        std::vector<std::vector<double>> cols(t.columns.size());
        for (double f : out.frequency_hz) {
          const auto it = row.find(f);
          for (std::size_t c = 0; c < cols.size(); ++c) {
            cols[c].push_back(it == row.end() ? std::nan("") : t.columns[c][it->second]);
          }
        }
        t.columns = std::move(cols);
      }
      for (std::size_t c = 0; c < t.names.size(); ++c) {
        out.add(p.stem().string() + "." + t.names[c], t.columns[c]);
      }
      manifest.add_input(p);
    }
    return out;
  });
  stage("write", [&] {
    const fs::path p = ctx.out / "report.csv";
    write_table(p, merged);
    manifest.add_output(p, "report");
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deformable microphone array simulation, MWF beamforming and divergence analysis", "defarray"};
  app.require_subcommand(1, 0);
  app.fallthrough();

  Options opt;
  std::uint64_t seed = 0;
  app.add_option("--config", opt.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Override the config seed");
  app.add_option("--out", opt.out, "Output directory")->capture_default_str();
  app.add_option("--mode", opt.modes, "Beamformer mode(s): static, dynamic, rank1")
      ->check(CLI::IsMember({"static", "dynamic", "rank1"}));
  app.add_option("--threads", opt.threads, "OpenMP thread count (0 = runtime default)")->check(CLI::NonNegativeNumber);

  auto* simulate = app.add_subcommand("simulate", "Render the test scene: mixture, images, state track");
  auto* train = app.add_subcommand("train", "Estimate per-state, ensemble and noise covariances");
  auto* beamform = app.add_subcommand("beamform", "Build and apply beamformer banks, write gain curves");
  auto* analyze = app.add_subcommand("analyze", "Divergence-vs-frequency curves from trained covariances");
  auto* theory = app.add_subcommand("theory", "Closed-form divergence curves for the configured jitter levels");
  auto* report = app.add_subcommand("report", "Merge CSV curves on their frequency axis");
  report->add_option("inputs", opt.report_inputs, "CSV files (default: every CSV in --out)");
  auto* pipeline = app.add_subcommand("pipeline", "simulate, train, beamform, analyze, theory and report");

  CLI11_PARSE(app, argc, argv);
  if (seed_opt->count() > 0) opt.seed = seed;
  if (opt.threads > 0) omp_set_num_threads(opt.threads);

  try {
    Context ctx = make_context(opt);
    Manifest manifest = stage("manifest", [&] { return Manifest(ctx.out, ctx.cfg); });
    if (simulate->parsed()) run_simulate(ctx, manifest);
    if (train->parsed()) run_train(ctx, manifest);
    if (beamform->parsed()) run_beamform(ctx, manifest);
    if (analyze->parsed()) run_analyze(ctx, manifest);
    if (theory->parsed()) run_theory(ctx, manifest);
    if (report->parsed()) run_report(ctx, manifest);
    if (pipeline->parsed()) {
      run_simulate(ctx, manifest);
      run_train(ctx, manifest);
      run_beamform(ctx, manifest);
      run_analyze(ctx, manifest);
      run_theory(ctx, manifest);
      run_report(ctx, manifest);
    }
    stage("manifest", [&] { manifest.save(); });
  } catch (const StageError& e) {
    std::cerr << "defarray: error [" << e.stage() << "]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "defarray: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
