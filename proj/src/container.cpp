// SPDX-License-Identifier: Apache-2.0

#include "defarray/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace defarray {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

enum class RecordKind : std::uint32_t { header = 0, spectrum = 1, pilot_bins = 2, bank = 3 };
enum class SpectrumRole : std::uint32_t { per_state = 0, ensemble = 1, noise = 2, pilot_template = 3 };

class Writer {
 public:
  template <class T>
  void put(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(T));
  }
  void put_doubles(const double* p, std::size_t n) { buf_.append(reinterpret_cast<const char*>(p), n * sizeof(double)); }
  void put_complex(const cplx* p, std::size_t n) { put_doubles(reinterpret_cast<const double*>(p), 2 * n); }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string bytes) : buf_(std::move(bytes)) {}
  template <class T>
  T get() {
    T v;
    need(sizeof(T));
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void get_doubles(double* p, std::size_t n) {
    need(n * sizeof(double));
    std::memcpy(p, buf_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }
  void get_complex(cplx* p, std::size_t n) { get_doubles(reinterpret_cast<double*>(p), 2 * n); }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw std::runtime_error("container: truncated record");
  }
  std::string buf_;
  std::size_t pos_ = 0;
};

void emit(std::ostream& os, RecordKind kind, const Writer& w) {
  const auto k = static_cast<std::uint32_t>(kind);
  const auto len = static_cast<std::uint64_t>(w.bytes().size());
  os.write(reinterpret_cast<const char*>(&k), sizeof k);
  os.write(reinterpret_cast<const char*>(&len), sizeof len);
  os.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
}

void put_spectrum(std::ostream& os, SpectrumRole role, std::uint64_t source, std::uint64_t state,
                  std::uint64_t frames, const HermitianSpectrum& spec) {
  Writer w;
  w.put(static_cast<std::uint32_t>(role));
  w.put(std::uint32_t{0});
  w.put(source);
  w.put(state);
  w.put(frames);
  w.put(static_cast<std::uint32_t>(spec.mic_count()));
  w.put(static_cast<std::uint32_t>(spec.bin_count()));
  w.put_doubles(spec.omegas().data(), spec.bin_count());
  for (std::size_t f = 0; f < spec.bin_count(); ++f) {
    w.put_complex(spec[f].data(), spec.mic_count() * spec.mic_count());
  }
  emit(os, RecordKind::spectrum, w);
}

}  // namespace

void write_container(std::ostream& os, const CovarianceSet* covs, std::span<const BeamformerBank> banks) {
  os.write(kContainerMagic, 4);
  const std::uint32_t version = kContainerVersion;
  os.write(reinterpret_cast<const char*>(&version), sizeof version);

  if (covs) {
    Writer h;
    h.put(static_cast<std::uint64_t>(covs->source_count));
    h.put(static_cast<std::uint64_t>(covs->state_count));
    emit(os, RecordKind::header, h);
    for (const auto& [key, spec] : covs->per_state) {
      put_spectrum(os, SpectrumRole::per_state, key.first, key.second, covs->frame_counts.at(key), spec);
    }
    for (std::size_t n = 0; n < covs->ensemble.size(); ++n) {
      std::uint64_t frames = 0;
      for (const auto& [key, c] : covs->frame_counts)
        if (key.first == n) frames += c;
      put_spectrum(os, SpectrumRole::ensemble, n, 0, frames, covs->ensemble[n]);
    }
    put_spectrum(os, SpectrumRole::noise, 0, 0, 0, covs->noise);
    if (covs->pilots) {
      Writer p;
      p.put(static_cast<std::uint32_t>(covs->pilots->bins.size()));
      for (std::size_t b : covs->pilots->bins) p.put(static_cast<std::uint64_t>(b));
      emit(os, RecordKind::pilot_bins, p);
      for (std::size_t s = 0; s < covs->pilots->per_state.size(); ++s) {
        put_spectrum(os, SpectrumRole::pilot_template, 0, s, 0, covs->pilots->per_state[s]);
      }
    }
  }

  for (const auto& bank : banks) {
    Writer w;
    w.put(static_cast<std::uint32_t>(bank.mode));
    w.put(static_cast<std::uint32_t>(bank.reference));
    w.put(static_cast<std::uint32_t>(bank.source_count));
    w.put(static_cast<std::uint32_t>(bank.mic_count));
    w.put(static_cast<std::uint32_t>(bank.bin_count()));
    w.put(static_cast<std::uint32_t>(bank.weights.size()));
    for (const auto& [slot, per_bin] : bank.weights) {
      w.put(static_cast<std::uint64_t>(slot));
      for (const auto& m : per_bin) w.put_complex(m.data(), bank.source_count * bank.mic_count);
    }
    emit(os, RecordKind::bank, w);
  }
  if (!os) throw std::runtime_error("container: write failed");
}

ModelFile read_container(std::istream& is) {
  char magic[4];
  std::uint32_t version = 0;
  if (!is.read(magic, 4) || std::memcmp(magic, kContainerMagic, 4) != 0) {
    throw std::runtime_error("container: bad magic (not a defarray model file)");
  }
  if (!is.read(reinterpret_cast<char*>(&version), sizeof version) || version != kContainerVersion) {
    throw std::runtime_error("container: unsupported version " + std::to_string(version));
  }

  ModelFile out;
  CovarianceSet covs;
  bool have_header = false;
  std::map<std::size_t, HermitianSpectrum> pilot_specs;
  std::vector<std::size_t> pilot_bins;

  while (true) {
    std::uint32_t kind = 0;
    std::uint64_t len = 0;
    if (!is.read(reinterpret_cast<char*>(&kind), sizeof kind)) break;
    if (!is.read(reinterpret_cast<char*>(&len), sizeof len)) throw std::runtime_error("container: truncated record header");
    std::string payload(len, '\0');
    if (!is.read(payload.data(), static_cast<std::streamsize>(len))) throw std::runtime_error("container: truncated record");
    Reader r(std::move(payload));
    switch (static_cast<RecordKind>(kind)) {
      case RecordKind::header:
        covs.source_count = r.get<std::uint64_t>();
        covs.state_count = r.get<std::uint64_t>();
        covs.ensemble.resize(covs.source_count);
        have_header = true;
        break;
      case RecordKind::spectrum: {
        const auto role = static_cast<SpectrumRole>(r.get<std::uint32_t>());
        r.get<std::uint32_t>();
        const auto source = r.get<std::uint64_t>();
        const auto state = r.get<std::uint64_t>();
        const auto frames = r.get<std::uint64_t>();
        const auto mics = r.get<std::uint32_t>();
        const auto bins = r.get<std::uint32_t>();
        std::vector<double> omegas(bins);
        r.get_doubles(omegas.data(), bins);
        std::vector<CMatrix> mats(bins, CMatrix(mics, mics));
        for (auto& m : mats) r.get_complex(m.data(), static_cast<std::size_t>(mics) * mics);
        HermitianSpectrum spec(std::move(mats), std::move(omegas));
        if (!have_header && role != SpectrumRole::pilot_template) throw std::runtime_error("container: spectrum before header");
        switch (role) {
          case SpectrumRole::per_state:
            covs.frame_counts[{source, state}] = frames;
            covs.per_state.emplace(CovarianceSet::Key{source, state}, std::move(spec));
            break;
          case SpectrumRole::ensemble:
            covs.ensemble.at(source) = std::move(spec);
            break;
          case SpectrumRole::noise:
            covs.noise = std::move(spec);
            break;
          case SpectrumRole::pilot_template:
            pilot_specs.emplace(state, std::move(spec));
            break;
          default:
            throw std::runtime_error("container: unknown spectrum role");
        }
        break;
      }
      case RecordKind::pilot_bins: {
        const auto k = r.get<std::uint32_t>();
        for (std::uint32_t i = 0; i < k; ++i) pilot_bins.push_back(r.get<std::uint64_t>());
        break;
      }
      case RecordKind::bank: {
        BeamformerBank bank;
        bank.mode = static_cast<BeamformerMode>(r.get<std::uint32_t>());
        bank.reference = r.get<std::uint32_t>();
        bank.source_count = r.get<std::uint32_t>();
        bank.mic_count = r.get<std::uint32_t>();
        const auto bins = r.get<std::uint32_t>();
        const auto slots = r.get<std::uint32_t>();
        for (std::uint32_t i = 0; i < slots; ++i) {
          const auto slot = r.get<std::uint64_t>();
          std::vector<CMatrix> per_bin(bins, CMatrix(bank.source_count, bank.mic_count));
          for (auto& m : per_bin) r.get_complex(m.data(), bank.source_count * bank.mic_count);
          bank.weights.emplace(slot, std::move(per_bin));
        }
        out.banks.push_back(std::move(bank));
        break;
      }
      default: {
        std::ostringstream os;
        os << "container: unknown record kind " << kind;
        throw std::runtime_error(os.str());
      }
    }
    if (!r.done()) throw std::runtime_error("container: record has trailing bytes");
  }

  if (have_header) {
    if (!pilot_bins.empty()) {
      PilotTemplates tpl;
      tpl.bins = pilot_bins;
      for (auto& [s, spec] : pilot_specs) tpl.per_state.push_back(std::move(spec));
      covs.pilots = std::move(tpl);
    }
    out.covariances = std::move(covs);
  }
  return out;
}

void save_container(const std::filesystem::path& path, const CovarianceSet* covs, std::span<const BeamformerBank> banks) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("container: cannot open " + path.string() + " for writing");
  write_container(os, covs, banks);
}

ModelFile load_container(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("container: cannot open " + path.string());
  return read_container(is);
}

}  // namespace defarray
