// SPDX-License-Identifier: Apache-2.0

#include "defarray/wav.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace defarray {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <class T>
T read_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
  throw std::runtime_error("WAV " + path.string() + ": " + what);
}

}  // namespace

WavData read_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(path, "cannot open");
  std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    fail(path, "not a RIFF/WAVE file");
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = bytes.data() + pos;
    const auto len = read_le<std::uint32_t>(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size()) fail(path, "truncated chunk");
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) fail(path, "short fmt chunk");
      format = read_le<std::uint16_t>(bytes.data() + body);
      channels = read_le<std::uint16_t>(bytes.data() + body + 2);
      rate = read_le<std::uint32_t>(bytes.data() + body + 4);
      bits = read_le<std::uint16_t>(bytes.data() + body + 14);
      if (format == kFormatExtensible) {
        if (len < 26) fail(path, "short extensible fmt chunk");
        format = read_le<std::uint16_t>(bytes.data() + body + 24);
      }
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = len;
    }
    pos = body + len + (len & 1u);
  }
  if (channels == 0 || rate == 0) fail(path, "missing fmt chunk");
  if (!data) fail(path, "missing data chunk");

  WavData out;
  out.sample_rate = static_cast<double>(rate);
  out.channels.assign(channels, {});
  if (format == kFormatPcm && bits == 16) {
    const std::size_t frames = data_len / (2u * channels);
    for (auto& c : out.channels) c.resize(frames);
    for (std::size_t i = 0; i < frames; ++i)
      for (std::size_t c = 0; c < channels; ++c)
        out.channels[c][i] = read_le<std::int16_t>(data + 2 * (i * channels + c)) / 32768.0;
  } else if (format == kFormatFloat && bits == 32) {
    const std::size_t frames = data_len / (4u * channels);
    for (auto& c : out.channels) c.resize(frames);
    for (std::size_t i = 0; i < frames; ++i)
      for (std::size_t c = 0; c < channels; ++c)
        out.channels[c][i] = read_le<float>(data + 4 * (i * channels + c));
  } else {
    fail(path, "unsupported sample format " + std::to_string(format) + " with " + std::to_string(bits) +
                   " bits (expected 16-bit PCM or 32-bit float)");
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const Signal& channels, double sample_rate) {
  if (channels.empty()) throw std::invalid_argument("write_wav: no channels");
  const std::size_t frames = channels.front().size();
  for (const auto& c : channels) {
    if (c.size() != frames) throw std::invalid_argument("write_wav: channel length mismatch");
  }
  const auto nch = static_cast<std::uint16_t>(channels.size());
  const auto rate = static_cast<std::uint32_t>(std::lround(sample_rate));
  const std::uint32_t data_len = static_cast<std::uint32_t>(frames * nch * 4u);

  std::string buf;
  auto put = [&buf](auto v) { buf.append(reinterpret_cast<const char*>(&v), sizeof v); };
  buf.append("RIFF");
  put(static_cast<std::uint32_t>(36 + data_len));
  buf.append("WAVEfmt ");
  put(std::uint32_t{16});
  put(kFormatFloat);
  put(nch);
  put(rate);
  put(static_cast<std::uint32_t>(rate * nch * 4u));
  put(static_cast<std::uint16_t>(nch * 4u));
  put(std::uint16_t{32});
  buf.append("data");
  put(data_len);
  buf.reserve(buf.size() + data_len);
  for (std::size_t i = 0; i < frames; ++i)
    for (const auto& c : channels) put(static_cast<float>(c[i]));

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_wav: cannot open " + path.string() + " for writing");
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!os) throw std::runtime_error("write_wav: write failed for " + path.string());
}

}  // namespace defarray
