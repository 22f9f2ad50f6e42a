// SPDX-License-Identifier: Apache-2.0
//
// Minimal RIFF/WAVE reader and writer: 16-bit PCM and 32-bit float, any
// channel count.

#pragma once

#include <filesystem>

#include "defarray/stft.hpp"

namespace defarray {

struct WavData {
  double sample_rate = 0.0;
  Signal channels;
};

WavData read_wav(const std::filesystem::path& path);

/// Writes 32-bit float PCM.
void write_wav(const std::filesystem::path& path, const Signal& channels, double sample_rate);

}  // namespace defarray
