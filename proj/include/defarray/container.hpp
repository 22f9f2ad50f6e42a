// SPDX-License-Identifier: Apache-2.0
//
// Versioned binary container for trained covariance sets and beamformer
// banks. Layout is documented in docs/container.md.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "defarray/beamform.hpp"
#include "defarray/covest.hpp"

namespace defarray {

inline constexpr char kContainerMagic[4] = {'D', 'A', 'F', 'C'};
inline constexpr std::uint32_t kContainerVersion = 1;

struct ModelFile {
  std::optional<CovarianceSet> covariances;
  std::vector<BeamformerBank> banks;
};

void write_container(std::ostream& os, const CovarianceSet* covs, std::span<const BeamformerBank> banks);
ModelFile read_container(std::istream& is);

void save_container(const std::filesystem::path& path, const CovarianceSet* covs,
                    std::span<const BeamformerBank> banks);
ModelFile load_container(const std::filesystem::path& path);

}  // namespace defarray
