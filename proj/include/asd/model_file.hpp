#pragma once

// Versioned binary model file:
//   "ASDMODEL" | u32 version | u32 layer count | per layer {u32 in, u32 out,
//   u8 bn, u8 activation} | metadata | parameters, BN running stats and Adam
//   moments as little-endian float64 | optional covariances | thresholds |
//   u32 CRC-32 of everything before it.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "asd/model.hpp"
#include "asd/scoring.hpp"

namespace asd::model {

inline constexpr std::uint32_t kModelFormatVersion = 1;

struct BackendThreshold {
  scoring::Backend backend = scoring::Backend::Mse;
  scoring::Threshold threshold;
};

struct ModelFile {
  std::string machine_type;
  int section = 0;
  std::string config_digest;
  AutoencoderState state;
  std::optional<scoring::DomainCovariances> covariances;
  std::vector<BackendThreshold> thresholds;

  const scoring::Threshold* threshold_for(scoring::Backend backend) const;
  bool operator==(const ModelFile& other) const;
};

std::vector<char> serialize(const ModelFile& file);
ModelFile deserialize(const std::vector<char>& bytes);  // throws CorruptFile / VersionMismatch

void save_model(const ModelFile& file, const std::filesystem::path& path);
ModelFile load_model(const std::filesystem::path& path);

}  // namespace asd::model
