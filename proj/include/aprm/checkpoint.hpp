#pragma once

#include "aprm/config.hpp"
#include "aprm/ensemble.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace aprm {

// Binary checkpoint, little-endian throughout:
//
//   offset  size  field
//   0       4     magic "APRM"
//   4       1     version (1)
//   5       4     n_heads    (u32)
//   9       4     feature_dim (u32)
//   13      4     trunk_dim  (u32)
//   17      8     step_count (u64)
//   25      ...   f64 blocks: trunk_w, trunk_b, head_w, head_b, init_head_w, init_head_b
//
// Block sizes follow from the header (see ParameterSet). Trailing bytes are rejected.
inline constexpr std::uint8_t kCheckpointVersion = 1;

std::string encode_checkpoint(const EnsembleModel& model);
EnsembleModel decode_checkpoint(const std::string& bytes);

void save_checkpoint(const EnsembleModel& model, const std::filesystem::path& path);
// With `expect`, the header must agree with its n_heads / feature_dim / trunk_dim.
EnsembleModel load_checkpoint(const std::filesystem::path& path, const std::optional<Config>& expect = std::nullopt);

} // namespace aprm
