#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tsam/ad/adam.hpp"
#include "tsam/model/param_store.hpp"

namespace tsam::train {

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string config_text;  // canonical RunConfig text
  std::uint64_t config_hash = 0;
  std::uint64_t epoch = 0;
  model::ParamStore<float> params;
  ad::AdamState adam;
};

/// TSCK layout (little-endian): "TSCK", u16 version, u16 reserved, u64
/// config hash, u64 epoch, config text (u32 length + bytes), u32 tensor
/// count, then per tensor its name (u32 length + bytes), u8 rank, rank u64
/// dims and the f32 values; then the Adam state: u64 step, f64 lr, beta1,
/// beta2, eps, u32 buffer count and per buffer u64 length plus m and v as
/// f32.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, std::string_view source = "<memory>");

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// True when the file starts with the TSCK magic.
bool is_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace tsam::train
