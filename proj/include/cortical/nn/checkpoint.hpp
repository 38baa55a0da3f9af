#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cortical/nn/model.hpp"

namespace cortical::nn {

inline constexpr std::uint8_t kCheckpointVersion = 1;

/// Serialises architecture and parameters:
///   "CKPT" | u8 version | u16 layer count |
///   per layer: u8 kind | u8 ndims | u32 dims[ndims] | u8 ntensors | (u32 count | f32[count])* |
///   u32 CRC32 of all preceding bytes.
/// dims are input h,w,c, output h,w,c and the kind-specific hyper-parameters.
/// All integers and floats little-endian.
std::vector<std::uint8_t> encode_checkpoint(Sequential<float>& model);

/// Rebuilds the model. FormatError (with byte offset) on truncation, bad
/// magic, CRC mismatch or inconsistent shapes; UnsupportedVersion on version != 1.
Sequential<float> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(Sequential<float>& model, const std::filesystem::path& path);
Sequential<float> load_checkpoint(const std::filesystem::path& path);

/// True when every batch-norm layer still carries its initial running
/// statistics (mean 0, variance 1), i.e. the model never saw a training step.
bool is_untrained(Sequential<float>& model);

}  // namespace cortical::nn
