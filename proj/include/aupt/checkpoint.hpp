#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aupt/adam.hpp"
#include "aupt/network.hpp"

// Checkpoint layout (all integers little-endian):
//
//   "AUPT" | u32 version
//   u32 n_meta   { u32 key_len | key | u32 value_len | value }      sorted by key
//   u32 n_tensor { u32 name_len | name | u32 rank | u32 dims[rank] | f32 data[] }
//   u8  has_optimizer
//     [i64 step | f64 lr | f64 beta1 | f64 beta2 | f64 eps | per tensor: f32 m[] f32 v[]]
//
// Network geometry (in_channels, num_outputs, width_divisor) lives in the
// metadata block so a checkpoint is self-describing.

namespace aupt {

inline constexpr char kCheckpointMagic[4] = {'A', 'U', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMetadata {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::int64_t epoch = 0;
  std::map<std::string, std::string> extra;
};

template <typename Scalar>
struct LoadedCheckpoint {
  Network<Scalar> network;
  CheckpointMetadata metadata;
  std::optional<AdamState<Scalar>> optimizer;
};

/// Byte range of one tensor record, for audits and diffs.
struct CheckpointEntry {
  std::string name;
  Shape dims;
  std::uint64_t offset = 0;  // first byte of the record (name length field)
  std::uint64_t length = 0;  // whole record, payload included
};

template <typename Scalar>
void save_checkpoint(const Network<Scalar>& net, const std::filesystem::path& path,
                     const CheckpointMetadata& metadata = {}, const AdamState<Scalar>* optimizer = nullptr);

/// Throws FormatError (with byte offset) on bad magic, unknown version,
/// truncation, trailing bytes, or tensors inconsistent with the declared
/// geometry. Never returns a partially populated network.
template <typename Scalar>
LoadedCheckpoint<Scalar> load_checkpoint(const std::filesystem::path& path);

std::vector<CheckpointEntry> inspect_checkpoint(const std::filesystem::path& path);

}  // namespace aupt
