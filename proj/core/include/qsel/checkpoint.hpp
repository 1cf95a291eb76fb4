#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "qsel/matrix.hpp"
#include "qsel/model.hpp"

namespace qsel {

// Binary layout, all integers and reals little-endian:
//   magic "QSELCKPT" (8 bytes) | u32 version
//   u32 echo length | echo bytes (key = value text of the run configuration)
//   u32 tensor count
//   per tensor: u32 name length | name | u64 rows | u64 cols | rows*cols f64
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointFile {
  std::uint32_t version = kCheckpointVersion;
  std::string config_echo;
  std::vector<std::pair<std::string, Matrix>> tensors;
};

void write_checkpoint(const std::filesystem::path& path, const CheckpointFile& file);
CheckpointFile read_checkpoint(const std::filesystem::path& path);

std::string encode_checkpoint(const CheckpointFile& file);
CheckpointFile decode_checkpoint(const std::string& bytes);

CheckpointFile to_checkpoint(const ModelWeights<Matrix>& weights, std::string config_echo);

/// Copies tensors into weights, which must already have the matching layout.
/// Throws DataError on any name, order or shape mismatch.
void restore(ModelWeights<Matrix>& weights, const CheckpointFile& file);

}  // namespace qsel
