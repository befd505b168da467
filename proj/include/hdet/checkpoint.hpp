#pragma once

// Binary model container:
//
//   "HYDM"  u16 version  u32 len + JSON {"detector": ..., "hybrid": ... | null}
//   u32 tensor count, then per tensor:
//     u32 name len, name bytes, u32 rank, rank x u64 dims, f64 payload
//
// All integers and reals are little-endian. Tensors are the parameters
// followed by "<layer>.bn.running_mean" / "<layer>.bn.running_var" buffers,
// each group in name order.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "hdet/detector.hpp"

namespace hdet {

inline constexpr std::uint16_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> encode_checkpoint(const Model& model);
Model decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace hdet
