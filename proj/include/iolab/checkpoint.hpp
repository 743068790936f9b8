#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>

#include "iolab/model.hpp"

namespace iolab {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 2;

struct Checkpoint {
  ModelConfig config;
  Parameters<float> params;
};

// Layout, all little-endian:
//   "IOLAB" | u32 version
//   config: u32 d_model, n_layers, n_heads, d_ffn, vocab_size, max_len | f64 dropout | u64 seed
//   u32 array count, then per array:
//     u32 name length | UTF-8 name | u32 rows | u32 cols | rows*cols f32, row-major
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const Parameters<float>& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Verifies names and shapes against the layout implied by `config`.
void check_layout(const ModelConfig& config, const Parameters<float>& params);

}  // namespace iolab
