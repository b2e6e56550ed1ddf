#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "sisn/adam.hpp"
#include "sisn/model.hpp"
#include "sisn/train_config.hpp"

namespace sisn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Full training state. Binary layout (all integers and floats little-endian):
//
//   "SISNCKPT" | u32 version
//   config block     i32 x 11, u64 seed, f64 x 4, i64 completed epochs
//   u32 tensor count, then per tensor:
//     u32 name length | name | u8 dtype (1 = f32, 2 = f64) | u8 rank (4)
//     | u32 x 4 shape | payload
//   optimizer block  i64 step, then m/<name> and v/<name> tensors as above
//   rng block        u32 length | engine state text | f64 best val PSNR
//   u64 FNV-1a checksum of every preceding byte
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  TrainConfig config;
  ModelParams<float> model;
  AdamState<float> optimizer;
  std::int64_t epoch = 0;  // completed epochs
  std::string rng_state;
  double best_val_psnr = 0.0;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& origin = "<memory>");

// Writes via a temporary file and rename, so an interrupted write never
// replaces a good checkpoint.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);

// Errors: kMissingFile, kVersionMismatch, kShapeMismatch (naming the tensor),
// kCorrupt.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// As above, additionally rejecting a checkpoint whose model differs from
// `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const SisnConfig& expected);

}  // namespace sisn
