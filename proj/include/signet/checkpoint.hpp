#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "signet/model.hpp"

namespace signet {

struct CheckpointMeta {
  std::uint32_t epoch = 0;
  float best_val_loss = 0.0f;
};

// SLCK checkpoint container, little-endian:
//   magic "SLCK", version u16 = 1,
//   config length u32 + UTF-8 JSON model config,
//   tensor count u32,
//   per tensor: name length u16 + name, ndim u8, each dim u32,
//               dtype u8 (0 = float32), raw element bytes,
//   trailer: epoch u32, best validation loss f32.
//
// Loading validates every tensor name and shape against the embedded config;
// a mismatch is a format error naming the byte offset, never a silent
// reshape. Round trips are bitwise.
void save_checkpoint(const SignNet& model, const CheckpointMeta& meta,
                     const std::string& path);

std::pair<SignNet, CheckpointMeta> load_checkpoint(const std::string& path);

// Exact on-disk size of a checkpoint for the given model.
std::uint64_t checkpoint_file_size(const SignNet& model);

}  // namespace signet
