#pragma once

#include <filesystem>
#include <string>

#include "lawn/model.hpp"
#include "lawn/train.hpp"

namespace lawn::training {

struct CheckpointError : std::runtime_error {
  enum class Kind { io, magic, version, truncated, crc, description };
  Kind kind;
  CheckpointError(Kind k, const std::string& msg)
      : std::runtime_error("checkpoint: " + msg), kind(k) {}
};

/// Everything needed to resume or evaluate a training run: the architecture,
/// its parameters, the optimizer moments, and the evaluation metadata.
struct Checkpoint {
  nn::ModelSpec spec;
  nn::Parameters params;
  OptimizerState opt;
  TrainConfig config;               // echo of the run configuration
  std::string pipeline = "cnn";     // which preprocessing fed this model
  imaging::PreprocessParams preprocess;
  double target_mean = 0.0;
  double target_std = 1.0;
  bool standardized = false;
};

/// Binary layout: magic "LAWN", u32 LE format version, u32 LE length-prefixed
/// UTF-8 JSON description (spec + config echo), then per tensor: u16 LE name
/// length, name bytes, u8 rank, u32 LE dims, raw f32 LE data; trailing CRC32
/// of all preceding bytes. Round trips are bit-exact.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

constexpr uint32_t kCheckpointVersion = 1;

}  // namespace lawn::training
