#pragma once

// Binary checkpoint: "MARN", u32 version, length-prefixed config JSON, u32
// tensor count, then per tensor a length-prefixed name, u32 rank, u32 dims and
// f64 values, then a u32 CRC32 of everything before it. Tensor names are
// "param/<name>", "adam.m/<name>", "adam.v/<name>" and "meta/<field>".

#include <filesystem>
#include <stdexcept>

#include "marn/config.hpp"
#include "marn/model.hpp"
#include "marn/optim.hpp"

namespace marn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::uint64_t epoch = 0;
  double best_metric = 0.0;
};

struct Checkpoint {
  RunConfig config;
  std::vector<std::pair<std::string, Tensor>> params;  // detached copies
  AdamState optimizer;
  CheckpointMeta meta;

  static Checkpoint capture(const Model& model, const AdamState& optimizer, CheckpointMeta meta);
  // Copies stored values into a model built from the same configuration.
  void restore(Model& model) const;
  Model build() const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace marn
