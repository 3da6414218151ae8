#pragma once

// Run configuration with JSON round trip. Every report and checkpoint echoes
// the full configuration.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "marn/head.hpp"
#include "marn/metrics.hpp"
#include "marn/optim.hpp"
#include "marn/synth.hpp"

namespace marn {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelDims {
  std::size_t model_dim = 64;      // D
  std::size_t attention_dim = 0;   // D_h, 0 means D
  std::size_t affinity_dim = 0;    // D_k, 0 means D
  std::size_t heads = 8;
  std::size_t graph_layers = 1;
  bool scale_affinity = false;
  std::size_t head_hidden = 0;     // 0 means D
  std::size_t head_layers = 2;
};

struct VariantFlags {
  bool appearance_branch = true;
  bool motion_encoder = true;
  bool motion_branch = true;
  bool maa = true;
  bool maa_motion_guided = true;
  bool maa_appearance_fused = true;

  // Throws ConfigError on inconsistent combinations.
  void validate() const;
  friend bool operator==(const VariantFlags&, const VariantFlags&) = default;
};

// Named variants of the ablation study.
VariantFlags variant_flags(const std::string& name);
const std::vector<std::string>& variant_names();

struct TrainSettings {
  std::size_t epochs = 60;
  std::size_t batch_size = 8;
  std::size_t patience = 10;
  std::uint64_t seed = 1;
};

struct DataPaths {
  std::string train;
  std::string val;
  std::string test;
};

struct RunConfig {
  GeneratorConfig data;  // also fixes T, K, N, D_in and the vocabulary
  ModelDims dims;
  std::vector<std::size_t> proposal_sizes = {2, 4, 6, 8, 12, 16};
  std::size_t proposal_stride = 1;
  LossConfig loss;
  AdamConfig optimizer;
  TrainSettings train;
  VariantFlags flags;
  double nms_threshold = 0.5;
  EvalGrid grid;
  DataPaths paths;

  void validate() const;
  std::size_t vocab_size() const;
};

nlohmann::json to_json(const RunConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

}  // namespace marn
