#pragma once

// Full grounding network assembled from a RunConfig, with the ablation
// variants selected by its flags.

#include <optional>
#include <span>
#include <vector>

#include "marn/branch.hpp"
#include "marn/config.hpp"
#include "marn/encoders.hpp"
#include "marn/head.hpp"
#include "marn/maa.hpp"
#include "marn/metrics.hpp"
#include "marn/synth.hpp"

namespace marn {

struct ModelOutput {
  EncodedQuery query;
  BranchOutput appearance;
  std::optional<BranchOutput> motion;
  std::optional<MaaOutput> association;
  Tensor frames;  // H~ fed to the head [T x D]
  HeadOutput head;
};

class Model {
 public:
  // Parameters are drawn from the init stream of config.train.seed.
  explicit Model(const RunConfig& config);

  ModelOutput forward(const GroundingSample& sample) const;
  LossTerms loss(const ModelOutput& output, const GroundingSample& sample) const;

  // Ranked, suppressed segments; runs without recording a graph.
  std::vector<ScoredSegment> predict(const GroundingSample& sample, std::size_t n) const;
  EvalReport evaluate(std::span<const GroundingSample> samples) const;

  const RunConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

 private:
  RunConfig config_;
  ParamStore params_;
  QueryEncoder query_;
  StreamEncoder appearance_encoder_;
  StreamEncoder motion_encoder_;
  ReasoningBranch appearance_branch_;
  ReasoningBranch motion_branch_;
  CoAttentionPathway appearance_baseline_;
  CoAttentionPathway motion_baseline_;
  MaaModule maa_;
  GroundingHead head_;
};

}  // namespace marn
