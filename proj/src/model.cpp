#include "marn/model.hpp"

#include <algorithm>

#include "marn/ops.hpp"

namespace marn {

Model::Model(const RunConfig& config)
    : config_(config), params_(derive_seed(config.train.seed, "init")) {
  config_.validate();
  const auto& d = config_.dims;
  const auto D = d.model_dim, d_in = config_.data.feature_dim;
  const auto& f = config_.flags;

  query_ = QueryEncoder::create(params_, {config_.vocab_size(), D, d.heads});
  appearance_encoder_ = StreamEncoder::create(params_, "video.appearance", d_in, D);
  BranchConfig bc{D, d.attention_dim, d.affinity_dim, d.graph_layers, d.scale_affinity};
  if (f.appearance_branch) {
    appearance_branch_ = ReasoningBranch::create(params_, "branch.appearance", bc);
  } else {
    appearance_baseline_ = CoAttentionPathway::create(params_, "baseline.appearance", D);
  }
  if (f.motion_encoder) {
    motion_encoder_ = StreamEncoder::create(params_, "video.motion", d_in, D);
    if (f.motion_branch) {
      motion_branch_ = ReasoningBranch::create(params_, "branch.motion", bc);
    } else {
      motion_baseline_ = CoAttentionPathway::create(params_, "baseline.motion", D);
    }
  }
  if (f.maa) {
    maa_ = MaaModule::create(params_, "maa", D, {f.maa_motion_guided, f.maa_appearance_fused});
  }
  HeadConfig hc;
  hc.model_dim = D;
  hc.hidden_dim = d.head_hidden;
  hc.layers = d.head_layers;
  hc.sizes = config_.proposal_sizes;
  hc.stride = config_.proposal_stride;
  head_ = GroundingHead::create(params_, hc);
}

ModelOutput Model::forward(const GroundingSample& s) const {
  if (s.feature_dim != config_.data.feature_dim) {
    throw DimensionError("sample " + std::to_string(s.id) + " has feature dim " +
                         std::to_string(s.feature_dim) + ", model expects " +
                         std::to_string(config_.data.feature_dim));
  }
  const auto& f = config_.flags;
  const auto K = s.objects;
  ModelOutput out;
  out.query = query_(s.query_ids);
  const auto& Q = out.query.words;
  const auto& q = out.query.global;

  const auto Fa = appearance_encoder_(s.appearance_local, s.appearance_global, s.boxes);
  out.appearance = f.appearance_branch ? appearance_branch_(Fa, Q, q, K)
                                       : appearance_baseline_(Fa, Q, K);
  if (!f.motion_encoder) {
    out.frames = out.appearance.frames;
  } else {
    const auto Fm = motion_encoder_(s.motion_local, s.motion_global, s.boxes);
    out.motion = f.motion_branch ? motion_branch_(Fm, Q, q, K) : motion_baseline_(Fm, Q, K);
    if (f.maa) {
      out.association = maa_(out.appearance.frames, out.motion->frames, q);
      out.frames = out.association->fused;
    } else {
      out.frames = scale(add(out.appearance.frames, out.motion->frames), 0.5);
    }
  }
  out.head = head_(out.frames);
  return out;
}

LossTerms Model::loss(const ModelOutput& output, const GroundingSample& sample) const {
  return grounding_loss(output.head, sample.gt, config_.loss);
}

std::vector<ScoredSegment> Model::predict(const GroundingSample& sample, std::size_t n) const {
  NoGradGuard guard;
  return decode(forward(sample).head, n, config_.nms_threshold);
}

EvalReport Model::evaluate(std::span<const GroundingSample> samples) const {
  const auto widest = *std::max_element(config_.grid.ns.begin(), config_.grid.ns.end());
  std::vector<std::vector<ScoredSegment>> preds;
  std::vector<Segment> gts;
  std::vector<std::uint64_t> ids;
  for (const auto& s : samples) {
    preds.push_back(predict(s, widest));
    gts.push_back(s.gt);
    ids.push_back(s.id);
  }
  return make_report(config_.grid, preds, gts, ids);
}

}  // namespace marn
