#pragma once

// Anchor-based grounding head: multi-size proposals ending at each anchor
// frame, per-proposal confidence and boundary offsets, IoU-supervised loss,
// and NMS decoding.

#include <span>
#include <string>
#include <vector>

#include "marn/params.hpp"
#include "marn/segment.hpp"
#include "marn/tensor.hpp"

namespace marn {

struct Proposal {
  std::size_t anchor = 0;      // frame the proposal ends on
  std::size_t size_index = 0;  // which configured size produced it
  std::size_t first = 0;       // first frame
  std::size_t last = 0;        // one past the last frame
  Segment segment;             // (first / T, last / T)
};

// For every anchor t = 0, stride, 2*stride, ... and size s, the s frames
// ending at t clipped to [0, T). Clips that collapse to a single frame (s > 1)
// are dropped, as are duplicates (the first occurrence is kept).
std::vector<Proposal> generate_proposals(std::size_t frames, std::span<const std::size_t> sizes,
                                         std::size_t stride);

struct HeadConfig {
  std::size_t model_dim = 64;
  std::size_t hidden_dim = 0;  // 0 means model_dim
  std::size_t layers = 2;
  std::vector<std::size_t> sizes = {2, 4, 6, 8, 12, 16};
  std::size_t stride = 1;
};

struct HeadOutput {
  std::vector<Proposal> proposals;
  Tensor logits;   // [R]
  Tensor scores;   // o = sigmoid(logits) [R]
  Tensor offsets;  // (delta_s, delta_e) [R x 2], normalized time
};

class GroundingHead {
 public:
  static GroundingHead create(ParamStore& store, const HeadConfig& config);

  // H~ [T x D] -> one prediction per surviving proposal.
  HeadOutput operator()(const Tensor& frames) const;
  const HeadConfig& config() const { return config_; }

 private:
  HeadConfig config_;
  std::vector<Linear> layers_;
};

struct LossConfig {
  double positive_threshold = 0.55;  // lambda
  double boundary_weight = 0.005;    // alpha
};

struct LossTerms {
  Tensor total;
  Tensor iou;
  Tensor boundary;
  std::size_t positives = 0;
};

std::vector<double> iou_labels(std::span<const Proposal> proposals, const Segment& gt);

// L = mean BCE(o, o_gt) + alpha * sum_pos smooth_l1(delta - delta_gt) / R_pos,
// where positives have o_gt > lambda and delta_gt = gt boundary - proposal
// boundary.
LossTerms grounding_loss(const HeadOutput& output, const Segment& gt, const LossConfig& config);

struct ScoredSegment {
  Segment segment;
  double score = 0.0;
};

// Greedy suppression over segments already sorted by descending score: a
// segment is kept when its IoU with every kept one is below `threshold`.
// Stops after `limit` segments.
std::vector<ScoredSegment> non_max_suppression(std::span<const ScoredSegment> sorted,
                                               double threshold, std::size_t limit);

// Applies offsets, clamps to [0, 1], orders each pair, falls back to the
// proposal when the result has zero length, sorts by score (stable), then
// suppresses and returns the top `n`. A threshold above 1 disables suppression.
std::vector<ScoredSegment> decode(const HeadOutput& output, std::size_t n,
                                  double nms_threshold = 0.5);

}  // namespace marn
