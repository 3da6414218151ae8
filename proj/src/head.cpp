#include "marn/head.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>

#include "marn/ops.hpp"

namespace marn {

std::vector<Proposal> generate_proposals(std::size_t frames, std::span<const std::size_t> sizes,
                                         std::size_t stride) {
  if (frames == 0 || stride == 0 || sizes.empty()) {
    throw std::invalid_argument("proposals: frames, stride and sizes must be non-empty");
  }
  for (auto s : sizes) {
    if (s == 0 || s > frames) {
      throw std::invalid_argument("proposals: size " + std::to_string(s) + " outside [1, " +
                                  std::to_string(frames) + "]");
    }
  }
  std::vector<Proposal> out;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (std::size_t t = 0; t < frames; t += stride) {
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      const auto s = sizes[i];
      const auto last = t + 1;
      const auto first = last >= s ? last - s : 0;
      if (last - first == 1 && s > 1) continue;
      if (!seen.insert({first, last}).second) continue;
      const double T = static_cast<double>(frames);
      out.push_back({t, i, first, last, {first / T, last / T}});
    }
  }
  if (out.empty()) throw std::invalid_argument("proposals: configuration yields no proposals");
  return out;
}

GroundingHead GroundingHead::create(ParamStore& store, const HeadConfig& config) {
  if (config.layers == 0 || config.sizes.empty()) {
    throw std::invalid_argument("head: needs at least one layer and one proposal size");
  }
  GroundingHead h;
  h.config_ = config;
  const auto hidden = config.hidden_dim ? config.hidden_dim : config.model_dim;
  std::size_t in = config.model_dim;
  for (std::size_t l = 0; l + 1 < config.layers; ++l) {
    h.layers_.push_back(Linear::create(store, "head.fc" + std::to_string(l), in, hidden));
    in = hidden;
  }
  h.layers_.push_back(Linear::create(store, "head.out", in, 3 * config.sizes.size()));
  return h;
}

HeadOutput GroundingHead::operator()(const Tensor& frames) const {
  if (frames.rank() != 2 || frames.cols() != config_.model_dim) {
    throw DimensionError("head: expected [T x " + std::to_string(config_.model_dim) + "], got " +
                         shape_str(frames.shape()));
  }
  const auto T = frames.rows(), S = config_.sizes.size();
  HeadOutput out;
  out.proposals = generate_proposals(T, config_.sizes, config_.stride);
  Tensor x = frames;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    x = layers_[l](x);
    if (l + 1 < layers_.size()) x = relu(x);
  }
  std::vector<std::size_t> rows;
  rows.reserve(out.proposals.size());
  for (const auto& p : out.proposals) rows.push_back(p.anchor * S + p.size_index);
  const auto picked = gather_rows(reshape(x, {T * S, 3}), rows);
  const auto R = rows.size();
  out.logits = reshape(slice_cols(picked, 0, 1), {R});
  out.scores = sigmoid(out.logits);
  out.offsets = slice_cols(picked, 1, 3);
  return out;
}

std::vector<double> iou_labels(std::span<const Proposal> proposals, const Segment& gt) {
  std::vector<double> labels;
  labels.reserve(proposals.size());
  for (const auto& p : proposals) labels.push_back(iou(p.segment, gt));
  return labels;
}

LossTerms grounding_loss(const HeadOutput& output, const Segment& gt, const LossConfig& config) {
  if (output.proposals.empty()) throw std::invalid_argument("loss: no proposals");
  const auto labels = iou_labels(output.proposals, gt);
  LossTerms terms;
  terms.iou = bce_loss(output.scores, Tensor::vector(labels));

  std::vector<std::size_t> pos;
  std::vector<double> targets;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > config.positive_threshold) {
      pos.push_back(i);
      targets.push_back(gt.start - output.proposals[i].segment.start);
      targets.push_back(gt.end - output.proposals[i].segment.end);
    }
  }
  terms.positives = pos.size();
  if (pos.empty()) {
    terms.boundary = Tensor::scalar(0.0);
    terms.total = terms.iou;
    return terms;
  }
  const auto diff = sub(gather_rows(output.offsets, pos),
                        Tensor::matrix(pos.size(), 2, std::move(targets)));
  terms.boundary = scale(sum(smooth_l1(diff)), 1.0 / static_cast<double>(pos.size()));
  terms.total = add(terms.iou, scale(terms.boundary, config.boundary_weight));
  return terms;
}

std::vector<ScoredSegment> non_max_suppression(std::span<const ScoredSegment> sorted,
                                               double threshold, std::size_t limit) {
  std::vector<ScoredSegment> kept;
  for (const auto& cand : sorted) {
    if (kept.size() >= limit) break;
    const bool clear = std::all_of(kept.begin(), kept.end(), [&](const ScoredSegment& k) {
      return iou(k.segment, cand.segment) < threshold;
    });
    if (clear) kept.push_back(cand);
  }
  return kept;
}

std::vector<ScoredSegment> decode(const HeadOutput& output, std::size_t n, double nms_threshold) {
  if (n == 0) throw std::invalid_argument("decode: n must be at least 1");
  const auto R = output.proposals.size();
  std::vector<ScoredSegment> all(R);
  for (std::size_t i = 0; i < R; ++i) {
    const auto& anchor = output.proposals[i].segment;
    double s = std::clamp(anchor.start + output.offsets.at(i, 0), 0.0, 1.0);
    double e = std::clamp(anchor.end + output.offsets.at(i, 1), 0.0, 1.0);
    if (s > e) std::swap(s, e);
    all[i] = {e > s ? Segment{s, e} : anchor, output.scores.at(i)};
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const ScoredSegment& a, const ScoredSegment& b) { return a.score > b.score; });
  return non_max_suppression(all, nms_threshold, n);
}

}  // namespace marn
