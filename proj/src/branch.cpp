#include "marn/branch.hpp"

#include <cmath>
#include <stdexcept>

#include "marn/ops.hpp"

namespace marn {

ReasoningBranch ReasoningBranch::create(ParamStore& store, const std::string& prefix,
                                        const BranchConfig& config) {
  const auto D = config.model_dim, Dh = config.hidden(), Dk = config.key();
  if (D == 0 || config.graph_layers == 0) {
    throw std::invalid_argument("branch: model dimension and graph layers must be positive");
  }
  ReasoningBranch b;
  b.config_ = config;
  b.w1_ = store.add_uniform(prefix + ".w1", {Dh, D}, D);
  b.w2_ = store.add_uniform(prefix + ".w2", {Dh, D}, D);
  b.b1_ = store.add_uniform(prefix + ".b1", {Dh}, D);
  b.w_ = store.add_uniform(prefix + ".w", {Dh}, Dh);
  b.w3_ = store.add_uniform(prefix + ".w3", {D, D}, D);
  b.b2_ = store.add_uniform(prefix + ".b2", {D}, D);
  for (std::size_t l = 0; l < config.graph_layers; ++l) {
    const auto p = prefix + ".graph" + std::to_string(l);
    b.layers_.push_back({store.add_uniform(p + ".w4", {D, Dk}, D),
                         store.add_uniform(p + ".w5", {D, Dk}, D),
                         store.add_uniform(p + ".w6", {D, D}, D),
                         store.add_uniform(p + ".w7", {D, D}, D)});
  }
  b.wq_ = store.add_uniform(prefix + ".wq", {D, D}, D);
  return b;
}

Tensor ReasoningBranch::interact(const Tensor& objects, const Tensor& words,
                                 Tensor* word_attention) const {
  if (objects.rank() != 2 || words.rank() != 2 || objects.cols() != config_.model_dim ||
      words.cols() != config_.model_dim) {
    throw DimensionError("cross_modal_interaction: " + shape_str(objects.shape()) + " vs " +
                         shape_str(words.shape()));
  }
  const auto M = objects.rows(), N = words.rows(), Dh = config_.hidden();
  std::vector<std::size_t> obj_ids(M * N), word_ids(M * N);
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t n = 0; n < N; ++n) {
      obj_ids[m * N + n] = m;
      word_ids[m * N + n] = n;
    }
  }
  const auto a = matmul_nt(objects, w1_);
  const auto b = add_row(matmul_nt(words, w2_), b1_);
  const auto pairs = tanh(add(gather_rows(a, obj_ids), gather_rows(b, word_ids)));
  const auto logits = reshape(matmul(pairs, reshape(w_, {Dh, 1})), {M, N});
  const auto attention = softmax(logits, 1);
  if (word_attention) *word_attention = attention;
  const auto readout = matmul(attention, words);
  const auto gate = sigmoid(add_row(matmul_nt(readout, w3_), b2_));
  return mul(gate, objects);
}

Tensor ReasoningBranch::reason(const Tensor& attended, Tensor* affinity) const {
  const double inv = 1.0 / std::sqrt(static_cast<double>(config_.key()));
  Tensor x = attended;
  for (const auto& layer : layers_) {
    auto logits = matmul_nt(matmul(x, layer.w4), matmul(x, layer.w5));
    if (config_.scale_affinity) logits = scale(logits, inv);
    const auto a = softmax(logits, 1);
    if (affinity) *affinity = a;
    x = add(matmul(matmul(matmul(a, x), layer.w6), layer.w7), x);
  }
  return x;
}

Tensor ReasoningBranch::fuse(const Tensor& updated, const Tensor& query, std::size_t objects,
                             Tensor* scores, Tensor* weights) const {
  const auto D = config_.model_dim;
  if (objects == 0 || updated.rank() != 2 || updated.rows() % objects != 0 ||
      query.rank() != 1 || query.numel() != D) {
    throw DimensionError("fuse_objects: " + shape_str(updated.shape()) + " with query " +
                         shape_str(query.shape()) + " and K=" + std::to_string(objects));
  }
  const auto T = updated.rows() / objects;
  const auto guide = reshape(matmul(reshape(query, {1, D}), wq_), {D});
  const auto c = reshape(cosine_rows(updated, guide), {T, objects});
  const auto w = softmax(c, 1);
  if (scores) *scores = c;
  if (weights) *weights = w;
  return sum_row_groups(scale_rows(updated, reshape(w, {T * objects})), objects);
}

BranchOutput ReasoningBranch::operator()(const Tensor& objects, const Tensor& words,
                                         const Tensor& query, std::size_t objects_per_frame) const {
  BranchOutput out;
  out.attended = interact(objects, words, &out.word_attention);
  out.updated = reason(out.attended, &out.affinity);
  out.frames = fuse(out.updated, query, objects_per_frame, &out.scores, &out.object_weights);
  return out;
}

CoAttentionPathway CoAttentionPathway::create(ParamStore& store, const std::string& prefix,
                                              std::size_t model_dim) {
  CoAttentionPathway p;
  p.enhance_ = Linear::create(store, prefix + ".enhance", 2 * model_dim, model_dim);
  return p;
}

BranchOutput CoAttentionPathway::operator()(const Tensor& objects, const Tensor& words,
                                            std::size_t objects_per_frame) const {
  const auto K = objects_per_frame;
  if (K == 0 || objects.rank() != 2 || objects.rows() % K != 0 || words.rank() != 2 ||
      words.cols() != objects.cols()) {
    throw DimensionError("co-attention: " + shape_str(objects.shape()) + " vs " +
                         shape_str(words.shape()));
  }
  const auto T = objects.rows() / K;
  const double inv = 1.0 / std::sqrt(static_cast<double>(objects.cols()));
  BranchOutput out;
  out.word_attention = softmax(matmul_nt(objects, words), 1);
  out.attended = enhance_(concat({objects, matmul(out.word_attention, words)}, 1));
  out.affinity = softmax(scale(matmul_nt(out.attended, out.attended), inv), 1);
  out.updated = add(matmul(out.affinity, out.attended), out.attended);
  out.scores = Tensor({T, K}, 0.0);
  out.object_weights = Tensor({T, K}, 1.0 / static_cast<double>(K));
  out.frames = scale(sum_row_groups(out.updated, K), 1.0 / static_cast<double>(K));
  return out;
}

}  // namespace marn
