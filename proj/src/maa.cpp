#include "marn/maa.hpp"

#include "marn/ops.hpp"

namespace marn {

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rank() != 2 || a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

}  // namespace

FeedForward FeedForward::create(ParamStore& store, const std::string& prefix, std::size_t dim) {
  FeedForward f;
  f.l1_ = Linear::create(store, prefix + ".l1", dim, dim);
  f.l2_ = Linear::create(store, prefix + ".l2", dim, dim);
  f.l3_ = Linear::create(store, prefix + ".l3", dim, dim, true, /*zero_init=*/true);
  return f;
}

Tensor FeedForward::operator()(const Tensor& x) const { return l3_(relu(l2_(relu(l1_(x))))); }

Tensor enhance_motion(const Tensor& motion, const Tensor& appearance, Tensor* attention) {
  require_same(motion, appearance, "enhance_motion");
  const auto a = softmax(matmul_nt(motion, appearance), 1);
  if (attention) *attention = a;
  return add(motion, matmul(a, appearance));
}

Tensor query_fusion(const Tensor& appearance, const Tensor& motion, const Tensor& query,
                    Tensor* appearance_weight, Tensor* motion_weight) {
  require_same(appearance, motion, "query_fusion");
  const auto T = appearance.rows(), D = appearance.cols();
  if (query.rank() != 1 || query.numel() != D) {
    throw DimensionError("query_fusion: query " + shape_str(query.shape()) + " for D=" +
                         std::to_string(D));
  }
  const auto q = reshape(query, {D, 1});
  const auto wa = softmax(reshape(matmul(appearance, q), {T}), 0);
  const auto wm = softmax(reshape(matmul(motion, q), {T}), 0);
  if (appearance_weight) *appearance_weight = wa;
  if (motion_weight) *motion_weight = wm;
  return add(scale_rows(appearance, wa), scale_rows(motion, wm));
}

MaaModule MaaModule::create(ParamStore& store, const std::string& prefix, std::size_t dim,
                            MaaSwitches switches) {
  MaaModule m;
  m.switches_ = switches;
  if (switches.motion_guided) m.ffn_ = FeedForward::create(store, prefix + ".ffn", dim);
  return m;
}

Tensor MaaModule::enhance_appearance(const Tensor& appearance, const Tensor& motion) const {
  require_same(appearance, motion, "enhance_appearance");
  return add(appearance, ffn_(motion));
}

MaaOutput MaaModule::operator()(const Tensor& appearance, const Tensor& motion,
                                const Tensor& query) const {
  MaaOutput out;
  out.appearance = switches_.motion_guided ? enhance_appearance(appearance, motion) : appearance;
  out.motion = switches_.appearance_fused
                   ? enhance_motion(motion, out.appearance, &out.motion_attention)
                   : motion;
  out.fused = query_fusion(out.appearance, out.motion, query, &out.appearance_weight,
                           &out.motion_weight);
  return out;
}

}  // namespace marn
