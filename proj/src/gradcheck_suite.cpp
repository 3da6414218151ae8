#include <functional>

#include "marn/branch.hpp"
#include "marn/encoders.hpp"
#include "marn/gradcheck.hpp"
#include "marn/head.hpp"
#include "marn/maa.hpp"
#include "marn/model.hpp"
#include "marn/ops.hpp"

namespace marn {

namespace {

using OpFn = std::function<Tensor(std::vector<Tensor>&)>;

// Random fixed weights so the scalar loss sees every output entry distinctly.
Tensor weighted_sum(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(y, random_uniform(y.shape(), rng)));
}

std::vector<Tensor> params_of(const ParamStore& store) {
  std::vector<Tensor> out;
  for (const auto& p : store.items()) out.push_back(p.tensor);
  return out;
}

// Parameters initialized at zero (the association FFN's last layer) would
// hide the gradient flowing through them; every parameter gets a random value.
void randomize(const ParamStore& store, Rng& rng) {
  for (auto t : params_of(store)) {
    for (auto& v : t.mutable_values()) v = rng.uniform(-0.5, 0.5);
  }
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, const GradCheckOptions& options) {
  std::vector<GradCheckResult> results;
  Rng rng(seed);
  auto mk = [&](Shape s) { return random_uniform(std::move(s), rng, -2.0, 2.0); };

  auto op = [&](const std::string& name, const OpFn& fn, std::vector<Tensor> inputs) {
    auto loss = [&] { return weighted_sum(fn(inputs), seed + 17); };
    results.push_back(check_gradients(name, loss, inputs, options));
  };

  const std::vector<std::pair<std::size_t, std::size_t>> shapes = {{2, 3}, {4, 1}, {3, 5}};
  for (auto [m, n] : shapes) {
    const auto tag = "[" + std::to_string(m) + "x" + std::to_string(n) + "]";
    op("matmul" + tag, [](auto& v) { return matmul(v[0], v[1]); }, {mk({m, n}), mk({n, m + 1})});
    op("matmul_nt" + tag, [](auto& v) { return matmul_nt(v[0], v[1]); }, {mk({m, n}), mk({m + 1, n})});
    op("add" + tag, [](auto& v) { return add(v[0], v[1]); }, {mk({m, n}), mk({m, n})});
    op("sub" + tag, [](auto& v) { return sub(v[0], v[1]); }, {mk({m, n}), mk({m, n})});
    op("mul" + tag, [](auto& v) { return mul(v[0], v[1]); }, {mk({m, n}), mk({m, n})});
    op("scale" + tag, [](auto& v) { return scale(v[0], -1.7); }, {mk({m, n})});
    op("tanh" + tag, [](auto& v) { return tanh(v[0]); }, {mk({m, n})});
    op("sigmoid" + tag, [](auto& v) { return sigmoid(v[0]); }, {mk({m, n})});
    op("relu" + tag, [](auto& v) { return relu(v[0]); }, {mk({m, n})});
    op("concat0" + tag, [](auto& v) { return concat({v[0], v[1]}, 0); }, {mk({m, n}), mk({2, n})});
    op("concat1" + tag, [](auto& v) { return concat({v[0], v[1]}, 1); }, {mk({m, n}), mk({m, 2})});
    op("sum" + tag, [](auto& v) { return sum(v[0]); }, {mk({m, n})});
    op("sum_axis" + tag, [](auto& v) { return sum(v[0], 0); }, {mk({m, n})});
    op("mean_axis" + tag, [](auto& v) { return mean(v[0], 1); }, {mk({m, n})});
    op("transpose" + tag, [](auto& v) { return transpose(v[0]); }, {mk({m, n})});
    op("reshape" + tag, [m, n](auto& v) { return reshape(v[0], {n, m}); }, {mk({m, n})});
    op("broadcast_rows" + tag, [m](auto& v) { return broadcast_rows(v[0], m + 1); }, {mk({n})});
    op("add_row" + tag, [](auto& v) { return add_row(v[0], v[1]); }, {mk({m, n}), mk({n})});
    const std::vector<std::size_t> ids{0, m - 1, 0};
    op("gather_rows" + tag, [ids](auto& v) { return gather_rows(v[0], ids); }, {mk({m, n})});
    op("slice_rows" + tag, [m](auto& v) { return slice_rows(v[0], m > 1 ? 1 : 0, m); }, {mk({m, n})});
    op("slice_cols" + tag, [n](auto& v) { return slice_cols(v[0], 0, n > 1 ? n - 1 : 1); }, {mk({m, n})});
    op("softmax0" + tag, [](auto& v) { return softmax(v[0], 0); }, {mk({m, n})});
    op("softmax1" + tag, [](auto& v) { return softmax(v[0], 1); }, {mk({m, n})});
    op("scale_rows" + tag, [](auto& v) { return scale_rows(v[0], v[1]); }, {mk({m, n}), mk({m})});
    op("sum_row_groups" + tag, [](auto& v) { return sum_row_groups(v[0], 2); }, {mk({2 * m, n})});
    op("cosine_rows" + tag, [](auto& v) { return cosine_rows(v[0], v[1]); }, {mk({m, n}), mk({n})});
    op("smooth_l1" + tag, [](auto& v) { return smooth_l1(v[0]); }, {mk({m, n})});
    const auto labels = random_uniform({m, n}, rng, 0.0, 1.0);
    op("bce_loss" + tag, [labels](auto& v) { return bce_loss(v[0], labels); },
       {random_uniform({m, n}, rng, 0.05, 0.95)});
  }

  // Composite blocks at T <= 4, K <= 2, D <= 6.
  {
    ParamStore store(derive_seed(seed, "video"));
    auto enc = StreamEncoder::create(store, "video", 4, 4);
    std::vector<Tensor> wrt = params_of(store);
    auto local = mk({3, 2, 4}), global = mk({3, 4}), boxes = random_uniform({3, 2, 4}, rng, 0, 1);
    wrt.push_back(local);
    wrt.push_back(global);
    results.push_back(check_gradients(
        "video encoder", [&] { return weighted_sum(enc(local, global, boxes), seed + 1); }, wrt, options));
  }
  {
    ParamStore store(derive_seed(seed, "query"));
    auto enc = QueryEncoder::create(store, {6, 4, 2});
    const std::vector<std::uint32_t> ids = {2, 5, 0};
    auto wrt = params_of(store);
    results.push_back(check_gradients("query encoder", [&] {
      auto q = enc(ids);
      return add(weighted_sum(q.words, seed + 2), weighted_sum(q.global, seed + 3));
    }, wrt, options));
  }
  {
    ParamStore store(derive_seed(seed, "branch"));
    BranchConfig cfg;
    cfg.model_dim = 4;
    auto br = ReasoningBranch::create(store, "branch", cfg);
    auto F = mk({6, 4}), Q = mk({2, 4}), q = mk({4});
    auto wrt = params_of(store);
    wrt.insert(wrt.end(), {F, Q, q});
    results.push_back(check_gradients(
        "reasoning branch", [&] { return weighted_sum(br(F, Q, q, 2).frames, seed + 4); }, wrt, options));
  }
  {
    ParamStore store(derive_seed(seed, "baseline"));
    auto path = CoAttentionPathway::create(store, "baseline", 4);
    auto F = mk({6, 4}), Q = mk({2, 4});
    auto wrt = params_of(store);
    wrt.insert(wrt.end(), {F, Q});
    results.push_back(check_gradients(
        "co-attention pathway", [&] { return weighted_sum(path(F, Q, 2).frames, seed + 5); }, wrt, options));
  }
  {
    ParamStore store(derive_seed(seed, "maa"));
    auto maa = MaaModule::create(store, "maa", 6, {});
    randomize(store, rng);
    auto Ha = mk({4, 6}), Hm = mk({4, 6}), q = mk({6});
    auto wrt = params_of(store);
    wrt.insert(wrt.end(), {Ha, Hm, q});
    results.push_back(check_gradients(
        "association module", [&] { return weighted_sum(maa(Ha, Hm, q).fused, seed + 6); }, wrt, options));
  }
  {
    ParamStore store(derive_seed(seed, "head"));
    HeadConfig cfg;
    cfg.model_dim = 4;
    cfg.sizes = {2, 3};
    auto head = GroundingHead::create(store, cfg);
    auto H = mk({4, 4});
    auto wrt = params_of(store);
    wrt.push_back(H);
    const LossConfig loss{0.55, 0.5};
    results.push_back(check_gradients(
        "grounding head + loss", [&] { return grounding_loss(head(H), {0.25, 0.75}, loss).total; }, wrt,
        options));
  }
  {
    RunConfig cfg;
    cfg.data.frames = 4;
    cfg.data.objects = 2;
    cfg.data.feature_dim = 4;
    cfg.data.min_event_frames = 1;
    cfg.data.max_event_frames = 2;
    cfg.dims.model_dim = 4;
    cfg.dims.heads = 2;
    cfg.proposal_sizes = {2, 3};
    cfg.loss.boundary_weight = 0.5;
    cfg.train.seed = seed;
    Model model(cfg);
    randomize(model.params(), rng);
    const auto sample = generate_sample(cfg.data, seed);
    auto wrt = params_of(model.params());
    results.push_back(check_gradients(
        "full model", [&] { return model.loss(model.forward(sample), sample).total; }, wrt, options));
  }
  return results;
}

}  // namespace marn
