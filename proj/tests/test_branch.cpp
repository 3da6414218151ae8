#include <cmath>

#include "doctest.h"
#include "marn/branch.hpp"
#include "marn/gradcheck.hpp"
#include "marn/ops.hpp"

using namespace marn;

namespace {

ReasoningBranch make_branch(ParamStore& store, std::size_t D) {
  BranchConfig cfg;
  cfg.model_dim = D;
  return ReasoningBranch::create(store, "branch", cfg);
}

double norm(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Swaps object slots a and b in every frame of a [(T*K) x D] matrix.
Tensor swap_rows(const Tensor& x, std::size_t K, std::size_t a, std::size_t b) {
  const auto T = x.rows() / K, D = x.cols();
  std::vector<double> v(x.values().begin(), x.values().end());
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t d = 0; d < D; ++d) std::swap(v[(t * K + a) * D + d], v[(t * K + b) * D + d]);
  }
  return Tensor(x.shape(), std::move(v));
}

}  // namespace

TEST_CASE("interaction attention is a distribution and the gate shrinks features") {
  ParamStore store(1);
  auto br = make_branch(store, 6);
  Rng rng(2);
  auto F = random_uniform({8, 6}, rng, -2, 2), Q = random_uniform({3, 6}, rng, -2, 2);
  Tensor att;
  auto Fh = br.interact(F, Q, &att);
  CHECK(att.shape() == Shape{8, 3});
  for (std::size_t m = 0; m < 8; ++m) {
    CHECK(att.at(m, 0) + att.at(m, 1) + att.at(m, 2) == doctest::Approx(1.0).epsilon(1e-14));
  }
  for (std::size_t i = 0; i < F.numel(); ++i) CHECK(std::abs(Fh.at(i)) <= std::abs(F.at(i)));
  CHECK_THROWS_AS(br.interact(F, random_uniform({3, 5}, rng)), DimensionError);
}

TEST_CASE("single-word query reads out that word exactly") {
  ParamStore store(3);
  auto br = make_branch(store, 4);
  Rng rng(4);
  auto F = random_uniform({5, 4}, rng, -2, 2), Q = random_uniform({1, 4}, rng, -2, 2);
  auto Fh = br.interact(F, Q);
  // Oracle: sigmoid(W3 q + b2) * f with scalar loops.
  const auto W3 = store.get("branch.w3"), b2 = store.get("branch.b2");
  for (std::size_t m = 0; m < 5; ++m) {
    for (std::size_t i = 0; i < 4; ++i) {
      double z = b2.at(i);
      for (std::size_t j = 0; j < 4; ++j) z += W3.at(i, j) * Q.at(0, j);
      CHECK(Fh.at(m, i) == doctest::Approx(F.at(m, i) / (1.0 + std::exp(-z))).epsilon(1e-12));
    }
  }
}

TEST_CASE("graph reasoning: residual identity and brute-force affinity") {
  ParamStore store(5);
  BranchConfig cfg;
  cfg.model_dim = 2;
  auto br = ReasoningBranch::create(store, "branch", cfg);
  const auto& layer = br.layers()[0];
  auto set = [](Tensor t, std::vector<double> v) { std::copy(v.begin(), v.end(), t.mutable_values().begin()); };
  set(layer.w4, {1, 0, 0, 1});
  set(layer.w5, {1, 0, 0, 1});
  auto F = Tensor::matrix(3, 2, {0.5, -1.0, 1.5, 0.25, -0.75, 2.0});
  Tensor A;
  auto Ft = br.reason(F, &A);
  // Spreadsheet-style: a_ij = exp(f_i . f_j) / sum_l exp(f_i . f_l).
  for (std::size_t i = 0; i < 3; ++i) {
    double z = 0, e[3];
    for (std::size_t j = 0; j < 3; ++j) {
      e[j] = std::exp(F.at(i, 0) * F.at(j, 0) + F.at(i, 1) * F.at(j, 1));
      z += e[j];
    }
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(A.at(i, j) > 0.0);
      CHECK(std::abs(A.at(i, j) - e[j] / z) <= 1e-12);
    }
  }
  set(layer.w6, {0, 0, 0, 0});
  Ft = br.reason(F);
  for (std::size_t i = 0; i < 6; ++i) CHECK(Ft.at(i) == F.at(i));
}

TEST_CASE("object fusion: cosine range, singleton, convex combination") {
  ParamStore store(6);
  auto br = make_branch(store, 4);
  Rng rng(7);
  auto Ft = random_uniform({6, 4}, rng, -2, 2);  // T=3, K=2
  auto q = random_uniform({4}, rng, -2, 2);
  Tensor c, w;
  auto H = br.fuse(Ft, q, 2, &c, &w);
  CHECK(H.shape() == Shape{3, 4});
  for (double v : c.values()) CHECK(std::abs(v) <= 1.0);

  // Independent recomputation of the fusion weights.
  const auto Wq = store.get("branch.wq");
  std::vector<double> g(4, 0.0);
  for (std::size_t j = 0; j < 4; ++j) {
    for (std::size_t i = 0; i < 4; ++i) g[j] += q.at(i) * Wq.at(i, j);
  }
  for (std::size_t t = 0; t < 3; ++t) {
    double cos[2], lam[2];
    for (std::size_t k = 0; k < 2; ++k) {
      double dot = 0, nf = 0, ng = 0;
      for (std::size_t d = 0; d < 4; ++d) {
        dot += Ft.at(t * 2 + k, d) * g[d];
        nf += Ft.at(t * 2 + k, d) * Ft.at(t * 2 + k, d);
        ng += g[d] * g[d];
      }
      cos[k] = dot / std::sqrt(nf * ng);
    }
    lam[0] = 1.0 / (1.0 + std::exp(cos[1] - cos[0]));
    lam[1] = 1.0 - lam[0];
    CHECK(lam[0] >= 0.0);
    CHECK(lam[1] >= 0.0);
    for (std::size_t d = 0; d < 4; ++d) {
      const double want = lam[0] * Ft.at(t * 2, d) + lam[1] * Ft.at(t * 2 + 1, d);
      CHECK(std::abs(H.at(t, d) - want) <= 1e-12);
    }
  }

  auto single = br.fuse(Ft, q, 1);
  for (std::size_t i = 0; i < Ft.numel(); ++i) CHECK(single.at(i) == Ft.at(i));
}

TEST_CASE("branch invariances") {
  ParamStore store(8);
  auto br = make_branch(store, 4);
  Rng rng(9);
  auto F = random_uniform({9, 4}, rng, -1, 1);  // T=3, K=3
  auto Q = random_uniform({2, 4}, rng, -1, 1);
  auto q = random_uniform({4}, rng, -1, 1);
  auto out = br(F, Q, q, 3);

  SUBCASE("slot permutation leaves frame features unchanged") {
    auto perm = br(swap_rows(F, 3, 0, 2), Q, q, 3);
    for (std::size_t i = 0; i < out.frames.numel(); ++i) {
      CHECK(perm.frames.at(i) == doctest::Approx(out.frames.at(i)).epsilon(1e-10));
    }
  }
  SUBCASE("positive query scaling leaves scores unchanged") {
    auto scaled = br(F, Q, scale(q, 3.7), 3);
    for (std::size_t i = 0; i < out.scores.numel(); ++i) {
      CHECK(scaled.scores.at(i) == doctest::Approx(out.scores.at(i)).epsilon(1e-12));
    }
    for (std::size_t i = 0; i < out.frames.numel(); ++i) {
      CHECK(scaled.frames.at(i) == doctest::Approx(out.frames.at(i)).epsilon(1e-12));
    }
  }
  SUBCASE("fusion weights and affinity rows are distributions") {
    for (std::size_t t = 0; t < 3; ++t) {
      double s = 0;
      for (std::size_t k = 0; k < 3; ++k) s += out.object_weights.at(t, k);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
    }
    for (std::size_t i = 0; i < 9; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 9; ++j) s += out.affinity.at(i, j);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
    }
  }
}

TEST_CASE("full branch gradient matches finite differences") {
  ParamStore store(10);
  auto br = make_branch(store, 4);
  Rng rng(11);
  auto F = random_uniform({6, 4}, rng).set_requires_grad(true);
  auto Q = random_uniform({2, 4}, rng).set_requires_grad(true);
  auto q = random_uniform({4}, rng).set_requires_grad(true);
  std::vector<Tensor> wrt = {F, Q, q};
  for (const auto& p : store.items()) wrt.push_back(p.tensor);
  auto r = check_gradients("branch", [&] { return sum(br(F, Q, q, 2).frames); }, wrt);
  INFO("max relative error " << r.max_rel_error);
  CHECK(r.passed);
}

TEST_CASE("scaled affinity option divides logits by sqrt(D_k)") {
  ParamStore a(12), b(12);
  BranchConfig plain;
  plain.model_dim = 4;
  auto scaled_cfg = plain;
  scaled_cfg.scale_affinity = true;
  auto pa = ReasoningBranch::create(a, "branch", plain);
  auto pb = ReasoningBranch::create(b, "branch", scaled_cfg);
  Rng rng(13);
  auto F = random_uniform({4, 4}, rng);
  Tensor A1, A2;
  pa.reason(F, &A1);
  pb.reason(F, &A2);
  bool differs = false;
  for (std::size_t i = 0; i < A1.numel(); ++i) differs |= std::abs(A1.at(i) - A2.at(i)) > 1e-9;
  CHECK(differs);
}

TEST_CASE("co-attention pathway mean-pools objects") {
  ParamStore store(14);
  auto path = CoAttentionPathway::create(store, "baseline", 4);
  Rng rng(15);
  auto F = random_uniform({6, 4}, rng), Q = random_uniform({3, 4}, rng);
  auto out = path(F, Q, 2);
  CHECK(out.frames.shape() == Shape{3, 4});
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t d = 0; d < 4; ++d) {
      const double want = 0.5 * (out.updated.at(2 * t, d) + out.updated.at(2 * t + 1, d));
      CHECK(out.frames.at(t, d) == doctest::Approx(want).epsilon(1e-14));
    }
  }
  CHECK(norm(out.scores.values()) == 0.0);
}
