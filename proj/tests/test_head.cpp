#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "marn/gradcheck.hpp"
#include "marn/head.hpp"
#include "marn/ops.hpp"

using namespace marn;

namespace {

// Interval overlap computed from frame-level set membership on a fine grid of
// rational endpoints; only used where endpoints are multiples of 1/1024.
double grid_iou(const Segment& a, const Segment& b) {
  long inter = 0, uni = 0;
  for (long i = 0; i < 1024; ++i) {
    const double x = (i + 0.5) / 1024.0;
    const bool in_a = x > a.start && x < a.end, in_b = x > b.start && x < b.end;
    inter += in_a && in_b;
    uni += in_a || in_b;
  }
  return uni ? static_cast<double>(inter) / uni : 0.0;
}

HeadOutput manual_output(std::vector<Segment> segs, std::vector<double> scores,
                         std::vector<double> offsets) {
  HeadOutput out;
  for (std::size_t i = 0; i < segs.size(); ++i) out.proposals.push_back({i, 0, 0, 1, segs[i]});
  std::vector<double> logits;
  for (double s : scores) logits.push_back(std::log(s / (1 - s)));
  out.logits = Tensor::vector(logits);
  out.scores = Tensor::vector(scores);
  out.offsets = Tensor::matrix(segs.size(), 2, offsets);
  return out;
}

}  // namespace

TEST_CASE("proposal enumeration") {
  std::vector<std::size_t> two = {2};
  auto p = generate_proposals(4, two, 1);
  REQUIRE(p.size() == 3);
  CHECK(p[0].first == 0);
  CHECK(p[0].last == 2);
  CHECK(p[1].first == 1);
  CHECK(p[1].last == 3);
  CHECK(p[2].first == 2);
  CHECK(p[2].last == 4);
  CHECK(p[1].segment == Segment{0.25, 0.75});

  std::vector<std::size_t> paper = {2, 4, 8, 16, 64, 96, 128};
  auto big = generate_proposals(256, paper, 2);
  CHECK(big.size() == 800);
  for (const auto& q : big) {
    CHECK(0.0 <= q.segment.start);
    CHECK(q.segment.start < q.segment.end);
    CHECK(q.segment.end <= 1.0);
  }
  std::vector<std::size_t> ones = {1};
  CHECK(generate_proposals(10, ones, 1).size() == 10);
  std::vector<std::size_t> too_big = {9};
  CHECK_THROWS_AS(generate_proposals(4, too_big, 1), std::invalid_argument);
}

TEST_CASE("iou examples") {
  CHECK(iou({2, 5}, {2, 5}) == 1.0);
  CHECK(iou({0, 1}, {2, 3}) == 0.0);
  CHECK(iou({0, 2}, {1, 3}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(iou({0.25, 0.5}, {0.375, 0.75}) == doctest::Approx(grid_iou({0.25, 0.5}, {0.375, 0.75})));
}

TEST_CASE("head predictions") {
  ParamStore store(1);
  HeadConfig cfg;
  cfg.model_dim = 8;
  cfg.sizes = {2, 4};
  auto head = GroundingHead::create(store, cfg);
  Rng rng(2);
  auto out = head(random_uniform({12, 8}, rng, -3, 3));
  CHECK(out.proposals.size() <= 12 * 2);
  CHECK(out.scores.numel() == out.proposals.size());
  CHECK(out.offsets.shape() == Shape{out.proposals.size(), 2});
  for (double o : out.scores.values()) {
    CHECK(o > 0.0);
    CHECK(o < 1.0);
  }
  CHECK_THROWS_AS(head(random_uniform({12, 6}, rng)), DimensionError);
}

TEST_CASE("loss gradient to frame features matches finite differences") {
  ParamStore store(3);
  HeadConfig cfg;
  cfg.model_dim = 4;
  cfg.sizes = {2, 3};
  auto head = GroundingHead::create(store, cfg);
  Rng rng(4);
  auto H = random_uniform({6, 4}, rng).set_requires_grad(true);
  std::vector<Tensor> wrt = {H};
  for (const auto& p : store.items()) wrt.push_back(p.tensor);
  const Segment gt{1.0 / 6, 4.0 / 6};
  LossConfig lc;
  lc.boundary_weight = 0.5;  // make the boundary term visible to the check
  auto r = check_gradients("head", [&] { return grounding_loss(head(H), gt, lc).total; }, wrt);
  INFO("max relative error " << r.max_rel_error);
  CHECK(r.passed);
}

TEST_CASE("loss on hand-built proposals matches scalar arithmetic") {
  const Segment gt{0.25, 0.5};
  auto out = manual_output({{0.25, 0.5}, {0.125, 0.5}, {0.5, 0.75}}, {0.8, 0.4, 0.1},
                           {0.01, -0.02, 0.3, 0.05, -0.1, 0.2});
  LossConfig cfg;
  auto terms = grounding_loss(out, gt, cfg);
  const double labels[3] = {1.0, 2.0 / 3.0, 0.0};
  const double scores[3] = {0.8, 0.4, 0.1};
  double bce = 0;
  for (int i = 0; i < 3; ++i) {
    CHECK(std::abs(iou(out.proposals[i].segment, gt) - labels[i]) <= 1e-12);
    bce -= labels[i] * std::log(scores[i]) + (1 - labels[i]) * std::log(1 - scores[i]);
  }
  bce /= 3;
  auto sl1 = [](double x) { return std::abs(x) < 1 ? 0.5 * x * x : std::abs(x) - 0.5; };
  // Positives: o_gt 1 and 2/3 exceed 0.55.
  const double boundary = (sl1(0.01 - 0.0) + sl1(-0.02 - 0.0) + sl1(0.3 - 0.125) + sl1(0.05 - 0.0)) / 2;
  CHECK(terms.positives == 2);
  CHECK(std::abs(terms.iou.item() - bce) <= 1e-12);
  CHECK(std::abs(terms.boundary.item() - boundary) <= 1e-12);
  CHECK(std::abs(terms.total.item() - (bce + 0.005 * boundary)) <= 1e-12);
}

TEST_CASE("perfect predictions reach the label-entropy floor") {
  const Segment gt{0.25, 0.5};
  std::vector<Segment> segs = {{0.25, 0.5}, {0.125, 0.5}, {0.5, 0.75}, {0.3, 0.45}};
  auto labels = std::vector<double>{};
  std::vector<double> offsets;
  for (const auto& s : segs) {
    labels.push_back(std::clamp(iou(s, gt), kProbClamp, 1 - kProbClamp));
    offsets.push_back(gt.start - s.start);
    offsets.push_back(gt.end - s.end);
  }
  auto out = manual_output(segs, labels, offsets);
  auto terms = grounding_loss(out, gt, {});
  double floor = 0;
  for (const auto& s : segs) {
    const double y = iou(s, gt);
    const double o = std::clamp(y, kProbClamp, 1 - kProbClamp);
    floor -= y * std::log(o) + (1 - y) * std::log(1 - o);
  }
  CHECK(terms.boundary.item() == 0.0);
  CHECK(terms.iou.item() == doctest::Approx(floor / segs.size()).epsilon(1e-12));
}

TEST_CASE("no positives gives zero boundary loss") {
  auto out = manual_output({{0.0, 0.1}}, {0.3}, {0.0, 0.0});
  auto terms = grounding_loss(out, {0.5, 0.9}, {});
  CHECK(terms.positives == 0);
  CHECK(terms.boundary.item() == 0.0);
  CHECK(terms.total.item() == terms.iou.item());
}

TEST_CASE("moving a score toward its label never raises its BCE term") {
  Rng rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const double y = rng.uniform(0, 1), o = rng.uniform(0.01, 0.99);
    const double closer = o + rng.uniform(0, 1) * (y - o);
    auto term = [&](double p) { return bce_loss(Tensor::vector({p}), Tensor::vector({y})).item(); };
    CHECK(term(closer) <= term(o) + 1e-15);
  }
}

TEST_CASE("decode") {
  SUBCASE("single proposal passes through clamped") {
    auto out = manual_output({{0.8, 0.9}}, {0.6}, {-0.1, 0.5});
    auto d = decode(out, 5);
    REQUIRE(d.size() == 1);
    CHECK(d[0].segment.start == doctest::Approx(0.7));
    CHECK(d[0].segment.end == 1.0);
    CHECK(d[0].score == 0.6);
  }
  SUBCASE("identical segments keep the higher score") {
    auto out = manual_output({{0.2, 0.4}, {0.2, 0.4}}, {0.3, 0.7}, {0, 0, 0, 0});
    auto d = decode(out, 5);
    REQUIRE(d.size() == 1);
    CHECK(d[0].score == 0.7);
  }
  SUBCASE("reversed and collapsed predictions are repaired") {
    auto out = manual_output({{0.2, 0.4}, {0.5, 0.6}}, {0.9, 0.8}, {0.5, -0.3, 0.7, 0.6});
    auto d = decode(out, 5, 1.5);
    REQUIRE(d.size() == 2);
    CHECK(d[0].segment.start == doctest::Approx(0.1));
    CHECK(d[0].segment.end == doctest::Approx(0.7));
    CHECK(d[1].segment == Segment{0.5, 0.6});
  }
}

TEST_CASE("greedy NMS matches a brute-force oracle and never emits empty segments") {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Segment> segs;
    std::vector<double> scores, offsets;
    for (int i = 0; i < 10; ++i) {
      const double a = rng.uniform(0, 0.9);
      segs.push_back({a, a + rng.uniform(0.02, 1.0 - a)});
      scores.push_back(rng.uniform(0.01, 0.99));
      offsets.push_back(rng.uniform(-0.3, 0.3));
      offsets.push_back(rng.uniform(-0.3, 0.3));
    }
    auto out = manual_output(segs, scores, offsets);
    auto got = decode(out, 10, 0.5);

    // Oracle: rank indices by score, decode each independently, then mark
    // index i kept iff no earlier kept index overlaps it at IoU >= 0.5.
    std::vector<std::size_t> order(10);
    for (std::size_t i = 0; i < 10; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
    std::vector<Segment> dec(10);
    for (std::size_t i = 0; i < 10; ++i) {
      double s = std::min(1.0, std::max(0.0, segs[i].start + offsets[2 * i]));
      double e = std::min(1.0, std::max(0.0, segs[i].end + offsets[2 * i + 1]));
      if (e < s) std::swap(s, e);
      dec[i] = e > s ? Segment{s, e} : segs[i];
    }
    std::vector<bool> kept(10, false);
    std::vector<Segment> want;
    for (std::size_t r = 0; r < 10; ++r) {
      bool ok = true;
      for (std::size_t p = 0; p < r; ++p) {
        if (kept[p] && iou(dec[order[p]], dec[order[r]]) >= 0.5) ok = false;
      }
      kept[r] = ok;
      if (ok) want.push_back(dec[order[r]]);
    }
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      CHECK(got[i].segment == want[i]);
      CHECK(got[i].segment.length() > 0.0);
      if (i) CHECK(got[i - 1].score >= got[i].score);
    }
  }
}
