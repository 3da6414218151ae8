#include <cmath>

#include "doctest.h"
#include "marn/encoders.hpp"
#include "marn/gradcheck.hpp"
#include "marn/ops.hpp"

using namespace marn;

namespace {

struct VideoInput {
  Tensor local, global, boxes;
};

VideoInput random_video(std::size_t T, std::size_t K, std::size_t d_in, Rng& rng, double range = 1.0) {
  return {random_uniform({T, K, d_in}, rng, -range, range), random_uniform({T, d_in}, rng, -range, range),
          random_uniform({T, K, 4}, rng, 0.0, 1.0)};
}

// Swaps object slots a and b in every frame of a [T x K x C] tensor.
Tensor swap_slots(const Tensor& x, std::size_t a, std::size_t b) {
  const auto T = x.dim(0), K = x.dim(1), C = x.dim(2);
  std::vector<double> v(x.values().begin(), x.values().end());
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < C; ++c) std::swap(v[(t * K + a) * C + c], v[(t * K + b) * C + c]);
  }
  return Tensor(x.shape(), std::move(v));
}

}  // namespace

TEST_CASE("position encoding") {
  auto pe0 = position_encoding(0, 8);
  for (std::size_t i = 0; i < 8; ++i) CHECK(pe0.at(i) == (i % 2 == 0 ? 0.0 : 1.0));
  auto pe1 = position_encoding(1, 8);
  CHECK(pe1.at(0) - pe0.at(0) == doctest::Approx(0.8414709848078965).epsilon(1e-15));
  for (std::size_t t = 0; t < 50; ++t) {
    const auto pe = position_encoding(t, 16);
    for (double v : pe.values()) CHECK(std::abs(v) <= 1.0);
  }
  CHECK_THROWS_AS(position_encoding(3, 7), std::invalid_argument);
  auto table = position_table(5, 6);
  CHECK(table.shape() == Shape{5, 6});
  CHECK(table.at(3, 4) == position_encoding(3, 6).at(4));
}

TEST_CASE("video encoder output shapes and global expansion") {
  ParamStore store(1);
  auto enc = StreamEncoder::create(store, "video.appearance", 32, 64);
  Rng rng(2);
  auto in = random_video(32, 4, 32, rng);
  auto F = enc(in.local, in.global, in.boxes);
  CHECK(F.shape() == Shape{128, 64});

  auto expanded = expand_frames(enc.global_features(in.global), 4);
  CHECK(expanded.shape() == Shape{128, 64});
  for (std::size_t t = 0; t < 32; ++t) {
    for (std::size_t k = 1; k < 4; ++k) {
      for (std::size_t d = 0; d < 64; ++d) CHECK(expanded.at(t * 4 + k, d) == expanded.at(t * 4, d));
    }
  }
  auto wrong = random_video(32, 4, 16, rng);
  CHECK_THROWS_AS(enc(wrong.local, wrong.global, wrong.boxes), DimensionError);
  CHECK_THROWS_AS(enc(in.local, in.global, random_uniform({32, 3, 4}, rng)), DimensionError);
}

TEST_CASE("video encoder is equivariant to object slot permutation") {
  ParamStore store(3);
  auto enc = StreamEncoder::create(store, "video.motion", 8, 6);
  Rng rng(4);
  auto in = random_video(5, 3, 8, rng);
  auto F = enc(in.local, in.global, in.boxes);
  auto G = enc(swap_slots(in.local, 0, 2), in.global, swap_slots(in.boxes, 0, 2));
  for (std::size_t t = 0; t < 5; ++t) {
    for (std::size_t d = 0; d < 6; ++d) {
      CHECK(G.at(t * 3 + 0, d) == doctest::Approx(F.at(t * 3 + 2, d)).epsilon(1e-12));
      CHECK(G.at(t * 3 + 1, d) == doctest::Approx(F.at(t * 3 + 1, d)).epsilon(1e-12));
      CHECK(G.at(t * 3 + 2, d) == doctest::Approx(F.at(t * 3 + 0, d)).epsilon(1e-12));
    }
  }
}

TEST_CASE("video encoder outputs stay finite on large inputs") {
  ParamStore store(5);
  auto enc = StreamEncoder::create(store, "video.appearance", 8, 8);
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    auto in = random_video(6, 2, 8, rng, 10.0);
    const auto out = enc(in.local, in.global, in.boxes);
    for (double v : out.values()) CHECK(std::isfinite(v));
  }
}

TEST_CASE("box projection gradient matches finite differences") {
  ParamStore store(7);
  auto enc = StreamEncoder::create(store, "video.appearance", 5, 4);
  Rng rng(8);
  auto in = random_video(3, 2, 5, rng);
  std::vector<Tensor> wrt = {store.get("video.appearance.box_fc.weight"),
                             store.get("video.appearance.box_fc.bias")};
  auto r = check_gradients("box_fc", [&] { return sum(tanh(enc(in.local, in.global, in.boxes))); },
                           wrt);
  INFO("max relative error " << r.max_rel_error);
  CHECK(r.passed);
}

TEST_CASE("query encoder shapes, attention and order sensitivity") {
  ParamStore store(9);
  auto enc = QueryEncoder::create(store, {20, 16, 8});
  std::vector<std::uint32_t> two = {3, 11};
  std::vector<Tensor> attention;
  auto q = enc(two, &attention);
  CHECK(q.words.shape() == Shape{2, 16});
  CHECK(q.global.shape() == Shape{16});
  REQUIRE(attention.size() == 8);
  for (const auto& a : attention) {
    for (std::size_t i = 0; i < 2; ++i) CHECK(a.at(i, 0) + a.at(i, 1) == doctest::Approx(1.0).epsilon(1e-14));
  }

  std::vector<std::uint32_t> query = {1, 5, 9, 2}, swapped = {5, 1, 9, 2};
  auto a = enc(query), b = enc(swapped);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.global.numel(); ++i) diff += std::abs(a.global.at(i) - b.global.at(i));
  CHECK(diff > 1e-9);
  std::vector<std::uint32_t> bad = {1, 20};
  CHECK_THROWS_AS(enc(bad), std::out_of_range);
  CHECK_THROWS_AS(QueryEncoder::create(store, {20, 12, 8}), std::invalid_argument);
}

TEST_CASE("query encoder gradient matches finite differences") {
  ParamStore store(10);
  auto enc = QueryEncoder::create(store, {7, 6, 2});
  std::vector<std::uint32_t> ids = {4, 1, 6};
  std::vector<Tensor> wrt;
  for (const auto& p : store.items()) wrt.push_back(p.tensor);
  auto r = check_gradients("query encoder", [&] {
    auto q = enc(ids);
    return add(sum(tanh(q.words)), sum(mul(q.global, q.global)));
  }, wrt);
  INFO("max relative error " << r.max_rel_error);
  CHECK(r.passed);
}

TEST_CASE("every encoder parameter receives gradient") {
  ParamStore store(11);
  auto app = StreamEncoder::create(store, "video.appearance", 8, 8);
  auto mot = StreamEncoder::create(store, "video.motion", 8, 8);
  auto query = QueryEncoder::create(store, {12, 8, 2});
  Rng rng(12);
  auto a = random_video(4, 3, 8, rng), m = random_video(4, 3, 8, rng);
  std::vector<std::uint32_t> ids = {2, 7, 9};
  auto q = query(ids);
  auto loss = add(add(sum(tanh(app(a.local, a.global, a.boxes))), sum(tanh(mot(m.local, m.global, m.boxes)))),
                  add(sum(tanh(q.words)), sum(tanh(q.global))));
  loss.backward();
  for (const auto& p : store.items()) {
    double mag = 0.0;
    if (p.tensor.has_grad()) {
      for (double g : p.tensor.grad()) mag += std::abs(g);
    }
    INFO(p.name);
    CHECK(mag > 0.0);
  }
}
