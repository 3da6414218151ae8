#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "marn/tensor.hpp"

namespace marn {

// Mixes a base seed with a stream label so that independent components
// (data, init, shuffling, individual parameters) draw from unrelated streams.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal(double mean, double stddev) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  bool bernoulli(double p) { return uniform(0.0, 1.0) < p; }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// Constant tensor with entries drawn from U(lo, hi).
Tensor random_uniform(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Ordered, named collection of trainable leaves. Each parameter is initialized
// from its own stream derived from (init seed, name), so two models that share
// a parameter name start from identical values for it.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t init_seed = 0) : init_seed_(init_seed) {}

  Tensor add(std::string name, Tensor value);
  // U(-sqrt(1/fan_in), sqrt(1/fan_in))
  Tensor add_uniform(std::string name, Shape shape, std::size_t fan_in);
  Tensor add_normal(std::string name, Shape shape, double stddev);
  Tensor add_zeros(std::string name, Shape shape);

  Tensor get(std::string_view name) const;
  bool contains(std::string_view name) const;
  std::span<const NamedTensor> items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

  std::uint64_t init_seed() const { return init_seed_; }

 private:
  std::uint64_t init_seed_;
  std::vector<NamedTensor> items_;
};

// Fully connected layer y = x W^T + b with W stored [out x in].
struct Linear {
  Tensor weight;
  Tensor bias;  // undefined when created without bias

  static Linear create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                       bool with_bias = true, bool zero_init = false);
  Tensor operator()(const Tensor& x) const;
  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }
};

}  // namespace marn
