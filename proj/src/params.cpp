#include "marn/params.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "marn/ops.hpp"

namespace marn {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : stream) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(seed) ^ h);
}

Tensor random_uniform(Shape shape, Rng& rng, double lo, double hi) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

Tensor ParamStore::add(std::string name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  value.set_requires_grad(true);
  items_.push_back({std::move(name), value});
  return value;
}

Tensor ParamStore::add_uniform(std::string name, Shape shape, std::size_t fan_in) {
  Rng rng(derive_seed(init_seed_, name));
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return add(std::move(name), Tensor(std::move(shape), std::move(v)));
}

Tensor ParamStore::add_normal(std::string name, Shape shape, double stddev) {
  Rng rng(derive_seed(init_seed_, name));
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal(0.0, stddev);
  return add(std::move(name), Tensor(std::move(shape), std::move(v)));
}

Tensor ParamStore::add_zeros(std::string name, Shape shape) {
  return add(std::move(name), Tensor(std::move(shape), 0.0));
}

Tensor ParamStore::get(std::string_view name) const {
  for (const auto& item : items_) {
    if (item.name == name) return item.tensor;
  }
  throw std::out_of_range("unknown parameter: " + std::string(name));
}

bool ParamStore::contains(std::string_view name) const {
  return std::any_of(items_.begin(), items_.end(),
                     [&](const NamedTensor& t) { return t.name == name; });
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& item : items_) n += item.tensor.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& item : items_) item.tensor.zero_grad();
}

Linear Linear::create(ParamStore& store, const std::string& name, std::size_t in,
                      std::size_t out, bool with_bias, bool zero_init) {
  Linear l;
  if (zero_init) {
    l.weight = store.add_zeros(name + ".weight", {out, in});
    if (with_bias) l.bias = store.add_zeros(name + ".bias", {out});
  } else {
    l.weight = store.add_uniform(name + ".weight", {out, in}, in);
    if (with_bias) l.bias = store.add_uniform(name + ".bias", {out}, in);
  }
  return l;
}

Tensor Linear::operator()(const Tensor& x) const {
  auto y = matmul_nt(x, weight);
  return bias.defined() ? add_row(y, bias) : y;
}

}  // namespace marn
