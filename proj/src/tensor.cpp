#include "marn/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

namespace marn {

namespace {

thread_local bool g_grad_enabled = true;
std::atomic<bool> g_finite_check{false};
std::atomic<std::uint64_t> g_seq{0};

}  // namespace

namespace detail {

std::uint64_t next_seq() { return g_seq.fetch_add(1, std::memory_order_relaxed) + 1; }

}  // namespace detail

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

std::shared_ptr<detail::Node> make_leaf(Shape shape, std::vector<double> values) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->seq = detail::next_seq();
  return node;
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) {
  const auto n = shape_numel(shape);
  node_ = make_leaf(std::move(shape), std::vector<double>(n, fill));
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : node_(make_leaf(std::move(shape), std::move(values))) {}

Tensor Tensor::scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

Tensor Tensor::vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

Tensor Tensor::wrap(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

const Shape& Tensor::shape() const {
  if (!node_) throw std::logic_error("undefined tensor");
  return node_->shape;
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("expected a matrix, got " + shape_str(shape()));
  return shape()[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("expected a matrix, got " + shape_str(shape()));
  return shape()[1];
}

std::span<const double> Tensor::values() const& {
  shape();
  return node_->value;
}

std::span<double> Tensor::mutable_values() {
  shape();
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on non-scalar " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t i) const { return values()[i]; }

double Tensor::at(std::size_t i, std::size_t j) const { return node_->value[i * cols() + j]; }

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  shape();
  node_->requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->value.size(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw std::logic_error("tensor has no gradient");
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  shape();
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

const char* Tensor::op_name() const { return node_ ? node_->op : "undefined"; }

Tensor Tensor::detached() const {
  return Tensor(shape(), std::vector<double>(node_->value.begin(), node_->value.end()));
}

void Tensor::backward() const {
  if (numel() != 1) throw DimensionError("backward() needs a scalar, got " + shape_str(shape()));
  if (!node_->requires_grad) return;

  // Shared ownership keeps every node alive until the graph is released.
  std::vector<std::shared_ptr<detail::Node>> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::shared_ptr<detail::Node>> stack{node_};
  while (!stack.empty()) {
    auto n = std::move(stack.back());
    stack.pop_back();
    if (!seen.insert(n.get()).second) continue;
    for (const auto& in : n->inputs) {
      if (in->requires_grad) stack.push_back(in);
    }
    order.push_back(std::move(n));
  }
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a->seq > b->seq; });

  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (const auto& n : order) {
    if (n->backward) n->backward(*n);
  }
  for (const auto& n : order) {
    n->backward = nullptr;
    n->inputs.clear();
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

void set_finite_check(bool on) { g_finite_check.store(on); }
bool finite_check_enabled() { return g_finite_check.load(); }

}  // namespace marn
