#include "marn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace marn {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

Tensor finish(const char* op, Shape shape, std::vector<double> value, std::vector<NodePtr> inputs,
              std::function<void(Node&)> backward) {
  if (finite_check_enabled()) {
    for (double v : value) {
      if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
    }
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->seq = detail::next_seq();
  node->op = op;
  const bool needs = grad_enabled() &&
                     std::any_of(inputs.begin(), inputs.end(),
                                 [](const NodePtr& n) { return n->requires_grad; });
  if (needs) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return Tensor::wrap(std::move(node));
}

const NodePtr& node_of(const Tensor& t) {
  if (!t.defined()) throw std::logic_error("undefined tensor passed to op");
  return t.node();
}

// Returns the input's gradient buffer, or nullptr when it takes no gradient.
double* grad_of(Node& self, std::size_t i) {
  auto& in = *self.inputs[i];
  if (!in.requires_grad) return nullptr;
  in.ensure_grad();
  return in.grad.data();
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis, const char* op) {
  if (axis >= s.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for " +
                         shape_str(s));
  }
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

template <class Fwd, class Deriv>
Tensor unary(const char* op, const Tensor& x, Fwd fwd, Deriv deriv) {
  const auto& in = node_of(x)->value;
  std::vector<double> out(in.size());
  std::transform(in.begin(), in.end(), out.begin(), fwd);
  return finish(op, x.shape(), std::move(out), {x.node()}, [deriv](Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    const auto& xin = self.inputs[0]->value;
    for (std::size_t i = 0; i < xin.size(); ++i) {
      gx[i] += self.grad[i] * deriv(xin[i], self.value[i]);
    }
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const auto m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n);
  MMap(out.data(), m, n).noalias() =
      CMap(a.values().data(), m, k) * CMap(b.values().data(), k, n);
  return finish("matmul", {m, n}, std::move(out), {a.node(), b.node()}, [m, k, n](Node& self) {
    CMap dc(self.grad.data(), m, n);
    if (double* ga = grad_of(self, 0)) {
      MMap(ga, m, k).noalias() += dc * CMap(self.inputs[1]->value.data(), k, n).transpose();
    }
    if (double* gb = grad_of(self, 1)) {
      MMap(gb, k, n).noalias() += CMap(self.inputs[0]->value.data(), m, k).transpose() * dc;
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + "^T");
  }
  const auto m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<double> out(m * n);
  MMap(out.data(), m, n).noalias() =
      CMap(a.values().data(), m, k) * CMap(b.values().data(), n, k).transpose();
  return finish("matmul_nt", {m, n}, std::move(out), {a.node(), b.node()},
                [m, k, n](Node& self) {
                  CMap dc(self.grad.data(), m, n);
                  if (double* ga = grad_of(self, 0)) {
                    MMap(ga, m, k).noalias() += dc * CMap(self.inputs[1]->value.data(), n, k);
                  }
                  if (double* gb = grad_of(self, 1)) {
                    MMap(gb, n, k).noalias() +=
                        dc.transpose() * CMap(self.inputs[0]->value.data(), m, k);
                  }
                });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  const auto& x = a.node()->value;
  const auto& y = b.node()->value;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return finish("add", a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    for (std::size_t j = 0; j < 2; ++j) {
      if (double* g = grad_of(self, j)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  const auto& x = a.node()->value;
  const auto& y = b.node()->value;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return finish("sub", a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (double* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  const auto& x = a.node()->value;
  const auto& y = b.node()->value;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return finish("mul", a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    const auto& xv = self.inputs[0]->value;
    const auto& yv = self.inputs[1]->value;
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * yv[i];
    }
    if (double* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * xv[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      "scale", a, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor tanh(const Tensor& x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0 ? v : 0.0; },
      [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  Shape out_shape = parts[0].shape();
  if (axis >= out_shape.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " invalid for " +
                         shape_str(out_shape));
  }
  std::vector<std::size_t> lens;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    bool ok = s.size() == out_shape.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) {
      if (d != axis && s[d] != out_shape[d]) ok = false;
    }
    if (!ok) {
      throw DimensionError("concat: incompatible shapes " + shape_str(out_shape) + " and " +
                           shape_str(s) + " on axis " + std::to_string(axis));
    }
    lens.push_back(s[axis]);
    total += s[axis];
  }
  out_shape[axis] = total;
  const auto split = split_axis(out_shape, axis, "concat");
  std::vector<double> out(shape_numel(out_shape));
  std::vector<NodePtr> inputs;
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& v = parts[p].node()->value;
    const std::size_t chunk = lens[p] * split.inner;
    for (std::size_t o = 0; o < split.outer; ++o) {
      std::copy_n(v.begin() + o * chunk, chunk,
                  out.begin() + o * total * split.inner + offset * split.inner);
    }
    offset += lens[p];
    inputs.push_back(parts[p].node());
  }
  return finish("concat", std::move(out_shape), std::move(out), std::move(inputs),
                [lens, split, total](Node& self) {
                  std::size_t off = 0;
                  for (std::size_t p = 0; p < lens.size(); ++p) {
                    const std::size_t chunk = lens[p] * split.inner;
                    if (double* g = grad_of(self, p)) {
                      for (std::size_t o = 0; o < split.outer; ++o) {
                        const double* src = self.grad.data() + o * total * split.inner +
                                            off * split.inner;
                        double* dst = g + o * chunk;
                        for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                      }
                    }
                    off += lens[p];
                  }
                });
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor sum(const Tensor& x) {
  const auto& v = node_of(x)->value;
  const double s = std::accumulate(v.begin(), v.end(), 0.0);
  return finish("sum", {1}, {s}, {x.node()}, [](Node& self) {
    if (double* g = grad_of(self, 0)) {
      const double d = self.grad[0];
      for (std::size_t i = 0; i < self.inputs[0]->value.size(); ++i) g[i] += d;
    }
  });
}

namespace {

Tensor reduce_axis(const char* op, const Tensor& x, std::size_t axis, double factor) {
  const auto split = split_axis(x.shape(), axis, op);
  Shape out_shape;
  for (std::size_t d = 0; d < x.rank(); ++d) {
    if (d != axis) out_shape.push_back(x.shape()[d]);
  }
  if (out_shape.empty()) out_shape.push_back(1);
  const auto& v = x.node()->value;
  std::vector<double> out(split.outer * split.inner, 0.0);
  for (std::size_t o = 0; o < split.outer; ++o) {
    for (std::size_t l = 0; l < split.len; ++l) {
      const double* src = v.data() + (o * split.len + l) * split.inner;
      double* dst = out.data() + o * split.inner;
      for (std::size_t i = 0; i < split.inner; ++i) dst[i] += src[i];
    }
  }
  for (auto& o : out) o *= factor;
  return finish(op, std::move(out_shape), std::move(out), {x.node()}, [split, factor](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t o = 0; o < split.outer; ++o) {
      for (std::size_t l = 0; l < split.len; ++l) {
        double* dst = g + (o * split.len + l) * split.inner;
        const double* src = self.grad.data() + o * split.inner;
        for (std::size_t i = 0; i < split.inner; ++i) dst[i] += factor * src[i];
      }
    }
  });
}

}  // namespace

Tensor sum(const Tensor& x, std::size_t axis) { return reduce_axis("sum_axis", x, axis, 1.0); }

Tensor mean(const Tensor& x, std::size_t axis) {
  return reduce_axis("mean_axis", x, axis, 1.0 / static_cast<double>(x.dim(axis)));
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const auto m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  MMap(out.data(), n, m) = CMap(x.values().data(), m, n).transpose();
  return finish("transpose", {n, m}, std::move(out), {x.node()}, [m, n](Node& self) {
    if (double* g = grad_of(self, 0)) {
      MMap(g, m, n) += CMap(self.grad.data(), n, m).transpose();
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
  }
  const auto& v = x.node()->value;
  return finish("reshape", std::move(shape), std::vector<double>(v.begin(), v.end()), {x.node()},
                [](Node& self) {
                  if (double* g = grad_of(self, 0)) {
                    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
                  }
                });
}

Tensor broadcast_rows(const Tensor& row, std::size_t rows) {
  require_rank(row, 1, "broadcast_rows");
  if (rows == 0) throw DimensionError("broadcast_rows: zero rows");
  const auto n = row.numel();
  const auto& v = row.node()->value;
  std::vector<double> out(rows * n);
  for (std::size_t r = 0; r < rows; ++r) std::copy(v.begin(), v.end(), out.begin() + r * n);
  return finish("broadcast_rows", {rows, n}, std::move(out), {row.node()},
                [rows, n](Node& self) {
                  if (double* g = grad_of(self, 0)) {
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[r * n + j];
                    }
                  }
                });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  require_rank(x, 2, "add_row");
  require_rank(row, 1, "add_row");
  const auto m = x.rows(), n = x.cols();
  if (row.numel() != n) {
    throw DimensionError("add_row: row " + shape_str(row.shape()) + " does not fit " +
                         shape_str(x.shape()));
  }
  const auto& xv = x.node()->value;
  const auto& rv = row.node()->value;
  std::vector<double> out(m * n);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = xv[r * n + j] + rv[j];
  }
  return finish("add_row", x.shape(), std::move(out), {x.node(), row.node()},
                [m, n](Node& self) {
                  if (double* g = grad_of(self, 0)) {
                    for (std::size_t i = 0; i < m * n; ++i) g[i] += self.grad[i];
                  }
                  if (double* g = grad_of(self, 1)) {
                    for (std::size_t r = 0; r < m; ++r) {
                      for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[r * n + j];
                    }
                  }
                });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  if (table.rank() != 1 && table.rank() != 2) {
    throw DimensionError("gather_rows: expected vector or matrix, got " +
                         shape_str(table.shape()));
  }
  if (ids.empty()) throw DimensionError("gather_rows: empty id list");
  const auto rows = table.shape()[0];
  const auto width = table.rank() == 2 ? table.shape()[1] : 1;
  for (auto id : ids) {
    if (id >= rows) {
      throw DimensionError("gather_rows: id " + std::to_string(id) + " out of range for " +
                           shape_str(table.shape()));
    }
  }
  const auto& v = table.node()->value;
  std::vector<double> out(ids.size() * width);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(v.begin() + ids[i] * width, width, out.begin() + i * width);
  }
  Shape out_shape = table.rank() == 2 ? Shape{ids.size(), width} : Shape{ids.size()};
  return finish("gather_rows", std::move(out_shape), std::move(out), {table.node()},
                [idx = std::vector<std::size_t>(ids.begin(), ids.end()), width](Node& self) {
                  double* g = grad_of(self, 0);
                  if (!g) return;
                  for (std::size_t i = 0; i < idx.size(); ++i) {
                    for (std::size_t j = 0; j < width; ++j) {
                      g[idx[i] * width + j] += self.grad[i * width + j];
                    }
                  }
                });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.rank() == 0 || begin >= end || end > x.shape()[0]) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for " + shape_str(x.shape()));
  }
  const auto width = x.numel() / x.shape()[0];
  Shape out_shape = x.shape();
  out_shape[0] = end - begin;
  const auto& v = x.node()->value;
  std::vector<double> out(v.begin() + begin * width, v.begin() + end * width);
  return finish("slice_rows", std::move(out_shape), std::move(out), {x.node()},
                [begin, width](Node& self) {
                  if (double* g = grad_of(self, 0)) {
                    double* dst = g + begin * width;
                    for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += self.grad[i];
                  }
                });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank(x, 2, "slice_cols");
  const auto m = x.rows(), n = x.cols();
  if (begin >= end || end > n) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for " + shape_str(x.shape()));
  }
  const auto w = end - begin;
  const auto& v = x.node()->value;
  std::vector<double> out(m * w);
  for (std::size_t r = 0; r < m; ++r) {
    std::copy_n(v.begin() + r * n + begin, w, out.begin() + r * w);
  }
  return finish("slice_cols", {m, w}, std::move(out), {x.node()}, [m, n, w, begin](Node& self) {
    if (double* g = grad_of(self, 0)) {
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t j = 0; j < w; ++j) g[r * n + begin + j] += self.grad[r * w + j];
      }
    }
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto split = split_axis(x.shape(), axis, "softmax");
  const auto& v = x.node()->value;
  std::vector<double> out(v.size());
  for (std::size_t o = 0; o < split.outer; ++o) {
    for (std::size_t i = 0; i < split.inner; ++i) {
      const std::size_t base = o * split.len * split.inner + i;
      double mx = v[base];
      for (std::size_t l = 1; l < split.len; ++l) mx = std::max(mx, v[base + l * split.inner]);
      double z = 0.0;
      for (std::size_t l = 0; l < split.len; ++l) {
        const double e = std::exp(v[base + l * split.inner] - mx);
        out[base + l * split.inner] = e;
        z += e;
      }
      for (std::size_t l = 0; l < split.len; ++l) out[base + l * split.inner] /= z;
    }
  }
  return finish("softmax", x.shape(), std::move(out), {x.node()}, [split](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    const auto& y = self.value;
    for (std::size_t o = 0; o < split.outer; ++o) {
      for (std::size_t i = 0; i < split.inner; ++i) {
        const std::size_t base = o * split.len * split.inner + i;
        double dot = 0.0;
        for (std::size_t l = 0; l < split.len; ++l) {
          const auto at = base + l * split.inner;
          dot += self.grad[at] * y[at];
        }
        for (std::size_t l = 0; l < split.len; ++l) {
          const auto at = base + l * split.inner;
          g[at] += y[at] * (self.grad[at] - dot);
        }
      }
    }
  });
}

Tensor scale_rows(const Tensor& x, const Tensor& w) {
  require_rank(x, 2, "scale_rows");
  require_rank(w, 1, "scale_rows");
  const auto m = x.rows(), n = x.cols();
  if (w.numel() != m) {
    throw DimensionError("scale_rows: weights " + shape_str(w.shape()) + " do not match " +
                         shape_str(x.shape()));
  }
  const auto& xv = x.node()->value;
  const auto& wv = w.node()->value;
  std::vector<double> out(m * n);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = xv[r * n + j] * wv[r];
  }
  return finish("scale_rows", x.shape(), std::move(out), {x.node(), w.node()},
                [m, n](Node& self) {
                  const auto& xin = self.inputs[0]->value;
                  const auto& win = self.inputs[1]->value;
                  if (double* g = grad_of(self, 0)) {
                    for (std::size_t r = 0; r < m; ++r) {
                      for (std::size_t j = 0; j < n; ++j) g[r * n + j] += self.grad[r * n + j] * win[r];
                    }
                  }
                  if (double* g = grad_of(self, 1)) {
                    for (std::size_t r = 0; r < m; ++r) {
                      double acc = 0.0;
                      for (std::size_t j = 0; j < n; ++j) acc += self.grad[r * n + j] * xin[r * n + j];
                      g[r] += acc;
                    }
                  }
                });
}

Tensor sum_row_groups(const Tensor& x, std::size_t group) {
  require_rank(x, 2, "sum_row_groups");
  const auto m = x.rows(), n = x.cols();
  if (group == 0 || m % group != 0) {
    throw DimensionError("sum_row_groups: " + std::to_string(m) + " rows not divisible into groups of " +
                         std::to_string(group));
  }
  const auto g_count = m / group;
  const auto& v = x.node()->value;
  std::vector<double> out(g_count * n, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    const auto gi = r / group;
    for (std::size_t j = 0; j < n; ++j) out[gi * n + j] += v[r * n + j];
  }
  return finish("sum_row_groups", {g_count, n}, std::move(out), {x.node()},
                [m, n, group](Node& self) {
                  if (double* g = grad_of(self, 0)) {
                    for (std::size_t r = 0; r < m; ++r) {
                      const auto gi = r / group;
                      for (std::size_t j = 0; j < n; ++j) g[r * n + j] += self.grad[gi * n + j];
                    }
                  }
                });
}

Tensor cosine_rows(const Tensor& x, const Tensor& y) {
  require_rank(x, 2, "cosine_rows");
  require_rank(y, 1, "cosine_rows");
  const auto m = x.rows(), n = x.cols();
  if (y.numel() != n) {
    throw DimensionError("cosine_rows: " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
  }
  const auto& xv = x.node()->value;
  const auto& yv = y.node()->value;
  double ynorm = 0.0;
  for (double v : yv) ynorm += v * v;
  ynorm = std::sqrt(ynorm);
  std::vector<double> norms(m);
  std::vector<double> out(m, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    double nn = 0.0, dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      nn += xv[r * n + j] * xv[r * n + j];
      dot += xv[r * n + j] * yv[j];
    }
    norms[r] = std::sqrt(nn);
    if (norms[r] > 0.0 && ynorm > 0.0) out[r] = dot / (norms[r] * ynorm);
  }
  return finish("cosine_rows", {m}, std::move(out), {x.node(), y.node()},
                [m, n, ynorm, norms = std::move(norms)](Node& self) {
                  if (ynorm == 0.0) return;
                  const auto& xin = self.inputs[0]->value;
                  const auto& yin = self.inputs[1]->value;
                  double* gx = grad_of(self, 0);
                  double* gy = grad_of(self, 1);
                  for (std::size_t r = 0; r < m; ++r) {
                    if (norms[r] == 0.0) continue;
                    const double c = self.value[r];
                    const double d = self.grad[r];
                    const double inv = 1.0 / (norms[r] * ynorm);
                    for (std::size_t j = 0; j < n; ++j) {
                      const double xr = xin[r * n + j];
                      if (gx) gx[r * n + j] += d * (yin[j] * inv - c * xr / (norms[r] * norms[r]));
                      if (gy) gy[j] += d * (xr * inv - c * yin[j] / (ynorm * ynorm));
                    }
                  }
                });
}

Tensor bce_loss(const Tensor& pred, const Tensor& target) {
  require_same(pred, target, "bce_loss");
  const auto& p = pred.node()->value;
  const auto& t = target.node()->value;
  for (double v : t) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument("bce_loss: label " + std::to_string(v) + " outside [0, 1]");
    }
  }
  const double count = static_cast<double>(p.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pc = std::clamp(p[i], kProbClamp, 1.0 - kProbClamp);
    total -= t[i] * std::log(pc) + (1.0 - t[i]) * std::log(1.0 - pc);
  }
  return finish("bce_loss", {1}, {total / count}, {pred.node(), target.node()},
                [count](Node& self) {
                  double* g = grad_of(self, 0);
                  if (!g) return;
                  const auto& pv = self.inputs[0]->value;
                  const auto& tv = self.inputs[1]->value;
                  const double d = self.grad[0] / count;
                  for (std::size_t i = 0; i < pv.size(); ++i) {
                    if (pv[i] <= kProbClamp || pv[i] >= 1.0 - kProbClamp) continue;
                    g[i] += d * (-tv[i] / pv[i] + (1.0 - tv[i]) / (1.0 - pv[i]));
                  }
                });
}

Tensor smooth_l1(const Tensor& x) {
  return unary(
      "smooth_l1", x,
      [](double v) {
        const double a = std::abs(v);
        return a < 1.0 ? 0.5 * v * v : a - 0.5;
      },
      [](double v, double) {
        if (std::abs(v) < 1.0) return v;
        return v > 0 ? 1.0 : -1.0;
      });
}

}  // namespace marn
