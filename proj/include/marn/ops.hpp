#pragma once

// Differentiable operations. All inputs are validated; shape violations throw
// DimensionError naming the offending shapes.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "marn/tensor.hpp"

namespace marn {

// [m x k] . [k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
// [m x k] . [n x k]^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);

Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x, std::size_t axis);

Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

// [n] -> [rows x n], every row a copy of the input.
Tensor broadcast_rows(const Tensor& row, std::size_t rows);
// x[m x n] + row[n] on every row.
Tensor add_row(const Tensor& x, const Tensor& row);

// Selects rows of a matrix (or elements of a vector); gradients scatter-add
// back onto the selected rows only.
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);
inline Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> ids) {
  return gather_rows(table, ids);
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);

// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);

// x[m x n] with row i multiplied by w[i].
Tensor scale_rows(const Tensor& x, const Tensor& w);
// [(g*k) x n] -> [g x n], summing each run of k consecutive rows.
Tensor sum_row_groups(const Tensor& x, std::size_t group);

// Cosine of every row of x[m x n] against y[n]; rows or y with zero norm
// yield 0 (and zero gradient).
Tensor cosine_rows(const Tensor& x, const Tensor& y);

inline constexpr double kProbClamp = 1e-7;

// Mean binary cross-entropy; predictions are clamped to [1e-7, 1 - 1e-7].
// Targets must lie in [0, 1].
Tensor bce_loss(const Tensor& pred, const Tensor& target);

// Elementwise Huber with transition at |x| = 1.
Tensor smooth_l1(const Tensor& x);

}  // namespace marn
