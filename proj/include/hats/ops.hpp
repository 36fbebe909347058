#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hats/tensor.hpp"

namespace hats::ops {

// Elementwise arithmetic with numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);

Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);  // exact erf form
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);

// 2-D product op(a)·op(b). Shape errors name both operands.
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);
// Batched 3-D product over the leading axis.
Tensor bmm(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);
Tensor transpose(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_dim(const Tensor& x, std::size_t axis, bool keepdim = false);
Tensor mean_dim(const Tensor& x, std::size_t axis, bool keepdim = false);

// Along the last axis.
Tensor softmax(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
inline Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);

// Gathers rows of x along axis 0.
Tensor index_select(const Tensor& x, std::span<const std::size_t> rows);
// out[rows[i]] += src[i]; output has `count` rows.
Tensor scatter_add_rows(const Tensor& src, std::span<const std::size_t> rows, std::size_t count);

// out[e] = W[rel[e]] · x[e] + b[rel[e]] with W: [R, out, in], b: [R, out].
Tensor relation_linear(const Tensor& x, std::span<const std::size_t> rel, const Tensor& weight,
                       const Tensor& bias);

// Row-wise cosine similarity between a: [n, d] and b: [m, d] -> [n, m].
Tensor cosine_similarity(const Tensor& a, const Tensor& b, double eps = 1e-12);

// Mean over all elements of the stable binary cross-entropy.
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

// Mean over rows of -w_c (1 - p_c)^gamma log p_c, p = softmax(logits).
Tensor softmax_focal_loss(const Tensor& logits, std::span<const std::size_t> labels,
                          std::span<const double> class_weights, double gamma);

}  // namespace hats::ops
