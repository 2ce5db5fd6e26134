#pragma once

#include <vector>

#include "sfa/tensor.hpp"

namespace sfa {

// Differentiable ops. All of them validate shapes eagerly and register a
// backward closure on the tape when some input requires grad.

Tensor matmul(const Tensor& a, const Tensor& b);  // [m x k] . [k x n]
Tensor transpose(const Tensor& a);                // 2-d
Tensor add(const Tensor& a, const Tensor& b);     // same shape
Tensor mul(const Tensor& a, const Tensor& b);     // elementwise, same shape
Tensor scale(const Tensor& a, double c);
Tensor add_bias(const Tensor& a, const Tensor& b);  // [m x n] + [n]

// Softmax along the last axis, stabilized by the per-slice max.
Tensor softmax(const Tensor& a);

// Normalizes each slice along the last axis to mean 0 / variance 1, then
// applies the per-channel affine (gamma, beta), both of shape [n].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-6);

// Exact-erf form x * Phi(x).
Tensor gelu(const Tensor& x);

// Mean over rows of -log softmax(logits)[label]. With label_smoothing s the
// target distribution is s/C + (1 - s) * onehot.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                     double label_smoothing = 0.0);

Tensor sum_all(const Tensor& x);                 // scalar
Tensor mean_rows(const Tensor& x);               // [m x n] -> [1 x n]
Tensor slice_rows(const Tensor& x, int r0, int len);
Tensor slice_cols(const Tensor& x, int c0, int len);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);

}  // namespace sfa
