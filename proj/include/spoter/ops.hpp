#pragma once

#include <vector>

#include "spoter/rng.hpp"
#include "spoter/tensor.hpp"

// Differentiable primitives over tape tensors. Free functions; the result
// lives on the operands' tape. Every op validates shapes and rejects
// non-finite results.
namespace spoter {

Tensor matmul(const Tensor& a, const Tensor& b);          // [m x k][k x n] -> [m x n]
Tensor add(const Tensor& a, const Tensor& b);             // same shape
Tensor mul(const Tensor& a, const Tensor& b);             // elementwise
Tensor scale(const Tensor& x, Scalar c);
Tensor transpose(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sum(const Tensor& x);                              // -> 1 x 1

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, Eigen::Index start, Eigen::Index count);
Tensor slice_rows(const Tensor& x, Eigen::Index start, Eigen::Index count);

// Row- (axis 1) or column- (axis 0) wise softmax, computed with
// max-subtraction; each slice sums to 1.
Tensor softmax(const Tensor& x, int axis = 1);

// y = x * w + b with b a 1 x n row replicated over rows.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Row-wise layer normalization with biased variance; gain/bias are 1 x n.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  Scalar eps = 1e-5);

// -log softmax(logits)[target] in fused log-sum-exp form; logits is a
// 1 x n or n x 1 vector, result 1 x 1.
Tensor cross_entropy(const Tensor& logits, int target);

// Inverted dropout; draws one uniform per element. rate = 0 is the
// identity without consuming draws.
Tensor dropout(const Tensor& x, Scalar rate, Rng& rng);

}  // namespace spoter
