#pragma once

#include <vector>

#include "spoter/tensor.hpp"

namespace spoter {

// Velocity storage for classical momentum; one entry per parameter array,
// sized on first use.
struct SgdState {
  std::vector<Matrix> velocity;
};

// p <- p - lr * (g + weight_decay * p), with a classical momentum velocity
// when momentum > 0: v <- momentum * v + (g + weight_decay * p); p <- p - lr * v.
void sgd_step(Matrix& param, const Matrix& grad, double lr, double momentum,
              double weight_decay, Matrix& velocity);

// Same update over parallel arrays; state.velocity is resized lazily.
void sgd_step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads,
              double lr, double momentum, double weight_decay, SgdState& state);

}  // namespace spoter
