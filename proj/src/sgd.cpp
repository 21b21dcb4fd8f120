#include "spoter/sgd.hpp"

#include "spoter/errors.hpp"

namespace spoter {

void sgd_step(Matrix& param, const Matrix& grad, double lr, double momentum,
              double weight_decay, Matrix& velocity) {
  if (param.rows() != grad.rows() || param.cols() != grad.cols()) {
    throw ShapeError("sgd_step: parameter and gradient shapes disagree");
  }
  Matrix effective = grad;
  if (weight_decay != 0.0) effective += weight_decay * param;
  if (momentum != 0.0) {
    if (velocity.size() == 0) velocity = Matrix::Zero(param.rows(), param.cols());
    if (velocity.rows() != param.rows() || velocity.cols() != param.cols()) {
      throw ShapeError("sgd_step: velocity shape disagrees with parameter");
    }
    velocity = momentum * velocity + effective;
    param -= lr * velocity;
  } else {
    param -= lr * effective;
  }
}

void sgd_step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads,
              double lr, double momentum, double weight_decay, SgdState& state) {
  if (params.size() != grads.size()) {
    throw ShapeError("sgd_step: parameter and gradient counts disagree");
  }
  if (state.velocity.size() != params.size()) state.velocity.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    sgd_step(*params[i], *grads[i], lr, momentum, weight_decay, state.velocity[i]);
  }
}

}  // namespace spoter
