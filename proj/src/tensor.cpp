#include "spoter/tensor.hpp"

#include "spoter/errors.hpp"

namespace spoter {

const Matrix& Tensor::value() const {
  if (!node_) throw ShapeError("use of an empty tensor handle");
  return node_->value();
}

const Matrix& Tensor::grad() const {
  if (!node_) throw ShapeError("use of an empty tensor handle");
  if (!node_->requires_grad) throw ShapeError("grad() on a tensor without requires_grad");
  return node_->grad;
}

bool Tensor::requires_grad() const {
  if (!node_) throw ShapeError("use of an empty tensor handle");
  return node_->requires_grad;
}

Tensor Tape::leaf(Matrix v, bool requires_grad) {
  detail::TapeNode node;
  node.owned = std::move(v);
  node.requires_grad = requires_grad;
  if (requires_grad) node.grad = Matrix::Zero(node.owned.rows(), node.owned.cols());
  nodes_.push_back(std::move(node));
  return Tensor(&nodes_.back(), this);
}

Tensor Tape::param(const Matrix& stable_storage) {
  detail::TapeNode node;
  node.external = &stable_storage;
  node.requires_grad = true;
  node.grad = Matrix::Zero(stable_storage.rows(), stable_storage.cols());
  nodes_.push_back(std::move(node));
  return Tensor(&nodes_.back(), this);
}

Tensor Tape::make(Matrix value, bool requires_grad, std::function<void(const Matrix&)> fn,
                  const char* op_name) {
  if (!value.allFinite()) {
    throw NumericError(std::string(op_name) + " produced a non-finite value");
  }
  detail::TapeNode node;
  node.owned = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) {
    node.grad = Matrix::Zero(node.owned.rows(), node.owned.cols());
    node.backprop = std::move(fn);
  }
  nodes_.push_back(std::move(node));
  return Tensor(&nodes_.back(), this);
}

void Tape::backward(const Tensor& loss) {
  if (spent_) throw ShapeError("backward() called twice on the same tape");
  if (loss.tape_ != this) throw ShapeError("loss tensor does not belong to this tape");
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ShapeError("backward() requires a 1x1 loss tensor");
  }
  if (!loss.node_->requires_grad) {
    throw ShapeError("backward() on a loss that requires no gradient");
  }

  loss.node_->grad(0, 0) = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->requires_grad && it->backprop) it->backprop(it->grad);
  }
  // Clear the op record; values and grads remain readable.
  for (auto& n : nodes_) n.backprop = nullptr;
  spent_ = true;
}

namespace detail {

void check_same_tape(const Tensor& a, const Tensor& b) {
  if (tape_of(a) != tape_of(b)) {
    throw ShapeError("operands belong to different tapes");
  }
}

Tape* tape_of(const Tensor& t) { return t.tape_; }

TapeNode* node_of(const Tensor& t) { return t.node_; }

}  // namespace detail

}  // namespace spoter
