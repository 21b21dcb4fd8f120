#pragma once

#include <deque>
#include <functional>
#include <string>

#include <Eigen/Dense>

namespace spoter {

using Scalar = double;
// Everything on the tape is a dense row-major 2-D array; vectors are
// 1 x n rows and scalars 1 x 1.
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic, Eigen::RowMajor>;

class Tape;
class Tensor;

namespace detail {
struct TapeNode;
Tape* tape_of(const Tensor& t);
TapeNode* node_of(const Tensor& t);

struct TapeNode {
  Matrix owned;                    // empty when external storage is used
  const Matrix* external = nullptr;
  Matrix grad;                     // allocated iff requires_grad
  bool requires_grad = false;
  std::function<void(const Matrix& upstream)> backprop;  // null for leaves

  const Matrix& value() const { return external ? *external : owned; }
};
}  // namespace detail

// Handle to one tape node. Cheap to copy; valid for the tape's lifetime.
class Tensor {
public:
  Tensor() = default;

  const Matrix& value() const;
  // Gradient accumulated by Tape::backward. Zero until then.
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const;
  bool valid() const { return node_ != nullptr; }

private:
  friend class Tape;
  friend Tape* detail::tape_of(const Tensor&);
  friend detail::TapeNode* detail::node_of(const Tensor&);
  Tensor(detail::TapeNode* node, Tape* tape) : node_(node), tape_(tape) {}
  detail::TapeNode* node_ = nullptr;
  Tape* tape_ = nullptr;
};

// Define-by-run record of executed primitive ops, rebuilt per forward
// pass. A tape and its tensors are confined to one thread; independent
// tapes may run in parallel.
class Tape {
public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf holding its own copy of v.
  Tensor leaf(Matrix v, bool requires_grad);
  // Leaf viewing caller-owned storage, which must stay alive and unchanged
  // until backward() finishes. Avoids copying parameter arrays per pass.
  Tensor param(const Matrix& stable_storage);
  // Non-differentiable input.
  Tensor constant(Matrix v) { return leaf(std::move(v), false); }

  // Reverse sweep from a 1 x 1 loss: populates grad() of every
  // requires_grad node reachable from it, visiting each node once. The op
  // record is cleared afterwards; values and gradients stay readable but
  // the tape accepts no further backward call.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  bool spent() const { return spent_; }

  // Internal: register an op result. `fn` receives the upstream gradient
  // and must accumulate into the parents' grads.
  Tensor make(Matrix value, bool requires_grad, std::function<void(const Matrix&)> fn,
              const char* op_name);

private:
  std::deque<detail::TapeNode> nodes_;  // stable addresses
  bool spent_ = false;
};

namespace detail {
// Adds g into the node's gradient if it participates in differentiation.
template <typename Expr>
void accumulate(TapeNode* n, const Expr& g) {
  if (n->requires_grad) n->grad += g;
}

void check_same_tape(const Tensor& a, const Tensor& b);
}  // namespace detail

}  // namespace spoter
