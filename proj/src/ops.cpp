#include "spoter/ops.hpp"

#include <cmath>
#include <string>

#include "spoter/errors.hpp"

namespace spoter {

using detail::accumulate;
using detail::check_same_tape;
using detail::node_of;
using detail::tape_of;

namespace {

std::string shape_str(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions disagree (" + shape_str(a) + " vs " +
                     shape_str(b) + ")");
  }
  auto* na = node_of(a);
  auto* nb = node_of(b);
  const bool rg = a.requires_grad() || b.requires_grad();
  return tape_of(a)->make(
      na->value() * nb->value(), rg,
      [na, nb](const Matrix& up) {
        accumulate(na, up * nb->value().transpose());
        accumulate(nb, na->value().transpose() * up);
      },
      "matmul");
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("add: shapes disagree (" + shape_str(a) + " vs " + shape_str(b) + ")");
  }
  auto* na = node_of(a);
  auto* nb = node_of(b);
  const bool rg = a.requires_grad() || b.requires_grad();
  return tape_of(a)->make(
      na->value() + nb->value(), rg,
      [na, nb](const Matrix& up) {
        accumulate(na, up);
        accumulate(nb, up);
      },
      "add");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("mul: shapes disagree (" + shape_str(a) + " vs " + shape_str(b) + ")");
  }
  auto* na = node_of(a);
  auto* nb = node_of(b);
  const bool rg = a.requires_grad() || b.requires_grad();
  return tape_of(a)->make(
      na->value().cwiseProduct(nb->value()), rg,
      [na, nb](const Matrix& up) {
        accumulate(na, up.cwiseProduct(nb->value()));
        accumulate(nb, up.cwiseProduct(na->value()));
      },
      "mul");
}

Tensor scale(const Tensor& x, Scalar c) {
  auto* nx = node_of(x);
  return tape_of(x)->make(
      nx->value() * c, x.requires_grad(),
      [nx, c](const Matrix& up) { accumulate(nx, up * c); }, "scale");
}

Tensor transpose(const Tensor& x) {
  auto* nx = node_of(x);
  return tape_of(x)->make(
      nx->value().transpose(), x.requires_grad(),
      [nx](const Matrix& up) { accumulate(nx, up.transpose()); }, "transpose");
}

Tensor relu(const Tensor& x) {
  auto* nx = node_of(x);
  return tape_of(x)->make(
      nx->value().cwiseMax(0.0), x.requires_grad(),
      [nx](const Matrix& up) {
        accumulate(nx, ((nx->value().array() > 0.0).cast<double>() * up.array()).matrix());
      },
      "relu");
}

Tensor sum(const Tensor& x) {
  auto* nx = node_of(x);
  Matrix v(1, 1);
  v(0, 0) = nx->value().sum();
  return tape_of(x)->make(
      std::move(v), x.requires_grad(),
      [nx](const Matrix& up) {
        accumulate(nx, Matrix::Constant(nx->value().rows(), nx->value().cols(), up(0, 0)));
      },
      "sum");
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  bool rg = false;
  for (const auto& p : parts) {
    check_same_tape(parts.front(), p);
    if (p.cols() != cols) throw ShapeError("concat_rows: column counts disagree");
    rows += p.rows();
    rg = rg || p.requires_grad();
  }
  Matrix v(rows, cols);
  std::vector<detail::TapeNode*> nodes;
  nodes.reserve(parts.size());
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    v.middleRows(r, p.rows()) = p.value();
    nodes.push_back(node_of(p));
    r += p.rows();
  }
  return tape_of(parts.front())
      ->make(
          std::move(v), rg,
          [nodes](const Matrix& up) {
            Eigen::Index r = 0;
            for (auto* n : nodes) {
              accumulate(n, up.middleRows(r, n->value().rows()));
              r += n->value().rows();
            }
          },
          "concat_rows");
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  bool rg = false;
  for (const auto& p : parts) {
    check_same_tape(parts.front(), p);
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts disagree");
    cols += p.cols();
    rg = rg || p.requires_grad();
  }
  Matrix v(rows, cols);
  std::vector<detail::TapeNode*> nodes;
  nodes.reserve(parts.size());
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    v.middleCols(c, p.cols()) = p.value();
    nodes.push_back(node_of(p));
    c += p.cols();
  }
  return tape_of(parts.front())
      ->make(
          std::move(v), rg,
          [nodes](const Matrix& up) {
            Eigen::Index c = 0;
            for (auto* n : nodes) {
              accumulate(n, up.middleCols(c, n->value().cols()));
              c += n->value().cols();
            }
          },
          "concat_cols");
}

Tensor slice_cols(const Tensor& x, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 1 || start + count > x.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of " + shape_str(x));
  }
  auto* nx = node_of(x);
  return tape_of(x)->make(
      nx->value().middleCols(start, count), x.requires_grad(),
      [nx, start, count](const Matrix& up) {
        if (nx->requires_grad) nx->grad.middleCols(start, count) += up;
      },
      "slice_cols");
}

Tensor slice_rows(const Tensor& x, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 1 || start + count > x.rows()) {
    throw ShapeError("slice_rows: range [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of " + shape_str(x));
  }
  auto* nx = node_of(x);
  return tape_of(x)->make(
      nx->value().middleRows(start, count), x.requires_grad(),
      [nx, start, count](const Matrix& up) {
        if (nx->requires_grad) nx->grad.middleRows(start, count) += up;
      },
      "slice_rows");
}

Tensor softmax(const Tensor& x, int axis) {
  if (axis != 0 && axis != 1) throw ShapeError("softmax: axis must be 0 or 1");
  auto* nx = node_of(x);
  Matrix y;
  if (axis == 1) {
    Eigen::VectorXd mx = nx->value().rowwise().maxCoeff();
    y = ((nx->value().colwise() - mx).array().exp()).matrix();
    Eigen::VectorXd norm = y.rowwise().sum();
    y.array().colwise() /= norm.array();
  } else {
    Eigen::RowVectorXd mx = nx->value().colwise().maxCoeff();
    y = ((nx->value().rowwise() - mx).array().exp()).matrix();
    Eigen::RowVectorXd norm = y.colwise().sum();
    y.array().rowwise() /= norm.array();
  }
  return tape_of(x)->make(
      y, x.requires_grad(),
      [nx, y, axis](const Matrix& up) {
        if (!nx->requires_grad) return;
        // dx = y .* (up - <up, y> per slice)
        if (axis == 1) {
          Eigen::VectorXd dot = (up.array() * y.array()).rowwise().sum();
          nx->grad += (y.array() * (up.array().colwise() - dot.array())).matrix();
        } else {
          Eigen::RowVectorXd dot = (up.array() * y.array()).colwise().sum();
          nx->grad += (y.array() * (up.array().rowwise() - dot.array())).matrix();
        }
      },
      "softmax");
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  check_same_tape(x, w);
  check_same_tape(x, b);
  if (x.cols() != w.rows()) {
    throw ShapeError("linear: input width " + std::to_string(x.cols()) +
                     " does not match weight rows " + std::to_string(w.rows()));
  }
  if (b.rows() != 1 || b.cols() != w.cols()) {
    throw ShapeError("linear: bias must be 1x" + std::to_string(w.cols()));
  }
  auto* nx = node_of(x);
  auto* nw = node_of(w);
  auto* nb = node_of(b);
  const bool rg = x.requires_grad() || w.requires_grad() || b.requires_grad();
  Matrix v = nx->value() * nw->value();
  v.rowwise() += nb->value().row(0);
  return tape_of(x)->make(
      std::move(v), rg,
      [nx, nw, nb](const Matrix& up) {
        accumulate(nx, up * nw->value().transpose());
        accumulate(nw, nx->value().transpose() * up);
        accumulate(nb, up.colwise().sum());
      },
      "linear");
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Scalar eps) {
  check_same_tape(x, gain);
  check_same_tape(x, bias);
  const Eigen::Index n = x.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw ShapeError("layer_norm: gain and bias must be 1x" + std::to_string(n));
  }
  if (eps <= 0.0) throw ShapeError("layer_norm: eps must be positive");

  auto* nx = node_of(x);
  auto* ng = node_of(gain);
  auto* nb = node_of(bias);

  const Matrix& xv = nx->value();
  Eigen::VectorXd mean = xv.rowwise().mean();
  Matrix centered = xv.colwise() - mean;
  Eigen::VectorXd var = centered.array().square().rowwise().mean().matrix();
  Eigen::VectorXd inv_std = (var.array() + eps).rsqrt().matrix();
  Matrix xhat = (centered.array().colwise() * inv_std.array()).matrix();

  Matrix y = (xhat.array().rowwise() * ng->value().row(0).array()).matrix();
  y.rowwise() += nb->value().row(0);

  const bool rg = x.requires_grad() || gain.requires_grad() || bias.requires_grad();
  return tape_of(x)->make(
      std::move(y), rg,
      [nx, ng, nb, xhat = std::move(xhat), inv_std = std::move(inv_std)](const Matrix& up) {
        accumulate(ng, (up.array() * xhat.array()).colwise().sum().matrix());
        accumulate(nb, up.colwise().sum());
        if (!nx->requires_grad) return;
        // d xhat = up .* gain;
        // dx = inv_std .* (dxhat - mean(dxhat) - xhat .* mean(dxhat .* xhat))
        Matrix dxhat = (up.array().rowwise() * ng->value().row(0).array()).matrix();
        Eigen::VectorXd m1 = dxhat.rowwise().mean();
        Eigen::VectorXd m2 = (dxhat.array() * xhat.array()).rowwise().mean().matrix();
        Matrix dx = (dxhat.array().colwise() - m1.array()).matrix();
        dx.array() -= xhat.array().colwise() * m2.array();
        nx->grad += (dx.array().colwise() * inv_std.array()).matrix();
      },
      "layer_norm");
}

Tensor cross_entropy(const Tensor& logits, int target) {
  const bool row = logits.rows() == 1;
  const bool col = logits.cols() == 1;
  if (!row && !col) throw ShapeError("cross_entropy: logits must be a vector");
  const Eigen::Index n = row ? logits.cols() : logits.rows();
  if (target < 0 || target >= n) {
    throw ShapeError("cross_entropy: target " + std::to_string(target) + " out of [0, " +
                     std::to_string(n) + ")");
  }
  auto* nl = node_of(logits);
  Eigen::VectorXd flat = row ? Eigen::VectorXd(nl->value().row(0).transpose())
                             : Eigen::VectorXd(nl->value().col(0));
  const double mx = flat.maxCoeff();
  const double lse = mx + std::log((flat.array() - mx).exp().sum());
  Matrix v(1, 1);
  v(0, 0) = lse - flat(target);

  return tape_of(logits)->make(
      std::move(v), logits.requires_grad(),
      [nl, target, flat = std::move(flat), mx, lse, row](const Matrix& up) {
        if (!nl->requires_grad) return;
        (void)mx;
        Eigen::VectorXd p = (flat.array() - lse).exp();
        p(target) -= 1.0;
        p *= up(0, 0);
        if (row) {
          nl->grad.row(0) += p.transpose();
        } else {
          nl->grad.col(0) += p;
        }
      },
      "cross_entropy");
}

Tensor dropout(const Tensor& x, Scalar rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ShapeError("dropout: rate must be in [0, 1)");
  if (rate == 0.0) return scale(x, 1.0);
  auto* nx = node_of(x);
  Matrix mask(x.rows(), x.cols());
  const double keep = 1.0 - rate;
  for (Eigen::Index i = 0; i < mask.rows(); ++i) {
    for (Eigen::Index j = 0; j < mask.cols(); ++j) {
      mask(i, j) = rng.uniform() < rate ? 0.0 : 1.0 / keep;
    }
  }
  Matrix dropped = nx->value().cwiseProduct(mask);
  return tape_of(x)->make(
      std::move(dropped), x.requires_grad(),
      [nx, mask = std::move(mask)](const Matrix& up) { accumulate(nx, up.cwiseProduct(mask)); },
      "dropout");
}

}  // namespace spoter
