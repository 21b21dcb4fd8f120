#include "spoter/selftest.hpp"

#include <cmath>
#include <functional>

#include "spoter/errors.hpp"
#include "spoter/ops.hpp"
#include "spoter/rng.hpp"

namespace spoter {

namespace {

double rel_err(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
  return std::abs(analytic - numeric) / denom;
}

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double lo = -1.0,
                     double hi = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  }
  return m;
}

// Keeps relu inputs away from the kink at zero.
Matrix away_from_zero(Matrix m, double margin = 0.05) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (std::abs(m(i, j)) < margin) m(i, j) = m(i, j) < 0.0 ? -margin : margin;
    }
  }
  return m;
}

using OpBuilder = std::function<Tensor(Tape&, std::vector<Tensor>&)>;

// Compares the backward pass of `build` against central finite differences
// of its forward pass. The scalar objective is sum(output .* R) with a
// fixed random weighting R, which exercises the full Jacobian.
double check_op(const OpBuilder& build, std::vector<Matrix> inputs, Rng& rng,
                double h = 1e-5) {
  Matrix weight;
  {
    Tape probe;
    std::vector<Tensor> leaves;
    leaves.reserve(inputs.size());
    for (const auto& m : inputs) leaves.push_back(probe.leaf(m, false));
    const Tensor out = build(probe, leaves);
    weight = random_matrix(rng, out.rows(), out.cols());
  }

  auto loss_of = [&](const std::vector<Matrix>& values) {
    Tape tape;
    std::vector<Tensor> leaves;
    leaves.reserve(values.size());
    for (const auto& m : values) leaves.push_back(tape.leaf(m, false));
    const Tensor out = build(tape, leaves);
    return sum(mul(out, tape.constant(weight))).value()(0, 0);
  };

  // Analytic gradients.
  std::vector<Matrix> analytic;
  {
    Tape tape;
    std::vector<Tensor> leaves;
    leaves.reserve(inputs.size());
    for (const auto& m : inputs) leaves.push_back(tape.leaf(m, true));
    const Tensor out = build(tape, leaves);
    const Tensor loss = sum(mul(out, tape.constant(weight)));
    tape.backward(loss);
    for (const auto& leaf : leaves) analytic.push_back(leaf.grad());
  }

  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (Eigen::Index r = 0; r < inputs[i].rows(); ++r) {
      for (Eigen::Index c = 0; c < inputs[i].cols(); ++c) {
        std::vector<Matrix> shifted = inputs;
        shifted[i](r, c) += h;
        const double up = loss_of(shifted);
        shifted[i](r, c) -= 2.0 * h;
        const double down = loss_of(shifted);
        const double numeric = (up - down) / (2.0 * h);
        worst = std::max(worst, rel_err(analytic[i](r, c), numeric));
      }
    }
  }
  return worst;
}

}  // namespace

double model_gradient_max_rel_err(const SpoterConfig& cfg, std::uint64_t seed, double h) {
  Rng rng(seed);
  SpoterParams params = init_params(cfg, rng, InitMode::standard);
  const Matrix frames =
      random_matrix(rng, std::min(cfg.max_frames, 4), cfg.input_dim, 0.0, 1.0);
  const int target = rng.uniform_int(cfg.num_classes);

  auto loss_of = [&]() {
    Tape tape;
    auto fwd = spoter_forward(tape, params, cfg, frames);
    return cross_entropy(fwd.logits, target).value()(0, 0);
  };

  std::vector<Matrix> analytic;
  {
    Tape tape;
    auto fwd = spoter_forward(tape, params, cfg, frames, /*train_mode=*/true);
    const Tensor loss = cross_entropy(fwd.logits, target);
    tape.backward(loss);
    for (const auto& leaf : fwd.leaves) analytic.push_back(leaf.grad());
  }

  double worst = 0.0;
  auto refs = params.enumerate();
  for (std::size_t i = 0; i < refs.size(); ++i) {
    Matrix& m = *refs[i].matrix;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double saved = m(r, c);
        m(r, c) = saved + h;
        const double up = loss_of();
        m(r, c) = saved - h;
        const double down = loss_of();
        m(r, c) = saved;
        const double numeric = (up - down) / (2.0 * h);
        worst = std::max(worst, rel_err(analytic[i](r, c), numeric));
      }
    }
  }
  return worst;
}

std::vector<GradientCheck> run_gradient_checks(const std::optional<std::string>& only_op,
                                               std::optional<double> tol_override,
                                               std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradientCheck> results;

  auto run = [&](const std::string& name, double default_tol, auto&& fn) {
    if (only_op && *only_op != name) return;
    GradientCheck check;
    check.op = name;
    check.threshold = tol_override.value_or(default_tol);
    check.max_rel_err = fn();
    check.pass = check.max_rel_err < check.threshold;
    results.push_back(check);
  };

  constexpr double kOpTol = 1e-6;

  run("matmul", kOpTol, [&] {
    return check_op(
        [](Tape&, std::vector<Tensor>& in) { return matmul(in[0], in[1]); },
        {random_matrix(rng, 3, 4), random_matrix(rng, 4, 5)}, rng);
  });
  run("add", kOpTol, [&] {
    return check_op([](Tape&, std::vector<Tensor>& in) { return add(in[0], in[1]); },
                    {random_matrix(rng, 3, 4), random_matrix(rng, 3, 4)}, rng);
  });
  run("mul", kOpTol, [&] {
    return check_op([](Tape&, std::vector<Tensor>& in) { return mul(in[0], in[1]); },
                    {random_matrix(rng, 3, 4), random_matrix(rng, 3, 4)}, rng);
  });
  run("scale", kOpTol, [&] {
    return check_op([](Tape&, std::vector<Tensor>& in) { return scale(in[0], -2.5); },
                    {random_matrix(rng, 3, 4)}, rng);
  });
  run("transpose", kOpTol, [&] {
    return check_op([](Tape&, std::vector<Tensor>& in) { return transpose(in[0]); },
                    {random_matrix(rng, 3, 4)}, rng);
  });
  run("relu", kOpTol, [&] {
    return check_op([](Tape&, std::vector<Tensor>& in) { return relu(in[0]); },
                    {away_from_zero(random_matrix(rng, 4, 5))}, rng);
  });
  run("sum", kOpTol, [&] {
    return check_op([](Tape&, std::vector<Tensor>& in) { return sum(in[0]); },
                    {random_matrix(rng, 3, 4)}, rng);
  });
  run("concat_rows", kOpTol, [&] {
    return check_op(
        [](Tape&, std::vector<Tensor>& in) { return concat_rows({in[0], in[1]}); },
        {random_matrix(rng, 2, 4), random_matrix(rng, 3, 4)}, rng);
  });
  run("concat_cols", kOpTol, [&] {
    return check_op(
        [](Tape&, std::vector<Tensor>& in) { return concat_cols({in[0], in[1]}); },
        {random_matrix(rng, 3, 2), random_matrix(rng, 3, 4)}, rng);
  });
  run("slice_rows", kOpTol, [&] {
    return check_op([](Tape&, std::vector<Tensor>& in) { return slice_rows(in[0], 1, 2); },
                    {random_matrix(rng, 4, 3)}, rng);
  });
  run("slice_cols", kOpTol, [&] {
    return check_op([](Tape&, std::vector<Tensor>& in) { return slice_cols(in[0], 1, 2); },
                    {random_matrix(rng, 3, 4)}, rng);
  });
  run("softmax", kOpTol, [&] {
    const double rows = check_op(
        [](Tape&, std::vector<Tensor>& in) { return softmax(in[0], 1); },
        {random_matrix(rng, 3, 5, -2.0, 2.0)}, rng);
    const double cols = check_op(
        [](Tape&, std::vector<Tensor>& in) { return softmax(in[0], 0); },
        {random_matrix(rng, 5, 3, -2.0, 2.0)}, rng);
    return std::max(rows, cols);
  });
  run("linear", kOpTol, [&] {
    return check_op(
        [](Tape&, std::vector<Tensor>& in) { return linear(in[0], in[1], in[2]); },
        {random_matrix(rng, 3, 4), random_matrix(rng, 4, 5), random_matrix(rng, 1, 5)}, rng);
  });
  run("layer_norm", kOpTol, [&] {
    return check_op(
        [](Tape&, std::vector<Tensor>& in) { return layer_norm(in[0], in[1], in[2]); },
        {random_matrix(rng, 3, 6, -2.0, 2.0), random_matrix(rng, 1, 6, 0.5, 1.5),
         random_matrix(rng, 1, 6)},
        rng);
  });
  run("cross_entropy", kOpTol, [&] {
    return check_op(
        [](Tape&, std::vector<Tensor>& in) { return cross_entropy(in[0], 1); },
        {random_matrix(rng, 1, 6, -3.0, 3.0)}, rng);
  });
  run("model", 1e-4, [&] {
    SpoterConfig cfg;
    cfg.input_dim = 8;
    cfg.num_classes = 3;
    cfg.encoder_layers = 1;
    cfg.decoder_layers = 1;
    cfg.heads = 2;
    cfg.ff_dim = 16;
    cfg.max_frames = 4;
    return model_gradient_max_rel_err(cfg, seed);
  });

  if (only_op && results.empty()) {
    throw ConfigError("unknown op '" + *only_op + "' for the gradient suite");
  }
  return results;
}

}  // namespace spoter
