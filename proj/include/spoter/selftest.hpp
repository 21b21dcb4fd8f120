#pragma once

#include <optional>
#include <string>
#include <vector>

#include "spoter/model.hpp"

namespace spoter {

struct GradientCheck {
  std::string op;
  double max_rel_err = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

// Central finite-difference verification of every differentiable op and of
// the full model's cross-entropy gradient. The numeric side only ever
// re-runs forward passes, so it is independent of the backward code it
// checks.
//
// Per-op threshold defaults to 1e-6, end-to-end model threshold to 1e-4,
// both with h = 1e-5. The relative error of a gradient entry is
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-3).
std::vector<GradientCheck> run_gradient_checks(
    const std::optional<std::string>& only_op = std::nullopt,
    std::optional<double> tol_override = std::nullopt, std::uint64_t seed = 20240901);

// End-to-end check on one model configuration; returns the worst relative
// error over every parameter entry.
double model_gradient_max_rel_err(const SpoterConfig& cfg, std::uint64_t seed,
                                  double h = 1e-5);

}  // namespace spoter
