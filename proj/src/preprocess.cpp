#include "spoter/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "spoter/errors.hpp"

namespace spoter {

namespace {

using layout::kTotalPoints;

struct Box {
  double min_x = std::numeric_limits<double>::infinity();
  double min_y = std::numeric_limits<double>::infinity();
  double max_x = -std::numeric_limits<double>::infinity();
  double max_y = -std::numeric_limits<double>::infinity();

  void include(const Point2& p) {
    min_x = std::min(min_x, p.x);
    min_y = std::min(min_y, p.y);
    max_x = std::max(max_x, p.x);
    max_y = std::max(max_y, p.y);
  }
  bool empty() const { return min_x > max_x; }
  double side() const { return std::max(max_x - min_x, max_y - min_y); }
};

// Bounding box of present points with indices in [first, first+count)
// across the whole sequence.
Box box_over(const PoseSequence& s, int first, int count) {
  Box b;
  for (const auto& f : s.frames) {
    for (int i = first; i < first + count; ++i) {
      if (f.present[i]) b.include(f.points[i]);
    }
  }
  return b;
}

// Affine map of the square box into [0,1]^2, clamped.
Point2 map_into_unit(const Point2& p, const Box& b) {
  const double side = b.side();
  if (side == 0.0) return {0.5, 0.5};
  const double cx = (b.min_x + b.max_x) / 2.0;
  const double cy = (b.min_y + b.max_y) / 2.0;
  const double x0 = cx - side / 2.0;
  const double y0 = cy - side / 2.0;
  return {std::clamp((p.x - x0) / side, 0.0, 1.0),
          std::clamp((p.y - y0) / side, 0.0, 1.0)};
}

}  // namespace

void AugmentationDistribution::validate() const {
  if (rotate_max_deg < 0.0) throw ConfigError("rotate_max_deg must be >= 0");
  if (squeeze_max_frac < 0.0 || squeeze_max_frac >= 1.0) {
    throw ConfigError("squeeze_max_frac must be in [0, 1)");
  }
  if (perspective_max_frac < 0.0 || perspective_max_frac >= 1.0) {
    throw ConfigError("perspective_max_frac must be in [0, 1)");
  }
  if (arm_joint_max_deg < 0.0) throw ConfigError("arm_joint_max_deg must be >= 0");
  if (apply_prob < 0.0 || apply_prob > 1.0) throw ConfigError("apply_prob must be in [0, 1]");
}

PoseSequence normalize_pose(const PoseSequence& s) {
  if (s.frames.empty()) throw LayoutError("cannot normalize an empty sequence");

  Box body = box_over(s, layout::kBodyOffset, layout::kBodyPoints);
  const Box all = box_over(s, 0, kTotalPoints);
  if (all.empty()) {
    throw LayoutError("degenerate input: no landmark is present in any frame");
  }
  if (body.empty()) body = all;  // face-/hand-only sequences
  const Box left = box_over(s, layout::kLeftHandOffset, layout::kHandPoints);
  const Box right = box_over(s, layout::kRightHandOffset, layout::kHandPoints);

  PoseSequence out = s;
  for (auto& f : out.frames) {
    for (int i = 0; i < kTotalPoints; ++i) {
      if (!f.present[i]) continue;
      switch (layout::segment_of(i)) {
        case layout::Segment::left_hand:
          f.points[i] = map_into_unit(f.points[i], left);
          break;
        case layout::Segment::right_hand:
          f.points[i] = map_into_unit(f.points[i], right);
          break;
        default:
          f.points[i] = map_into_unit(f.points[i], body);
          break;
      }
    }
  }
  return out;
}

NormalizedSequence flatten(const PoseSequence& s) {
  if (s.frames.empty()) throw LayoutError("cannot flatten an empty sequence");
  NormalizedSequence out;
  out.vectors.setZero(static_cast<Eigen::Index>(s.frames.size()), layout::kFrameDim);
  for (std::size_t t = 0; t < s.frames.size(); ++t) {
    const auto& f = s.frames[t];
    for (int i = 0; i < kTotalPoints; ++i) {
      if (!f.present[i]) continue;
      out.vectors(static_cast<Eigen::Index>(t), 2 * i) = f.points[i].x;
      out.vectors(static_cast<Eigen::Index>(t), 2 * i + 1) = f.points[i].y;
    }
  }
  return out;
}

NormalizedSequence normalize_sequence(const PoseSequence& s) {
  return flatten(normalize_pose(s));
}

namespace {

Point2 centroid_of_present(const PoseSequence& s) {
  double sx = 0.0, sy = 0.0;
  long n = 0;
  for (const auto& f : s.frames) {
    for (int i = 0; i < kTotalPoints; ++i) {
      if (!f.present[i]) continue;
      sx += f.points[i].x;
      sy += f.points[i].y;
      ++n;
    }
  }
  if (n == 0) return {0.0, 0.0};
  return {sx / n, sy / n};
}

void rotate_all(PoseSequence& s, double angle_rad) {
  const Point2 c = centroid_of_present(s);
  const double cs = std::cos(angle_rad);
  const double sn = std::sin(angle_rad);
  for (auto& f : s.frames) {
    for (int i = 0; i < kTotalPoints; ++i) {
      if (!f.present[i]) continue;
      const double dx = f.points[i].x - c.x;
      const double dy = f.points[i].y - c.y;
      f.points[i] = {c.x + cs * dx - sn * dy, c.y + sn * dx + cs * dy};
    }
  }
}

void squeeze_all(PoseSequence& s, double frac) {
  const Point2 c = centroid_of_present(s);
  const double k = 1.0 - frac;
  for (auto& f : s.frames) {
    for (int i = 0; i < kTotalPoints; ++i) {
      if (!f.present[i]) continue;
      f.points[i].x = c.x + (f.points[i].x - c.x) * k;
    }
  }
}

// Trapezoidal horizontal contraction: full factor at the chosen vertical
// end of the sequence bounding box, fading to zero at the opposite end.
void perspective_all(PoseSequence& s, double frac, bool from_min_y) {
  const Box b = box_over(const_cast<const PoseSequence&>(s), 0, kTotalPoints);
  const double h = b.max_y - b.min_y;
  if (h == 0.0) return;
  const double cx = (b.min_x + b.max_x) / 2.0;
  for (auto& f : s.frames) {
    for (int i = 0; i < kTotalPoints; ++i) {
      if (!f.present[i]) continue;
      const double w = from_min_y ? (b.max_y - f.points[i].y) / h
                                  : (f.points[i].y - b.min_y) / h;
      f.points[i].x = cx + (f.points[i].x - cx) * (1.0 - frac * w);
    }
  }
}

// Rotates the distal chain of one arm about the joint's per-frame
// position. Frames where the joint is absent are left untouched.
void rotate_arm_chain(PoseSequence& s, const layout::ArmChain& chain, double angle_rad) {
  const double cs = std::cos(angle_rad);
  const double sn = std::sin(angle_rad);
  for (auto& f : s.frames) {
    if (!f.present[chain.pivot]) continue;
    const Point2 c = f.points[chain.pivot];
    auto rotate_point = [&](int idx) {
      if (idx < 0 || !f.present[idx]) return;
      const double dx = f.points[idx].x - c.x;
      const double dy = f.points[idx].y - c.y;
      f.points[idx] = {c.x + cs * dx - sn * dy, c.y + sn * dx + cs * dy};
    };
    for (int idx : chain.distal_body) rotate_point(idx);
    for (int i = 0; i < layout::kHandPoints; ++i) rotate_point(chain.hand_offset + i);
  }
}

}  // namespace

PoseSequence augment(const PoseSequence& s, const AugmentationDistribution& dist, Rng& rng) {
  dist.validate();
  PoseSequence out = s;

  // Draw protocol (10 draws, always consumed; see header).
  const bool rot_on = rng.uniform() < dist.apply_prob;
  const double angle_deg = rng.uniform(-dist.rotate_max_deg, dist.rotate_max_deg);

  const bool squeeze_on = rng.uniform() < dist.apply_prob;
  const double squeeze_frac = rng.uniform(0.0, dist.squeeze_max_frac);

  const bool persp_on = rng.uniform() < dist.apply_prob;
  const double persp_frac = rng.uniform(0.0, dist.perspective_max_frac);
  const bool persp_from_min_y = rng.uniform() < 0.5;

  const bool arm_on = rng.uniform() < dist.apply_prob;
  const int joint = rng.uniform_int(static_cast<int>(layout::kArmChains.size()));
  const double arm_deg = rng.uniform(-dist.arm_joint_max_deg, dist.arm_joint_max_deg);

  constexpr double kDegToRad = std::numbers::pi / 180.0;
  if (rot_on && angle_deg != 0.0) rotate_all(out, angle_deg * kDegToRad);
  if (squeeze_on && squeeze_frac != 0.0) squeeze_all(out, squeeze_frac);
  if (persp_on && persp_frac != 0.0) perspective_all(out, persp_frac, persp_from_min_y);
  if (arm_on && arm_deg != 0.0) {
    rotate_arm_chain(out, layout::kArmChains[static_cast<std::size_t>(joint)],
                     arm_deg * kDegToRad);
  }
  return out;
}

}  // namespace spoter
