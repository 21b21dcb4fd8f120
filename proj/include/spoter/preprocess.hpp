#pragma once

#include <Eigen/Dense>

#include "spoter/dataset.hpp"
#include "spoter/rng.hpp"

namespace spoter {

// Bounds for the geometric augmentation families. Two instances exist per
// training run: the base distribution and the VSCT-specific one. The
// default constants are conventions, not published values; everything is
// configurable.
struct AugmentationDistribution {
  double rotate_max_deg = 13.0;
  double squeeze_max_frac = 0.15;
  double perspective_max_frac = 0.10;
  double arm_joint_max_deg = 4.0;
  double apply_prob = 0.5;  // per family, independently

  static AugmentationDistribution none() { return {0.0, 0.0, 0.0, 0.0, 0.0}; }
  void validate() const;
};

// T x 242 matrix of flattened frames. Present landmarks lie in [0, 1]
// after normalization; absent landmarks are encoded as 0.0.
struct NormalizedSequence {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> vectors;

  Eigen::Index frame_count() const { return vectors.rows(); }
};

// Maps coordinates into [0, 1]^2, invariant to global translation and
// uniform scaling of the input:
//   - body + face points share one square box: the bounding box of all
//     present body landmarks across the whole sequence, expanded to a
//     square (side = max(width, height)) about its center. If no body
//     landmark is ever present, the box of all present landmarks is used.
//   - each hand is mapped by its own per-sequence square bounding box,
//     preserving hand-shape detail.
//   - mapped values are clamped to [0, 1]; a degenerate box (single point)
//     maps its part to 0.5.
// Throws if no landmark is ever present.
PoseSequence normalize_pose(const PoseSequence& s);

// normalize_pose followed by flatten.
NormalizedSequence normalize_sequence(const PoseSequence& s);

// Flattens frames to 242-vectors: segment order body(9), left_hand(21),
// right_hand(21), face(70); x before y within a point. Absent landmarks
// become 0.0.
NormalizedSequence flatten(const PoseSequence& s);

// Geometry-only augmentation in pixel space, before normalization. Labels,
// metadata and presence masks are untouched; only present points move.
// Consumes exactly 10 draws from rng in a fixed order regardless of which
// families fire:
//   rotate:      gate, angle        ~ U(-rotate_max_deg, +rotate_max_deg)
//   squeeze:     gate, factor       ~ U(0, squeeze_max_frac)
//   perspective: gate, factor       ~ U(0, perspective_max_frac), end (top/bottom)
//   arm joint:   gate, joint (of 4), angle ~ U(-arm_joint_max_deg, +arm_joint_max_deg)
// A family whose gate fails or whose drawn parameter is zero leaves the
// points bit-identical. Families apply in the order listed.
PoseSequence augment(const PoseSequence& s, const AugmentationDistribution& dist, Rng& rng);

}  // namespace spoter
