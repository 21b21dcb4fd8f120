#pragma once

#include <array>
#include <cstddef>

namespace spoter {

// Canonical landmark layout shared by every module. A frame holds 121
// 2-D points in fixed segment order; flattened it is a 242-vector with
// x before y per point, points concatenated in index order.
namespace layout {

inline constexpr int kBodyPoints = 9;
inline constexpr int kHandPoints = 21;
inline constexpr int kFacePoints = 70;

inline constexpr int kBodyOffset = 0;
inline constexpr int kLeftHandOffset = kBodyOffset + kBodyPoints;         // 9
inline constexpr int kRightHandOffset = kLeftHandOffset + kHandPoints;    // 30
inline constexpr int kFaceOffset = kRightHandOffset + kHandPoints;        // 51
inline constexpr int kTotalPoints = kFaceOffset + kFacePoints;            // 121
inline constexpr int kFrameDim = 2 * kTotalPoints;                        // 242

static_assert(kTotalPoints == 121);
static_assert(kFrameDim == 242);

// Body point indices.
inline constexpr int kNose = 0;
inline constexpr int kNeck = 1;
inline constexpr int kRightShoulder = 2;
inline constexpr int kRightElbow = 3;
inline constexpr int kRightWrist = 4;
inline constexpr int kLeftShoulder = 5;
inline constexpr int kLeftElbow = 6;
inline constexpr int kLeftWrist = 7;
inline constexpr int kMidHip = 8;

enum class Segment { body, left_hand, right_hand, face };

constexpr Segment segment_of(int point) {
  if (point < kLeftHandOffset) return Segment::body;
  if (point < kRightHandOffset) return Segment::left_hand;
  if (point < kFaceOffset) return Segment::right_hand;
  return Segment::face;
}

// Joints an arm-chain augmentation may pivot on, with the distal points
// that rotate along (rest of the arm plus the attached hand segment).
struct ArmChain {
  int pivot;                       // body index of the joint
  std::array<int, 2> distal_body;  // distal body points; -1 when unused
  int hand_offset;                 // first point of the attached hand
};

inline constexpr std::array<ArmChain, 4> kArmChains = {{
    {kRightShoulder, {kRightElbow, kRightWrist}, kRightHandOffset},
    {kRightElbow, {kRightWrist, -1}, kRightHandOffset},
    {kLeftShoulder, {kLeftElbow, kLeftWrist}, kLeftHandOffset},
    {kLeftElbow, {kLeftWrist, -1}, kLeftHandOffset},
}};

}  // namespace layout
}  // namespace spoter
