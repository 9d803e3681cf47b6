#include "ergo/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ergo {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double wrap_degrees(double a) {
  // (-180, 180]
  a = std::fmod(a, 360.0);
  if (a <= -180.0) a += 360.0;
  if (a > 180.0) a -= 360.0;
  return a;
}

}  // namespace

double distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.z - b.z); }

void BodyParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ValidationError(std::string("body.") + name + " must be positive and finite");
    }
  };
  positive(height, "height");
  positive(shoulder_span, "shoulder_span");
  positive(upper_arm_length, "upper_arm_length");
  positive(forearm_length, "forearm_length");
  if (upper_arm_length + forearm_length >= height) {
    throw ValidationError("body: upper_arm_length + forearm_length must be below height");
  }
}

Point2 default_shoulder_anchor(const BodyParams& body) {
  return {kStanceLineX, kShoulderHeightRatio * body.height};
}

HumanModel scale_model(const BodyParams& body, Point2 anchor) {
  body.validate();
  if (!std::isfinite(anchor.x) || !std::isfinite(anchor.z)) {
    throw ValidationError("shoulder anchor must be finite");
  }
  HumanModel m;
  m.l_upper = body.upper_arm_length;
  m.l_fore = body.forearm_length;
  m.shoulder_anchor = anchor;
  return m;
}

Point2 forward_kinematics(const HumanModel& model, const JointAngles& q) {
  const double s = q.shoulder * kDeg;
  const double se = (q.shoulder + q.elbow) * kDeg;
  const double reach = model.l_upper * std::sin(s) + model.l_fore * std::sin(se);
  const double drop = -model.l_upper * std::cos(s) - model.l_fore * std::cos(se);
  return {model.shoulder_anchor.x - reach, model.shoulder_anchor.z + drop};
}

IkCandidates inverse_kinematics(const HumanModel& model, Point2 ee) {
  IkCandidates out;
  const double l1 = model.l_upper;
  const double l2 = model.l_fore;
  const double reach = model.shoulder_anchor.x - ee.x;
  const double rise = ee.z - model.shoulder_anchor.z;
  const double r = std::hypot(reach, rise);

  const double r_max = l1 + l2;
  const double r_min = std::abs(l1 - l2);
  if (r > r_max + kReachSlack || r < r_min - kReachSlack) return out;

  const double c = std::clamp((r * r - l1 * l1 - l2 * l2) / (2.0 * l1 * l2), -1.0, 1.0);
  const double elbow = std::acos(c);
  // Direction of the hand seen from the shoulder, from the downward vertical.
  const double phi = r > 0.0 ? std::atan2(reach, -rise) : 0.0;

  auto make = [&](double e) {
    const double beta = std::atan2(l2 * std::sin(e), l1 + l2 * std::cos(e));
    return JointAngles{wrap_degrees((phi - beta) / kDeg), e / kDeg};
  };

  const bool on_boundary =
      std::abs(r - r_max) <= kReachSlack || std::abs(r - r_min) <= kReachSlack;
  if (on_boundary) {
    out.push(make(std::abs(r - r_max) <= kReachSlack ? 0.0 : elbow));
    return out;
  }
  out.push(make(elbow));
  out.push(make(-elbow));
  return out;
}

std::optional<JointAngles> select_solution(const HumanModel& model,
                                           const IkCandidates& candidates) {
  std::optional<JointAngles> best;
  for (const auto& q : candidates) {
    if (!model.within_limits(q)) continue;
    if (!best || q.shoulder < best->shoulder) best = q;
  }
  return best;
}

std::optional<JointAngles> solve_posture(const HumanModel& model, Point2 ee) {
  return select_solution(model, inverse_kinematics(model, ee));
}

Point2 human_ee_from_object(Point2 obj, double l_object) {
  return {obj.x + l_object / 2.0, obj.z};
}

Point2 robot_ee_from_object(Point2 obj) { return {obj.x - kRobotGraspOffset, obj.z}; }

}  // namespace ergo
