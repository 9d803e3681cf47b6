#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace ergo {

// Planar point in meters. x grows away from the robot base, z grows upward.
struct Point2 {
  double x = 0.0;
  double z = 0.0;

  friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.z + b.z}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.z - b.z}; }
  friend bool operator==(const Point2&, const Point2&) = default;
};

double distance(Point2 a, Point2 b);

// Joint angles in degrees. Shoulder flexion is measured from the arm hanging
// straight down, positive forward/up. Elbow flexion is 0 at full extension.
struct JointAngles {
  double shoulder = 0.0;
  double elbow = 0.0;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct BodyParams {
  double height = 0.0;
  double shoulder_span = 0.0;
  double upper_arm_length = 0.0;
  double forearm_length = 0.0;

  // Throws ValidationError naming the offending field.
  void validate() const;
};

inline constexpr Interval kShoulderLimits{-60.0, 180.0};
inline constexpr Interval kElbowLimits{0.0, 150.0};

// Distance of the participants' stance line from the robot base.
inline constexpr double kStanceLineX = 2.72;
// Shoulder height as a fraction of standing height.
inline constexpr double kShoulderHeightRatio = 0.823;
// Annulus slack used when deciding reachability.
inline constexpr double kReachSlack = 1e-9;

struct HumanModel {
  double l_upper = 0.0;
  double l_fore = 0.0;
  Point2 shoulder_anchor;
  Interval shoulder_limits = kShoulderLimits;
  Interval elbow_limits = kElbowLimits;

  bool within_limits(const JointAngles& q) const {
    return shoulder_limits.contains(q.shoulder) && elbow_limits.contains(q.elbow);
  }
};

Point2 default_shoulder_anchor(const BodyParams& body);

HumanModel scale_model(const BodyParams& body, Point2 anchor);

// Total: angles outside the joint limits are evaluated as well.
Point2 forward_kinematics(const HumanModel& model, const JointAngles& q);

// Zero, one or two closed-form solutions. Unreachable targets give an empty set.
class IkCandidates {
 public:
  void push(const JointAngles& q) { items_[count_++] = q; }
  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }
  const JointAngles& operator[](std::size_t i) const { return items_[i]; }
  const JointAngles* begin() const { return items_.data(); }
  const JointAngles* end() const { return items_.data() + count_; }

 private:
  std::array<JointAngles, 2> items_{};
  std::size_t count_ = 0;
};

IkCandidates inverse_kinematics(const HumanModel& model, Point2 ee);

// Drops candidates outside the joint limits and prefers the smaller shoulder
// flexion (elbow below the hand line).
std::optional<JointAngles> select_solution(const HumanModel& model, const IkCandidates& candidates);

// Convenience: IK followed by selection.
std::optional<JointAngles> solve_posture(const HumanModel& model, Point2 ee);

// Object midpoint -> grasp points, world frame.
Point2 human_ee_from_object(Point2 obj, double l_object);
Point2 robot_ee_from_object(Point2 obj);

inline constexpr double kRobotGraspOffset = 0.65;

}  // namespace ergo
