#pragma once

#include <functional>
#include <optional>
#include <stdexcept>

#include "ergo/kinematics.hpp"

namespace ergo {

// RULA upper-arm band for shoulder flexion (degrees).
int upper_arm_score(double shoulder);
// RULA lower-arm band for elbow flexion (degrees).
int lower_arm_score(double elbow);
// RULA posture-A score with wrist and wrist-twist held at their neutral value.
int erg_level(const JointAngles& q);

// Elbow-contracture pain predicate: 1 inside [0, 30] or [115, 150] degrees.
int pain_state(double elbow);

// Swappable pain source. The default is the elbow range-of-motion predicate.
using PainPredicate = std::function<int(const JointAngles&)>;
PainPredicate elbow_rom_pain();

struct RiskSummary {
  double avg_erg = 1.0;
  double avg_pain = 0.0;
};

class InfeasiblePathError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kDefaultPathStep = 0.01;

// Number of samples used for a straight segment of length `len` at spacing
// at most `step`; both endpoints included, a single sample for len == 0.
int path_sample_count(double len, double step);

// Object endpoints are world-frame midpoints. Throws InfeasiblePathError when
// any sample has no limit-respecting posture.
RiskSummary path_risk(const HumanModel& model, Point2 from_obj, Point2 to_obj, double step,
                      double l_object);

// Non-throwing variant used by action shaping.
std::optional<RiskSummary> try_path_risk(const HumanModel& model, Point2 from_obj, Point2 to_obj,
                                         double step, double l_object);

}  // namespace ergo
