#include "ergo/risk.hpp"

#include <algorithm>
#include <cmath>

namespace ergo {

int upper_arm_score(double shoulder) {
  if (shoulder >= -20.0 && shoulder <= 20.0) return 1;
  if (shoulder < -20.0 || shoulder <= 45.0) return 2;
  if (shoulder <= 90.0) return 3;
  return 4;
}

int lower_arm_score(double elbow) { return (elbow >= 60.0 && elbow <= 100.0) ? 1 : 2; }

int erg_level(const JointAngles& q) {
  // Table A slice, wrist = 1, wrist twist = 1, indexed [upper - 1][lower - 1].
  static constexpr int kTableA[4][2] = {{1, 2}, {2, 2}, {3, 3}, {4, 4}};
  return kTableA[upper_arm_score(q.shoulder) - 1][lower_arm_score(q.elbow) - 1];
}

int pain_state(double elbow) {
  return ((elbow >= 0.0 && elbow <= 30.0) || (elbow >= 115.0 && elbow <= 150.0)) ? 1 : 0;
}

PainPredicate elbow_rom_pain() {
  return [](const JointAngles& q) { return pain_state(q.elbow); };
}

int path_sample_count(double len, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("path sampling step must be positive");
  if (len <= 0.0) return 1;
  const int segments = std::max(1, static_cast<int>(std::ceil(len / step - 1e-9)));
  return segments + 1;
}

std::optional<RiskSummary> try_path_risk(const HumanModel& model, Point2 from_obj, Point2 to_obj,
                                         double step, double l_object) {
  const int n = path_sample_count(distance(from_obj, to_obj), step);
  double erg_sum = 0.0;
  double pain_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
    const Point2 obj{from_obj.x + t * (to_obj.x - from_obj.x),
                     from_obj.z + t * (to_obj.z - from_obj.z)};
    const auto q = solve_posture(model, human_ee_from_object(obj, l_object));
    if (!q) return std::nullopt;
    erg_sum += erg_level(*q);
    pain_sum += pain_state(q->elbow);
  }
  return RiskSummary{erg_sum / n, pain_sum / n};
}

RiskSummary path_risk(const HumanModel& model, Point2 from_obj, Point2 to_obj, double step,
                      double l_object) {
  auto r = try_path_risk(model, from_obj, to_obj, step, l_object);
  if (!r) throw InfeasiblePathError("path_risk: no valid posture along the path");
  return *r;
}

}  // namespace ergo
