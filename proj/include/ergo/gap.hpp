#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <random>
#include <vector>

#include "ergo/environment.hpp"

namespace ergo {

// Magnitudes of the mismatch between the nominal model and the surrogate
// "real" participant.
struct GapConfig {
  double segment_length_error = 0.03;  // fraction, per segment
  double joint_bias = 2.0;             // degrees, sign drawn per joint
  double angle_noise_sigma = 1.0;      // degrees, per sample
  double sensor_rate = 60.0;           // Hz
  double ee_speed = 0.05;              // m/s
  double per_step_overhead = 1.0;      // s

  void validate() const;
  static GapConfig none();
  Timing timing() const { return {ee_speed, per_step_overhead}; }
  friend bool operator==(const GapConfig&, const GapConfig&) = default;
};

// Segment lengths scaled by (1 + e), e uniform in +-segment_length_error.
HumanModel perturb_model(const HumanModel& model, const GapConfig& cfg, std::uint64_t seed);

struct SensorSample {
  double timestamp = 0.0;
  JointAngles joint_angles;
};

// Constant per-joint offsets plus the per-sample noise generator.
struct SensorPipeline {
  double shoulder_bias = 0.0;
  double elbow_bias = 0.0;
  double sigma = 0.0;
  double rate = 60.0;

  static SensorPipeline make(const GapConfig& cfg, std::uint64_t seed);
};

struct SimulatedMotion {
  RiskSummary risk;
  double elapsed = 0.0;
  std::vector<SensorSample> samples;
};

// Moves the object at constant speed and scores every sensor tick.
// Throws InfeasiblePathError if the true model cannot follow the path.
SimulatedMotion simulate_motion(const HumanModel& true_model, const SensorPipeline& sensor,
                                Point2 from_obj, Point2 to_obj, const GapConfig& cfg,
                                double l_object, std::mt19937_64& noise);

// Writes "timestamp,shoulder,elbow,erg,pain" rows.
void write_samples_csv(std::ostream& os, const std::vector<SensorSample>& samples, bool header);

class SurrogateReal final : public MotionEvaluator {
 public:
  // The true participant is `nominal` perturbed with `seed`.
  SurrogateReal(const HumanModel& nominal, GapConfig cfg, double l_object, std::uint64_t seed);

  MotionResult execute(Point2 from_world, Point2 to_world) override;
  bool aborts_on_pain() const override { return true; }
  std::unique_ptr<MotionEvaluator> clone() const override;

  const HumanModel& true_model() const { return true_model_; }
  const SensorPipeline& sensor() const { return sensor_; }
  // Optional sink for every sample stream; not owned.
  void set_dump(std::ostream* os) { dump_ = os; }

 private:
  HumanModel true_model_;
  SensorPipeline sensor_;
  GapConfig cfg_;
  double l_object_;
  std::mt19937_64 noise_;
  std::ostream* dump_ = nullptr;
  bool dump_header_ = true;
};

}  // namespace ergo
