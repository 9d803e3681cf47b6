#include "ergo/gap.hpp"

#include <cmath>
#include <ostream>

namespace ergo {

void GapConfig::validate() const {
  auto need = [](bool ok, const char* field) {
    if (!ok) throw ConfigError(std::string("gap.") + field + " is out of range");
  };
  need(segment_length_error >= 0.0 && segment_length_error <= 0.2, "segment_length_error");
  need(std::isfinite(joint_bias), "joint_bias");
  need(angle_noise_sigma >= 0.0 && std::isfinite(angle_noise_sigma), "angle_noise_sigma");
  need(sensor_rate > 0.0, "sensor_rate");
  need(ee_speed > 0.0, "ee_speed");
  need(per_step_overhead >= 0.0, "per_step_overhead");
}

GapConfig GapConfig::none() {
  GapConfig g;
  g.segment_length_error = 0.0;
  g.joint_bias = 0.0;
  g.angle_noise_sigma = 0.0;
  return g;
}

namespace {

// Independent streams for the model, the bias signs and the noise.
std::uint64_t substream(std::uint64_t seed, std::uint64_t k) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(k)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace

HumanModel perturb_model(const HumanModel& model, const GapConfig& cfg, std::uint64_t seed) {
  HumanModel m = model;
  if (cfg.segment_length_error == 0.0) return m;
  std::mt19937_64 rng(substream(seed, 1));
  std::uniform_real_distribution<double> e(-cfg.segment_length_error, cfg.segment_length_error);
  m.l_upper *= 1.0 + e(rng);
  m.l_fore *= 1.0 + e(rng);
  return m;
}

SensorPipeline SensorPipeline::make(const GapConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(substream(seed, 2));
  std::bernoulli_distribution sign(0.5);
  SensorPipeline s;
  s.shoulder_bias = sign(rng) ? cfg.joint_bias : -cfg.joint_bias;
  s.elbow_bias = sign(rng) ? cfg.joint_bias : -cfg.joint_bias;
  s.sigma = cfg.angle_noise_sigma;
  s.rate = cfg.sensor_rate;
  return s;
}

SimulatedMotion simulate_motion(const HumanModel& true_model, const SensorPipeline& sensor,
                                Point2 from_obj, Point2 to_obj, const GapConfig& cfg,
                                double l_object, std::mt19937_64& noise) {
  const double dist = distance(from_obj, to_obj);
  const double travel = dist / cfg.ee_speed;
  const int ticks = static_cast<int>(std::floor(travel * sensor.rate + 1e-9));
  std::normal_distribution<double> n01(0.0, 1.0);

  SimulatedMotion out;
  out.samples.reserve(ticks + 1);
  double erg = 0.0;
  double pain = 0.0;
  for (int k = 0; k <= ticks; ++k) {
    const double t = k / sensor.rate;
    const double f = travel > 0.0 ? std::min(1.0, t / travel) : 0.0;
    const Point2 obj{from_obj.x + f * (to_obj.x - from_obj.x),
                     from_obj.z + f * (to_obj.z - from_obj.z)};
    const auto q = solve_posture(true_model, human_ee_from_object(obj, l_object));
    if (!q) throw InfeasiblePathError("simulate_motion: true model cannot follow the path");
    JointAngles seen = *q;
    seen.shoulder += sensor.shoulder_bias;
    seen.elbow += sensor.elbow_bias;
    if (sensor.sigma > 0.0) {
      seen.shoulder += sensor.sigma * n01(noise);
      seen.elbow += sensor.sigma * n01(noise);
    }
    out.samples.push_back({t, seen});
    erg += erg_level(seen);
    pain += pain_state(seen.elbow);
  }
  const double n = static_cast<double>(out.samples.size());
  out.risk = {erg / n, pain / n};
  out.elapsed = travel + cfg.per_step_overhead;
  return out;
}

void write_samples_csv(std::ostream& os, const std::vector<SensorSample>& samples, bool header) {
  if (header) os << "timestamp,shoulder,elbow,erg,pain\n";
  for (const auto& s : samples) {
    os << s.timestamp << ',' << s.joint_angles.shoulder << ',' << s.joint_angles.elbow << ','
       << erg_level(s.joint_angles) << ',' << pain_state(s.joint_angles.elbow) << '\n';
  }
}

SurrogateReal::SurrogateReal(const HumanModel& nominal, GapConfig cfg, double l_object,
                             std::uint64_t seed)
    : true_model_(perturb_model(nominal, cfg, seed)),
      sensor_(SensorPipeline::make(cfg, seed)),
      cfg_(cfg),
      l_object_(l_object),
      noise_(substream(seed, 3)) {
  cfg_.validate();
}

MotionResult SurrogateReal::execute(Point2 from_world, Point2 to_world) {
  const auto m = simulate_motion(true_model_, sensor_, from_world, to_world, cfg_, l_object_, noise_);
  if (dump_) {
    write_samples_csv(*dump_, m.samples, dump_header_);
    dump_header_ = false;
  }
  return {m.risk, m.risk.avg_pain > 0.0, m.elapsed};
}

std::unique_ptr<MotionEvaluator> SurrogateReal::clone() const {
  return std::make_unique<SurrogateReal>(*this);
}

}  // namespace ergo
