#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ergo/kinematics.hpp"
#include "ergo/risk.hpp"

namespace ergo {

enum class Algorithm { ql, dqn };

std::string_view to_string(Algorithm a);
Algorithm parse_algorithm(std::string_view s);

struct Workspace {
  double width = 0.40;
  double height = 0.90;
  double x_origin_world = 1.0;
  double z_origin_world = 0.5;
  double l_object = 1.30;

  void validate() const;
  Point2 to_world(Point2 local) const { return {local.x + x_origin_world, local.z + z_origin_world}; }
  Point2 to_local(Point2 world) const { return {world.x - x_origin_world, world.z - z_origin_world}; }
  bool contains(Point2 local, double slack = 1e-9) const {
    return local.x >= -slack && local.x <= width + slack && local.z >= -slack &&
           local.z <= height + slack;
  }
};

struct GridCell {
  int col = 0;
  int row = 0;
  friend bool operator==(const GridCell&, const GridCell&) = default;
  friend auto operator<=>(const GridCell&, const GridCell&) = default;
};

// Tabular agent lattice. Both axes use 6.5 cm cells.
struct GridGeometry {
  double dx = 0.065;
  double dz = 0.065;
  bool diagonal_moves = false;

  int cols(const Workspace& ws) const;
  int rows(const Workspace& ws) const;
  Point2 center(GridCell c) const { return {c.col * dx, c.row * dz}; }
  GridCell cell_of(Point2 local) const;
};

enum class GridMove { up, left, right, up_left, up_right };

struct DqnAction {
  double alpha = 0.0;  // degrees
  double d = 0.0;      // meters
};

inline constexpr std::array<double, 7> kDqnAlphas{0, 30, 60, 90, 120, 150, 180};
inline constexpr std::array<double, 5> kDqnDistances{0.02, 0.03, 0.05, 0.2, 0.4};
inline constexpr int kDqnActionCount = 35;

// Row-major: alpha outer, distance inner.
DqnAction dqn_action(int index);
int dqn_action_index(const DqnAction& a);

// Generic displacement used by both action spaces.
struct ActionDef {
  Point2 delta;
  bool horizontal = false;
  double alpha = 0.0;
  double d = 0.0;
  std::string label;
};

std::vector<ActionDef> dqn_action_table();
std::vector<ActionDef> grid_action_table(const GridGeometry& grid);

class ActionMask {
 public:
  ActionMask() = default;
  explicit ActionMask(std::uint64_t bits) : bits_(bits) {}
  static ActionMask all(int n) { return ActionMask(n >= 64 ? ~0ULL : ((1ULL << n) - 1)); }

  void set(int i) { bits_ |= (1ULL << i); }
  void reset(int i) { bits_ &= ~(1ULL << i); }
  bool test(int i) const { return (bits_ >> i) & 1ULL; }
  bool empty() const { return bits_ == 0; }
  int count() const { return std::popcount(bits_); }
  std::uint64_t bits() const { return bits_; }
  friend bool operator==(const ActionMask&, const ActionMask&) = default;

 private:
  std::uint64_t bits_ = 0;
};

struct EnvState {
  Point2 obj;  // workspace-local
  int count_x = 0;
  int steps = 0;
};

enum class DoneReason { none, target, empty_shaped_set, pain_abort, step_limit };
std::string_view to_string(DoneReason r);

struct StepOutcome {
  EnvState next;
  double reward = 0.0;
  bool done = false;
  DoneReason done_reason = DoneReason::none;
  RiskSummary risk;
  double distance = 0.0;
  double elapsed = 0.0;
};

class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Reward terms.
double erg_rew(double avg_erg);
double x_mov_rew(int count_x);
double z_step_rew(double d, double alpha);
bool pain_triggered(const RiskSummary& risk);
double reward_dqn(const RiskSummary& risk, const DqnAction& action, int count_x);
double reward_ql(const RiskSummary& risk, int count_x);

struct ParticipantPreset {
  std::string id;
  BodyParams body;
  Point2 shoulder_anchor;  // world frame
  GridCell ql_initial;
  // Table convention: x from the robot base, z above the workspace floor.
  Point2 dqn_initial;
  int ql_target_row = 0;
  double dqn_delta_z = 0.0;

  HumanModel model() const { return scale_model(body, shoulder_anchor); }
};

// The four built-in participants, each checked for a feasible start posture.
std::vector<ParticipantPreset> load_presets();
const ParticipantPreset& find_preset(std::string_view id);
// Throws ConfigError if the initial posture of either agent has no valid IK.
void check_preset_feasible(const ParticipantPreset& p, const Workspace& ws,
                           const GridGeometry& grid);

// Episode start and goal for one algorithm.
struct EpisodeSpec {
  Point2 initial;           // workspace-local
  double target_z = 0.0;    // dqn: success when z >= target_z
  int target_row = 0;       // ql: success when row >= target_row
};

EpisodeSpec episode_spec(const ParticipantPreset& p, Algorithm algo, const Workspace& ws,
                         const GridGeometry& grid);

// Result of physically executing one displacement.
struct MotionResult {
  RiskSummary risk;
  bool pain_detected = false;
  double elapsed = 0.0;
};

// Source of posture risk for executed motions. The simulator evaluates the
// nominal model; the surrogate real environment lives in gap.hpp.
class MotionEvaluator {
 public:
  virtual ~MotionEvaluator() = default;
  virtual MotionResult execute(Point2 from_world, Point2 to_world) = 0;
  virtual bool aborts_on_pain() const = 0;
  virtual std::unique_ptr<MotionEvaluator> clone() const = 0;
};

struct Timing {
  double ee_speed = 0.05;          // m/s
  double per_step_overhead = 1.0;  // s
  double elapsed(double dist) const { return dist / ee_speed + per_step_overhead; }
};

class SimMotion final : public MotionEvaluator {
 public:
  SimMotion(HumanModel model, double l_object, double path_step, Timing timing = {});
  MotionResult execute(Point2 from_world, Point2 to_world) override;
  bool aborts_on_pain() const override { return false; }
  std::unique_ptr<MotionEvaluator> clone() const override;

 private:
  HumanModel model_;
  double l_object_;
  double path_step_;
  Timing timing_;
};

struct EnvConfig {
  Algorithm algorithm = Algorithm::dqn;
  Workspace workspace;
  GridGeometry grid;
  double path_step = kDefaultPathStep;
  int step_limit = 100;
};

// Per-action path risks for the current state, computed during shaping.
struct ShapedSet {
  ActionMask mask;
  std::vector<RiskSummary> risk;  // indexed by action, valid where mask is set
};

ShapedSet shaped_actions(Point2 obj_local, const HumanModel& model, const Workspace& ws,
                         const std::vector<ActionDef>& actions, double path_step);

struct TerminalCheck {
  bool done = false;
  DoneReason reason = DoneReason::none;
};

TerminalCheck is_terminal(const EnvState& state, const EpisodeSpec& goal, Algorithm algo,
                          const GridGeometry& grid, const ActionMask& next_shaped, int step_limit);

// The co-manipulation MDP. Single-threaded; one instance per worker.
class CoManipulationEnv {
 public:
  CoManipulationEnv(EnvConfig cfg, HumanModel model, EpisodeSpec goal,
                    std::unique_ptr<MotionEvaluator> motion = nullptr);
  CoManipulationEnv(const CoManipulationEnv& other);
  CoManipulationEnv& operator=(const CoManipulationEnv&) = delete;
  CoManipulationEnv(CoManipulationEnv&&) noexcept = default;

  const EnvState& reset();
  const EnvState& state() const { return state_; }
  const ShapedSet& shaped() const { return shaped_; }
  StepOutcome step(int action);

  int action_count() const { return static_cast<int>(actions_.size()); }
  const ActionDef& action(int i) const { return actions_[i]; }
  const EnvConfig& config() const { return cfg_; }
  const HumanModel& model() const { return model_; }
  const EpisodeSpec& goal() const { return goal_; }
  bool real_mode() const { return motion_->aborts_on_pain(); }
  GridCell cell() const { return cfg_.grid.cell_of(state_.obj); }

  void set_motion(std::unique_ptr<MotionEvaluator> motion);
  MotionEvaluator& motion() { return *motion_; }

 private:
  void reshape();

  EnvConfig cfg_;
  HumanModel model_;
  EpisodeSpec goal_;
  std::vector<ActionDef> actions_;
  std::unique_ptr<MotionEvaluator> motion_;
  EnvState state_;
  ShapedSet shaped_;
};

CoManipulationEnv make_env(const ParticipantPreset& p, EnvConfig cfg,
                           std::unique_ptr<MotionEvaluator> motion = nullptr);

}  // namespace ergo
