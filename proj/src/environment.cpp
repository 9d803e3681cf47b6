#include "ergo/environment.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ergo {

namespace {

// Exact sin/cos for the multiples of 30 degrees used by the action set.
constexpr double kHalfSqrt3 = 0.86602540378443864676;
constexpr std::array<double, 7> kSin{0.0, 0.5, kHalfSqrt3, 1.0, kHalfSqrt3, 0.5, 0.0};
constexpr std::array<double, 7> kCos{1.0, kHalfSqrt3, 0.5, 0.0, -0.5, -kHalfSqrt3, -1.0};

int alpha_slot(double alpha) {
  for (std::size_t i = 0; i < kDqnAlphas.size(); ++i) {
    if (std::abs(kDqnAlphas[i] - alpha) < 1e-9) return static_cast<int>(i);
  }
  return -1;
}

double sin_deg(double alpha) {
  const int k = alpha_slot(alpha);
  return k >= 0 ? kSin[k] : std::sin(alpha * 3.14159265358979323846 / 180.0);
}

constexpr double kEdge = 1e-9;

}  // namespace

std::string_view to_string(Algorithm a) { return a == Algorithm::ql ? "ql" : "dqn"; }

Algorithm parse_algorithm(std::string_view s) {
  if (s == "ql") return Algorithm::ql;
  if (s == "dqn") return Algorithm::dqn;
  throw ConfigError("algorithm must be 'ql' or 'dqn', got '" + std::string(s) + "'");
}

std::string_view to_string(DoneReason r) {
  switch (r) {
    case DoneReason::none: return "none";
    case DoneReason::target: return "target";
    case DoneReason::empty_shaped_set: return "empty_shaped_set";
    case DoneReason::pain_abort: return "pain_abort";
    case DoneReason::step_limit: return "step_limit";
  }
  return "?";
}

void Workspace::validate() const {
  if (!(width > 0.0) || !(height > 0.0) || !(l_object > 0.0)) {
    throw ConfigError("workspace: width, height and l_object must be positive");
  }
}

int GridGeometry::cols(const Workspace& ws) const {
  return static_cast<int>(std::floor(ws.width / dx + 1e-9)) + 1;
}

int GridGeometry::rows(const Workspace& ws) const {
  return static_cast<int>(std::floor(ws.height / dz + 1e-9)) + 1;
}

GridCell GridGeometry::cell_of(Point2 local) const {
  return {static_cast<int>(std::lround(local.x / dx)), static_cast<int>(std::lround(local.z / dz))};
}

DqnAction dqn_action(int index) {
  if (index < 0 || index >= kDqnActionCount) throw std::out_of_range("dqn action index");
  const auto n = static_cast<int>(kDqnDistances.size());
  return {kDqnAlphas[index / n], kDqnDistances[index % n]};
}

int dqn_action_index(const DqnAction& a) {
  const int k = alpha_slot(a.alpha);
  for (std::size_t j = 0; j < kDqnDistances.size(); ++j) {
    if (k >= 0 && std::abs(kDqnDistances[j] - a.d) < 1e-12) {
      return k * static_cast<int>(kDqnDistances.size()) + static_cast<int>(j);
    }
  }
  throw std::out_of_range("not a DQN action");
}

std::vector<ActionDef> dqn_action_table() {
  std::vector<ActionDef> out;
  out.reserve(kDqnActionCount);
  for (int i = 0; i < kDqnActionCount; ++i) {
    const auto a = dqn_action(i);
    const int k = alpha_slot(a.alpha);
    std::ostringstream label;
    label << "a" << a.alpha << "_d" << a.d;
    out.push_back({{a.d * kCos[k], a.d * kSin[k]}, kSin[k] == 0.0, a.alpha, a.d, label.str()});
  }
  return out;
}

std::vector<ActionDef> grid_action_table(const GridGeometry& grid) {
  std::vector<ActionDef> out{
      {{0.0, grid.dz}, false, 90.0, grid.dz, "up"},
      {{-grid.dx, 0.0}, true, 180.0, grid.dx, "left"},
      {{grid.dx, 0.0}, true, 0.0, grid.dx, "right"},
  };
  if (grid.diagonal_moves) {
    const double d = std::hypot(grid.dx, grid.dz);
    const double a = std::atan2(grid.dz, grid.dx) * 180.0 / 3.14159265358979323846;
    out.push_back({{-grid.dx, grid.dz}, false, 180.0 - a, d, "up_left"});
    out.push_back({{grid.dx, grid.dz}, false, a, d, "up_right"});
  }
  return out;
}

double erg_rew(double avg_erg) { return -50.0 * avg_erg + 50.0; }

double x_mov_rew(int count_x) { return count_x <= 5 ? -20.0 * count_x : -100.0; }

double z_step_rew(double d, double alpha) { return d * sin_deg(alpha) * 100.0 / 0.4; }

bool pain_triggered(const RiskSummary& risk) { return risk.avg_pain > 0.0; }

double reward_dqn(const RiskSummary& risk, const DqnAction& action, int count_x) {
  if (pain_triggered(risk)) return -100.0;
  return 0.15 * erg_rew(risk.avg_erg) + 0.3 * z_step_rew(action.d, action.alpha) +
         0.05 * x_mov_rew(count_x);
}

double reward_ql(const RiskSummary& risk, int count_x) {
  if (pain_triggered(risk)) return -100.0;
  return 0.15 * erg_rew(risk.avg_erg) + 0.05 * x_mov_rew(count_x);
}

SimMotion::SimMotion(HumanModel model, double l_object, double path_step, Timing timing)
    : model_(model), l_object_(l_object), path_step_(path_step), timing_(timing) {}

MotionResult SimMotion::execute(Point2 from_world, Point2 to_world) {
  const auto risk = path_risk(model_, from_world, to_world, path_step_, l_object_);
  return {risk, pain_triggered(risk), timing_.elapsed(distance(from_world, to_world))};
}

std::unique_ptr<MotionEvaluator> SimMotion::clone() const {
  return std::make_unique<SimMotion>(*this);
}

ShapedSet shaped_actions(Point2 obj_local, const HumanModel& model, const Workspace& ws,
                         const std::vector<ActionDef>& actions, double path_step) {
  ShapedSet out;
  out.risk.resize(actions.size());
  const Point2 from = ws.to_world(obj_local);
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const Point2 target = obj_local + actions[i].delta;
    if (!ws.contains(target, kEdge)) continue;
    const auto risk = try_path_risk(model, from, ws.to_world(target), path_step, ws.l_object);
    if (!risk) continue;
    out.mask.set(static_cast<int>(i));
    out.risk[i] = *risk;
  }
  return out;
}

TerminalCheck is_terminal(const EnvState& state, const EpisodeSpec& goal, Algorithm algo,
                          const GridGeometry& grid, const ActionMask& next_shaped,
                          int step_limit) {
  const bool at_target = algo == Algorithm::dqn ? state.obj.z >= goal.target_z - kEdge
                                                : grid.cell_of(state.obj).row >= goal.target_row;
  if (at_target) return {true, DoneReason::target};
  if (next_shaped.empty()) return {true, DoneReason::empty_shaped_set};
  if (state.steps >= step_limit) return {true, DoneReason::step_limit};
  return {};
}

// ---------------------------------------------------------------------------
// Presets

std::vector<ParticipantPreset> load_presets() {
  // Segment lengths and shoulder anchors are modelling assumptions: the
  // forearm segment runs to the grasp point, and the anchor places the
  // shoulder relative to the workspace so that both start states are reachable.
  std::vector<ParticipantPreset> presets{
      {"1.62", {1.62, 0.37, 0.31, 0.39}, {2.525, 0.825}, {4, 1}, {1.30, 0.434}, 9, 0.20},
      {"1.69", {1.69, 0.40, 0.27, 0.39}, {2.3625, 0.825}, {4, 1}, {1.35, 0.454}, 9, 0.15},
      {"1.79", {1.79, 0.42, 0.27, 0.38}, {2.425, 0.925}, {4, 1}, {1.30, 0.434}, 10, 0.03},
      {"1.83", {1.83, 0.43, 0.26, 0.40}, {2.40, 0.85}, {5, 2}, {1.35, 0.474}, 10, 0.03},
  };
  const Workspace ws;
  const GridGeometry grid;
  for (const auto& p : presets) check_preset_feasible(p, ws, grid);
  return presets;
}

const ParticipantPreset& find_preset(std::string_view id) {
  static const std::vector<ParticipantPreset> presets = load_presets();
  for (const auto& p : presets) {
    if (p.id == id) return p;
  }
  throw ConfigError("unknown participant preset '" + std::string(id) + "'");
}

EpisodeSpec episode_spec(const ParticipantPreset& p, Algorithm algo, const Workspace& ws,
                         const GridGeometry& grid) {
  EpisodeSpec spec;
  if (algo == Algorithm::dqn) {
    spec.initial = {p.dqn_initial.x - ws.x_origin_world, p.dqn_initial.z};
  } else {
    spec.initial = grid.center(p.ql_initial);
  }
  spec.target_z = ws.height - p.dqn_delta_z;
  spec.target_row = std::min(p.ql_target_row, grid.rows(ws) - 1);
  return spec;
}

void check_preset_feasible(const ParticipantPreset& p, const Workspace& ws,
                           const GridGeometry& grid) {
  const HumanModel model = p.model();
  for (Algorithm algo : {Algorithm::ql, Algorithm::dqn}) {
    const EpisodeSpec spec = episode_spec(p, algo, ws, grid);
    if (!ws.contains(spec.initial)) {
      throw ConfigError("preset " + p.id + ": " + std::string(to_string(algo)) +
                        " initial state lies outside the workspace");
    }
    const Point2 ee = human_ee_from_object(ws.to_world(spec.initial), ws.l_object);
    if (!solve_posture(model, ee)) {
      throw ConfigError("preset " + p.id + ": " + std::string(to_string(algo)) +
                        " initial posture has no valid inverse kinematics");
    }
  }
  if (!(p.dqn_delta_z > 0.0 && p.dqn_delta_z < ws.height)) {
    throw ConfigError("preset " + p.id + ": dqn_delta_z must lie in (0, height)");
  }
}

// ---------------------------------------------------------------------------
// Environment

CoManipulationEnv::CoManipulationEnv(EnvConfig cfg, HumanModel model, EpisodeSpec goal,
                                     std::unique_ptr<MotionEvaluator> motion)
    : cfg_(cfg), model_(model), goal_(goal), motion_(std::move(motion)) {
  cfg_.workspace.validate();
  actions_ = cfg_.algorithm == Algorithm::dqn ? dqn_action_table() : grid_action_table(cfg_.grid);
  if (!motion_) {
    motion_ = std::make_unique<SimMotion>(model_, cfg_.workspace.l_object, cfg_.path_step);
  }
  reset();
}

CoManipulationEnv::CoManipulationEnv(const CoManipulationEnv& other)
    : cfg_(other.cfg_),
      model_(other.model_),
      goal_(other.goal_),
      actions_(other.actions_),
      motion_(other.motion_->clone()),
      state_(other.state_),
      shaped_(other.shaped_) {}

void CoManipulationEnv::set_motion(std::unique_ptr<MotionEvaluator> motion) {
  motion_ = std::move(motion);
}

const EnvState& CoManipulationEnv::reset() {
  state_ = EnvState{goal_.initial, 0, 0};
  reshape();
  return state_;
}

void CoManipulationEnv::reshape() {
  shaped_ = shaped_actions(state_.obj, model_, cfg_.workspace, actions_, cfg_.path_step);
}

StepOutcome CoManipulationEnv::step(int action) {
  if (action < 0 || action >= action_count() || !shaped_.mask.test(action)) {
    throw ContractViolation("step: action " + std::to_string(action) +
                            " is not in the shaped action set");
  }
  const ActionDef& a = actions_[action];
  const Workspace& ws = cfg_.workspace;
  const Point2 from = state_.obj;
  const Point2 to = from + a.delta;

  StepOutcome out;
  MotionResult motion;
  try {
    motion = motion_->execute(ws.to_world(from), ws.to_world(to));
  } catch (const InfeasiblePathError&) {
    // The person could not follow the motion at all: treated as pain.
    motion.risk = {shaped_.risk[action].avg_erg, 1.0};
    motion.pain_detected = true;
    motion.elapsed = 0.0;
  }

  out.next.obj = to;
  out.next.count_x = a.horizontal ? state_.count_x + 1 : 0;
  out.next.steps = state_.steps + 1;
  out.risk = motion.risk;
  out.distance = distance(from, to);
  out.elapsed = motion.elapsed;
  out.reward = cfg_.algorithm == Algorithm::dqn
                   ? reward_dqn(motion.risk, DqnAction{a.alpha, a.d}, out.next.count_x)
                   : reward_ql(motion.risk, out.next.count_x);

  state_ = out.next;
  reshape();

  if (motion_->aborts_on_pain() && motion.pain_detected) {
    out.done = true;
    out.done_reason = DoneReason::pain_abort;
    return out;
  }
  const auto term = is_terminal(state_, goal_, cfg_.algorithm, cfg_.grid, shaped_.mask,
                                cfg_.step_limit);
  out.done = term.done;
  out.done_reason = term.reason;
  return out;
}

CoManipulationEnv make_env(const ParticipantPreset& p, EnvConfig cfg,
                           std::unique_ptr<MotionEvaluator> motion) {
  const EpisodeSpec goal = episode_spec(p, cfg.algorithm, cfg.workspace, cfg.grid);
  return CoManipulationEnv(cfg, p.model(), goal, std::move(motion));
}

}  // namespace ergo
