#include "ergo/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

namespace ergo {

using nlohmann::json;

namespace {

// Walks one JSON object, remembering which keys were consumed so that
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  template <typename T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    out = convert<T>(j_.at(key), path_ + "." + key);
  }

  template <typename T>
  void get_list(const char* key, std::vector<T>& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    const json& v = j_.at(key);
    const std::string p = path_ + "." + key;
    if (!v.is_array()) throw ConfigError(p + ": expected an array");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      out.push_back(convert<T>(v[i], p + "[" + std::to_string(i) + "]"));
    }
  }

  Section child(const char* key) {
    seen_.insert(key);
    return Section(j_.at(key), path_ + "." + key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(path_ + "." + it.key() + ": unknown key");
    }
  }

 private:
  template <typename T>
  static T convert(const json& v, const std::string& p) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(p + ": expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(p + ": expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) {
          throw ConfigError(p + ": expected a non-negative integer");
        }
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(p + ": expected a number");
    } else {
      if (!v.is_string()) throw ConfigError(p + ": expected a string");
    }
    return v.get<T>();
  }

  std::string where() const { return path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Hyperparameters parse_hp(Section s, Hyperparameters hp) {
  s.get("learning_rate", hp.learning_rate);
  s.get("discount", hp.discount);
  s.get("epsilon_decay_episodes", hp.epsilon_decay_episodes);
  s.get("soft_update_rate", hp.soft_update_rate);
  s.get("buffer_size", hp.buffer_size);
  s.get("batch_size", hp.batch_size);
  s.get("hidden_dim", hp.hidden_dim);
  s.finish();
  return hp;
}

json hp_json(const Hyperparameters& hp) {
  return {{"learning_rate", hp.learning_rate},
          {"discount", hp.discount},
          {"epsilon_decay_episodes", hp.epsilon_decay_episodes},
          {"soft_update_rate", hp.soft_update_rate},
          {"buffer_size", hp.buffer_size},
          {"batch_size", hp.batch_size},
          {"hidden_dim", hp.hidden_dim}};
}

}  // namespace

Hyperparameters ExperimentConfig::effective_hyperparameters() const {
  if (hyperparameters) return *hyperparameters;
  return algorithm == Algorithm::dqn ? Hyperparameters::dqn_champion()
                                     : Hyperparameters::ql_default();
}

ParticipantPreset ExperimentConfig::preset() const {
  ParticipantPreset p = find_preset(participant);
  if (body) p.body = *body;
  if (shoulder_anchor) p.shoulder_anchor = *shoulder_anchor;
  if (body || shoulder_anchor) {
    p.body.validate();
    const EnvConfig env = env_config();
    check_preset_feasible(p, env.workspace, env.grid);
  }
  return p;
}

EnvConfig ExperimentConfig::env_config() const {
  EnvConfig e;
  e.algorithm = algorithm;
  e.grid.diagonal_moves = diagonal_moves;
  e.path_step = path_step;
  e.step_limit = step_limit;
  return e;
}

void ExperimentConfig::validate() const {
  effective_hyperparameters().validate();
  gap.validate();
  termination.validate();
  if (step_limit <= 0) throw ConfigError("step_limit must be positive");
  if (!(path_step > 0.0)) throw ConfigError("path_step must be positive");
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (eval_episodes <= 0) throw ConfigError("eval_episodes must be positive");
  if (workers <= 0) throw ConfigError("workers must be positive");
  if (body) body->validate();
  (void)preset();
}

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig c;
  Section root(j, "$");
  std::string algo = std::string(to_string(c.algorithm));
  root.get("algorithm", algo);
  c.algorithm = parse_algorithm(algo);
  root.get("participant", c.participant);
  if (root.has("body")) {
    Section b = root.child("body");
    BodyParams bp = find_preset(c.participant).body;
    b.get("height", bp.height);
    b.get("shoulder_span", bp.shoulder_span);
    b.get("upper_arm_length", bp.upper_arm_length);
    b.get("forearm_length", bp.forearm_length);
    b.finish();
    c.body = bp;
  }
  if (root.has("shoulder_anchor")) {
    Section a = root.child("shoulder_anchor");
    Point2 p = find_preset(c.participant).shoulder_anchor;
    a.get("x", p.x);
    a.get("z", p.z);
    a.finish();
    c.shoulder_anchor = p;
  }
  if (root.has("hyperparameters")) {
    c.hyperparameters = parse_hp(root.child("hyperparameters"), c.effective_hyperparameters());
  }
  if (root.has("grid")) {
    Section g = root.child("grid");
    g.get_list("learning_rate", c.grid.learning_rate);
    g.get_list("discount", c.grid.discount);
    g.get_list("epsilon_decay_episodes", c.grid.epsilon_decay_episodes);
    g.get_list("soft_update_rate", c.grid.soft_update_rate);
    g.get_list("buffer_size", c.grid.buffer_size);
    g.get_list("batch_size", c.grid.batch_size);
    g.get_list("hidden_dim", c.grid.hidden_dim);
    g.finish();
  }
  if (root.has("gap")) {
    Section g = root.child("gap");
    g.get("segment_length_error", c.gap.segment_length_error);
    g.get("joint_bias", c.gap.joint_bias);
    g.get("angle_noise_sigma", c.gap.angle_noise_sigma);
    g.get("sensor_rate", c.gap.sensor_rate);
    g.get("ee_speed", c.gap.ee_speed);
    g.get("per_step_overhead", c.gap.per_step_overhead);
    g.finish();
  }
  if (root.has("termination")) {
    Section t = root.child("termination");
    t.get("window", c.termination.window);
    t.get("flatness_tol", c.termination.flatness_tol);
    t.get("erg_threshold", c.termination.erg_threshold);
    t.get("consecutive", c.termination.consecutive);
    t.get("pretrain_cap", c.termination.pretrain_cap);
    t.get("finetune_cap", c.termination.finetune_cap);
    t.finish();
  }
  root.get("step_limit", c.step_limit);
  root.get("path_step", c.path_step);
  root.get("diagonal_moves", c.diagonal_moves);
  root.get_list("seeds", c.seeds);
  root.get("gap_seed", c.gap_seed);
  root.get("output_dir", c.output_dir);
  root.get("eval_episodes", c.eval_episodes);
  root.get("workers", c.workers);
  root.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["algorithm"] = std::string(to_string(c.algorithm));
  j["participant"] = c.participant;
  if (c.body) {
    j["body"] = {{"height", c.body->height},
                 {"shoulder_span", c.body->shoulder_span},
                 {"upper_arm_length", c.body->upper_arm_length},
                 {"forearm_length", c.body->forearm_length}};
  }
  if (c.shoulder_anchor) j["shoulder_anchor"] = {{"x", c.shoulder_anchor->x}, {"z", c.shoulder_anchor->z}};
  if (c.hyperparameters) j["hyperparameters"] = hp_json(*c.hyperparameters);
  j["grid"] = {{"learning_rate", c.grid.learning_rate},
               {"discount", c.grid.discount},
               {"epsilon_decay_episodes", c.grid.epsilon_decay_episodes},
               {"soft_update_rate", c.grid.soft_update_rate},
               {"buffer_size", c.grid.buffer_size},
               {"batch_size", c.grid.batch_size},
               {"hidden_dim", c.grid.hidden_dim}};
  j["gap"] = {{"segment_length_error", c.gap.segment_length_error},
              {"joint_bias", c.gap.joint_bias},
              {"angle_noise_sigma", c.gap.angle_noise_sigma},
              {"sensor_rate", c.gap.sensor_rate},
              {"ee_speed", c.gap.ee_speed},
              {"per_step_overhead", c.gap.per_step_overhead}};
  j["termination"] = {{"window", c.termination.window},
                      {"flatness_tol", c.termination.flatness_tol},
                      {"erg_threshold", c.termination.erg_threshold},
                      {"consecutive", c.termination.consecutive},
                      {"pretrain_cap", c.termination.pretrain_cap},
                      {"finetune_cap", c.termination.finetune_cap}};
  j["step_limit"] = c.step_limit;
  j["path_step"] = c.path_step;
  j["diagonal_moves"] = c.diagonal_moves;
  j["seeds"] = c.seeds;
  j["gap_seed"] = c.gap_seed;
  j["output_dir"] = c.output_dir;
  j["eval_episodes"] = c.eval_episodes;
  j["workers"] = c.workers;
  return j;
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string s = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ergo
