#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ergo/agents.hpp"
#include "ergo/environment.hpp"
#include "ergo/gap.hpp"
#include "ergo/training.hpp"

namespace ergo {

struct ExperimentConfig {
  Algorithm algorithm = Algorithm::dqn;
  std::string participant = "1.79";
  // Inline overrides of the preset body and shoulder anchor.
  std::optional<BodyParams> body;
  std::optional<Point2> shoulder_anchor;

  // Unset means the algorithm default.
  std::optional<Hyperparameters> hyperparameters;
  HpoGrid grid;
  GapConfig gap;
  TerminationSpec termination;
  int step_limit = 100;
  double path_step = kDefaultPathStep;
  bool diagonal_moves = false;

  std::vector<std::uint64_t> seeds{1};
  std::uint64_t gap_seed = 7;
  std::string output_dir = "runs";
  int eval_episodes = 10;
  int workers = 1;

  Hyperparameters effective_hyperparameters() const;
  ParticipantPreset preset() const;
  EnvConfig env_config() const;
  void validate() const;
};

// Throws ConfigError with the JSON path of the offending entry.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

// FNV-1a over the canonical serialization, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace ergo
