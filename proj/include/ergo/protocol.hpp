#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ergo/config.hpp"

namespace ergo {

// Fresh learner for the configured algorithm.
std::unique_ptr<Agent> make_agent(const ExperimentConfig& cfg, std::uint64_t seed);
CoManipulationEnv make_sim_env(const ExperimentConfig& cfg);
// Surrogate real participant drawn with `gap_seed`.
CoManipulationEnv make_real_env(const ExperimentConfig& cfg, std::uint64_t gap_seed);

// Phase labels: training environment / execution environment.
inline constexpr const char* kSimSim = "Sim/Sim";
inline constexpr const char* kSimReal = "Sim/Real";
inline constexpr const char* kRealReal = "Real/Real";

struct PhaseRow {
  std::string participant;
  Algorithm algorithm = Algorithm::dqn;
  std::string phase;
  std::uint64_t seed = 0;
  MetricsSummary metrics;
  bool training_converged = true;
  int training_episodes = 0;
};

struct RunReport {
  std::vector<PhaseRow> rows;
  bool has_phase(const std::string& phase) const;
  const PhaseRow* find(const std::string& phase) const;
};

// One JSON object per line.
void write_step_json(std::ostream& os, const std::string& phase, int episode, const EnvState& s,
                     int action, const StepOutcome& out);
void write_curve_json(std::ostream& os, const std::string& phase, int episode, double eps,
                      const EpisodeMetrics& m);

struct ProtocolOptions {
  std::uint64_t seed = 1;
  bool skip_finetune = false;
  std::optional<int> max_episodes;
  // Skips pre-training when set.
  const Agent* pretrained = nullptr;
  std::ostream* step_log = nullptr;
  std::ostream* curve_log = nullptr;
  EpisodeCallback on_episode;
};

struct ProtocolResult {
  RunReport report;
  TrainResult pretrain;
  TrainResult finetune;
  std::unique_ptr<Agent> pretrained;
  std::unique_ptr<Agent> finetuned;
};

// Pre-train in simulation, evaluate in simulation and in the surrogate, then
// fine-tune in the surrogate and evaluate again.
ProtocolResult run_protocol(const ExperimentConfig& cfg, const ProtocolOptions& opt);

void write_report_csv(std::ostream& os, const RunReport& report, bool header = true);
RunReport read_report_csv(std::istream& is);
std::string format_report(const RunReport& report);

}  // namespace ergo
