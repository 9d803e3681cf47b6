#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

#include "ergo/agents.hpp"
#include "ergo/environment.hpp"

namespace ergo {

struct TerminationSpec {
  // Simulation: moving average of the episode reward stays flat.
  int window = 100;
  double flatness_tol = 1.0;
  // Real: consecutive safe, low-risk episodes.
  double erg_threshold = 2.5;
  int consecutive = 10;

  int pretrain_cap = 5000;
  int finetune_cap = 500;

  void validate() const;
};

struct EpisodeMetrics {
  double ret = 0.0;
  int steps = 0;
  double avg_erg = 0.0;   // mean of per-step averages
  double avg_pain = 0.0;  // mean of per-step averages
  int pain_events = 0;    // steps with any pain sample
  double distance = 0.0;
  double sim_time = 0.0;
  DoneReason done_reason = DoneReason::none;
};

// Sees the pre-step state, the chosen action and its outcome.
using StepCallback = std::function<void(const EnvState&, int action, const StepOutcome&)>;

// One episode. eps = 0 and learn = false gives a greedy rollout.
EpisodeMetrics run_episode(CoManipulationEnv& env, Agent& agent, double eps, bool learn, Rng& rng,
                           const StepCallback& on_step = nullptr);

// Flatness test on the moving average of the episode reward. Converges at
// the first episode whose trailing window + 1 moving-average values span
// less than the tolerance, so a constant stream converges after 2 * window.
class ConvergenceDetector {
 public:
  ConvergenceDetector(int window, double tol);
  // Returns true once converged (sticky).
  bool push(double episode_return);
  bool converged() const { return converged_at_.has_value(); }
  std::optional<int> convergence_episode() const { return converged_at_; }
  int episodes() const { return episodes_; }
  std::optional<double> moving_average() const;

 private:
  int window_;
  double tol_;
  int episodes_ = 0;
  std::deque<double> rewards_;
  std::deque<double> averages_;
  std::optional<int> converged_at_;
};

using EpisodeCallback = std::function<void(int episode, double eps, const EpisodeMetrics&)>;

struct TrainResult {
  bool converged = false;
  std::optional<int> convergence_episode;  // 1-based
  int episodes = 0;
  std::vector<double> returns;
};

// Episode limit is min(spec.pretrain_cap, max_episodes) when the latter is set.
TrainResult pretrain(CoManipulationEnv& env, Agent& agent, const TerminationSpec& spec,
                     std::uint64_t seed, std::optional<int> max_episodes = std::nullopt,
                     const EpisodeCallback& on_episode = nullptr);

TrainResult finetune(CoManipulationEnv& env, Agent& agent, const TerminationSpec& spec,
                     std::uint64_t seed, EpsilonSchedule schedule = kFinetuneSchedule,
                     const EpisodeCallback& on_episode = nullptr,
                     const StepCallback& on_step = nullptr);

struct Stat {
  double mean = 0.0;
  double std = 0.0;
};

struct MetricsSummary {
  int n = 0;
  Stat ret, steps, avg_erg, avg_pain, distance, sim_time;
  int pain_aborts = 0;
  int successes = 0;  // episodes ending at the target
  std::vector<EpisodeMetrics> episodes;
};

MetricsSummary summarize(const std::vector<EpisodeMetrics>& episodes);

// n greedy episodes without learning.
MetricsSummary evaluate(CoManipulationEnv& env, Agent& agent, int n, std::uint64_t seed,
                        const StepCallback& on_step = nullptr);

// ---------------------------------------------------------------------------
// Grid search

struct HpoGrid {
  std::vector<double> learning_rate{1e-5, 1e-4, 1e-3};
  std::vector<double> discount{0.5, 0.9, 0.999};
  std::vector<int> epsilon_decay_episodes{1500, 2000, 2500};
  std::vector<double> soft_update_rate{1e-4, 1e-3, 1e-2};
  std::vector<int> buffer_size{5000, 10000, 20000};
  std::vector<int> batch_size{64, 128, 256};
  std::vector<int> hidden_dim{128, 256, 512};

  std::size_t size() const;
  // Mixed-radix decode, learning rate varies slowest.
  Hyperparameters at(std::size_t index) const;
};

struct HpoResult {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  Hyperparameters hp;
  bool converged = false;
  std::optional<int> convergence_episode;
  int episodes = 0;
  bool early_stopped = false;
  MetricsSummary eval;
};

// Lexicographic: reaches the target, pain-free, erg <= threshold, fewest steps, highest reward, index.
bool hpo_better(const HpoResult& a, const HpoResult& b, double erg_threshold = 2.5);

struct HpoOptions {
  std::uint64_t seed = 1;
  int workers = 1;
  int eval_episodes = 10;
  TerminationSpec spec;
};

struct HpoOutcome {
  std::vector<HpoResult> ranked;
  std::unique_ptr<Agent> champion;
};

std::uint64_t combination_seed(std::uint64_t base, std::size_t index);

// Trains one DQN agent per combination, stopping each at 2 * decay episodes.
// workers > 1 distributes combinations over OpenMP threads.
HpoOutcome hpo(const HpoGrid& grid, const CoManipulationEnv& env, const HpoOptions& opt);

void write_hpo_csv(std::ostream& os, const std::vector<HpoResult>& ranked);

}  // namespace ergo
