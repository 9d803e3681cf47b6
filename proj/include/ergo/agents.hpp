#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "ergo/environment.hpp"
#include "ergo/nnet.hpp"

namespace ergo {

using Rng = std::mt19937_64;

struct Hyperparameters {
  double learning_rate = 1e-3;
  double discount = 0.999;
  int epsilon_decay_episodes = 1500;
  double soft_update_rate = 1e-3;
  int buffer_size = 5000;
  int batch_size = 64;
  int hidden_dim = 512;

  // Throws ConfigError naming the offending field.
  void validate() const;

  // Best DQN model from the grid search.
  static Hyperparameters dqn_champion() { return {}; }
  // Tabular agent defaults. Only learning_rate, discount and the decay are used.
  static Hyperparameters ql_default() { return {0.5, 0.99, 100, 1.0, 1, 1, 1}; }

  friend bool operator==(const Hyperparameters&, const Hyperparameters&) = default;
};

void write_hyperparameters(std::ostream& os, const Hyperparameters& hp);
Hyperparameters read_hyperparameters(std::istream& is);

// Linear decay from `start` to zero over `decay_episodes`.
double epsilon(int episode, int decay_episodes, double start = 1.0);

struct EpsilonSchedule {
  double start = 1.0;
  int decay_episodes = 1500;
  double at(int episode) const { return epsilon(episode, decay_episodes, start); }
};

// Fine-tuning restarts exploration at a low rate.
inline constexpr EpsilonSchedule kFinetuneSchedule{0.2, 50};

// Greedy action restricted to `shaped`, ties broken uniformly at random.
int masked_argmax(std::span<const double> values, const ActionMask& shaped, Rng& rng);
// Largest value inside `shaped`. Requires a non-empty mask.
double masked_max(std::span<const double> values, const ActionMask& shaped);

// Epsilon-greedy over the shaped set. Throws ContractViolation if it is empty.
int select_action(std::span<const double> values, const ActionMask& shaped, double eps, Rng& rng);

class QTable {
 public:
  explicit QTable(int action_count) : n_(action_count) {}

  int action_count() const { return n_; }
  std::size_t state_count() const { return table_.size(); }
  // Unseen states read as all zeros.
  std::vector<double> values(GridCell s) const;
  double get(GridCell s, int a) const;
  void set(GridCell s, int a, double v);

  const std::map<GridCell, std::vector<double>>& entries() const { return table_; }
  friend bool operator==(const QTable&, const QTable&) = default;

 private:
  int n_;
  std::map<GridCell, std::vector<double>> table_;
};

// Terminal transitions bootstrap from zero. So does an empty next mask.
void ql_update(QTable& table, GridCell s, int a, double r, GridCell s_next,
               const ActionMask& shaped_next, bool terminal, double lr, double gamma);

void write_qtable(std::ostream& os, const QTable& table, const Hyperparameters& hp);
QTable read_qtable(std::istream& is, Hyperparameters* hp = nullptr);

struct Transition {
  std::array<double, 2> state{};
  int action = 0;
  double reward = 0.0;
  std::array<double, 2> next_state{};
  bool done = false;
  ActionMask next_mask;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(int capacity);

  void push(const Transition& t);
  int size() const { return size_; }
  int capacity() const { return capacity_; }
  // Logical index, 0 is the oldest stored transition.
  const Transition& at(int i) const;
  // Uniform with replacement.
  std::vector<int> sample(int batch, Rng& rng) const;

 private:
  int capacity_;
  int head_ = 0;
  int size_ = 0;
  std::vector<Transition> data_;
};

// Reusable buffers for dqn_update.
struct DqnScratch {
  nn::Matrix states, next_states, q, q_next, grad;
  nn::BatchCache cache, target_cache;
  nn::Gradients grads;
};

// One minibatch step on the online net followed by a soft target update.
// Returns the pre-update loss, or nullopt when the buffer is too small.
std::optional<double> dqn_update(nn::Mlp& net, nn::Mlp& target, nn::Adam& opt,
                                 const ReplayBuffer& buffer, const Hyperparameters& hp, Rng& rng,
                                 DqnScratch& scratch);

// Common face of both learners as seen by the training loops.
class Agent {
 public:
  virtual ~Agent() = default;
  virtual Algorithm algorithm() const = 0;
  virtual const Hyperparameters& hyperparameters() const = 0;
  virtual int act(const EnvState& s, const ActionMask& shaped, double eps, Rng& rng) = 0;
  // `next_mask` is the shaped set at out.next (empty when done).
  virtual void learn(const EnvState& s, int a, const StepOutcome& out, const ActionMask& next_mask,
                     Rng& rng) = 0;
  virtual void save(std::ostream& os) const = 0;
  virtual std::unique_ptr<Agent> clone() const = 0;
};

class QlAgent final : public Agent {
 public:
  QlAgent(Hyperparameters hp, GridGeometry grid, int action_count);
  QlAgent(Hyperparameters hp, GridGeometry grid, QTable table);

  Algorithm algorithm() const override { return Algorithm::ql; }
  const Hyperparameters& hyperparameters() const override { return hp_; }
  int act(const EnvState& s, const ActionMask& shaped, double eps, Rng& rng) override;
  void learn(const EnvState& s, int a, const StepOutcome& out, const ActionMask& next_mask,
             Rng& rng) override;
  void save(std::ostream& os) const override;
  std::unique_ptr<Agent> clone() const override { return std::make_unique<QlAgent>(*this); }

  const QTable& table() const { return table_; }

 private:
  Hyperparameters hp_;
  GridGeometry grid_;
  QTable table_;
};

class DqnAgent final : public Agent {
 public:
  DqnAgent(Hyperparameters hp, Workspace ws, std::uint64_t seed);
  DqnAgent(Hyperparameters hp, Workspace ws, nn::Mlp online);

  Algorithm algorithm() const override { return Algorithm::dqn; }
  const Hyperparameters& hyperparameters() const override { return hp_; }
  int act(const EnvState& s, const ActionMask& shaped, double eps, Rng& rng) override;
  void learn(const EnvState& s, int a, const StepOutcome& out, const ActionMask& next_mask,
             Rng& rng) override;
  void save(std::ostream& os) const override;
  std::unique_ptr<Agent> clone() const override { return std::make_unique<DqnAgent>(*this); }

  const nn::Mlp& online() const { return online_; }
  const nn::Mlp& target() const { return target_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  void q_values(Point2 obj_local, std::span<double> out) const;

 private:
  Hyperparameters hp_;
  Workspace ws_;
  nn::Mlp online_;
  nn::Mlp target_;
  nn::Adam opt_;
  ReplayBuffer buffer_;
  DqnScratch scratch_;
  std::vector<double> q_;
};

// Reads either checkpoint kind, dispatching on the header line.
std::unique_ptr<Agent> load_agent(std::istream& is, const Workspace& ws, const GridGeometry& grid);

}  // namespace ergo
