#include "ergo/agents.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

namespace ergo {

void Hyperparameters::validate() const {
  auto need = [](bool ok, const char* field) {
    if (!ok) throw ConfigError(std::string("hyperparameters.") + field + " is out of range");
  };
  need(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate");
  need(discount > 0.0 && discount <= 1.0, "discount");
  need(epsilon_decay_episodes > 0, "epsilon_decay_episodes");
  need(soft_update_rate > 0.0 && soft_update_rate <= 1.0, "soft_update_rate");
  need(buffer_size > 0, "buffer_size");
  need(batch_size > 0, "batch_size");
  need(hidden_dim > 0, "hidden_dim");
}

void write_hyperparameters(std::ostream& os, const Hyperparameters& hp) {
  os << "hp " << std::hexfloat << hp.learning_rate << ' ' << hp.discount << ' '
     << hp.soft_update_rate << std::defaultfloat << ' ' << hp.epsilon_decay_episodes << ' '
     << hp.buffer_size << ' ' << hp.batch_size << ' ' << hp.hidden_dim << '\n';
}

Hyperparameters read_hyperparameters(std::istream& is) {
  std::string tag, lr, g, tau;
  Hyperparameters hp;
  if (!(is >> tag >> lr >> g >> tau >> hp.epsilon_decay_episodes >> hp.buffer_size >>
        hp.batch_size >> hp.hidden_dim) ||
      tag != "hp") {
    throw std::runtime_error("checkpoint: missing hyperparameter record");
  }
  hp.learning_rate = std::strtod(lr.c_str(), nullptr);
  hp.discount = std::strtod(g.c_str(), nullptr);
  hp.soft_update_rate = std::strtod(tau.c_str(), nullptr);
  return hp;
}

double epsilon(int episode, int decay_episodes, double start) {
  if (decay_episodes <= 0) return 0.0;
  return std::max(0.0, start * (1.0 - static_cast<double>(episode) / decay_episodes));
}

int masked_argmax(std::span<const double> values, const ActionMask& shaped, Rng& rng) {
  double best = -std::numeric_limits<double>::infinity();
  int ties = 0;
  int pick = -1;
  // Single pass reservoir choice among the maxima.
  for (int a = 0; a < static_cast<int>(values.size()); ++a) {
    if (!shaped.test(a)) continue;
    if (values[a] > best) {
      best = values[a];
      ties = 1;
      pick = a;
    } else if (values[a] == best) {
      ++ties;
      if (std::uniform_int_distribution<int>(0, ties - 1)(rng) == 0) pick = a;
    }
  }
  if (pick < 0) throw ContractViolation("masked_argmax: empty shaped set");
  return pick;
}

double masked_max(std::span<const double> values, const ActionMask& shaped) {
  double best = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (int a = 0; a < static_cast<int>(values.size()); ++a) {
    if (shaped.test(a)) {
      best = std::max(best, values[a]);
      any = true;
    }
  }
  if (!any) throw ContractViolation("masked_max: empty shaped set");
  return best;
}

int select_action(std::span<const double> values, const ActionMask& shaped, double eps, Rng& rng) {
  if (shaped.empty()) throw ContractViolation("select_action: empty shaped set");
  if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < eps) {
    int k = std::uniform_int_distribution<int>(0, shaped.count() - 1)(rng);
    for (int a = 0; a < 64; ++a) {
      if (shaped.test(a) && k-- == 0) return a;
    }
  }
  return masked_argmax(values, shaped, rng);
}

// ---------------------------------------------------------------------------

std::vector<double> QTable::values(GridCell s) const {
  auto it = table_.find(s);
  if (it == table_.end()) return std::vector<double>(n_, 0.0);
  return it->second;
}

double QTable::get(GridCell s, int a) const {
  auto it = table_.find(s);
  return it == table_.end() ? 0.0 : it->second.at(a);
}

void QTable::set(GridCell s, int a, double v) {
  auto [it, inserted] = table_.try_emplace(s, std::vector<double>(n_, 0.0));
  it->second.at(a) = v;
}

void ql_update(QTable& table, GridCell s, int a, double r, GridCell s_next,
               const ActionMask& shaped_next, bool terminal, double lr, double gamma) {
  double bootstrap = 0.0;
  if (!terminal && !shaped_next.empty()) {
    const auto next = table.values(s_next);
    bootstrap = masked_max(next, shaped_next);
  }
  const double q = table.get(s, a);
  table.set(s, a, q + lr * (r + gamma * bootstrap - q));
}

void write_qtable(std::ostream& os, const QTable& table, const Hyperparameters& hp) {
  os << "ergo-qtable 1\n";
  write_hyperparameters(os, hp);
  os << "actions " << table.action_count() << "\nstates " << table.state_count() << '\n';
  for (const auto& [cell, vals] : table.entries()) {
    os << cell.col << ' ' << cell.row;
    for (double v : vals) os << ' ' << std::hexfloat << v;
    os << std::defaultfloat << '\n';
  }
}

namespace {

QTable read_qtable_body(std::istream& is, Hyperparameters* hp_out) {
  const Hyperparameters hp = read_hyperparameters(is);
  if (hp_out) *hp_out = hp;
  std::string tag;
  int n = 0;
  std::size_t states = 0;
  if (!(is >> tag >> n) || tag != "actions" || n <= 0 || n > 64) {
    throw std::runtime_error("qtable: bad action count");
  }
  if (!(is >> tag >> states) || tag != "states") throw std::runtime_error("qtable: bad state count");
  QTable t(n);
  for (std::size_t i = 0; i < states; ++i) {
    GridCell c;
    if (!(is >> c.col >> c.row)) throw std::runtime_error("qtable: truncated");
    for (int a = 0; a < n; ++a) {
      std::string tok;
      if (!(is >> tok)) throw std::runtime_error("qtable: truncated");
      t.set(c, a, std::strtod(tok.c_str(), nullptr));
    }
  }
  return t;
}

}  // namespace

QTable read_qtable(std::istream& is, Hyperparameters* hp) {
  std::string tag;
  int version = 0;
  if (!(is >> tag >> version) || tag != "ergo-qtable" || version != 1) {
    throw std::runtime_error("qtable: not an ergo-qtable v1 stream");
  }
  return read_qtable_body(is, hp);
}

// ---------------------------------------------------------------------------

ReplayBuffer::ReplayBuffer(int capacity) : capacity_(capacity) {
  if (capacity <= 0) throw std::invalid_argument("replay buffer capacity must be positive");
  data_.reserve(static_cast<std::size_t>(std::min(capacity, 1 << 16)));
}

void ReplayBuffer::push(const Transition& t) {
  if (size_ < capacity_) {
    data_.push_back(t);
    ++size_;
  } else {
    data_[head_] = t;
    head_ = (head_ + 1) % capacity_;
  }
}

const Transition& ReplayBuffer::at(int i) const {
  if (i < 0 || i >= size_) throw std::out_of_range("replay buffer index");
  return data_[(head_ + i) % capacity_];
}

std::vector<int> ReplayBuffer::sample(int batch, Rng& rng) const {
  if (size_ == 0) throw std::logic_error("sampling from an empty replay buffer");
  std::uniform_int_distribution<int> pick(0, size_ - 1);
  std::vector<int> idx(batch);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

std::optional<double> dqn_update(nn::Mlp& net, nn::Mlp& target, nn::Adam& opt,
                                 const ReplayBuffer& buffer, const Hyperparameters& hp, Rng& rng,
                                 DqnScratch& s) {
  const int b = hp.batch_size;
  if (buffer.size() < b) return std::nullopt;
  const auto idx = buffer.sample(b, rng);

  if (s.states.rows != b) {
    s.states = nn::Matrix(b, net.input_dim);
    s.next_states = nn::Matrix(b, net.input_dim);
    s.grad = nn::Matrix(b, net.output_dim);
  }
  for (int i = 0; i < b; ++i) {
    const Transition& t = buffer.at(idx[i]);
    std::copy(t.state.begin(), t.state.end(), s.states.row(i));
    std::copy(t.next_state.begin(), t.next_state.end(), s.next_states.row(i));
  }
  nn::forward_batch(net, s.states, s.cache, s.q);
  nn::forward_batch(target, s.next_states, s.target_cache, s.q_next);

  std::fill(s.grad.data.begin(), s.grad.data.end(), 0.0);
  double loss = 0.0;
  for (int i = 0; i < b; ++i) {
    const Transition& t = buffer.at(idx[i]);
    double y = t.reward;
    if (!t.done && !t.next_mask.empty()) {
      y += hp.discount *
           masked_max(std::span<const double>(s.q_next.row(i), net.output_dim), t.next_mask);
    }
    const double err = s.q.at(i, t.action) - y;
    loss += err * err;
    s.grad.at(i, t.action) = 2.0 * err / b;
  }
  loss /= b;

  if (s.grads.w1.size() != net.w1.size()) s.grads = nn::Gradients::like(net);
  s.grads.zero();
  nn::backward_batch(net, s.cache, s.grad, s.grads);
  opt.step(net, s.grads);
  nn::soft_update(target, net, hp.soft_update_rate);
  return loss;
}

// ---------------------------------------------------------------------------

QlAgent::QlAgent(Hyperparameters hp, GridGeometry grid, int action_count)
    : hp_(hp), grid_(grid), table_(action_count) {}

QlAgent::QlAgent(Hyperparameters hp, GridGeometry grid, QTable table)
    : hp_(hp), grid_(grid), table_(std::move(table)) {}

int QlAgent::act(const EnvState& s, const ActionMask& shaped, double eps, Rng& rng) {
  const auto v = table_.values(grid_.cell_of(s.obj));
  return select_action(v, shaped, eps, rng);
}

void QlAgent::learn(const EnvState& s, int a, const StepOutcome& out, const ActionMask& next_mask,
                    Rng&) {
  ql_update(table_, grid_.cell_of(s.obj), a, out.reward, grid_.cell_of(out.next.obj), next_mask,
            out.done, hp_.learning_rate, hp_.discount);
}

void QlAgent::save(std::ostream& os) const { write_qtable(os, table_, hp_); }

DqnAgent::DqnAgent(Hyperparameters hp, Workspace ws, std::uint64_t seed)
    : DqnAgent(hp, ws, nn::Mlp::init(2, hp.hidden_dim, kDqnActionCount, seed)) {}

DqnAgent::DqnAgent(Hyperparameters hp, Workspace ws, nn::Mlp online)
    : hp_(hp),
      ws_(ws),
      online_(std::move(online)),
      target_(online_),
      opt_(nn::Adam::for_net(online_, hp.learning_rate)),
      buffer_(hp.buffer_size),
      q_(online_.output_dim) {
  hp_.validate();
  if (online_.input_dim != 2 || online_.output_dim != kDqnActionCount ||
      online_.hidden_dim != hp_.hidden_dim) {
    throw nn::ShapeError("dqn agent: network does not match hyperparameters");
  }
}

void DqnAgent::q_values(Point2 obj_local, std::span<double> out) const {
  const auto x = nn::normalize_state(obj_local, ws_);
  nn::forward(online_, x, out);
}

int DqnAgent::act(const EnvState& s, const ActionMask& shaped, double eps, Rng& rng) {
  q_values(s.obj, q_);
  return select_action(q_, shaped, eps, rng);
}

void DqnAgent::learn(const EnvState& s, int a, const StepOutcome& out, const ActionMask& next_mask,
                     Rng& rng) {
  Transition t;
  t.state = nn::normalize_state(s.obj, ws_);
  t.action = a;
  t.reward = out.reward;
  t.next_state = nn::normalize_state(out.next.obj, ws_);
  t.done = out.done;
  t.next_mask = out.done ? ActionMask{} : next_mask;
  buffer_.push(t);
  dqn_update(online_, target_, opt_, buffer_, hp_, rng, scratch_);
}

void DqnAgent::save(std::ostream& os) const {
  os << "ergo-dqn 1\n";
  write_hyperparameters(os, hp_);
  nn::write_mlp(os, online_);
}

std::unique_ptr<Agent> load_agent(std::istream& is, const Workspace& ws, const GridGeometry& grid) {
  std::string tag;
  int version = 0;
  if (!(is >> tag >> version) || version != 1) throw std::runtime_error("checkpoint: bad header");
  if (tag == "ergo-qtable") {
    Hyperparameters hp;
    QTable t = read_qtable_body(is, &hp);
    return std::make_unique<QlAgent>(hp, grid, std::move(t));
  }
  if (tag == "ergo-dqn") {
    const Hyperparameters hp = read_hyperparameters(is);
    return std::make_unique<DqnAgent>(hp, ws, nn::read_mlp(is));
  }
  throw std::runtime_error("checkpoint: unknown kind '" + tag + "'");
}

}  // namespace ergo
