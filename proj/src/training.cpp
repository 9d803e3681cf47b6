#include "ergo/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include <omp.h>

namespace ergo {

void TerminationSpec::validate() const {
  if (window <= 0) throw ConfigError("termination.window must be positive");
  if (!(flatness_tol > 0.0)) throw ConfigError("termination.flatness_tol must be positive");
  if (consecutive <= 0) throw ConfigError("termination.consecutive must be positive");
  if (pretrain_cap <= 0 || finetune_cap <= 0) throw ConfigError("termination caps must be positive");
}

EpisodeMetrics run_episode(CoManipulationEnv& env, Agent& agent, double eps, bool learn, Rng& rng,
                           const StepCallback& on_step) {
  EpisodeMetrics m;
  env.reset();
  double erg_sum = 0.0;
  double pain_sum = 0.0;
  if (env.shaped().mask.empty()) {
    m.done_reason = DoneReason::empty_shaped_set;
    return m;
  }
  while (true) {
    const EnvState s = env.state();
    const int a = agent.act(s, env.shaped().mask, eps, rng);
    const StepOutcome out = env.step(a);
    const ActionMask next_mask = out.done ? ActionMask{} : env.shaped().mask;
    if (learn) agent.learn(s, a, out, next_mask, rng);
    if (on_step) on_step(s, a, out);

    m.ret += out.reward;
    ++m.steps;
    erg_sum += out.risk.avg_erg;
    pain_sum += out.risk.avg_pain;
    if (out.risk.avg_pain > 0.0) ++m.pain_events;
    m.distance += out.distance;
    m.sim_time += out.elapsed;
    if (out.done) {
      m.done_reason = out.done_reason;
      break;
    }
  }
  m.avg_erg = erg_sum / m.steps;
  m.avg_pain = pain_sum / m.steps;
  return m;
}

ConvergenceDetector::ConvergenceDetector(int window, double tol) : window_(window), tol_(tol) {
  if (window <= 0) throw std::invalid_argument("convergence window must be positive");
}

std::optional<double> ConvergenceDetector::moving_average() const {
  if (averages_.empty()) return std::nullopt;
  return averages_.back();
}

bool ConvergenceDetector::push(double r) {
  ++episodes_;
  rewards_.push_back(r);
  if (static_cast<int>(rewards_.size()) > window_) rewards_.pop_front();
  if (static_cast<int>(rewards_.size()) == window_) {
    // Summed afresh each time so no rounding drift accumulates.
    double s = 0.0;
    for (double v : rewards_) s += v;
    averages_.push_back(s / window_);
    if (static_cast<int>(averages_.size()) > window_ + 1) averages_.pop_front();
  }
  if (!converged_at_ && static_cast<int>(averages_.size()) == window_ + 1) {
    const auto [lo, hi] = std::minmax_element(averages_.begin(), averages_.end());
    if (*hi - *lo < tol_) converged_at_ = episodes_;
  }
  return converged();
}

TrainResult pretrain(CoManipulationEnv& env, Agent& agent, const TerminationSpec& spec,
                     std::uint64_t seed, std::optional<int> max_episodes,
                     const EpisodeCallback& on_episode) {
  spec.validate();
  Rng rng(seed);
  const int cap = max_episodes ? std::min(spec.pretrain_cap, *max_episodes) : spec.pretrain_cap;
  const int decay = agent.hyperparameters().epsilon_decay_episodes;
  ConvergenceDetector det(spec.window, spec.flatness_tol);
  TrainResult res;
  for (int ep = 0; ep < cap; ++ep) {
    const double eps = epsilon(ep, decay);
    const EpisodeMetrics m = run_episode(env, agent, eps, true, rng);
    res.returns.push_back(m.ret);
    ++res.episodes;
    if (on_episode) on_episode(ep, eps, m);
    if (det.push(m.ret)) break;
  }
  res.converged = det.converged();
  res.convergence_episode = det.convergence_episode();
  return res;
}

TrainResult finetune(CoManipulationEnv& env, Agent& agent, const TerminationSpec& spec,
                     std::uint64_t seed, EpsilonSchedule schedule,
                     const EpisodeCallback& on_episode, const StepCallback& on_step) {
  spec.validate();
  Rng rng(seed);
  TrainResult res;
  int streak = 0;
  for (int ep = 0; ep < spec.finetune_cap; ++ep) {
    const double eps = schedule.at(ep);
    const EpisodeMetrics m = run_episode(env, agent, eps, true, rng, on_step);
    res.returns.push_back(m.ret);
    ++res.episodes;
    if (on_episode) on_episode(ep, eps, m);
    const bool safe = m.steps > 0 && m.pain_events == 0 && m.avg_erg < spec.erg_threshold;
    streak = safe ? streak + 1 : 0;
    if (streak >= spec.consecutive) {
      res.converged = true;
      res.convergence_episode = ep + 1;
      break;
    }
  }
  return res;
}

namespace {

Stat stat_of(const std::vector<EpisodeMetrics>& eps, double (*get)(const EpisodeMetrics&)) {
  Stat s;
  if (eps.empty()) return s;
  for (const auto& e : eps) s.mean += get(e);
  s.mean /= eps.size();
  double var = 0.0;
  for (const auto& e : eps) var += (get(e) - s.mean) * (get(e) - s.mean);
  s.std = std::sqrt(var / eps.size());
  return s;
}

}  // namespace

MetricsSummary summarize(const std::vector<EpisodeMetrics>& episodes) {
  MetricsSummary s;
  s.n = static_cast<int>(episodes.size());
  s.episodes = episodes;
  s.ret = stat_of(episodes, [](const EpisodeMetrics& e) { return e.ret; });
  s.steps = stat_of(episodes, [](const EpisodeMetrics& e) { return double(e.steps); });
  s.avg_erg = stat_of(episodes, [](const EpisodeMetrics& e) { return e.avg_erg; });
  s.avg_pain = stat_of(episodes, [](const EpisodeMetrics& e) { return e.avg_pain; });
  s.distance = stat_of(episodes, [](const EpisodeMetrics& e) { return e.distance; });
  s.sim_time = stat_of(episodes, [](const EpisodeMetrics& e) { return e.sim_time; });
  for (const auto& e : episodes) {
    s.pain_aborts += e.done_reason == DoneReason::pain_abort;
    s.successes += e.done_reason == DoneReason::target;
  }
  return s;
}

MetricsSummary evaluate(CoManipulationEnv& env, Agent& agent, int n, std::uint64_t seed,
                        const StepCallback& on_step) {
  Rng rng(seed);
  std::vector<EpisodeMetrics> eps;
  eps.reserve(n);
  for (int i = 0; i < n; ++i) eps.push_back(run_episode(env, agent, 0.0, false, rng, on_step));
  return summarize(eps);
}

// ---------------------------------------------------------------------------

std::size_t HpoGrid::size() const {
  return learning_rate.size() * discount.size() * epsilon_decay_episodes.size() *
         soft_update_rate.size() * buffer_size.size() * batch_size.size() * hidden_dim.size();
}

Hyperparameters HpoGrid::at(std::size_t index) const {
  if (index >= size()) throw std::out_of_range("hpo grid index");
  Hyperparameters hp;
  auto take = [&index](const auto& axis) {
    const auto& v = axis[index % axis.size()];
    index /= axis.size();
    return v;
  };
  // Decode from the fastest axis outwards.
  hp.hidden_dim = take(hidden_dim);
  hp.batch_size = take(batch_size);
  hp.buffer_size = take(buffer_size);
  hp.soft_update_rate = take(soft_update_rate);
  hp.epsilon_decay_episodes = take(epsilon_decay_episodes);
  hp.discount = take(discount);
  hp.learning_rate = take(learning_rate);
  return hp;
}

bool hpo_better(const HpoResult& a, const HpoResult& b, double erg_threshold) {
  // A policy that never delivers the object is not a candidate at all.
  const bool sa = a.eval.n > 0 && a.eval.successes == a.eval.n;
  const bool sb = b.eval.n > 0 && b.eval.successes == b.eval.n;
  if (sa != sb) return sa;
  const bool pa = a.eval.avg_pain.mean == 0.0, pb = b.eval.avg_pain.mean == 0.0;
  if (pa != pb) return pa;
  const bool ea = a.eval.avg_erg.mean <= erg_threshold, eb = b.eval.avg_erg.mean <= erg_threshold;
  if (ea != eb) return ea;
  if (a.eval.steps.mean != b.eval.steps.mean) return a.eval.steps.mean < b.eval.steps.mean;
  if (a.eval.ret.mean != b.eval.ret.mean) return a.eval.ret.mean > b.eval.ret.mean;
  return a.index < b.index;
}

std::uint64_t combination_seed(std::uint64_t base, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(index), 0x68706fu};
  std::uint32_t w[2];
  seq.generate(w, w + 2);
  return (static_cast<std::uint64_t>(w[0]) << 32) | w[1];
}

namespace {

struct Trained {
  HpoResult result;
  std::unique_ptr<Agent> agent;
};

Trained train_combination(const HpoGrid& grid, std::size_t i, const CoManipulationEnv& proto,
                          const HpoOptions& opt) {
  Trained t;
  HpoResult& r = t.result;
  r.index = i;
  r.seed = combination_seed(opt.seed, i);
  r.hp = grid.at(i);
  CoManipulationEnv env(proto);
  auto agent = std::make_unique<DqnAgent>(r.hp, env.config().workspace, r.seed);
  const int limit = 2 * r.hp.epsilon_decay_episodes;
  const TrainResult tr = pretrain(env, *agent, opt.spec, r.seed, limit);
  r.converged = tr.converged;
  r.convergence_episode = tr.convergence_episode;
  r.episodes = tr.episodes;
  r.early_stopped = !tr.converged && tr.episodes >= limit;
  r.eval = evaluate(env, *agent, opt.eval_episodes, r.seed + 1);
  t.agent = std::move(agent);
  return t;
}

}  // namespace

HpoOutcome hpo(const HpoGrid& grid, const CoManipulationEnv& env, const HpoOptions& opt) {
  const std::size_t n = grid.size();
  if (n == 0) throw ConfigError("hpo: empty grid");
  if (env.config().algorithm != Algorithm::dqn) throw ConfigError("hpo: only dqn is supported");
  std::vector<Trained> slots(n);

  const int workers = std::max(1, opt.workers);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) slots[i] = train_combination(grid, i, env, opt);
  } else {
    // Each worker owns its environment copy and agent; results land in fixed slots.
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers)
    for (long i = 0; i < static_cast<long>(n); ++i) {
      try {
        slots[i] = train_combination(grid, static_cast<std::size_t>(i), env, opt);
      } catch (...) {
#pragma omp critical(hpo_error)
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return hpo_better(slots[a].result, slots[b].result, opt.spec.erg_threshold);
  });
  HpoOutcome out;
  for (std::size_t i : order) out.ranked.push_back(slots[i].result);
  out.champion = std::move(slots[order.front()].agent);
  return out;
}

void write_hpo_csv(std::ostream& os, const std::vector<HpoResult>& ranked) {
  os << "rank,index,seed,learning_rate,discount,epsilon_decay_episodes,soft_update_rate,"
        "buffer_size,batch_size,hidden_dim,converged,convergence_episode,episodes,early_stopped,"
        "reward_mean,reward_std,steps_mean,avg_erg_mean,avg_pain_mean,distance_mean,"
        "sim_time_mean\n";
  int rank = 1;
  for (const auto& r : ranked) {
    os << rank++ << ',' << r.index << ',' << r.seed << ',' << r.hp.learning_rate << ','
       << r.hp.discount << ',' << r.hp.epsilon_decay_episodes << ',' << r.hp.soft_update_rate << ','
       << r.hp.buffer_size << ',' << r.hp.batch_size << ',' << r.hp.hidden_dim << ','
       << (r.converged ? 1 : 0) << ','
       << (r.convergence_episode ? std::to_string(*r.convergence_episode) : std::string()) << ','
       << r.episodes << ',' << (r.early_stopped ? 1 : 0) << ',' << r.eval.ret.mean << ','
       << r.eval.ret.std << ',' << r.eval.steps.mean << ',' << r.eval.avg_erg.mean << ','
       << r.eval.avg_pain.mean << ',' << r.eval.distance.mean << ',' << r.eval.sim_time.mean
       << '\n';
  }
}

}  // namespace ergo
