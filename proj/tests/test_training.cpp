#include <cmath>
#include <set>
#include <sstream>
#include <tuple>

#include "doctest.h"
#include "ergo/training.hpp"

using namespace ergo;

namespace {

HumanModel roomy_model() { return scale_model({2.5, 0.4, 1.0, 1.0}, {3.2, 0.95}); }

CoManipulationEnv roomy_env(Algorithm algo) {
  EnvConfig cfg;
  cfg.algorithm = algo;
  const Point2 start = algo == Algorithm::ql ? GridGeometry{}.center({3, 3}) : Point2{0.2, 0.3};
  return CoManipulationEnv(cfg, roomy_model(), EpisodeSpec{start, 0.87, 13});
}

// Always moves straight up when it can, otherwise takes the first shaped action.
class UpAgent final : public Agent {
 public:
  Algorithm algorithm() const override { return Algorithm::ql; }
  const Hyperparameters& hyperparameters() const override { return hp_; }
  int act(const EnvState&, const ActionMask& shaped, double, Rng&) override {
    if (shaped.test(0)) return 0;
    for (int i = 0; i < 64; ++i)
      if (shaped.test(i)) return i;
    return 0;
  }
  void learn(const EnvState&, int, const StepOutcome&, const ActionMask&, Rng&) override {
    ++learned;
  }
  void save(std::ostream&) const override {}
  std::unique_ptr<Agent> clone() const override { return std::make_unique<UpAgent>(*this); }

  int learned = 0;

 private:
  Hyperparameters hp_ = Hyperparameters::ql_default();
};

HpoResult ranked_result(std::size_t index, int successes, double pain, double erg, double steps,
                        double ret) {
  HpoResult r;
  r.index = index;
  r.eval.n = 10;
  r.eval.successes = successes;
  r.eval.avg_pain.mean = pain;
  r.eval.avg_erg.mean = erg;
  r.eval.steps.mean = steps;
  r.eval.ret.mean = ret;
  return r;
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("constant returns converge after two windows") {
    ConvergenceDetector d(100, 1.0);
    int at = 0;
    for (int i = 1; i <= 1000 && !at; ++i)
      if (d.push(-70.0)) at = i;
    CHECK(at == 200);
    CHECK(d.convergence_episode() == 200);
    CHECK(d.moving_average() == doctest::Approx(-70.0));
  }

  TEST_CASE("square-wave returns never converge") {
    ConvergenceDetector d(100, 1.0);
    // Blocks of one window length make the moving average a triangle wave.
    for (int i = 0; i < 5000; ++i) d.push((i / 100) % 2 ? 1000.0 : -1000.0);
    CHECK_FALSE(d.converged());
  }

  TEST_CASE("convergence is invariant to a constant shift") {
    Rng rng(3);
    std::normal_distribution<double> n(0, 2);
    std::vector<double> xs(3000);
    for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = 50.0 * std::exp(-double(i) / 200) + n(rng);
    ConvergenceDetector a(100, 1.0), b(100, 1.0);
    for (double x : xs) {
      a.push(x);
      b.push(x - 1234.5);
    }
    CHECK(a.convergence_episode() == b.convergence_episode());
    CHECK(a.converged());
  }

  TEST_CASE("moving average is empty before a full window") {
    ConvergenceDetector d(10, 1.0);
    for (int i = 0; i < 9; ++i) d.push(1.0);
    CHECK_FALSE(d.moving_average().has_value());
    d.push(1.0);
    CHECK(d.moving_average().has_value());
  }

  TEST_CASE("termination spec validation") {
    TerminationSpec s;
    CHECK_NOTHROW(s.validate());
    s.window = 0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
  }

  TEST_CASE("greedy episode of a scripted agent reaches the target row") {
    auto env = roomy_env(Algorithm::ql);
    UpAgent agent;
    Rng rng(1);
    const EpisodeMetrics m = run_episode(env, agent, 0.0, true, rng);
    CHECK(m.done_reason == DoneReason::target);
    CHECK(m.steps == 10);
    CHECK(agent.learned == 10);
    CHECK(m.distance == doctest::Approx(10 * 0.065));
  }

  TEST_CASE("deterministic agent pre-training converges at episode 200") {
    auto env = roomy_env(Algorithm::ql);
    UpAgent agent;
    const TrainResult r = pretrain(env, agent, TerminationSpec{}, 1);
    CHECK(r.converged);
    CHECK(r.convergence_episode == 200);
    CHECK(r.episodes == 200);
    const TrainResult capped = pretrain(env, agent, TerminationSpec{}, 1, 50);
    CHECK_FALSE(capped.converged);
    CHECK(capped.episodes == 50);
  }

  TEST_CASE("fine-tuning stops after the required safe streak") {
    auto env = roomy_env(Algorithm::ql);
    UpAgent agent;
    Rng rng(2);
    const EpisodeMetrics probe = run_episode(env, agent, 0.0, false, rng);
    REQUIRE(probe.pain_events == 0);
    TerminationSpec loose;
    loose.erg_threshold = probe.avg_erg + 0.5;
    const TrainResult r = finetune(env, agent, loose, 2);
    CHECK(r.converged);
    CHECK(r.episodes == 10);

    TerminationSpec strict;
    strict.erg_threshold = probe.avg_erg - 0.01;
    strict.finetune_cap = 30;
    const TrainResult never = finetune(env, agent, strict, 2);
    CHECK_FALSE(never.converged);
    CHECK(never.episodes == 30);
  }

  TEST_CASE("evaluation is repeatable and has zero spread for a greedy policy") {
    auto env = roomy_env(Algorithm::dqn);
    Hyperparameters hp;
    hp.hidden_dim = 16;
    DqnAgent agent(hp, env.config().workspace, 5);
    const MetricsSummary a = evaluate(env, agent, 5, 9);
    const MetricsSummary b = evaluate(env, agent, 5, 9);
    CHECK(a.n == 5);
    CHECK(a.ret.mean == b.ret.mean);
    CHECK(a.steps.mean == b.steps.mean);
    CHECK(a.ret.std == 0.0);
    CHECK(a.avg_erg.std == 0.0);
  }

  TEST_CASE("summary statistics use the population deviation") {
    std::vector<EpisodeMetrics> e(2);
    e[0].ret = 1.0;
    e[1].ret = 3.0;
    e[0].done_reason = DoneReason::target;
    e[1].done_reason = DoneReason::pain_abort;
    const MetricsSummary s = summarize(e);
    CHECK(s.ret.mean == 2.0);
    CHECK(s.ret.std == 1.0);
    CHECK(s.successes == 1);
    CHECK(s.pain_aborts == 1);
  }

  TEST_CASE("full grid has 2187 combinations with a mixed-radix decode") {
    const HpoGrid g;
    CHECK(g.size() == 2187);
    const Hyperparameters first = g.at(0);
    CHECK(first.learning_rate == 1e-5);
    CHECK(first.hidden_dim == 128);
    CHECK(g.at(1).hidden_dim == 256);
    CHECK(g.at(3).batch_size == 128);
    CHECK(g.at(729).learning_rate == 1e-4);
    const Hyperparameters last = g.at(2186);
    CHECK(last.learning_rate == 1e-3);
    CHECK(last.discount == 0.999);
    CHECK(last.epsilon_decay_episodes == 2500);
    CHECK(last.hidden_dim == 512);
    CHECK_THROWS(g.at(2187));
    // Every combination is distinct.
    std::set<std::tuple<double, double, int, double, int, int, int>> seen;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto h = g.at(i);
      seen.insert({h.learning_rate, h.discount, h.epsilon_decay_episodes, h.soft_update_rate,
                   h.buffer_size, h.batch_size, h.hidden_dim});
    }
    CHECK(seen.size() == 2187);
  }

  TEST_CASE("ranking order") {
    const auto base = ranked_result(5, 10, 0.0, 2.1, 5, 60);
    CHECK(hpo_better(base, ranked_result(1, 9, 0.0, 2.0, 3, 90)));
    CHECK(hpo_better(base, ranked_result(1, 10, 0.01, 1.5, 3, 90)));
    CHECK(hpo_better(base, ranked_result(1, 10, 0.0, 2.6, 3, 90)));
    CHECK(hpo_better(base, ranked_result(1, 10, 0.0, 2.0, 6, 90)));
    CHECK(hpo_better(base, ranked_result(1, 10, 0.0, 2.0, 5, 50)));
    CHECK(hpo_better(ranked_result(1, 10, 0.0, 2.1, 5, 60), base));
    CHECK_FALSE(hpo_better(base, base));
  }

  TEST_CASE("combination seeds differ per index and base") {
    CHECK(combination_seed(1, 0) != combination_seed(1, 1));
    CHECK(combination_seed(1, 0) != combination_seed(2, 0));
    CHECK(combination_seed(3, 7) == combination_seed(3, 7));
  }

  TEST_CASE("grid search stops each run at twice the decay") {
    auto env = roomy_env(Algorithm::dqn);
    HpoGrid g;
    g.learning_rate = {1e-3};
    g.discount = {0.9};
    g.epsilon_decay_episodes = {3, 5};
    g.soft_update_rate = {1e-2};
    g.buffer_size = {64};
    g.batch_size = {8};
    g.hidden_dim = {8};
    HpoOptions opt;
    opt.eval_episodes = 2;
    const HpoOutcome out = hpo(g, env, opt);
    REQUIRE(out.ranked.size() == 2);
    REQUIRE(out.champion);
    for (const auto& r : out.ranked) {
      CHECK(r.early_stopped);
      CHECK(r.episodes == 2 * r.hp.epsilon_decay_episodes);
      CHECK(r.eval.n == 2);
    }
    std::ostringstream csv;
    write_hpo_csv(csv, out.ranked);
    const std::string s = csv.str();
    CHECK(std::count(s.begin(), s.end(), '\n') == 3);

    // Same seed, same ranking.
    const HpoOutcome again = hpo(g, env, opt);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(again.ranked[i].index == out.ranked[i].index);
      CHECK(again.ranked[i].eval.ret.mean == out.ranked[i].eval.ret.mean);
    }
  }
}
