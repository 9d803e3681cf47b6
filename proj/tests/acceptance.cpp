// Acceptance runner. One PASS/FAIL line per criterion; exit status is the
// number of failed criteria (capped at 1).
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "ergo/protocol.hpp"

using namespace ergo;

namespace {

// Pinned tolerances and published reference values.
constexpr double kQlOracleReturn = -67.5;
constexpr double kQlPublishedReturn = -70.0;
constexpr double kQlReturnTol = 5.0;
constexpr int kQlSteps = 9, kQlStepsTol = 1;
constexpr double kQlErgLo = 1.85, kQlErgHi = 2.25;
constexpr int kQlConvLo = 95, kQlConvHi = 500;
constexpr int kQlSeedsNeeded = 4;
constexpr double kQlBudgetS = 300;

constexpr int kDqnMaxSteps = 6;
constexpr double kDqnMaxErg = 2.4;
constexpr int kDqnSeedsNeeded = 3;
constexpr double kDqnBudgetS = 1800;

constexpr int kTableStepsTol = 1;
constexpr double kTableErgTol = 0.2;

constexpr int kGapSeeds = 5, kGapSeedsNeeded = 4, kGapEvalEpisodes = 10;
constexpr double kRealErgThreshold = 2.5;
constexpr double kGapBudgetS = 1200;

constexpr int kPropertyCases = 1000;
constexpr double kPropertyBudgetS = 60;
constexpr double kIkRoundTripTol = 1e-9;
constexpr double kFdRelTol = 1e-6;

constexpr double kHpoBudgetS = 900;

struct TableRow {
  const char* id;
  int ql_steps;
  double ql_erg;
  int dqn_steps;
  double dqn_erg;
};
constexpr TableRow kSimSimTable[] = {
    {"1.62", 9, 2.25, 5, 2.14},
    {"1.69", 8, 2.12, 3, 2.05},
    {"1.79", 9, 2.00, 5, 2.12},
    {"1.83", 8, 2.09, 3, 2.15},
};

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

ExperimentConfig config_for(const std::string& id, Algorithm algo) {
  ExperimentConfig c;
  c.participant = id;
  c.algorithm = algo;
  c.validate();
  return c;
}

struct Trained {
  std::unique_ptr<Agent> agent;
  TrainResult train;
  MetricsSummary sim;
};

Trained train_and_eval(const ExperimentConfig& cfg, std::uint64_t seed) {
  auto env = make_sim_env(cfg);
  Trained t;
  t.agent = make_agent(cfg, seed);
  t.train = pretrain(env, *t.agent, cfg.termination, seed);
  t.sim = evaluate(env, *t.agent, cfg.eval_episodes, seed + 1);
  return t;
}

// ---------------------------------------------------------------------------

Verdict criterion1() {
  bool ok = true;
  ok &= erg_rew(3.0) == -100.0;
  ok &= erg_rew(1.0) == 0.0;
  ok &= x_mov_rew(6) == -100.0;
  ok &= z_step_rew(0.4, 90.0) == 100.0;
  ok &= reward_dqn({2.0, 0.1}, {90.0, 0.4}, 0) == -100.0;
  ok &= reward_dqn({1.0, 1.0}, {0.0, 0.02}, 3) == -100.0;
  return {ok, "erg_rew(3), erg_rew(1), x_mov_rew(6), z_step_rew(0.4,90), pain branch"};
}

Verdict criterion2() {
  double oracle = 0.0;
  for (int i = 0; i < 9; ++i) oracle += reward_ql({2.0, 0.0}, 0);
  const auto cfg = config_for("1.79", Algorithm::ql);
  const Trained t = train_and_eval(cfg, 1);
  const double learned = t.sim.ret.mean;
  const bool ok = oracle == kQlOracleReturn && std::abs(learned - kQlPublishedReturn) <= kQlReturnTol;
  return {ok, fmt("oracle %.4f (want %.1f), learned return %.3f (want %.1f +- %.1f)", oracle,
                  kQlOracleReturn, learned, kQlPublishedReturn, kQlReturnTol)};
}

Verdict criterion3() {
  const auto t0 = Clock::now();
  const auto cfg = config_for("1.79", Algorithm::ql);
  int good = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Trained t = train_and_eval(cfg, seed);
    const int conv = t.train.convergence_episode.value_or(-1);
    const bool ok = t.train.converged && std::abs(t.sim.steps.mean - kQlSteps) <= kQlStepsTol &&
                    t.sim.avg_erg.mean >= kQlErgLo && t.sim.avg_erg.mean <= kQlErgHi &&
                    t.sim.avg_pain.mean == 0.0 && conv >= kQlConvLo && conv <= kQlConvHi;
    good += ok;
    detail += fmt("s%d[conv %d steps %.1f erg %.3f pain %.3f]%s ", int(seed), conv,
                  t.sim.steps.mean, t.sim.avg_erg.mean, t.sim.avg_pain.mean, ok ? "" : "x");
  }
  const double el = seconds_since(t0);
  return {good >= kQlSeedsNeeded && el < kQlBudgetS,
          fmt("%d/5 seeds ok (need %d), %.1f s (budget %.0f s): ", good, kQlSeedsNeeded, el,
              kQlBudgetS) +
              detail};
}

Verdict criterion4() {
  const auto t0 = Clock::now();
  const auto cfg = config_for("1.79", Algorithm::dqn);
  int good = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Trained t = train_and_eval(cfg, seed);
    const bool ok = t.sim.steps.mean <= kDqnMaxSteps && t.sim.avg_pain.mean == 0.0 &&
                    t.sim.avg_erg.mean <= kDqnMaxErg && t.sim.successes == t.sim.n;
    good += ok;
    detail += fmt("s%d[ep %d steps %.1f erg %.3f pain %.3f]%s ", int(seed), t.train.episodes,
                  t.sim.steps.mean, t.sim.avg_erg.mean, t.sim.avg_pain.mean, ok ? "" : "x");
  }
  const double el = seconds_since(t0);
  return {good >= kDqnSeedsNeeded && el <= kDqnBudgetS,
          fmt("%d/5 seeds ok (need %d), %.1f s (budget %.0f s): ", good, kDqnSeedsNeeded, el,
              kDqnBudgetS) +
              detail};
}

Verdict criterion5() {
  bool all = true;
  std::string detail;
  for (const auto& row : kSimSimTable) {
    for (Algorithm algo : {Algorithm::ql, Algorithm::dqn}) {
      const Trained t = train_and_eval(config_for(row.id, algo), 1);
      const int want_steps = algo == Algorithm::ql ? row.ql_steps : row.dqn_steps;
      const double want_erg = algo == Algorithm::ql ? row.ql_erg : row.dqn_erg;
      const bool ok = std::abs(t.sim.steps.mean - want_steps) <= kTableStepsTol &&
                      std::abs(t.sim.avg_erg.mean - want_erg) <= kTableErgTol &&
                      t.sim.avg_pain.mean == 0.0;
      all &= ok;
      detail += fmt("%s/%s[steps %.1f vs %d, erg %.3f vs %.2f, pain %.3f]%s ", row.id,
                    std::string(to_string(algo)).c_str(), t.sim.steps.mean, want_steps,
                    t.sim.avg_erg.mean, want_erg, t.sim.avg_pain.mean, ok ? "" : "x");
    }
  }
  return {all, detail};
}

Verdict criterion6() {
  const auto t0 = Clock::now();
  bool all = true;
  std::string detail;
  for (const auto& row : kSimSimTable) {
    auto cfg = config_for(row.id, Algorithm::dqn);
    const Trained t = train_and_eval(cfg, 1);
    int gap_ok = 0;
    for (std::uint64_t g = 1; g <= kGapSeeds; ++g) {
      auto real = make_real_env(cfg, g);
      const MetricsSummary r = evaluate(real, *t.agent, kGapEvalEpisodes, 100 + g);
      gap_ok += r.ret.mean < t.sim.ret.mean && r.pain_aborts >= 1;
    }
    // Fine-tune against the first gap draw and re-test there.
    auto real = make_real_env(cfg, 1);
    auto tuned = t.agent->clone();
    finetune(real, *tuned, cfg.termination, 3);
    const MetricsSummary after = evaluate(real, *tuned, kGapEvalEpisodes, 4);
    const bool ok = gap_ok >= kGapSeedsNeeded && after.avg_pain.mean == 0.0 &&
                    after.avg_erg.mean < kRealErgThreshold;
    all &= ok;
    detail += fmt("%s[gap %d/%d, tuned pain %.3f erg %.3f]%s ", row.id, gap_ok, kGapSeeds,
                  after.avg_pain.mean, after.avg_erg.mean, ok ? "" : "x");
  }
  const double el = seconds_since(t0);
  return {all && el <= kGapBudgetS, fmt("%.1f s (budget %.0f s): ", el, kGapBudgetS) + detail};
}

// ---------------------------------------------------------------------------
// Property suites

struct Suite {
  const char* name;
  std::function<int(std::mt19937_64&)> run;  // returns failing case count
};

HumanModel random_model(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> l(0.2, 0.45), ax(2.0, 2.8), az(0.8, 1.6);
  return scale_model({1.7, 0.4, l(rng), l(rng)}, {ax(rng), az(rng)});
}

int prop_ik_roundtrip(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> s(-60, 180), e(0.5, 150);
  int bad = 0;
  for (int i = 0; i < kPropertyCases; ++i) {
    const HumanModel m = random_model(rng);
    const JointAngles q{s(rng), e(rng)};
    const Point2 p = forward_kinematics(m, q);
    double best = 1e9;
    for (const auto& c : inverse_kinematics(m, p)) best = std::min(best, distance(forward_kinematics(m, c), p));
    bad += !(best <= kIkRoundTripTol);
  }
  return bad;
}

int prop_ik_bruteforce(std::mt19937_64& rng) {
  // Dense joint-space scan; any point within reach is hit to within the scan error.
  constexpr double step = 2.0;
  int bad = 0;
  for (int i = 0; i < kPropertyCases; ++i) {
    const HumanModel m = random_model(rng);
    const double r = m.l_upper + m.l_fore;
    std::uniform_real_distribution<double> dx(-1.2 * r, 1.2 * r);
    const Point2 p{m.shoulder_anchor.x + dx(rng), m.shoulder_anchor.z + dx(rng)};
    double best = 1e9;
    for (double a = -180; a < 180; a += step)
      for (double b = -180; b < 180; b += step)
        best = std::min(best, distance(forward_kinematics(m, {a, b}), p));
    const double scan_err = (m.l_upper + 2 * m.l_fore) * (step / 2) * M_PI / 180.0;
    const auto c = inverse_kinematics(m, p);
    if (!c.empty()) {
      bad += best > scan_err;
    } else {
      bad += best < 1e-6;
    }
  }
  return bad;
}

int prop_shaped(std::mt19937_64& rng) {
  const HumanModel m = find_preset("1.79").model();
  const Workspace ws;
  const auto table = dqn_action_table();
  std::uniform_real_distribution<double> x(0, ws.width), z(0, ws.height);
  int bad = 0;
  for (int i = 0; i < kPropertyCases; ++i) {
    const Point2 s{x(rng), z(rng)};
    const auto sh = shaped_actions(s, m, ws, table, kDefaultPathStep);
    for (int a = 0; a < kDqnActionCount; ++a) {
      const Point2 to = s + table[a].delta;
      const bool feasible =
          ws.contains(to) &&
          try_path_risk(m, ws.to_world(s), ws.to_world(to), kDefaultPathStep, ws.l_object);
      bad += sh.mask.test(a) != feasible;
    }
  }
  return bad;
}

int prop_pain(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> e(-20, 180);
  int bad = 0;
  for (int i = 0; i < kPropertyCases; ++i) {
    const double v = i < 8 ? std::array{0.0, 30.0, 115.0, 150.0, 29.999, 30.001, 114.999, 150.001}[i]
                           : e(rng);
    const bool want = (v >= 0.0 && v <= 30.0) || (v >= 115.0 && v <= 150.0);
    bad += pain_state(v) != int(want);
  }
  return bad;
}

int prop_masked(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> small(-3, 3);
  int bad = 0;
  for (int i = 0; i < kPropertyCases; ++i) {
    std::vector<double> v(35);
    for (auto& x : v) x = small(rng);
    ActionMask m(rng() & ((1ULL << 35) - 1));
    if (m.empty()) m.set(int(rng() % 35));
    double ref = -1e9;
    for (int a = 0; a < 35; ++a)
      if (m.test(a)) ref = std::max(ref, v[a]);
    const int a = masked_argmax(v, m, rng);
    bad += !m.test(a) || v[a] != ref || masked_max(v, m) != ref;

    QTable t(35);
    for (int k = 0; k < 35; ++k) t.set({0, 1}, k, v[k]);
    ql_update(t, {0, 0}, 0, 1.0, {0, 1}, m, false, 1.0, 0.5);
    bad += t.get({0, 0}, 0) != 1.0 + 0.5 * ref;
    ql_update(t, {0, 0}, 1, 1.0, {0, 1}, m, true, 1.0, 0.5);
    bad += t.get({0, 0}, 1) != 1.0;
  }
  return bad;
}

int prop_fd(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  int bad = 0;
  for (int i = 0; i < kPropertyCases; ++i) {
    nn::Mlp n = nn::Mlp::init(2, 4, 3, rng());
    for (auto& w : n.w2) w = u(rng);
    for (auto& b : n.b1) b = 0.3 * u(rng);
    const std::vector<double> x{u(rng), u(rng)};
    const std::vector<double> g{u(rng), u(rng), u(rng)};
    const nn::Gradients an = nn::backward(n, x, g);
    auto f = [&] {
      std::vector<double> y(3);
      nn::forward(n, x, y);
      return g[0] * y[0] + g[1] * y[1] + g[2] * y[2];
    };
    auto block = [&](std::vector<double>& p, const std::vector<double>& ga) {
      for (std::size_t k = 0; k < p.size(); ++k) {
        const double keep = p[k], h = 1e-6;
        p[k] = keep + h;
        const double fp = f();
        p[k] = keep - h;
        const double fm = f();
        p[k] = keep;
        const double fd = (fp - fm) / (2 * h);
        if (std::abs(fd - ga[k]) / std::max(1.0, std::abs(fd) + std::abs(ga[k])) > kFdRelTol) return 1;
      }
      return 0;
    };
    // Skip draws sitting on a ReLU kink, where the derivative is undefined.
    bool kink = false;
    for (int j = 0; j < 4; ++j) {
      const double pre = n.b1[j] + n.w1[2 * j] * x[0] + n.w1[2 * j + 1] * x[1];
      kink |= std::abs(pre) < 1e-4;
    }
    if (kink) {
      --i;
      continue;
    }
    bad += block(n.w1, an.w1) + block(n.b1, an.b1) + block(n.w2, an.w2) + block(n.b2, an.b2) > 0;
  }
  return bad;
}

int prop_soft_update(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> tau(0.0, 1.0);
  int bad = 0;
  auto dist = [](const nn::Mlp& a, const nn::Mlp& b) {
    double s = 0;
    for (std::size_t k = 0; k < a.w1.size(); ++k) s += std::pow(a.w1[k] - b.w1[k], 2);
    for (std::size_t k = 0; k < a.w2.size(); ++k) s += std::pow(a.w2[k] - b.w2[k], 2);
    return std::sqrt(s);
  };
  for (int i = 0; i < kPropertyCases; ++i) {
    const nn::Mlp online = nn::Mlp::init(2, 8, 5, rng());
    nn::Mlp target = nn::Mlp::init(2, 8, 5, rng());
    const double t = tau(rng), before = dist(target, online);
    nn::soft_update(target, online, t);
    bad += std::abs(dist(target, online) - (1 - t) * before) > 1e-12 * (1 + before);
  }
  return bad;
}

int prop_replay(std::mt19937_64& rng) {
  int bad = 0;
  for (int i = 0; i < kPropertyCases; ++i) {
    const int cap = 1 + int(rng() % 20), pushes = int(rng() % 60);
    ReplayBuffer b(cap);
    std::deque<int> ref;
    for (int k = 0; k < pushes; ++k) {
      Transition t;
      t.action = k;
      b.push(t);
      ref.push_back(k);
      if (int(ref.size()) > cap) ref.pop_front();
    }
    bad += b.size() != int(ref.size());
    for (int k = 0; k < b.size(); ++k) bad += b.at(k).action != ref[k];
  }
  return bad;
}

int prop_determinism(std::mt19937_64& rng) {
  ExperimentConfig cfg = config_for("1.79", Algorithm::dqn);
  Hyperparameters hp;
  hp.hidden_dim = 8;
  hp.batch_size = 4;
  hp.buffer_size = 32;
  hp.epsilon_decay_episodes = 2;
  cfg.hyperparameters = hp;
  const auto proto = make_sim_env(cfg);
  int bad = 0;
  for (int i = 0; i < kPropertyCases; ++i) {
    const std::uint64_t seed = rng();
    auto once = [&] {
      CoManipulationEnv env(proto);
      auto agent = make_agent(cfg, seed);
      const TrainResult r = pretrain(env, *agent, cfg.termination, seed, 2);
      std::ostringstream ss;
      agent->save(ss);
      return std::make_pair(r.returns, ss.str());
    };
    bad += once() != once();
  }
  return bad;
}

Verdict criterion7() {
  const Suite suites[] = {
      {"ik-roundtrip", prop_ik_roundtrip}, {"ik-bruteforce", prop_ik_bruteforce},
      {"shaped-feasibility", prop_shaped}, {"pain-predicate", prop_pain},
      {"masked-argmax-bootstrap", prop_masked}, {"mlp-finite-diff", prop_fd},
      {"soft-update", prop_soft_update},   {"replay-fifo", prop_replay},
      {"determinism", prop_determinism},
  };
  bool all = true;
  std::string detail;
  std::uint64_t seed = 2024;
  for (const auto& s : suites) {
    std::mt19937_64 rng(seed++);
    const auto t0 = Clock::now();
    const int bad = s.run(rng);
    const double el = seconds_since(t0);
    const bool ok = bad == 0 && el < kPropertyBudgetS;
    all &= ok;
    detail += fmt("%s[%d cases, %d bad, %.2f s]%s ", s.name, kPropertyCases, bad, el, ok ? "" : "x");
  }
  return {all, detail};
}

Verdict criterion8() {
  const auto t0 = Clock::now();
  const bool count_ok = HpoGrid{}.size() == 2187;
  HpoGrid g;
  g.learning_rate = {1e-3};
  g.discount = {0.9, 0.999};
  g.epsilon_decay_episodes = {150, 300};
  g.soft_update_rate = {1e-2};
  g.buffer_size = {2000};
  g.batch_size = {32};
  g.hidden_dim = {32, 64};
  const auto cfg = config_for("1.79", Algorithm::dqn);
  const auto env = make_sim_env(cfg);
  HpoOptions opt;
  opt.seed = 1;
  opt.eval_episodes = cfg.eval_episodes;
  opt.spec = cfg.termination;
  const HpoOutcome out = hpo(g, env, opt);
  std::ostringstream csv;
  write_hpo_csv(csv, out.ranked);
  const std::string s = csv.str();
  const long rows = std::count(s.begin(), s.end(), '\n') - 1;
  bool bound_ok = true;
  for (const auto& r : out.ranked) {
    const int limit = 2 * r.hp.epsilon_decay_episodes;
    bound_ok &= r.episodes <= limit && (r.converged || r.early_stopped);
  }
  const auto& champ = out.ranked.front();
  const bool champ_ok = out.champion && champ.eval.avg_pain.mean == 0.0 && champ.eval.pain_aborts == 0;
  const double el = seconds_since(t0);
  const bool ok = count_ok && rows == 8 && bound_ok && champ_ok && el <= kHpoBudgetS;
  return {ok, fmt("full grid %zu, csv rows %ld, early-stop bound %s, champion #%zu pain %.3f "
                  "erg %.3f steps %.1f, %.1f s (budget %.0f s)",
                  HpoGrid{}.size(), rows, bound_ok ? "ok" : "violated", champ.index,
                  champ.eval.avg_pain.mean, champ.eval.avg_erg.mean, champ.eval.steps.mean, el,
                  kHpoBudgetS)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  int only = 0;
  app.add_option("--criterion", only, "Run a single criterion (1-8)")->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);

  const std::map<int, Verdict (*)()> all{{1, criterion1}, {2, criterion2}, {3, criterion3},
                                         {4, criterion4}, {5, criterion5}, {6, criterion6},
                                         {7, criterion7}, {8, criterion8}};
  int failed = 0;
  for (const auto& [n, fn] : all) {
    if (only && n != only) continue;
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "criterion " << n << ": " << (v.pass ? "PASS" : "FAIL") << " ("
              << fmt("%.1f s", seconds_since(t0)) << ") " << v.detail << std::endl;
    failed += !v.pass;
  }
  return failed ? 1 : 0;
}
