#include "ergo/protocol.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace ergo {

std::unique_ptr<Agent> make_agent(const ExperimentConfig& cfg, std::uint64_t seed) {
  const Hyperparameters hp = cfg.effective_hyperparameters();
  const EnvConfig env = cfg.env_config();
  if (cfg.algorithm == Algorithm::dqn) return std::make_unique<DqnAgent>(hp, env.workspace, seed);
  return std::make_unique<QlAgent>(hp, env.grid,
                                   static_cast<int>(grid_action_table(env.grid).size()));
}

CoManipulationEnv make_sim_env(const ExperimentConfig& cfg) {
  return make_env(cfg.preset(), cfg.env_config());
}

CoManipulationEnv make_real_env(const ExperimentConfig& cfg, std::uint64_t gap_seed) {
  const ParticipantPreset p = cfg.preset();
  const EnvConfig env = cfg.env_config();
  auto motion = std::make_unique<SurrogateReal>(p.model(), cfg.gap, env.workspace.l_object, gap_seed);
  return make_env(p, env, std::move(motion));
}

bool RunReport::has_phase(const std::string& phase) const { return find(phase) != nullptr; }

const PhaseRow* RunReport::find(const std::string& phase) const {
  for (const auto& r : rows) {
    if (r.phase == phase) return &r;
  }
  return nullptr;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void write_step_json(std::ostream& os, const std::string& phase, int episode, const EnvState& s,
                     int action, const StepOutcome& out) {
  os << "{\"phase\":\"" << phase << "\",\"episode\":" << episode << ",\"step\":" << out.next.steps
     << ",\"x\":" << num(s.obj.x) << ",\"z\":" << num(s.obj.z) << ",\"action\":" << action
     << ",\"next_x\":" << num(out.next.obj.x) << ",\"next_z\":" << num(out.next.obj.z)
     << ",\"reward\":" << num(out.reward) << ",\"avg_erg\":" << num(out.risk.avg_erg)
     << ",\"avg_pain\":" << num(out.risk.avg_pain) << ",\"distance\":" << num(out.distance)
     << ",\"elapsed\":" << num(out.elapsed) << ",\"done\":" << (out.done ? "true" : "false")
     << ",\"reason\":\"" << to_string(out.done_reason) << "\"}\n";
}

void write_curve_json(std::ostream& os, const std::string& phase, int episode, double eps,
                      const EpisodeMetrics& m) {
  os << "{\"phase\":\"" << phase << "\",\"episode\":" << episode << ",\"epsilon\":" << num(eps)
     << ",\"return\":" << num(m.ret) << ",\"steps\":" << m.steps << ",\"avg_erg\":"
     << num(m.avg_erg) << ",\"avg_pain\":" << num(m.avg_pain) << ",\"reason\":\""
     << to_string(m.done_reason) << "\"}\n";
}

ProtocolResult run_protocol(const ExperimentConfig& cfg, const ProtocolOptions& opt) {
  ProtocolResult res;
  const std::uint64_t seed = opt.seed;
  const int n_eval = cfg.eval_episodes;

  auto row = [&](const char* phase, const MetricsSummary& m, const TrainResult* tr) {
    PhaseRow r;
    r.participant = cfg.participant;
    r.algorithm = cfg.algorithm;
    r.phase = phase;
    r.seed = seed;
    r.metrics = m;
    if (tr) {
      r.training_converged = tr->converged;
      r.training_episodes = tr->episodes;
    }
    res.report.rows.push_back(r);
  };

  auto curve = [&](const char* phase) -> EpisodeCallback {
    return [&opt, phase](int ep, double eps, const EpisodeMetrics& m) {
      if (opt.curve_log) write_curve_json(*opt.curve_log, phase, ep, eps, m);
      if (opt.on_episode) opt.on_episode(ep, eps, m);
    };
  };
  int log_episode = 0;
  std::string log_phase;
  auto steps = [&](const std::string& phase) -> StepCallback {
    if (!opt.step_log) return nullptr;
    log_phase = phase;
    log_episode = 0;
    return [&](const EnvState& s, int a, const StepOutcome& out) {
      write_step_json(*opt.step_log, log_phase, log_episode, s, a, out);
      if (out.done) ++log_episode;
    };
  };

  // Stage 1: pre-training in simulation.
  CoManipulationEnv sim = make_sim_env(cfg);
  if (opt.pretrained) {
    res.pretrained = opt.pretrained->clone();
  } else {
    res.pretrained = make_agent(cfg, seed);
    res.pretrain = pretrain(sim, *res.pretrained, cfg.termination, seed, opt.max_episodes,
                            curve("pretrain"));
  }
  const TrainResult* pre = opt.pretrained ? nullptr : &res.pretrain;
  row(kSimSim, evaluate(sim, *res.pretrained, n_eval, seed + 1, steps(kSimSim)), pre);

  // Stage 2: deployment of the simulated policy on the surrogate participant.
  CoManipulationEnv real = make_real_env(cfg, cfg.gap_seed);
  row(kSimReal, evaluate(real, *res.pretrained, n_eval, seed + 2, steps(kSimReal)), pre);

  if (opt.skip_finetune) return res;

  // Stages 3 and 4: fine-tune on the surrogate and test again.
  res.finetuned = res.pretrained->clone();
  TerminationSpec spec = cfg.termination;
  if (opt.max_episodes) spec.finetune_cap = std::min(spec.finetune_cap, *opt.max_episodes);
  res.finetune = finetune(real, *res.finetuned, spec, seed + 3, kFinetuneSchedule,
                          curve("finetune"), steps("finetune"));
  row(kRealReal, evaluate(real, *res.finetuned, n_eval, seed + 4, steps(kRealReal)),
      &res.finetune);
  return res;
}

// ---------------------------------------------------------------------------

namespace {

constexpr const char* kReportHeader =
    "participant,algorithm,phase,seed,n,reward_mean,reward_std,pain_mean,pain_std,erg_mean,"
    "erg_std,steps_mean,steps_std,distance_mean,distance_std,time_mean,time_std,pain_aborts,"
    "successes,training_converged,training_episodes";

}  // namespace

void write_report_csv(std::ostream& os, const RunReport& report, bool header) {
  if (header) os << kReportHeader << '\n';
  for (const auto& r : report.rows) {
    const MetricsSummary& m = r.metrics;
    os << r.participant << ',' << to_string(r.algorithm) << ',' << r.phase << ',' << r.seed << ','
       << m.n;
    for (const Stat* s : {&m.ret, &m.avg_pain, &m.avg_erg, &m.steps, &m.distance, &m.sim_time}) {
      os << ',' << num(s->mean) << ',' << num(s->std);
    }
    os << ',' << m.pain_aborts << ',' << m.successes << ',' << (r.training_converged ? 1 : 0)
       << ',' << r.training_episodes << '\n';
  }
}

RunReport read_report_csv(std::istream& is) {
  RunReport rep;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line.rfind("participant,", 0) == 0) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 21) throw std::runtime_error("report: malformed row '" + line + "'");
    PhaseRow r;
    r.participant = f[0];
    r.algorithm = parse_algorithm(f[1]);
    r.phase = f[2];
    r.seed = std::stoull(f[3]);
    r.metrics.n = std::stoi(f[4]);
    int k = 5;
    for (Stat* s : {&r.metrics.ret, &r.metrics.avg_pain, &r.metrics.avg_erg, &r.metrics.steps,
                    &r.metrics.distance, &r.metrics.sim_time}) {
      s->mean = std::stod(f[k++]);
      s->std = std::stod(f[k++]);
    }
    r.metrics.pain_aborts = std::stoi(f[17]);
    r.metrics.successes = std::stoi(f[18]);
    r.training_converged = f[19] == "1";
    r.training_episodes = std::stoi(f[20]);
    rep.rows.push_back(r);
  }
  return rep;
}

std::string format_report(const RunReport& report) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-6s %-4s %-10s %16s %13s %13s %11s %13s %13s\n", "Part.",
                "Alg.", "Train/Exec", "Reward", "Pain", "Erg.", "Steps", "Distance(m)",
                "Time(s)");
  os << buf;
  bool flagged = false;
  for (const auto& r : report.rows) {
    const MetricsSummary& m = r.metrics;
    auto pm = [](const Stat& s, int prec) {
      char b[48];
      std::snprintf(b, sizeof b, "%.*f±%.*f", prec, s.mean, prec, s.std);
      return std::string(b);
    };
    std::string phase = r.phase;
    if (!r.training_converged) {
      phase += "*";
      flagged = true;
    }
    std::snprintf(buf, sizeof buf, "%-6s %-4s %-10s %17s %14s %14s %12s %14s %14s\n",
                  r.participant.c_str(), r.algorithm == Algorithm::dqn ? "DQN" : "QL",
                  phase.c_str(), pm(m.ret, 1).c_str(), pm(m.avg_pain, 2).c_str(),
                  pm(m.avg_erg, 2).c_str(), pm(m.steps, 1).c_str(), pm(m.distance, 2).c_str(),
                  pm(m.sim_time, 1).c_str());
    os << buf;
  }
  if (flagged) os << "* training phase did not meet its termination criterion\n";
  return os.str();
}

}  // namespace ergo
