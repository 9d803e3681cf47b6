// Command-line front end: hpo, protocol, pretrain, finetune, eval, report.

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "ergo/protocol.hpp"

namespace fs = std::filesystem;
using namespace ergo;

namespace {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kNotConverged = 3,
  kIoError = 4,
  kInterrupted = 130,
};

constexpr const char* kVersion = "0.1.0";

std::atomic<bool> g_interrupted{false};

struct Interrupted {};

void on_signal(int) { g_interrupted = true; }

void check_interrupt() {
  if (g_interrupted) throw Interrupted{};
}

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string participant;
  std::string algorithm;
  std::optional<int> episodes;
  std::optional<int> workers;
  bool skip_finetune = false;
  std::string checkpoint;
  std::string mode = "real";
  std::vector<std::string> report_files;
};

ExperimentConfig resolve(const Options& o) {
  ExperimentConfig cfg = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
  if (!o.participant.empty()) cfg.participant = o.participant;
  if (!o.algorithm.empty()) {
    const Algorithm a = parse_algorithm(o.algorithm);
    if (a != cfg.algorithm) cfg.hyperparameters.reset();
    cfg.algorithm = a;
  }
  if (o.seed) cfg.seeds = {*o.seed};
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.workers) cfg.workers = *o.workers;
  cfg.validate();
  return cfg;
}

fs::path out_dir(const ExperimentConfig& cfg) {
  fs::path p(cfg.output_dir);
  fs::create_directories(p);
  return p;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw std::ios_base::failure("cannot write '" + p.string() + "'");
  return f;
}

std::string tag(const ExperimentConfig& cfg, std::uint64_t seed) {
  return std::string(to_string(cfg.algorithm)) + "_" + cfg.participant + "_s" +
         std::to_string(seed);
}

void write_manifest(const ExperimentConfig& cfg, const std::string& command) {
  nlohmann::json m;
  m["command"] = command;
  m["config_hash"] = config_hash(cfg);
  m["config"] = to_json(cfg);
  m["seeds"] = cfg.seeds;
  m["gap_seed"] = cfg.gap_seed;
  m["versions"] = {{"ergo", kVersion}, {"compiler", __VERSION__}};
  auto f = open_out(out_dir(cfg) / ("manifest_" + command + ".json"));
  f << m.dump(2) << '\n';
}

void save_agent(const Agent& a, const fs::path& p) {
  auto f = open_out(p);
  a.save(f);
}

std::unique_ptr<Agent> read_agent(const ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open checkpoint '" + path + "'");
  const EnvConfig env = cfg.env_config();
  auto a = load_agent(in, env.workspace, env.grid);
  if (a->algorithm() != cfg.algorithm) {
    throw ConfigError("checkpoint '" + path + "' holds a " + std::string(to_string(a->algorithm())) +
                      " agent, config expects " + std::string(to_string(cfg.algorithm)));
  }
  return a;
}

void print_summary(const char* label, const MetricsSummary& m) {
  std::printf("%-10s reward %.2f±%.2f  pain %.3f  erg %.3f  steps %.2f  dist %.3f m  time %.1f s  "
              "aborts %d/%d\n",
              label, m.ret.mean, m.ret.std, m.avg_pain.mean, m.avg_erg.mean, m.steps.mean,
              m.distance.mean, m.sim_time.mean, m.pain_aborts, m.n);
}

EpisodeCallback interrupt_hook() {
  return [](int, double, const EpisodeMetrics&) { check_interrupt(); };
}

// ---------------------------------------------------------------------------

int cmd_hpo(const Options& o) {
  ExperimentConfig cfg = resolve(o);
  if (cfg.algorithm != Algorithm::dqn) throw ConfigError("hpo runs for dqn only");
  const fs::path dir = out_dir(cfg);
  write_manifest(cfg, "hpo");
  HpoOptions opt;
  opt.seed = cfg.seeds.front();
  opt.workers = cfg.workers;
  opt.eval_episodes = cfg.eval_episodes;
  opt.spec = cfg.termination;
  if (o.episodes) opt.spec.pretrain_cap = *o.episodes;
  std::printf("grid: %zu combinations, %d worker(s)\n", cfg.grid.size(), opt.workers);
  const CoManipulationEnv env = make_sim_env(cfg);
  HpoOutcome out = hpo(cfg.grid, env, opt);
  {
    auto f = open_out(dir / "hpo_results.csv");
    write_hpo_csv(f, out.ranked);
  }
  save_agent(*out.champion, dir / "champion.ckpt");
  const HpoResult& best = out.ranked.front();
  std::printf("champion: index %zu lr %g gamma %g decay %d tau %g buffer %d batch %d hidden %d\n",
              best.index, best.hp.learning_rate, best.hp.discount, best.hp.epsilon_decay_episodes,
              best.hp.soft_update_rate, best.hp.buffer_size, best.hp.batch_size,
              best.hp.hidden_dim);
  print_summary("champion", best.eval);
  bool any = false;
  for (const auto& r : out.ranked) any = any || r.converged;
  return any ? kOk : kNotConverged;
}

int cmd_pretrain(const Options& o) {
  ExperimentConfig cfg = resolve(o);
  const fs::path dir = out_dir(cfg);
  write_manifest(cfg, "pretrain");
  bool all = true;
  for (std::uint64_t seed : cfg.seeds) {
    CoManipulationEnv env = make_sim_env(cfg);
    auto agent = make_agent(cfg, seed);
    auto curve = open_out(dir / ("curve_pretrain_" + tag(cfg, seed) + ".jsonl"));
    const TrainResult tr = pretrain(env, *agent, cfg.termination, seed, o.episodes,
                                    [&](int ep, double eps, const EpisodeMetrics& m) {
                                      write_curve_json(curve, "pretrain", ep, eps, m);
                                      check_interrupt();
                                    });
    save_agent(*agent, dir / ("pretrain_" + tag(cfg, seed) + ".ckpt"));
    const MetricsSummary m = evaluate(env, *agent, cfg.eval_episodes, seed + 1);
    std::printf("seed %llu: %s after %d episodes", static_cast<unsigned long long>(seed),
                tr.converged ? "converged" : "not converged", tr.episodes);
    if (tr.convergence_episode) std::printf(" (convergence episode %d)", *tr.convergence_episode);
    std::printf("\n");
    print_summary(kSimSim, m);
    all = all && tr.converged;
  }
  return all ? kOk : kNotConverged;
}

int cmd_finetune(const Options& o) {
  ExperimentConfig cfg = resolve(o);
  const fs::path dir = out_dir(cfg);
  write_manifest(cfg, "finetune");
  bool all = true;
  for (std::uint64_t seed : cfg.seeds) {
    const std::string ckpt = o.checkpoint.empty()
                                 ? (dir / ("pretrain_" + tag(cfg, seed) + ".ckpt")).string()
                                 : o.checkpoint;
    auto agent = read_agent(cfg, ckpt);
    CoManipulationEnv env = make_real_env(cfg, cfg.gap_seed);
    TerminationSpec spec = cfg.termination;
    if (o.episodes) spec.finetune_cap = *o.episodes;
    auto curve = open_out(dir / ("curve_finetune_" + tag(cfg, seed) + ".jsonl"));
    auto steps = open_out(dir / ("steps_finetune_" + tag(cfg, seed) + ".jsonl"));
    int episode = 0;
    const TrainResult tr = finetune(
        env, *agent, spec, seed + 3, kFinetuneSchedule,
        [&](int ep, double eps, const EpisodeMetrics& m) {
          write_curve_json(curve, "finetune", ep, eps, m);
          check_interrupt();
        },
        [&](const EnvState& s, int a, const StepOutcome& out) {
          write_step_json(steps, "finetune", episode, s, a, out);
          if (out.done) ++episode;
        });
    save_agent(*agent, dir / ("finetune_" + tag(cfg, seed) + ".ckpt"));
    std::printf("seed %llu: fine-tuning %s after %d episodes\n",
                static_cast<unsigned long long>(seed), tr.converged ? "met" : "did not meet",
                tr.episodes);
    all = all && tr.converged;
  }
  return all ? kOk : kNotConverged;
}

int cmd_eval(const Options& o) {
  ExperimentConfig cfg = resolve(o);
  if (o.checkpoint.empty()) throw ConfigError("eval needs --checkpoint");
  if (o.mode != "sim" && o.mode != "real") throw ConfigError("--mode must be sim or real");
  const fs::path dir = out_dir(cfg);
  write_manifest(cfg, "eval");
  auto agent = read_agent(cfg, o.checkpoint);
  const std::uint64_t seed = cfg.seeds.front();
  CoManipulationEnv env = o.mode == "sim" ? make_sim_env(cfg) : make_real_env(cfg, cfg.gap_seed);
  auto steps = open_out(dir / ("steps_eval_" + tag(cfg, seed) + ".jsonl"));
  int episode = 0;
  const int n = o.episodes.value_or(cfg.eval_episodes);
  const MetricsSummary m =
      evaluate(env, *agent, n, seed, [&](const EnvState& s, int a, const StepOutcome& out) {
        write_step_json(steps, o.mode, episode, s, a, out);
        if (out.done) ++episode;
      });
  RunReport rep;
  rep.rows.push_back({cfg.participant, cfg.algorithm, o.mode == "sim" ? kSimSim : kRealReal, seed,
                      m, true, 0});
  auto f = open_out(dir / ("eval_" + tag(cfg, seed) + ".csv"));
  write_report_csv(f, rep);
  print_summary(o.mode.c_str(), m);
  return kOk;
}

int cmd_protocol(const Options& o) {
  ExperimentConfig cfg = resolve(o);
  const fs::path dir = out_dir(cfg);
  write_manifest(cfg, "protocol");
  std::unique_ptr<Agent> pre;
  if (!o.checkpoint.empty()) pre = read_agent(cfg, o.checkpoint);
  RunReport all;
  bool converged = true;
  for (std::uint64_t seed : cfg.seeds) {
    auto steps = open_out(dir / ("steps_protocol_" + tag(cfg, seed) + ".jsonl"));
    auto curve = open_out(dir / ("curve_protocol_" + tag(cfg, seed) + ".jsonl"));
    ProtocolOptions opt;
    opt.seed = seed;
    opt.skip_finetune = o.skip_finetune;
    opt.max_episodes = o.episodes;
    opt.pretrained = pre.get();
    opt.step_log = &steps;
    opt.curve_log = &curve;
    opt.on_episode = interrupt_hook();
    ProtocolResult res = run_protocol(cfg, opt);
    save_agent(*res.pretrained, dir / ("pretrain_" + tag(cfg, seed) + ".ckpt"));
    if (res.finetuned) save_agent(*res.finetuned, dir / ("finetune_" + tag(cfg, seed) + ".ckpt"));
    for (const auto& r : res.report.rows) {
      all.rows.push_back(r);
      converged = converged && r.training_converged;
    }
  }
  auto f = open_out(dir / ("report_" + std::string(to_string(cfg.algorithm)) + "_" +
                           cfg.participant + ".csv"));
  write_report_csv(f, all);
  const std::string text = format_report(all);
  auto t = open_out(dir / ("report_" + std::string(to_string(cfg.algorithm)) + "_" +
                           cfg.participant + ".txt"));
  t << text;
  std::cout << text;
  // Non-convergence is flagged in the report; the protocol itself completed.
  return converged ? kOk : kNotConverged;
}

int cmd_report(const Options& o) {
  std::vector<std::string> files = o.report_files;
  if (files.empty()) {
    const fs::path dir = o.out.empty() ? fs::path("runs") : fs::path(o.out);
    if (!fs::is_directory(dir)) throw std::ios_base::failure("no such directory '" + dir.string() + "'");
    for (const auto& e : fs::directory_iterator(dir)) {
      const std::string name = e.path().filename().string();
      if (name.rfind("report_", 0) == 0 && e.path().extension() == ".csv") {
        files.push_back(e.path().string());
      }
    }
    std::sort(files.begin(), files.end());
  }
  if (files.empty()) throw std::ios_base::failure("no report CSV files found");
  RunReport merged;
  for (const auto& path : files) {
    std::ifstream in(path);
    if (!in) throw std::ios_base::failure("cannot open '" + path + "'");
    for (auto& r : read_report_csv(in).rows) merged.rows.push_back(std::move(r));
  }
  std::cout << format_report(merged);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  CLI::App app{"Ergonomics-aware co-manipulation training toolkit"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "Experiment config (JSON)")->envname("ERGO_CONFIG");
    sub->add_option("--seed", o.seed, "Seed; replaces the config seed list")->envname("ERGO_SEED");
    sub->add_option("--out", o.out, "Output directory")->envname("ERGO_OUT");
    sub->add_option("--participant", o.participant, "Preset id: 1.62, 1.69, 1.79 or 1.83")
        ->envname("ERGO_PARTICIPANT");
    sub->add_option("--algorithm", o.algorithm, "ql or dqn")
        ->check(CLI::IsMember({"ql", "dqn"}))
        ->envname("ERGO_ALGORITHM");
    sub->add_option("--episodes", o.episodes,
                    "Training episode cap, or number of episodes for eval")
        ->check(CLI::PositiveNumber)
        ->envname("ERGO_EPISODES");
    sub->add_option("--workers", o.workers, "Parallel HPO workers")
        ->check(CLI::PositiveNumber)
        ->envname("ERGO_WORKERS");
  };

  auto* hpo_cmd = app.add_subcommand("hpo", "Grid search over DQN hyperparameters");
  common(hpo_cmd);
  auto* protocol_cmd = app.add_subcommand("protocol", "Pre-train, deploy, fine-tune, re-test");
  common(protocol_cmd);
  protocol_cmd->add_flag("--skip-finetune", o.skip_finetune, "Stop after the Sim/Real test");
  protocol_cmd->add_option("--checkpoint", o.checkpoint, "Use this pre-trained agent");
  auto* pretrain_cmd = app.add_subcommand("pretrain", "Train in simulation until convergence");
  common(pretrain_cmd);
  auto* finetune_cmd = app.add_subcommand("finetune", "Adapt a pre-trained agent on the surrogate");
  common(finetune_cmd);
  finetune_cmd->add_option("--checkpoint", o.checkpoint, "Pre-trained agent");
  auto* eval_cmd = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
  common(eval_cmd);
  eval_cmd->add_option("--checkpoint", o.checkpoint, "Agent to evaluate")->required();
  eval_cmd->add_option("--mode", o.mode, "sim or real (default real)");
  auto* report_cmd = app.add_subcommand("report", "Print report CSVs as a table");
  common(report_cmd);
  report_cmd->add_option("files", o.report_files, "Report CSV files (default: --out/report_*.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (*hpo_cmd) return cmd_hpo(o);
    if (*protocol_cmd) return cmd_protocol(o);
    if (*pretrain_cmd) return cmd_pretrain(o);
    if (*finetune_cmd) return cmd_finetune(o);
    if (*eval_cmd) return cmd_eval(o);
    if (*report_cmd) return cmd_report(o);
  } catch (const Interrupted&) {
    std::cerr << "interrupted; partial outputs were flushed\n";
    return kInterrupted;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ValidationError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::ios_base::failure& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIoError;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
