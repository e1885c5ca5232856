#include "momo/run.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

namespace momo::run {

namespace fs = std::filesystem;

std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_config(const std::string& path,
                  const std::map<std::string, std::string>& kv) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw LoadError(LoadError::Kind::Io, "cannot write " + path);
  for (const auto& [k, v] : kv) f << k << "=" << v << "\n";
}

std::map<std::string, std::string> read_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw LoadError(LoadError::Kind::Io, "cannot read " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

namespace {

class CsvWriter {
public:
  CsvWriter(const std::string& path, const std::string& header) {
    f_.open(path, std::ios::trunc);
    if (!f_) throw LoadError(LoadError::Kind::Io, "cannot write " + path);
    f_ << header << "\n";
    f_.flush();
  }
  void row(const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i)
      f_ << (i ? "," : "") << cells[i];
    f_ << "\n";
    f_.flush();  // incremental: rows survive an aborted run
  }

private:
  std::ofstream f_;
};

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw LoadError(LoadError::Kind::Io,
                    "cannot create directory " + dir + ": " + ec.message());
}

std::map<std::string, std::string> morse_config_echo(
    const TrainMorseOpts& opts) {
  const auto& c = opts.cfg;
  return {{"command", "train-morse"},
          {"data", opts.data},
          {"lambda", fmt_g17(c.lambda)},
          {"batch", std::to_string(c.batch)},
          {"steps", std::to_string(c.steps)},
          {"lr", fmt_g17(c.lr)},
          {"negatives_per_state", std::to_string(c.negatives_per_state)},
          {"grad_penalty_weight", fmt_g17(c.grad_penalty_weight)},
          {"lipschitz", fmt_g17(c.lipschitz)},
          {"hidden", std::to_string(c.hidden)},
          {"hidden_layers", std::to_string(c.hidden_layers)},
          {"embed_per_action_dim", std::to_string(c.embed_per_action_dim)},
          {"seed", std::to_string(c.seed)}};
}

std::map<std::string, std::string> agent_config_echo(
    const TrainAgentOpts& opts, double lambda_used) {
  const auto& c = opts.cfg;
  return {{"command", "train-agent"},
          {"data", opts.data},
          {"morse", opts.morse},
          {"dynamics", opts.dynamics},
          {"mode", mode_name(c.mode)},
          {"hidden", std::to_string(c.hidden)},
          {"hidden_layers", std::to_string(c.hidden_layers)},
          {"lr", fmt_g17(c.lr)},
          {"batch", std::to_string(c.batch)},
          {"gamma", fmt_g17(c.gamma)},
          {"rho", fmt_g17(c.rho)},
          {"policy_freq", std::to_string(c.policy_freq)},
          {"policy_noise", fmt_g17(c.policy_noise)},
          {"noise_clip", fmt_g17(c.noise_clip)},
          {"expl_noise", fmt_g17(c.expl_noise)},
          {"critic_layer_norm", c.critic_layer_norm ? "true" : "false"},
          {"actor_layer_norm", c.actor_layer_norm ? "true" : "false"},
          {"bonus", c.bonus ? "true" : "false"},
          {"lambda", fmt_g17(lambda_used)},
          {"real_ratio", fmt_g17(c.real_ratio)},
          {"rollout_horizon", std::to_string(c.rollout_horizon)},
          {"eps_trunc", fmt_g17(c.eps_trunc)},
          {"rollouts_per_refresh", std::to_string(c.rollouts_per_refresh)},
          {"refresh_every", std::to_string(c.refresh_every)},
          {"buffer_capacity", std::to_string(c.buffer_capacity)},
          {"steps", std::to_string(c.steps)},
          {"eval_every", std::to_string(c.eval_every)},
          {"eval_episodes", std::to_string(opts.eval_episodes)},
          {"seed", std::to_string(c.seed)}};
}

}  // namespace

GenDataSummary run_gen_data(const GenDataOpts& opts) {
  require(!opts.out.empty(), "gen-data: missing output path");
  OfflineDataset ds;
  if (opts.task == "didactic") {
    ds = make_didactic_dataset(opts.seed);
  } else if (opts.task == "pointmass") {
    ds = make_pointmass_dataset(parse_quality(opts.quality), opts.size,
                                opts.seed);
  } else {
    throw ContractViolation("gen-data: unknown task '" + opts.task + "'");
  }
  save_dataset(opts.out, ds);
  return {ds.size(), ds.meta().mean_return, ds.meta().scripted_mean_return};
}

MorseNetwork run_train_morse(const TrainMorseOpts& opts) {
  ensure_dir(opts.out_dir);
  OfflineDataset ds = load_dataset(opts.data);
  require(!ds.empty(), "train-morse: dataset is empty");
  write_config(opts.out_dir + "/config.txt", morse_config_echo(opts));
  CsvWriter csv(opts.out_dir + "/metrics.csv",
                "step,loss,positive,negative,penalty");
  MorseNetwork m = train_morse(
      opts.cfg, ds, [&](long step, const MorseLossTerms& t) {
        csv.row({std::to_string(step), fmt_g17(t.total), fmt_g17(t.positive),
                 fmt_g17(t.negative), fmt_g17(t.penalty)});
      });
  save_morse(opts.out_dir + "/morse.ckpt", m,
             {{"dataset_generator", ds.meta().generator},
              {"dataset", opts.data}});
  return m;
}

DynamicsModel run_train_dynamics(const TrainDynamicsOpts& opts) {
  ensure_dir(opts.out_dir);
  OfflineDataset ds = load_dataset(opts.data);
  require(!ds.empty(), "train-dynamics: dataset is empty");
  const auto& c = opts.cfg;
  write_config(opts.out_dir + "/config.txt",
               {{"command", "train-dynamics"},
                {"data", opts.data},
                {"batch", std::to_string(c.batch)},
                {"steps", std::to_string(c.steps)},
                {"lr", fmt_g17(c.lr)},
                {"validation_fraction", fmt_g17(c.validation_fraction)},
                {"hidden", std::to_string(c.hidden)},
                {"hidden_layers", std::to_string(c.hidden_layers)},
                {"seed", std::to_string(c.seed)}});
  CsvWriter csv(opts.out_dir + "/metrics.csv", "step,train_nll,val_nll");
  DynamicsModel m =
      train_dynamics(opts.cfg, ds, [&](long step, double tr, double va) {
        csv.row({std::to_string(step), fmt_g17(tr), fmt_g17(va)});
      });
  save_dynamics(opts.out_dir + "/dynamics.ckpt", m,
                {{"dataset_generator", ds.meta().generator},
                 {"dataset", opts.data}});
  return m;
}

double evaluate_pointmass(const Td3Agent& agent, int episodes,
                          std::uint64_t seed) {
  require(episodes > 0, "evaluate_pointmass: episodes must be positive");
  Rng rng(derive_seed(seed, 0xE7A1));
  double total = 0.0;
  for (int ep = 0; ep < episodes; ++ep) {
    PointMassEnv env;
    Vec s = env.reset(rng);
    while (true) {
      const Vec a = agent.select_action(s, false, rng);
      const auto st = env.step(s, a);
      total += st.r;
      s = st.s2;
      if (st.terminal) break;
    }
  }
  return total / episodes;
}

AgentRunSummary run_train_agent(const TrainAgentOpts& opts) {
  ensure_dir(opts.out_dir);
  OfflineDataset ds = load_dataset(opts.data);
  require(!ds.empty(), "train-agent: dataset is empty");
  require(!opts.morse.empty(),
          "train-agent: missing prerequisite Morse checkpoint (--morse)");
  MorseNetwork morse = load_morse(opts.morse);
  if (opts.lambda_override) {
    require(*opts.lambda_override > 0, "train-agent: lambda must be > 0");
    morse.kernel.scale = *opts.lambda_override;
  }

  DynamicsModel dynamics;
  const bool mb = opts.cfg.mode == TrainMode::ModelBased;
  if (mb) {
    require(!opts.dynamics.empty(),
            "train-agent: model-based mode requires a dynamics checkpoint "
            "(--dynamics)");
    dynamics = load_dynamics(opts.dynamics);
  }

  write_config(opts.out_dir + "/config.txt",
               agent_config_echo(opts, morse.kernel.scale));
  CsvWriter csv(
      opts.out_dir + "/metrics.csv",
      "step,critic_loss,actor_loss,mean_log_certainty,mean_rollout_len,"
      "eval_return");

  const bool pointmass = ds.meta().generator.rfind("pointmass", 0) == 0;
  EvalFn eval;
  if (pointmass) {
    const std::uint64_t seed = opts.cfg.seed;
    const int episodes = opts.eval_episodes;
    eval = [seed, episodes](const Td3Agent& agent, long step) {
      return evaluate_pointmass(agent, episodes,
                                derive_seed(seed, 0xE7A12, step));
    };
  }

  AgentLogFn log = [&](const AgentLogRow& r) {
    csv.row({std::to_string(r.step), fmt_g17(r.critic_loss),
             fmt_g17(r.actor_loss), fmt_g17(r.mean_log_certainty),
             fmt_g17(r.mean_rollout_len), fmt_g17(r.eval_return)});
  };

  AgentTrainResult res =
      train_agent(opts.cfg, ds, morse, mb ? &dynamics : nullptr, eval, log,
                  opts.stop_at_return);
  save_agent(opts.out_dir + "/agent.ckpt", res.agent,
             {{"dataset_generator", ds.meta().generator},
              {"dataset", opts.data}});

  AgentRunSummary out;
  out.best_eval = res.best_eval;
  out.final_eval =
      res.eval_curve.empty() ? res.best_eval : res.eval_curve.back().second;
  out.stopped_at_step = res.stopped_at_step;
  out.pessimism_checked = res.pessimism_checked;
  out.pessimism_violations = res.pessimism_violations;
  out.synthetic_sampled = res.synthetic_sampled;
  out.eval_curve = std::move(res.eval_curve);
  return out;
}

double run_eval(const EvalOpts& opts) {
  std::map<std::string, std::string> meta;
  Td3Agent agent = load_agent(opts.agent, &meta);
  auto it = meta.find("dataset_generator");
  const std::string gen = it == meta.end() ? "" : it->second;
  if (gen.rfind("pointmass", 0) != 0)
    throw UnsupportedOperation(
        "eval: only point-mass agents can be evaluated (checkpoint was "
        "trained on '" +
        gen + "')");
  return evaluate_pointmass(agent, opts.episodes, opts.seed);
}

void run_density_grid(const DensityGridOpts& opts) {
  require(!opts.out.empty(), "density-grid: missing output path");
  std::map<std::string, std::string> meta;
  MorseNetwork m = load_morse(opts.morse, &meta);
  Vec s;
  const std::string gen = meta.count("dataset_generator")
                              ? meta.at("dataset_generator")
                              : std::string();
  if (gen == "didactic") {
    s = didactic_state(opts.state_index);
  } else {
    require(!opts.data.empty(),
            "density-grid: --data is required to look up states for "
            "non-didactic checkpoints");
    OfflineDataset ds = load_dataset(opts.data);
    require(opts.state_index >= 0 && opts.state_index < ds.size(),
            "density-grid: state index out of range");
    s = ds[opts.state_index].s;
  }
  auto rows = density_grid(m, s, opts.grid);
  std::ofstream f(opts.out, std::ios::trunc);
  if (!f) throw LoadError(LoadError::Kind::Io, "cannot write " + opts.out);
  f << "a1,a2,certainty\n";
  for (const auto& r : rows)
    f << fmt_g17(r.a1) << "," << fmt_g17(r.a2) << "," << fmt_g17(r.certainty)
      << "\n";
}

std::vector<AblateCell> run_ablate(const AblateOpts& opts) {
  require(opts.seeds >= 1, "ablate: seeds must be >= 1");
  ensure_dir(opts.out_dir);

  struct Cell {
    std::string name;
    std::function<void(TrainAgentOpts&)> apply;
  };
  std::vector<Cell> cells;
  if (opts.sweep == "eps") {
    for (double eps : {0.80, 0.85, 0.90, 0.95, 0.98}) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "eps-%.2f", eps);
      cells.push_back({buf, [eps](TrainAgentOpts& o) {
                         o.cfg.mode = TrainMode::ModelBased;
                         o.cfg.eps_trunc = eps;
                       }});
    }
  } else if (opts.sweep == "lambda") {
    for (double lam : {0.1, 1.0, 2.0, 4.0}) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "lambda-%.1f", lam);
      cells.push_back({buf, [lam](TrainAgentOpts& o) {
                         o.lambda_override = lam;  // morse retrained below
                       }});
    }
  } else if (opts.sweep == "bonus") {
    cells.push_back({"bonus-on", [](TrainAgentOpts& o) { o.cfg.bonus = true; }});
    cells.push_back(
        {"bonus-off", [](TrainAgentOpts& o) { o.cfg.bonus = false; }});
  } else {
    throw ContractViolation("ablate: unknown sweep '" + opts.sweep +
                            "' (expected eps, lambda or bonus)");
  }

  CsvWriter summary(opts.out_dir + "/summary.csv",
                    "sweep,cell,seeds,mean_best_return,std_best_return,"
                    "mean_final_return,std_final_return");

  std::vector<AblateCell> out;
  for (const auto& cell : cells) {
    // the lambda sweep retrains the Morse network at the cell's scale
    std::string cell_morse = opts.morse;
    if (opts.sweep == "lambda") {
      TrainMorseOpts mo;
      mo.data = opts.data;
      mo.out_dir = opts.out_dir + "/" + cell.name + "/morse";
      mo.cfg = opts.morse_cfg;
      TrainAgentOpts probe;
      cell.apply(probe);
      mo.cfg.lambda = *probe.lambda_override;
      mo.cfg.seed = opts.base_seed;
      run_train_morse(mo);
      cell_morse = mo.out_dir + "/morse.ckpt";
    } else {
      require(!opts.morse.empty(),
              "ablate: missing prerequisite Morse checkpoint (--morse)");
    }

    std::vector<double> best, final_;
    for (int k = 0; k < opts.seeds; ++k) {
      TrainAgentOpts ao;
      ao.data = opts.data;
      ao.morse = cell_morse;
      ao.dynamics = opts.dynamics;
      ao.cfg = opts.agent_cfg;
      ao.eval_episodes = opts.eval_episodes;
      cell.apply(ao);
      ao.cfg.seed = opts.base_seed + static_cast<std::uint64_t>(k);
      ao.out_dir = opts.out_dir + "/" + cell.name + "/seed-" +
                   std::to_string(k);
      auto s = run_train_agent(ao);
      best.push_back(s.best_eval);
      final_.push_back(s.final_eval);
    }
    auto mean = [](const std::vector<double>& v) {
      double m = 0;
      for (double x : v) m += x;
      return m / v.size();
    };
    auto stdev = [&](const std::vector<double>& v, double m) {
      if (v.size() < 2) return 0.0;
      double s = 0;
      for (double x : v) s += (x - m) * (x - m);
      return std::sqrt(s / (v.size() - 1));
    };
    AblateCell c;
    c.name = cell.name;
    c.mean_best = mean(best);
    c.std_best = stdev(best, c.mean_best);
    c.mean_final = mean(final_);
    c.std_final = stdev(final_, c.mean_final);
    out.push_back(c);
    summary.row({opts.sweep, c.name, std::to_string(opts.seeds),
                 fmt_g17(c.mean_best), fmt_g17(c.std_best),
                 fmt_g17(c.mean_final), fmt_g17(c.std_final)});
  }
  return out;
}

}  // namespace momo::run
