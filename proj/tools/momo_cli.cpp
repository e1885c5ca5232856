// momo: Morse model-based offline RL at desk scale.
//
// Subcommands: gen-data, train-morse, train-dynamics, train-agent, eval,
// density-grid, ablate. Exit codes: 0 success, 1 runtime/training error,
// 2 usage error. MOMO_SEED serves as the seed fallback when --seed is not
// given.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "momo/run.hpp"

namespace {

std::uint64_t env_seed_default() {
  const char* s = std::getenv("MOMO_SEED");
  if (!s) return 0;
  return std::strtoull(s, nullptr, 10);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Morse model-based offline RL (MoMo) toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a key=value file");
  app.allow_config_extras(CLI::config_extras_mode::error);

  const std::uint64_t seed_default = env_seed_default();

  // ---- gen-data ----
  momo::run::GenDataOpts gen;
  gen.seed = seed_default;
  auto* cmd_gen = app.add_subcommand("gen-data", "Generate an offline dataset");
  cmd_gen->add_option("--task", gen.task, "didactic | pointmass")
      ->check(CLI::IsMember({"didactic", "pointmass"}))
      ->capture_default_str();
  cmd_gen->add_option("--quality", gen.quality,
                      "pointmass behavior: scripted | mixed | random")
      ->check(CLI::IsMember({"scripted", "mixed", "random"}))
      ->capture_default_str();
  cmd_gen->add_option("--size", gen.size, "pointmass transition count")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd_gen->add_option("--seed", gen.seed)->capture_default_str();
  cmd_gen->add_option("--out", gen.out, "output .momo-data file")->required();

  // ---- train-morse ----
  momo::run::TrainMorseOpts tm;
  tm.cfg.seed = seed_default;
  auto* cmd_tm = app.add_subcommand("train-morse", "Train the Morse network");
  cmd_tm->add_option("--data", tm.data, "dataset path")->required();
  cmd_tm->add_option("--out", tm.out_dir, "run directory")->required();
  cmd_tm->add_option("--lambda", tm.cfg.lambda, "RBF kernel scale")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd_tm->add_option("--steps", tm.cfg.steps)->capture_default_str();
  cmd_tm->add_option("--batch", tm.cfg.batch)->capture_default_str();
  cmd_tm->add_option("--lr", tm.cfg.lr)->capture_default_str();
  cmd_tm->add_option("--hidden", tm.cfg.hidden)->capture_default_str();
  cmd_tm->add_option("--layers", tm.cfg.hidden_layers)->capture_default_str();
  cmd_tm->add_option("--negatives", tm.cfg.negatives_per_state)
      ->capture_default_str();
  cmd_tm->add_option("--gp-weight", tm.cfg.grad_penalty_weight)
      ->capture_default_str();
  cmd_tm->add_option("--seed", tm.cfg.seed)->capture_default_str();

  // ---- train-dynamics ----
  momo::run::TrainDynamicsOpts td;
  td.cfg.seed = seed_default;
  auto* cmd_td =
      app.add_subcommand("train-dynamics", "Train the dynamics model");
  cmd_td->add_option("--data", td.data, "dataset path")->required();
  cmd_td->add_option("--out", td.out_dir, "run directory")->required();
  cmd_td->add_option("--steps", td.cfg.steps)->capture_default_str();
  cmd_td->add_option("--batch", td.cfg.batch)->capture_default_str();
  cmd_td->add_option("--lr", td.cfg.lr)->capture_default_str();
  cmd_td->add_option("--hidden", td.cfg.hidden)->capture_default_str();
  cmd_td->add_option("--layers", td.cfg.hidden_layers)->capture_default_str();
  cmd_td->add_option("--val-fraction", td.cfg.validation_fraction)
      ->capture_default_str();
  cmd_td->add_option("--seed", td.cfg.seed)->capture_default_str();

  // ---- train-agent ----
  momo::run::TrainAgentOpts ta;
  ta.cfg.seed = seed_default;
  std::string ta_mode = "mf";
  double ta_lambda = -1.0;
  double ta_stop = std::numeric_limits<double>::quiet_NaN();
  auto* cmd_ta = app.add_subcommand("train-agent", "Train the TD3 agent");
  cmd_ta->add_option("--data", ta.data, "dataset path")->required();
  cmd_ta->add_option("--morse", ta.morse, "Morse checkpoint")->required();
  cmd_ta->add_option("--dynamics", ta.dynamics,
                     "dynamics checkpoint (mb mode)");
  cmd_ta->add_option("--out", ta.out_dir, "run directory")->required();
  cmd_ta->add_option("--mode", ta_mode, "mf | mb")
      ->check(CLI::IsMember({"mf", "mb"}))
      ->capture_default_str();
  cmd_ta->add_option("--lambda", ta_lambda,
                     "override the kernel scale (default: checkpoint value)");
  cmd_ta->add_option("--steps", ta.cfg.steps)->capture_default_str();
  cmd_ta->add_option("--batch", ta.cfg.batch)->capture_default_str();
  cmd_ta->add_option("--hidden", ta.cfg.hidden)->capture_default_str();
  cmd_ta->add_option("--layers", ta.cfg.hidden_layers)->capture_default_str();
  cmd_ta->add_option("--lr", ta.cfg.lr)->capture_default_str();
  cmd_ta->add_option("--gamma", ta.cfg.gamma)->capture_default_str();
  cmd_ta->add_option("--rho", ta.cfg.rho)->capture_default_str();
  cmd_ta->add_option("--policy-freq", ta.cfg.policy_freq)
      ->capture_default_str();
  cmd_ta->add_option("--policy-noise", ta.cfg.policy_noise)
      ->capture_default_str();
  cmd_ta->add_option("--noise-clip", ta.cfg.noise_clip)->capture_default_str();
  cmd_ta->add_option("--expl-noise", ta.cfg.expl_noise)->capture_default_str();
  cmd_ta->add_option("--eps-trunc", ta.cfg.eps_trunc)->capture_default_str();
  cmd_ta->add_option("--horizon", ta.cfg.rollout_horizon)
      ->capture_default_str();
  cmd_ta->add_option("--ratio", ta.cfg.real_ratio, "real-to-synthetic ratio")
      ->capture_default_str();
  cmd_ta->add_option("--rollouts", ta.cfg.rollouts_per_refresh)
      ->capture_default_str();
  cmd_ta->add_option("--refresh-every", ta.cfg.refresh_every)
      ->capture_default_str();
  cmd_ta->add_option("--buffer-cap", ta.cfg.buffer_capacity)
      ->capture_default_str();
  cmd_ta->add_option("--eval-every", ta.cfg.eval_every)->capture_default_str();
  cmd_ta->add_option("--eval-episodes", ta.eval_episodes)
      ->capture_default_str();
  cmd_ta->add_option("--stop-at-return", ta_stop,
                     "stop at the first evaluation reaching this return");
  cmd_ta->add_flag("--bonus,!--no-bonus", ta.cfg.bonus,
                   "anti-exploration bonus in the critic target")
      ->capture_default_str();
  cmd_ta->add_option("--seed", ta.cfg.seed)->capture_default_str();

  // ---- eval ----
  momo::run::EvalOpts ev;
  ev.seed = seed_default;
  auto* cmd_ev = app.add_subcommand("eval", "Evaluate an agent checkpoint");
  cmd_ev->add_option("--agent", ev.agent, "agent checkpoint")->required();
  cmd_ev->add_option("--episodes", ev.episodes)->capture_default_str();
  cmd_ev->add_option("--seed", ev.seed)->capture_default_str();

  // ---- density-grid ----
  momo::run::DensityGridOpts dg;
  int dg_resolution = -1;
  auto* cmd_dg = app.add_subcommand(
      "density-grid", "Export the certainty grid CSV for one state");
  cmd_dg->add_option("--morse", dg.morse, "Morse checkpoint")->required();
  cmd_dg->add_option("--state", dg.state_index,
                     "state index (didactic: 0/1; otherwise a dataset row)")
      ->capture_default_str();
  cmd_dg->add_option("--data", dg.data, "dataset for state lookup");
  cmd_dg->add_option("--out", dg.out, "output CSV")->required();
  cmd_dg->add_option("--grid-x", dg.grid.nx)->capture_default_str();
  cmd_dg->add_option("--grid-y", dg.grid.ny)->capture_default_str();
  cmd_dg->add_option("--resolution", dg_resolution,
                     "set both grid dimensions at once");
  cmd_dg->add_option("--lo", dg.grid.lo)->capture_default_str();
  cmd_dg->add_option("--hi", dg.grid.hi)->capture_default_str();

  // ---- ablate ----
  momo::run::AblateOpts ab;
  ab.base_seed = seed_default;
  std::string ab_mode = "mb";
  auto* cmd_ab = app.add_subcommand("ablate", "Run a hyperparameter sweep");
  cmd_ab->add_option("--sweep", ab.sweep, "eps | lambda | bonus")->required();
  cmd_ab->add_option("--data", ab.data, "dataset path")->required();
  cmd_ab->add_option("--morse", ab.morse, "Morse checkpoint (eps/bonus)");
  cmd_ab->add_option("--dynamics", ab.dynamics, "dynamics checkpoint (mb)");
  cmd_ab->add_option("--out", ab.out_dir, "sweep directory")->required();
  cmd_ab->add_option("--seeds", ab.seeds)->capture_default_str();
  cmd_ab->add_option("--seed", ab.base_seed)->capture_default_str();
  cmd_ab->add_option("--mode", ab_mode, "mf | mb (lambda/bonus sweeps)")
      ->check(CLI::IsMember({"mf", "mb"}))
      ->capture_default_str();
  cmd_ab->add_option("--steps", ab.agent_cfg.steps)->capture_default_str();
  cmd_ab->add_option("--batch", ab.agent_cfg.batch)->capture_default_str();
  cmd_ab->add_option("--hidden", ab.agent_cfg.hidden)->capture_default_str();
  cmd_ab->add_option("--layers", ab.agent_cfg.hidden_layers)
      ->capture_default_str();
  cmd_ab->add_option("--eps-trunc", ab.agent_cfg.eps_trunc)
      ->capture_default_str();
  cmd_ab->add_option("--horizon", ab.agent_cfg.rollout_horizon)
      ->capture_default_str();
  cmd_ab->add_option("--ratio", ab.agent_cfg.real_ratio)
      ->capture_default_str();
  cmd_ab->add_option("--eval-episodes", ab.eval_episodes)
      ->capture_default_str();
  cmd_ab->add_option("--morse-steps", ab.morse_cfg.steps,
                     "Morse training steps (lambda sweep)")
      ->capture_default_str();
  cmd_ab->add_option("--morse-batch", ab.morse_cfg.batch)
      ->capture_default_str();
  cmd_ab->add_option("--morse-hidden", ab.morse_cfg.hidden)
      ->capture_default_str();
  cmd_ab->add_option("--morse-layers", ab.morse_cfg.hidden_layers)
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // help exits 0, every parse problem is usage
  }

  try {
    if (*cmd_gen) {
      auto s = momo::run::run_gen_data(gen);
      std::cout << "wrote " << gen.out << ": " << s.size << " transitions";
      if (gen.task == "pointmass")
        std::cout << ", mean return " << s.mean_return
                  << ", scripted mean return " << s.scripted_mean_return;
      std::cout << "\n";
    } else if (*cmd_tm) {
      momo::run::run_train_morse(tm);
      std::cout << "wrote " << tm.out_dir << "/morse.ckpt\n";
    } else if (*cmd_td) {
      momo::run::run_train_dynamics(td);
      std::cout << "wrote " << td.out_dir << "/dynamics.ckpt\n";
    } else if (*cmd_ta) {
      ta.cfg.mode = momo::parse_mode(ta_mode);
      if (cmd_ta->count("--lambda")) ta.lambda_override = ta_lambda;
      if (cmd_ta->count("--stop-at-return")) ta.stop_at_return = ta_stop;
      auto s = momo::run::run_train_agent(ta);
      std::cout << "wrote " << ta.out_dir << "/agent.ckpt; best eval return "
                << s.best_eval << ", final " << s.final_eval << "\n";
    } else if (*cmd_ev) {
      std::cout << momo::run::fmt_g17(momo::run::run_eval(ev)) << "\n";
    } else if (*cmd_dg) {
      if (cmd_dg->count("--resolution")) {
        dg.grid.nx = dg_resolution;
        dg.grid.ny = dg_resolution;
      }
      momo::run::run_density_grid(dg);
      std::cout << "wrote " << dg.out << "\n";
    } else if (*cmd_ab) {
      ab.agent_cfg.mode = momo::parse_mode(ab_mode);
      auto cells = momo::run::run_ablate(ab);
      for (const auto& c : cells)
        std::cout << c.name << ": best " << c.mean_best << " +- " << c.std_best
                  << ", final " << c.mean_final << " +- " << c.std_final
                  << "\n";
      std::cout << "wrote " << ab.out_dir << "/summary.csv\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
