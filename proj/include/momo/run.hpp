#pragma once

#include <map>
#include <optional>
#include <string>

#include "momo/agent.hpp"
#include "momo/checkpoint.hpp"
#include "momo/env.hpp"

namespace momo::run {

/// Sorted key=value lines; the full resolved configuration of a run,
/// sufficient to reproduce it.
void write_config(const std::string& path,
                  const std::map<std::string, std::string>& kv);
std::map<std::string, std::string> read_config(const std::string& path);

std::string fmt_g17(double v);

// ---- gen-data ----

struct GenDataOpts {
  std::string task = "didactic";     // didactic | pointmass
  std::string quality = "mixed";     // pointmass only
  long size = 10000;                 // pointmass only
  std::uint64_t seed = 0;
  std::string out;                   // .momo-data file
};

struct GenDataSummary {
  long size = 0;
  double mean_return = 0.0;
  double scripted_mean_return = 0.0;
};

GenDataSummary run_gen_data(const GenDataOpts& opts);

// ---- train-morse ----

struct TrainMorseOpts {
  std::string data;     // dataset path
  std::string out_dir;  // run directory
  MorseTrainConfig cfg;
};

MorseNetwork run_train_morse(const TrainMorseOpts& opts);

// ---- train-dynamics ----

struct TrainDynamicsOpts {
  std::string data;
  std::string out_dir;
  DynamicsTrainConfig cfg;
};

DynamicsModel run_train_dynamics(const TrainDynamicsOpts& opts);

// ---- train-agent ----

struct TrainAgentOpts {
  std::string data;
  std::string morse;     // morse checkpoint path (required)
  std::string dynamics;  // dynamics checkpoint path (mb only)
  std::string out_dir;
  AgentConfig cfg;
  std::optional<double> lambda_override;  // kernel scale at agent time
  int eval_episodes = 10;
  std::optional<double> stop_at_return;
};

struct AgentRunSummary {
  double best_eval = std::numeric_limits<double>::quiet_NaN();
  double final_eval = std::numeric_limits<double>::quiet_NaN();
  long stopped_at_step = -1;
  long pessimism_checked = 0;
  long pessimism_violations = 0;
  long synthetic_sampled = 0;
  std::vector<std::pair<long, double>> eval_curve;
};

AgentRunSummary run_train_agent(const TrainAgentOpts& opts);

// ---- eval ----

/// Noise-free policy rollout in the point-mass environment; mean
/// undiscounted return over the episodes, deterministic in (agent, seed).
double evaluate_pointmass(const Td3Agent& agent, int episodes,
                          std::uint64_t seed);

struct EvalOpts {
  std::string agent;  // checkpoint path
  int episodes = 10;
  std::uint64_t seed = 0;
};

double run_eval(const EvalOpts& opts);

// ---- density-grid ----

struct DensityGridOpts {
  std::string morse;  // checkpoint path
  int state_index = 0;
  std::string data;   // dataset path for non-didactic state lookup
  GridSpec grid;
  std::string out;    // CSV path
};

void run_density_grid(const DensityGridOpts& opts);

// ---- ablate ----

struct AblateOpts {
  std::string sweep;  // eps | lambda | bonus
  std::string data;
  std::string morse;     // required for eps/bonus
  std::string dynamics;  // required for mb cells
  std::string out_dir;
  int seeds = 5;
  std::uint64_t base_seed = 0;
  AgentConfig agent_cfg;
  MorseTrainConfig morse_cfg;  // lambda sweep trains one net per cell
  int eval_episodes = 10;
};

struct AblateCell {
  std::string name;
  double mean_best = 0.0, std_best = 0.0;
  double mean_final = 0.0, std_final = 0.0;
};

std::vector<AblateCell> run_ablate(const AblateOpts& opts);

}  // namespace momo::run
