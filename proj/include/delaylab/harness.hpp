#pragma once

// Experiment harness: cost-sequence generators, JSON experiment configs,
// learner assembly (direct learners plus wrapper stacks), the interaction
// loop that produces per-episode regret rows, and seed-parallel sweeps.
//
// Regret is measured exactly: the harness knows the kernel, so each episode
// contributes policy_value of the policy actually played (forced-uniform
// exploration rows included, charging exploration honestly) instead of the
// noisy suffered costs, which are logged separately. Best-in-hindsight prefix
// values come from the summed-cost DP, rerun at log-spaced checkpoints and at
// K (or at every episode when asked).

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "delaylab/delay.hpp"
#include "delaylab/learner.hpp"
#include "delaylab/mdp.hpp"

namespace delaylab {

// ---------------------------------------------------------------------------
// Environment sources
// ---------------------------------------------------------------------------

// Random dense MDP: each transition row is an independent normalized vector
// of -log(uniform) draws (Dirichlet(1,...,1)); the initial state is 0.
TabularMdp random_dense_mdp(int num_states, int num_actions, int horizon,
                            Rng& rng);

// Where the experiment's MDP comes from. "random" draws a dense kernel from
// mdp_seed — deliberately independent of the run seed, so every seed of a
// sweep cell faces the same environment. "file" loads a serialized table.
struct MdpSpec {
  std::string kind = "random";  // random | file
  int num_states = 2;
  int num_actions = 2;
  int horizon = 2;
  std::uint64_t mdp_seed = 1;
  std::string path;  // kind == "file"

  void validate() const;
};

TabularMdp build_mdp(const MdpSpec& spec);

// ---------------------------------------------------------------------------
// Cost-sequence generators
// ---------------------------------------------------------------------------

enum class CostKind {
  iid_stochastic,       // c^k_h(s,a) ~ Bernoulli/Beta with per-(h,s,a) means
  piecewise_switching,  // one favored (cheap) action per period, rotating
  sinusoidal_drift,     // deterministic means oscillating inside [0,1]
  fixed_file            // serialized CostSequence played back verbatim
};

struct CostParams {
  CostKind kind = CostKind::iid_stochastic;

  // iid_stochastic. Means are either the constant `mean` or, when
  // random_means is set, drawn once per (h,s,a) from U[mean_lo, mean_hi].
  std::string distribution = "bernoulli";  // bernoulli | beta
  double mean = 0.5;
  bool random_means = false;
  double mean_lo = 0.0;
  double mean_hi = 1.0;
  double concentration = 4.0;  // Beta(mean*c, (1-mean)*c)

  // piecewise_switching: episodes are cut into blocks of `period`; inside a
  // block one favored action costs `low` at every (h,s) and the rest cost
  // `high`. The favored action is redrawn at each block boundary, never
  // repeating the incumbent, with action 0 carrying `favored_weight` times
  // the weight of the others (a bias that keeps a fixed comparator
  // meaningful over long horizons).
  long long period = 0;  // also used by sinusoidal_drift
  double low = 0.1;
  double high = 0.9;
  double favored_weight = 1.0;

  // sinusoidal_drift: mean(h,s,a; k) = 0.5 + amplitude * sin(2*pi*k/period
  // + phase(h,s,a)), phases spread evenly over the cells.
  double amplitude = 0.5;

  // fixed_file
  std::string path;

  void validate() const;
};

// Generates K cost tables for the given dimensions. Deterministic given the
// generator state; the sinusoidal and file kinds consume no randomness.
CostSequence generate_costs(const CostParams& params, int num_states,
                            int num_actions, int horizon, long long K,
                            Rng& rng);

// ---------------------------------------------------------------------------
// Learner assembly
// ---------------------------------------------------------------------------

struct LearnerConfig {
  std::string kind = "oppo";  // oppo | oreps | blackbox
  FeedbackMode feedback = FeedbackMode::full_info;
  DynamicsMode dynamics = DynamicsMode::known;

  // 0 / negative values mean "derive a default at run time":
  //   learning_rate  -> 1 / (H * sqrt(K + D))     (blackbox: per-instance K)
  //   exploration    -> 0 under full information with known dynamics,
  //                     min(0.25, sqrt(H*S*A/(K+D))) otherwise
  //   skip_threshold -> sqrt(D / (S*H))
  //   d_max          -> the schedule's maximum delay
  double learning_rate = 0.0;
  double exploration = -1.0;
  double delta = 0.1;
  bool explicit_exploration = false;
  long long d_max = -1;

  // At most one of {"skipping", "doubling"}, and only for oppo/oreps; the
  // doubling wrapper performs its own delay filtering, so stacking both is
  // rejected. blackbox takes no wrappers.
  std::vector<std::string> wrappers;
  double skip_threshold = 0.0;
  bool feed_skipped_transitions = false;

  void validate() const;
};

// A learner built for one run, along with the parameter values that the
// defaults resolved to (echoed into the run record for provenance).
struct AssembledLearner {
  std::unique_ptr<Learner> learner;
  double learning_rate = 0.0;
  double exploration = 0.0;
  double skip_threshold = 0.0;
  long long d_max = -1;  // blackbox only
};

// Validates the configuration against the realized schedule (e.g. a
// blackbox d_max below the largest delay is reported here, before episode 1)
// and constructs the learner stack.
AssembledLearner build_learner(const LearnerConfig& cfg, const TabularMdp& mdp,
                               const DelaySchedule& schedule, long long K);

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct SweepGrid {
  std::vector<long long> episodes;      // K axis
  std::vector<long long> fixed_delays;  // fixed-schedule d axis
  std::vector<std::string> learners;    // learner-kind axis

  bool empty() const {
    return episodes.empty() && fixed_delays.empty() && learners.empty();
  }
};

enum class HindsightMode { checkpoints, full };

struct ExperimentConfig {
  MdpSpec mdp;
  CostParams costs;
  ScheduleKind delay_kind = ScheduleKind::fixed;
  ScheduleParams delay_params;
  LearnerConfig learner;
  long long episodes = 0;  // K
  std::vector<std::uint64_t> seeds = {1};
  HindsightMode hindsight = HindsightMode::checkpoints;
  std::string out_dir = ".";
  SweepGrid sweep_grid;  // used by sweep(); ignored by run_experiment

  void validate() const;
};

// Strict JSON parsing: unknown keys and inconsistent regime flags are
// reported as contract violations (before any episode runs).
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::string& path);

// ---------------------------------------------------------------------------
// Running experiments
// ---------------------------------------------------------------------------

struct RegretRow {
  long long k = 0;
  double value = 0.0;      // exact V of the played policy under c^k
  double cum_value = 0.0;  // running sum of value
  double hindsight = 0.0;  // best fixed-policy value of the latest checkpoint
  double regret = 0.0;     // cum_value - hindsight
  long long missing = 0;   // M^k: episodes still awaiting feedback
  long long skipped = 0;   // packets permanently dropped so far
  int phase = 1;           // restart-wrapper phase (1 when unwrapped)

  friend bool operator==(const RegretRow&, const RegretRow&) = default;
};

struct RegretRecord {
  std::string name;         // learner label, used in charts
  std::uint64_t seed = 0;
  std::string config_json;  // resolved configuration, for provenance
  std::vector<RegretRow> rows;
  std::vector<double> suffered;  // realized per-episode cost sums

  double final_regret() const { return rows.empty() ? 0.0 : rows.back().regret; }

  friend bool operator==(const RegretRecord&, const RegretRecord&) = default;
};

// The interaction loop against a caller-supplied learner: sample an episode
// from the played policy, deliver it as feedback after its delay, and fill
// one RegretRow per episode. env_rng drives both action and transition
// sampling (2H - 1 draws per episode).
RegretRecord run_loop(const TabularMdp& mdp, const CostSequence& costs,
                      const DelaySchedule& schedule, FeedbackMode feedback,
                      HindsightMode hindsight, Learner& learner, Rng& env_rng);

// Builds everything from the config (environment, costs, schedule, learner
// stack) and runs one seed. Substreams of the seed: 0 = environment,
// 1 = cost generation, 2 = delay schedule.
RegretRecord run_experiment(const ExperimentConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct SweepCell {
  long long episodes = 0;
  long long fixed_delay = -1;  // -1: the base config's schedule
  std::string learner_kind;
  std::vector<std::uint64_t> seeds;
  std::vector<double> final_regrets;  // aligned with seeds; NaN on failure
  std::vector<std::string> errors;    // aligned with seeds; empty when ok
  int completed = 0;
  double mean_regret = 0.0;    // over completed seeds
  double stderr_regret = 0.0;  // sample stderr; 0 when completed < 2
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::string config_json;
};

// Worker threads for seed-parallel execution: the DELAYLAB_WORKERS
// environment variable when set (>= 1), otherwise hardware concurrency.
int worker_count();

// Runs every (episodes, delay, learner) cell of the grid (absent axes fall
// back to the base config's value) across all seeds. Seeds run in parallel;
// aggregation is a deterministic reduce independent of execution order.
// Per-seed failures are recorded in their cell and the sweep continues.
SweepResult sweep(const ExperimentConfig& base);

}  // namespace delaylab
