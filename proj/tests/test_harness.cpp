#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "delaylab/harness.hpp"
#include "delaylab/report.hpp"
#include "test_util.hpp"

using namespace delaylab;
using nlohmann::json;

namespace {

// Plays one fixed policy forever and ignores feedback; used to check that
// the loop charges exactly the injected policy's value.
class FixedPolicyLearner : public Learner {
 public:
  explicit FixedPolicyLearner(Policy policy) : policy_(std::move(policy)) {}
  const Policy& begin_episode() override { return policy_; }
  const Policy& played_policy() const override { return policy_; }
  const Policy& decision_policy() const override { return policy_; }
  void end_episode(const Trajectory&) override {}
  void on_feedback(const std::vector<FeedbackPacket>&) override {}

 private:
  Policy policy_;
};

ExperimentConfig small_config(long long K) {
  ExperimentConfig cfg;
  cfg.mdp.num_states = 3;
  cfg.mdp.num_actions = 2;
  cfg.mdp.horizon = 3;
  cfg.mdp.mdp_seed = 11;
  cfg.costs.kind = CostKind::iid_stochastic;
  cfg.costs.distribution = "bernoulli";
  cfg.costs.random_means = true;
  cfg.costs.mean_lo = 0.2;
  cfg.costs.mean_hi = 0.8;
  cfg.episodes = K;
  return cfg;
}

// Least-squares slope of y against x.
double fitted_slope(const std::vector<double>& xs,
                    const std::vector<double>& ys) {
  REQUIRE(xs.size() == ys.size());
  REQUIRE(xs.size() >= 2);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(xs.size());
  my /= static_cast<double>(xs.size());
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  return sxy / sxx;
}

// Pulls the coordinate pairs out of the n-th polyline of an SVG string.
void polyline_points(const std::string& svg, std::size_t index,
                     std::vector<double>& xs, std::vector<double>& ys) {
  xs.clear();
  ys.clear();
  std::size_t pos = 0;
  for (std::size_t i = 0; i <= index; ++i) {
    pos = svg.find("<polyline", pos);
    REQUIRE(pos != std::string::npos);
    pos += 1;
  }
  const std::size_t points = svg.find("points=\"", pos);
  REQUIRE(points != std::string::npos);
  const std::size_t start = points + 8;
  const std::size_t end = svg.find('"', start);
  REQUIRE(end != std::string::npos);
  std::string body = svg.substr(start, end - start);
  for (char& c : body) {
    if (c == ',') c = ' ';
  }
  std::istringstream in(body);
  double x = 0.0, y = 0.0;
  while (in >> x >> y) {
    xs.push_back(x);
    ys.push_back(y);
  }
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("delaylab_harness_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("cost generators: degenerate parameters give constant sequences") {
  Rng rng(5);
  CostParams p;
  p.kind = CostKind::iid_stochastic;
  p.distribution = "bernoulli";
  p.mean = 0.0;
  CostSequence zeros = generate_costs(p, 2, 2, 2, 40, rng);
  REQUIRE(zeros.size() == 40);
  for (const CostFunction& c : zeros) {
    for (double v : c.costs) CHECK(v == 0.0);
  }

  p.mean = 1.0;
  for (const CostFunction& c : generate_costs(p, 2, 2, 2, 10, rng)) {
    for (double v : c.costs) CHECK(v == 1.0);
  }

  // A single switching block: the whole sequence is one constant table with
  // one cheap action per row.
  CostParams sw;
  sw.kind = CostKind::piecewise_switching;
  sw.period = 30;
  sw.low = 0.1;
  sw.high = 0.9;
  CostSequence blocks = generate_costs(sw, 2, 3, 2, 30, rng);
  for (const CostFunction& c : blocks) CHECK(c.costs == blocks[0].costs);
  for (int h = 1; h <= 2; ++h) {
    for (int s = 0; s < 2; ++s) {
      int cheap = 0;
      for (int a = 0; a < 3; ++a) {
        const double v = blocks[0].at(h, s, a);
        CHECK((v == 0.1 || v == 0.9));
        if (v == 0.1) ++cheap;
      }
      CHECK(cheap == 1);
    }
  }

  CostParams drift;
  drift.kind = CostKind::sinusoidal_drift;
  drift.period = 8;
  drift.amplitude = 0.0;
  for (const CostFunction& c : generate_costs(drift, 2, 2, 2, 12, rng)) {
    for (double v : c.costs) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("cost generators: switching rotates the favored action") {
  Rng rng(9);
  CostParams sw;
  sw.kind = CostKind::piecewise_switching;
  sw.period = 5;
  sw.low = 0.2;
  sw.high = 0.8;
  sw.favored_weight = 3.0;
  const long long K = 40;
  CostSequence costs = generate_costs(sw, 2, 3, 2, K, rng);

  std::vector<int> favored_per_block;
  for (long long k = 1; k <= K; ++k) {
    const CostFunction& c = costs[static_cast<std::size_t>(k - 1)];
    int favored = -1;
    for (int a = 0; a < 3; ++a) {
      if (c.at(1, 0, a) == 0.2) favored = a;
    }
    REQUIRE(favored >= 0);
    // The favored action is shared by every (h, s) row of the table.
    for (int h = 1; h <= 2; ++h) {
      for (int s = 0; s < 2; ++s) {
        for (int a = 0; a < 3; ++a) {
          CHECK(c.at(h, s, a) == (a == favored ? 0.2 : 0.8));
        }
      }
    }
    if ((k - 1) % sw.period == 0) {
      favored_per_block.push_back(favored);
    } else {
      CHECK(favored == favored_per_block.back());
    }
  }
  REQUIRE(favored_per_block.size() == 8);
  for (std::size_t b = 1; b < favored_per_block.size(); ++b) {
    CHECK(favored_per_block[b] != favored_per_block[b - 1]);
  }
}

TEST_CASE("cost generators: seeded reproducibility") {
  CostParams p;
  p.kind = CostKind::iid_stochastic;
  p.distribution = "beta";
  p.random_means = true;
  p.mean_lo = 0.1;
  p.mean_hi = 0.9;

  Rng a(42), b(42), c(43);
  CostSequence sa = generate_costs(p, 2, 2, 3, 20, a);
  CostSequence sb = generate_costs(p, 2, 2, 3, 20, b);
  CostSequence sc = generate_costs(p, 2, 2, 3, 20, c);
  REQUIRE(sa.size() == sb.size());
  bool all_equal_ab = true, all_equal_ac = true;
  for (std::size_t k = 0; k < sa.size(); ++k) {
    if (sa[k].costs != sb[k].costs) all_equal_ab = false;
    if (sa[k].costs != sc[k].costs) all_equal_ac = false;
  }
  CHECK(all_equal_ab);
  CHECK_FALSE(all_equal_ac);
}

TEST_CASE("cost generators: Monte-Carlo means match the configured means") {
  const long long K = 10000;
  const int S = 2, A = 2, H = 2;
  const std::size_t cells = static_cast<std::size_t>(H) * S * A;

  CostParams bern;
  bern.kind = CostKind::iid_stochastic;
  bern.distribution = "bernoulli";
  bern.mean = 0.37;
  Rng rng(7);
  CostSequence seq = generate_costs(bern, S, A, H, K, rng);
  const double sigma_bern = std::sqrt(0.37 * 0.63 / static_cast<double>(K));
  for (std::size_t i = 0; i < cells; ++i) {
    double sum = 0.0;
    for (const CostFunction& c : seq) sum += c.costs[i];
    CHECK(std::abs(sum / static_cast<double>(K) - 0.37) <= 3.0 * sigma_bern);
  }

  CostParams beta;
  beta.kind = CostKind::iid_stochastic;
  beta.distribution = "beta";
  beta.mean = 0.3;
  beta.concentration = 4.0;
  Rng rng2(8);
  seq = generate_costs(beta, S, A, H, K, rng2);
  // Beta(m*c, (1-m)*c) has variance m(1-m)/(c+1).
  const double sigma_beta =
      std::sqrt(0.3 * 0.7 / 5.0 / static_cast<double>(K));
  for (std::size_t i = 0; i < cells; ++i) {
    double sum = 0.0;
    for (const CostFunction& c : seq) {
      CHECK(c.costs[i] >= 0.0);
      CHECK(c.costs[i] <= 1.0);
      sum += c.costs[i];
    }
    CHECK(std::abs(sum / static_cast<double>(K) - 0.3) <= 3.0 * sigma_beta);
  }
}

TEST_CASE("cost generators: fixed_file playback validates and round-trips") {
  TempDir tmp;
  Rng rng(3);
  CostSequence original;
  for (int k = 0; k < 6; ++k) original.push_back(testutil::random_cost(2, 2, 2, rng));
  const std::string path = (tmp.path / "costs.json").string();
  std::ofstream(path) << to_json(original).dump();

  CostParams p;
  p.kind = CostKind::fixed_file;
  p.path = path;
  Rng unused(0);
  CostSequence loaded = generate_costs(p, 2, 2, 2, 6, unused);
  REQUIRE(loaded.size() == original.size());
  for (std::size_t k = 0; k < loaded.size(); ++k) {
    CHECK(loaded[k].costs == original[k].costs);
  }

  // Shorter prefixes are fine; asking for more episodes than the file holds
  // or mismatching the dimensions is not.
  CHECK(generate_costs(p, 2, 2, 2, 3, unused).size() == 3);
  CHECK_THROWS_AS(generate_costs(p, 2, 2, 2, 7, unused), ContractViolation);
  CHECK_THROWS_AS(generate_costs(p, 3, 2, 2, 6, unused), ContractViolation);
}

TEST_CASE("experiment config: defaults, strict keys, regime consistency") {
  ExperimentConfig cfg = config_from_json(json{{"episodes", 10}});
  CHECK(cfg.episodes == 10);
  CHECK(cfg.mdp.kind == "random");
  CHECK(cfg.learner.kind == "oppo");
  CHECK(cfg.learner.feedback == FeedbackMode::full_info);
  CHECK(cfg.learner.dynamics == DynamicsMode::known);
  CHECK(cfg.hindsight == HindsightMode::checkpoints);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{1});

  // Serialization round trip is the identity on parsed configs.
  ExperimentConfig full = small_config(25);
  full.learner.kind = "oppo";
  full.learner.feedback = FeedbackMode::bandit;
  full.learner.dynamics = DynamicsMode::unknown;
  full.learner.wrappers = {"skipping"};
  full.delay_kind = ScheduleKind::uniform_random;
  full.delay_params.uniform_hi = 4;
  full.seeds = {3, 4, 5};
  full.sweep_grid.episodes = {25, 50};
  CHECK(to_json(config_from_json(to_json(full))) == to_json(full));

  CHECK_THROWS_AS(config_from_json(json{{"episodes", 10}, {"bogus", 1}}),
                  ContractViolation);
  CHECK_THROWS_AS(config_from_json(json{
                      {"episodes", 10},
                      {"learner", json{{"kind", "oppo"}, {"lr", 0.5}}}}),
                  ContractViolation);
  CHECK_THROWS_AS(config_from_json(json{{"episodes", 0}}), ContractViolation);
  CHECK_THROWS_AS(config_from_json(json::object()), ContractViolation);
  CHECK_THROWS_AS(
      config_from_json(json{{"episodes", 10}, {"hindsight", "sometimes"}}),
      ContractViolation);

  // Regime consistency: occupancy-measure descent needs the known kernel and
  // full cost tables; wrapper stacking is capped at one.
  json bad = json{{"episodes", 10},
                  {"learner", json{{"kind", "oreps"}, {"feedback", "bandit"}}}};
  CHECK_THROWS_AS(config_from_json(bad), ContractViolation);
  bad["learner"] = json{{"kind", "oreps"}, {"dynamics", "unknown"}};
  CHECK_THROWS_AS(config_from_json(bad), ContractViolation);
  bad["learner"] = json{{"kind", "blackbox"},
                        {"wrappers", json::array({"skipping"})}};
  CHECK_THROWS_AS(config_from_json(bad), ContractViolation);
  bad["learner"] =
      json{{"kind", "oppo"},
           {"wrappers", json::array({"skipping", "doubling"})}};
  CHECK_THROWS_AS(config_from_json(bad), ContractViolation);
  bad["learner"] = json{{"kind", "oppo"}, {"wrappers", json::array({"x"})}};
  CHECK_THROWS_AS(config_from_json(bad), ContractViolation);
}

TEST_CASE("learner assembly: resolved defaults and schedule validation") {
  Rng rng(2);
  TabularMdp mdp = random_dense_mdp(2, 2, 2, rng);
  const long long K = 100;

  Rng sched_rng(1);
  ScheduleParams sp;
  sp.fixed_delay = 4;
  DelaySchedule fixed4 = make_schedule(ScheduleKind::fixed, sp, K, sched_rng);
  REQUIRE(fixed4.total == 400);

  LearnerConfig lc;
  AssembledLearner a = build_learner(lc, mdp, fixed4, K);
  CHECK(a.learning_rate ==
        doctest::Approx(1.0 / (2.0 * std::sqrt(500.0))).epsilon(1e-12));
  CHECK(a.exploration == 0.0);

  lc.feedback = FeedbackMode::bandit;
  CHECK(build_learner(lc, mdp, fixed4, K).exploration > 0.0);

  // Skipping resolves the standalone threshold sqrt(D / (S*H)); zero-delay
  // schedules clamp it up to 1 so the wrapper stays a no-op.
  lc = LearnerConfig{};
  lc.wrappers = {"skipping"};
  CHECK(build_learner(lc, mdp, fixed4, K).skip_threshold ==
        doctest::Approx(std::sqrt(400.0 / 4.0)).epsilon(1e-12));
  sp.fixed_delay = 0;
  DelaySchedule zero = make_schedule(ScheduleKind::fixed, sp, K, sched_rng);
  CHECK(build_learner(lc, mdp, zero, K).skip_threshold == 1.0);

  // The round-robin baseline sizes itself from the schedule and rejects an
  // explicit bound below the realized maximum before any episode runs.
  lc = LearnerConfig{};
  lc.kind = "blackbox";
  sp.fixed_delay = 3;
  DelaySchedule fixed3 = make_schedule(ScheduleKind::fixed, sp, K, sched_rng);
  AssembledLearner bb = build_learner(lc, mdp, fixed3, K);
  CHECK(bb.d_max == 3);
  const long long k_local = (K + 3) / 4;
  CHECK(bb.learning_rate ==
        doctest::Approx(1.0 / (2.0 * std::sqrt(static_cast<double>(k_local))))
            .epsilon(1e-12));
  lc.d_max = 1;
  CHECK_THROWS_AS(build_learner(lc, mdp, fixed3, K), ContractViolation);
}

TEST_CASE("run_loop: a hindsight-optimal fixed policy has zero regret") {
  Rng rng(14);
  TabularMdp mdp = testutil::random_mdp(3, 2, 3, rng);
  CostFunction table = testutil::random_cost(3, 2, 3, rng);
  const long long K = 50;
  CostSequence costs(static_cast<std::size_t>(K), table);

  HindsightResult best = best_policy_in_hindsight(mdp, costs);
  FixedPolicyLearner cheater(best.policy);

  Rng sched_rng(0);
  DelaySchedule schedule =
      make_schedule(ScheduleKind::fixed, ScheduleParams{}, K, sched_rng);
  Rng env(99);
  RegretRecord rec = run_loop(mdp, costs, schedule, FeedbackMode::full_info,
                              HindsightMode::full, cheater, env);
  REQUIRE(rec.rows.size() == static_cast<std::size_t>(K));
  for (const RegretRow& row : rec.rows) {
    CHECK(row.regret == doctest::Approx(0.0).epsilon(1e-9).scale(1.0));
  }
  CHECK(rec.suffered.size() == static_cast<std::size_t>(K));
}

TEST_CASE("run_loop: regret columns stay mutually consistent") {
  ExperimentConfig cfg = small_config(60);
  cfg.learner.feedback = FeedbackMode::bandit;
  cfg.learner.dynamics = DynamicsMode::unknown;
  cfg.learner.wrappers = {"skipping"};
  cfg.learner.skip_threshold = 3.0;
  cfg.delay_kind = ScheduleKind::uniform_random;
  cfg.delay_params.uniform_hi = 6;
  cfg.hindsight = HindsightMode::full;

  RegretRecord rec = run_experiment(cfg, 21);
  REQUIRE(rec.rows.size() == 60);

  // Rebuild the schedule the run used to cross-check the missing column.
  Rng sched_rng = substream(21, 2);
  DelaySchedule schedule = make_schedule(cfg.delay_kind, cfg.delay_params,
                                         cfg.episodes, sched_rng);

  double prev_cum = 0.0, prev_hind = 0.0;
  long long prev_skipped = 0;
  for (std::size_t i = 0; i < rec.rows.size(); ++i) {
    const RegretRow& row = rec.rows[i];
    CHECK(row.k == static_cast<long long>(i + 1));
    CHECK(row.regret == row.cum_value - row.hindsight);
    CHECK(row.cum_value ==
          doctest::Approx(prev_cum + row.value).epsilon(1e-12));
    CHECK(row.cum_value >= prev_cum);
    CHECK(row.hindsight >= prev_hind);
    CHECK(row.missing == missing_count(schedule, row.k));
    CHECK(row.skipped >= prev_skipped);
    CHECK(row.phase == 1);
    CHECK(row.value >= 0.0);
    CHECK(row.value <= 3.0 + 1e-12);
    prev_cum = row.cum_value;
    prev_hind = row.hindsight;
    prev_skipped = row.skipped;
  }
}

TEST_CASE("run_loop: doubling restarts surface in the phase column") {
  ExperimentConfig cfg = small_config(80);
  cfg.learner.wrappers = {"doubling"};
  cfg.delay_kind = ScheduleKind::uniform_random;
  cfg.delay_params.uniform_hi = 5;

  RegretRecord rec = run_experiment(cfg, 4);
  int prev_phase = 1;
  for (const RegretRow& row : rec.rows) {
    CHECK(row.phase >= prev_phase);
    prev_phase = row.phase;
  }
  CHECK(rec.rows.back().phase > 1);
}

TEST_CASE("run_experiment: identical seeds replay byte-identically") {
  ExperimentConfig cfg = small_config(40);
  cfg.learner.feedback = FeedbackMode::bandit;
  cfg.delay_kind = ScheduleKind::uniform_random;
  cfg.delay_params.uniform_hi = 3;

  RegretRecord a = run_experiment(cfg, 77);
  RegretRecord b = run_experiment(cfg, 77);
  CHECK(a == b);

  RegretRecord c = run_experiment(cfg, 78);
  CHECK(a.rows != c.rows);

  // Provenance: the record carries its resolved config and seed.
  const json echo = json::parse(a.config_json);
  CHECK(echo.at("seed") == 77);
  CHECK(echo.at("episodes") == 40);
  CHECK(echo.at("resolved").at("learning_rate").get<double>() > 0.0);
}

TEST_CASE("run_experiment: checkpointed hindsight matches full recomputation "
          "at checkpoints") {
  ExperimentConfig cfg = small_config(45);
  ExperimentConfig full_cfg = cfg;
  full_cfg.hindsight = HindsightMode::full;

  RegretRecord ckpt = run_experiment(cfg, 5);
  RegretRecord full = run_experiment(full_cfg, 5);
  REQUIRE(ckpt.rows.size() == full.rows.size());

  double last_checkpoint_value = 0.0;
  for (std::size_t i = 0; i < ckpt.rows.size(); ++i) {
    const long long k = ckpt.rows[i].k;
    const bool at_checkpoint =
        (k & (k - 1)) == 0 || k == static_cast<long long>(ckpt.rows.size());
    CHECK(ckpt.rows[i].value == full.rows[i].value);
    if (at_checkpoint) {
      CHECK(ckpt.rows[i].hindsight == full.rows[i].hindsight);
      last_checkpoint_value = ckpt.rows[i].hindsight;
    } else {
      CHECK(ckpt.rows[i].hindsight == last_checkpoint_value);
      CHECK(full.rows[i].hindsight >= ckpt.rows[i].hindsight);
    }
  }

  ExperimentConfig one = small_config(1);
  RegretRecord rec = run_experiment(one, 1);
  REQUIRE(rec.rows.size() == 1);
  CHECK(rec.rows[0].regret >= -1e-12);
  CHECK(rec.rows[0].regret ==
        rec.rows[0].value - rec.rows[0].hindsight);
}

TEST_CASE("run_experiment: occupancy-descent learner runs under the same "
          "harness") {
  ExperimentConfig cfg = small_config(30);
  cfg.learner.kind = "oreps";
  cfg.delay_kind = ScheduleKind::fixed;
  cfg.delay_params.fixed_delay = 2;

  RegretRecord rec = run_experiment(cfg, 9);
  REQUIRE(rec.rows.size() == 30);
  CHECK(rec.name == "oreps");
  for (const RegretRow& row : rec.rows) {
    CHECK(std::isfinite(row.regret));
    CHECK(row.skipped == 0);
  }
}

TEST_CASE("sweep: single cell reproduces run_experiment; duplicates agree") {
  ExperimentConfig cfg = small_config(30);
  cfg.seeds = {13};
  SweepResult one = sweep(cfg);
  REQUIRE(one.cells.size() == 1);
  CHECK(one.cells[0].completed == 1);
  CHECK(one.cells[0].mean_regret ==
        run_experiment(cfg, 13).final_regret());
  CHECK(one.cells[0].stderr_regret == 0.0);

  cfg.seeds = {7, 7};
  SweepResult dup = sweep(cfg);
  REQUIRE(dup.cells.size() == 1);
  REQUIRE(dup.cells[0].final_regrets.size() == 2);
  CHECK(dup.cells[0].final_regrets[0] == dup.cells[0].final_regrets[1]);
  CHECK(dup.cells[0].stderr_regret == 0.0);
}

TEST_CASE("sweep: aggregates recompute from the per-seed rows") {
  ExperimentConfig cfg = small_config(25);
  cfg.seeds = {1, 2, 3};
  cfg.sweep_grid.episodes = {25, 40};
  SweepResult result = sweep(cfg);
  REQUIRE(result.cells.size() == 2);

  for (const SweepCell& cell : result.cells) {
    REQUIRE(cell.completed == 3);
    double mean = 0.0;
    for (double r : cell.final_regrets) mean += r;
    mean /= 3.0;
    CHECK(cell.mean_regret == doctest::Approx(mean).epsilon(1e-12));
    double ss = 0.0;
    for (double r : cell.final_regrets) ss += (r - mean) * (r - mean);
    CHECK(cell.stderr_regret ==
          doctest::Approx(std::sqrt(ss / 2.0) / std::sqrt(3.0))
              .epsilon(1e-12));
    // Each per-seed entry is exactly the standalone run's result.
    ExperimentConfig cell_cfg = cfg;
    cell_cfg.episodes = cell.episodes;
    cell_cfg.sweep_grid = SweepGrid{};
    for (std::size_t i = 0; i < cell.seeds.size(); ++i) {
      CHECK(cell.final_regrets[i] ==
            run_experiment(cell_cfg, cell.seeds[i]).final_regret());
    }
  }
}

TEST_CASE("sweep: execution order does not affect results") {
  ExperimentConfig cfg = small_config(20);
  cfg.seeds = {1, 2, 3, 4};
  cfg.sweep_grid.fixed_delays = {0, 3};

  ::setenv("DELAYLAB_WORKERS", "1", 1);
  SweepResult serial = sweep(cfg);
  ::setenv("DELAYLAB_WORKERS", "4", 1);
  SweepResult parallel = sweep(cfg);
  ::unsetenv("DELAYLAB_WORKERS");

  REQUIRE(serial.cells.size() == parallel.cells.size());
  for (std::size_t i = 0; i < serial.cells.size(); ++i) {
    CHECK(serial.cells[i].final_regrets == parallel.cells[i].final_regrets);
    CHECK(serial.cells[i].mean_regret == parallel.cells[i].mean_regret);
  }
}

TEST_CASE("sweep: per-cell failures are recorded and the sweep continues") {
  ExperimentConfig cfg = small_config(20);
  cfg.learner.feedback = FeedbackMode::bandit;  // invalid for oreps
  cfg.seeds = {1, 2};
  cfg.sweep_grid.learners = {"oppo", "oreps"};

  SweepResult result = sweep(cfg);
  REQUIRE(result.cells.size() == 2);
  const SweepCell& ok = result.cells[0];
  const SweepCell& bad = result.cells[1];
  CHECK(ok.learner_kind == "oppo");
  CHECK(ok.completed == 2);
  CHECK(ok.errors == std::vector<std::string>{"", ""});

  CHECK(bad.learner_kind == "oreps");
  CHECK(bad.completed == 0);
  CHECK(std::isnan(bad.mean_regret));
  for (const std::string& e : bad.errors) CHECK(!e.empty());
  for (double r : bad.final_regrets) CHECK(std::isnan(r));
}

TEST_CASE("report: CSV schema and lossless round trips") {
  ExperimentConfig cfg = small_config(37);
  cfg.delay_kind = ScheduleKind::uniform_random;
  cfg.delay_params.uniform_hi = 4;
  RegretRecord rec = run_experiment(cfg, 3);

  const std::string csv = regret_csv(rec);
  CHECK(csv.rfind("k,value,cum_value,hindsight,regret,missing,skipped,phase\n",
                  0) == 0);
  CHECK(regret_rows_from_csv(csv) == rec.rows);

  RegretRecord single;
  single.rows.push_back(rec.rows[0]);
  const std::string one = regret_csv(single);
  CHECK(std::count(one.begin(), one.end(), '\n') == 2);

  CHECK(record_from_json(to_json(rec)) == rec);

  CHECK_THROWS_AS(regret_rows_from_csv("wrong,header\n1,2\n"),
                  ContractViolation);
  CHECK_THROWS_AS(
      regret_rows_from_csv(std::string(kRegretCsvHeader) + "\n1,2,3\n"),
      ContractViolation);
}

TEST_CASE("report: sweep tables mirror between CSV and JSON") {
  ExperimentConfig cfg = small_config(15);
  cfg.seeds = {1, 2};
  cfg.sweep_grid.learners = {"oppo", "oreps"};
  cfg.learner.feedback = FeedbackMode::bandit;  // makes the oreps cells fail
  SweepResult result = sweep(cfg);

  const std::string csv = sweep_csv(result);
  CHECK(csv.rfind("episodes,delay,learner,seeds,mean_regret,stderr,failures\n",
                  0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);  // header + 2 cells

  SweepResult back = sweep_from_json(to_json(result));
  REQUIRE(back.cells.size() == result.cells.size());
  for (std::size_t i = 0; i < back.cells.size(); ++i) {
    CHECK(back.cells[i].episodes == result.cells[i].episodes);
    CHECK(back.cells[i].learner_kind == result.cells[i].learner_kind);
    CHECK(back.cells[i].errors == result.cells[i].errors);
    if (result.cells[i].completed > 0) {
      CHECK(back.cells[i].mean_regret == result.cells[i].mean_regret);
      CHECK(back.cells[i].final_regrets == result.cells[i].final_regrets);
    } else {
      CHECK(std::isnan(back.cells[i].mean_regret));
    }
  }
}

TEST_CASE("report: log-log chart points recover the regret exponent") {
  auto synthetic = [](double coefficient, double exponent,
                      long long K) {
    RegretRecord rec;
    rec.name = "synthetic";
    for (long long k = 1; k <= K; ++k) {
      RegretRow row;
      row.k = k;
      row.regret = coefficient * std::pow(static_cast<double>(k), exponent);
      rec.rows.push_back(row);
    }
    return rec;
  };

  std::vector<double> xs, ys;
  RegretRecord half = synthetic(3.0, 0.55, 1000);
  polyline_points(regret_svg({&half, 1}, true), 0, xs, ys);
  REQUIRE(xs.size() == 1000);
  CHECK(std::abs(fitted_slope(xs, ys) - 0.55) <= 0.02);

  RegretRecord linear = synthetic(0.25, 1.0, 500);
  polyline_points(regret_svg({&linear, 1}, true), 0, xs, ys);
  CHECK(std::abs(fitted_slope(xs, ys) - 1.0) <= 0.02);

  // Nonpositive regret cannot appear on a log-log chart: those episodes are
  // dropped from the polyline.
  RegretRecord with_zero = synthetic(2.0, 0.5, 100);
  with_zero.rows[0].regret = 0.0;
  with_zero.rows[4].regret = -0.3;
  polyline_points(regret_svg({&with_zero, 1}, true), 0, xs, ys);
  CHECK(xs.size() == 98);

  // Linear axes keep the raw coordinates.
  polyline_points(regret_svg({&linear, 1}, false), 0, xs, ys);
  CHECK(xs[0] == 1.0);
  CHECK(ys[0] == 0.25);
  CHECK(xs.back() == 500.0);

  // Two records, two polylines.
  std::vector<RegretRecord> both = {half, linear};
  const std::string svg = regret_svg(both, true);
  polyline_points(svg, 1, xs, ys);
  CHECK(xs.size() == 500);
}

TEST_CASE("report: emit_report writes the requested files") {
  TempDir tmp;
  ExperimentConfig cfg = small_config(12);
  std::vector<RegretRecord> records = {run_experiment(cfg, 1),
                                       run_experiment(cfg, 2)};

  auto csvs = emit_report(records, ReportFormat::csv, tmp.path.string());
  REQUIRE(csvs.size() == 2);
  CHECK(std::filesystem::exists(tmp.path / "run_seed1.csv"));
  CHECK(std::filesystem::exists(tmp.path / "run_seed2.csv"));

  auto jsons = emit_report(records, ReportFormat::json, tmp.path.string());
  REQUIRE(jsons.size() == 1);
  std::ifstream in(jsons[0]);
  json all = json::parse(in);
  REQUIRE(all.is_array());
  REQUIRE(all.size() == 2);
  CHECK(record_from_json(all[0]) == records[0]);

  auto svgs = emit_report(records, ReportFormat::svg_lines, tmp.path.string());
  REQUIRE(svgs.size() == 1);
  std::ifstream svg_in(svgs[0]);
  std::string svg((std::istreambuf_iterator<char>(svg_in)),
                  std::istreambuf_iterator<char>());
  CHECK(svg.rfind("<svg", 0) == 0);

  SweepResult sw = sweep(cfg);
  auto sweep_files = emit_report(sw, ReportFormat::csv, tmp.path.string());
  CHECK(std::filesystem::exists(tmp.path / "sweep.csv"));
  sweep_files = emit_report(sw, ReportFormat::json, tmp.path.string());
  CHECK(std::filesystem::exists(tmp.path / "sweep.json"));
  CHECK_THROWS_AS(emit_report(sw, ReportFormat::svg_lines, tmp.path.string()),
                  ContractViolation);

  // Duplicate seeds get distinct CSV names instead of overwriting.
  std::vector<RegretRecord> dup = {records[0], records[0]};
  auto dup_csvs = emit_report(dup, ReportFormat::csv, tmp.path.string());
  REQUIRE(dup_csvs.size() == 2);
  CHECK(dup_csvs[0] != dup_csvs[1]);
}
