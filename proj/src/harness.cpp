#include "delaylab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <string_view>
#include <thread>

#include <nlohmann/json.hpp>

#include "delaylab/oppo.hpp"
#include "delaylab/oreps.hpp"
#include "delaylab/wrappers.hpp"

namespace delaylab {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Environment sources
// ---------------------------------------------------------------------------

TabularMdp random_dense_mdp(int num_states, int num_actions, int horizon,
                            Rng& rng) {
  require(num_states >= 1 && num_actions >= 1 && horizon >= 1,
          "random_dense_mdp: dimensions must be positive");
  TabularMdp mdp;
  mdp.num_states = num_states;
  mdp.num_actions = num_actions;
  mdp.horizon = horizon;
  mdp.initial_state = 0;
  mdp.transitions.resize(static_cast<std::size_t>(horizon) * num_states *
                         num_actions * num_states);
  for (std::size_t base = 0; base < mdp.transitions.size();
       base += num_states) {
    double sum = 0.0;
    for (int t = 0; t < num_states; ++t) {
      const double g = -std::log(1.0 - uniform01(rng));
      mdp.transitions[base + t] = g;
      sum += g;
    }
    for (int t = 0; t < num_states; ++t) mdp.transitions[base + t] /= sum;
  }
  mdp.validate();
  return mdp;
}

void MdpSpec::validate() const {
  require(kind == "random" || kind == "file",
          "MdpSpec: kind must be random or file");
  if (kind == "random") {
    require(num_states >= 1 && num_actions >= 1 && horizon >= 1,
            "MdpSpec: dimensions must be positive");
  } else {
    require(!path.empty(), "MdpSpec: file kind needs a path");
  }
}

TabularMdp build_mdp(const MdpSpec& spec) {
  spec.validate();
  if (spec.kind == "file") {
    std::ifstream in(spec.path);
    require(in.good(), "build_mdp: cannot open " + spec.path);
    TabularMdp mdp = mdp_from_json(json::parse(in));
    mdp.validate();
    return mdp;
  }
  Rng rng = substream(spec.mdp_seed, 3);
  return random_dense_mdp(spec.num_states, spec.num_actions, spec.horizon,
                          rng);
}

// ---------------------------------------------------------------------------
// Cost-sequence generators
// ---------------------------------------------------------------------------

namespace {

double standard_normal(Rng& rng) {
  const double u = 1.0 - uniform01(rng);  // (0, 1]: keeps the log finite
  const double v = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u)) *
         std::cos(2.0 * std::numbers::pi * v);
}

// Marsaglia-Tsang; written out so draws depend only on the generator state.
double gamma_sample(double shape, Rng& rng) {
  if (shape < 1.0) {
    const double u = 1.0 - uniform01(rng);
    return gamma_sample(shape + 1.0, rng) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0, v = 0.0;
    do {
      x = standard_normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = 1.0 - uniform01(rng);
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

double beta_sample(double mean, double concentration, Rng& rng) {
  if (mean <= 0.0) return 0.0;
  if (mean >= 1.0) return 1.0;
  const double x = gamma_sample(mean * concentration, rng);
  const double y = gamma_sample((1.0 - mean) * concentration, rng);
  return x / (x + y);
}

}  // namespace

void CostParams::validate() const {
  switch (kind) {
    case CostKind::iid_stochastic:
      require(distribution == "bernoulli" || distribution == "beta",
              "CostParams: distribution must be bernoulli or beta");
      require(mean >= 0.0 && mean <= 1.0, "CostParams: mean outside [0,1]");
      require(0.0 <= mean_lo && mean_lo <= mean_hi && mean_hi <= 1.0,
              "CostParams: mean range must satisfy 0 <= lo <= hi <= 1");
      require(concentration > 0.0 && std::isfinite(concentration),
              "CostParams: concentration must be positive");
      break;
    case CostKind::piecewise_switching:
      require(period >= 1, "CostParams: switching period must be >= 1");
      require(0.0 <= low && low <= high && high <= 1.0,
              "CostParams: need 0 <= low <= high <= 1");
      require(favored_weight > 0.0 && std::isfinite(favored_weight),
              "CostParams: favored_weight must be positive");
      break;
    case CostKind::sinusoidal_drift:
      require(period >= 1, "CostParams: drift period must be >= 1");
      require(amplitude >= 0.0 && amplitude <= 0.5,
              "CostParams: amplitude outside [0, 0.5]");
      break;
    case CostKind::fixed_file:
      require(!path.empty(), "CostParams: fixed_file needs a path");
      break;
  }
}

CostSequence generate_costs(const CostParams& params, int num_states,
                            int num_actions, int horizon, long long K,
                            Rng& rng) {
  params.validate();
  require(num_states >= 1 && num_actions >= 1 && horizon >= 1,
          "generate_costs: dimensions must be positive");
  require(K >= 1, "generate_costs: K must be >= 1");
  const std::size_t cells = static_cast<std::size_t>(horizon) * num_states *
                            num_actions;
  CostSequence out;
  out.reserve(static_cast<std::size_t>(K));

  switch (params.kind) {
    case CostKind::iid_stochastic: {
      std::vector<double> means(cells, params.mean);
      if (params.random_means) {
        for (double& m : means) {
          m = params.mean_lo +
              (params.mean_hi - params.mean_lo) * uniform01(rng);
        }
      }
      const bool bernoulli = params.distribution == "bernoulli";
      for (long long k = 1; k <= K; ++k) {
        CostFunction c = CostFunction::zeros(num_states, num_actions, horizon);
        for (std::size_t i = 0; i < cells; ++i) {
          c.costs[i] = bernoulli
                           ? (uniform01(rng) < means[i] ? 1.0 : 0.0)
                           : beta_sample(means[i], params.concentration, rng);
        }
        out.push_back(std::move(c));
      }
      break;
    }
    case CostKind::piecewise_switching: {
      int favored = -1;
      std::vector<double> weights(static_cast<std::size_t>(num_actions));
      CostFunction block = CostFunction::zeros(num_states, num_actions,
                                               horizon);
      for (long long k = 1; k <= K; ++k) {
        if ((k - 1) % params.period == 0) {
          // New block: redraw the favored action, excluding the incumbent
          // so every boundary is an actual switch (when A >= 2).
          for (int a = 0; a < num_actions; ++a) {
            weights[static_cast<std::size_t>(a)] =
                (a == favored && num_actions >= 2)
                    ? 0.0
                    : (a == 0 ? params.favored_weight : 1.0);
          }
          favored = sample_weighted(weights, rng);
          for (int h = 1; h <= horizon; ++h) {
            for (int s = 0; s < num_states; ++s) {
              for (int a = 0; a < num_actions; ++a) {
                block.at(h, s, a) = (a == favored) ? params.low : params.high;
              }
            }
          }
        }
        out.push_back(block);
      }
      break;
    }
    case CostKind::sinusoidal_drift: {
      for (long long k = 1; k <= K; ++k) {
        CostFunction c = CostFunction::zeros(num_states, num_actions, horizon);
        for (std::size_t i = 0; i < cells; ++i) {
          const double phase =
              2.0 * std::numbers::pi * static_cast<double>(i) /
              static_cast<double>(cells);
          const double v =
              0.5 + params.amplitude *
                        std::sin(2.0 * std::numbers::pi *
                                     static_cast<double>(k) /
                                     static_cast<double>(params.period) +
                                 phase);
          c.costs[i] = std::clamp(v, 0.0, 1.0);
        }
        out.push_back(std::move(c));
      }
      break;
    }
    case CostKind::fixed_file: {
      std::ifstream in(params.path);
      require(in.good(), "generate_costs: cannot open " + params.path);
      CostSequence loaded = cost_sequence_from_json(json::parse(in));
      require(static_cast<long long>(loaded.size()) >= K,
              "generate_costs: file holds fewer than K cost tables");
      for (long long k = 0; k < K; ++k) {
        CostFunction& c = loaded[static_cast<std::size_t>(k)];
        require(c.num_states == num_states && c.num_actions == num_actions &&
                    c.horizon == horizon,
                "generate_costs: file dimensions mismatch the MDP");
        c.validate();
        out.push_back(std::move(c));
      }
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Learner assembly
// ---------------------------------------------------------------------------

void LearnerConfig::validate() const {
  require(kind == "oppo" || kind == "oreps" || kind == "blackbox",
          "LearnerConfig: kind must be oppo, oreps or blackbox");
  require(delta > 0.0 && delta < 1.0, "LearnerConfig: delta outside (0,1)");
  require(learning_rate >= 0.0 && std::isfinite(learning_rate),
          "LearnerConfig: learning_rate must be finite and >= 0");
  require(exploration <= 1.0, "LearnerConfig: exploration above 1");
  for (const std::string& w : wrappers) {
    require(w == "skipping" || w == "doubling",
            "LearnerConfig: unknown wrapper '" + w + "'");
  }
  require(wrappers.size() <= 1,
          "LearnerConfig: at most one wrapper (doubling already filters by "
          "its own per-phase threshold)");
  if (kind == "oreps") {
    require(feedback == FeedbackMode::full_info &&
                dynamics == DynamicsMode::known,
            "LearnerConfig: oreps needs known dynamics and full information");
    require(!explicit_exploration,
            "LearnerConfig: oreps has no exploration gate");
  }
  if (kind == "blackbox") {
    require(wrappers.empty(), "LearnerConfig: blackbox takes no wrappers");
    require(!explicit_exploration,
            "LearnerConfig: blackbox instances see no delay; the gate does "
            "not apply");
  }
}

namespace {

std::unique_ptr<Learner> wrap_learner(std::unique_ptr<Learner> base,
                                      const LearnerConfig& cfg,
                                      double skip_threshold,
                                      DoublingLearner::Factory factory,
                                      int horizon) {
  if (cfg.wrappers.empty()) return base;
  if (cfg.wrappers.front() == "skipping") {
    SkipConfig sc;
    sc.threshold = skip_threshold;
    sc.feed_skipped_transitions = cfg.feed_skipped_transitions;
    return std::make_unique<SkippingLearner>(std::move(base), sc);
  }
  return std::make_unique<DoublingLearner>(horizon, std::move(factory),
                                           cfg.feed_skipped_transitions);
}

}  // namespace

AssembledLearner build_learner(const LearnerConfig& cfg, const TabularMdp& mdp,
                               const DelaySchedule& schedule, long long K) {
  cfg.validate();
  mdp.validate();
  require(K >= 1, "build_learner: K must be >= 1");
  require(schedule.episodes() == K,
          "build_learner: schedule length differs from K");

  const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
  const long long D = schedule.total;
  AssembledLearner out;

  out.learning_rate =
      cfg.learning_rate > 0.0
          ? cfg.learning_rate
          : 1.0 / (H * std::sqrt(static_cast<double>(K + D)));
  out.exploration = cfg.exploration;
  if (out.exploration < 0.0) {
    out.exploration =
        cfg.feedback == FeedbackMode::bandit
            ? std::min(0.25, std::sqrt(static_cast<double>(H) * S * A /
                                       static_cast<double>(K + D)))
            : 0.0;
  }
  const long long d_max = cfg.d_max >= 0 ? cfg.d_max : schedule.max_delay;

  const bool doubling =
      !cfg.wrappers.empty() && cfg.wrappers.front() == "doubling";
  const bool skipping =
      !cfg.wrappers.empty() && cfg.wrappers.front() == "skipping";
  if (skipping) {
    // The standalone threshold sqrt(D / (S*H)) degenerates to zero on
    // zero-delay schedules; clamp to 1 there (any positive value keeps all
    // zero-delay packets).
    out.skip_threshold = cfg.skip_threshold > 0.0
                             ? cfg.skip_threshold
                             : std::max(1.0, default_skip_threshold(D, S, H));
  }

  if (cfg.kind == "oreps") {
    TabularMdp env = mdp;
    auto make_inner = [env, K](double eta, double /*gamma*/,
                               long long /*first*/) {
      OrepsConfig oc;
      oc.learning_rate = eta;
      return std::make_unique<DelayedOreps>(env, oc);
    };
    std::unique_ptr<Learner> base;
    if (!doubling) base = make_inner(out.learning_rate, 0.0, 1);
    out.learner = wrap_learner(std::move(base), cfg, out.skip_threshold,
                               make_inner, H);
    if (doubling) out.learning_rate = doubling_eta(1, H);
    return out;
  }

  OppoConfig oc;
  oc.learning_rate = out.learning_rate;
  oc.exploration = out.exploration;
  oc.delta = cfg.delta;
  oc.feedback_mode = cfg.feedback;
  oc.dynamics_mode = cfg.dynamics;
  oc.use_explicit_exploration = cfg.explicit_exploration;
  oc.d_max_hint = cfg.explicit_exploration ? d_max : -1;

  if (cfg.kind == "blackbox") {
    require(d_max >= schedule.max_delay,
            "build_learner: blackbox d_max is below the schedule's maximum "
            "delay");
    out.d_max = d_max;
    const long long k_local = (K + d_max) / (d_max + 1);
    OppoConfig inner = oc;
    inner.learning_rate =
        cfg.learning_rate > 0.0
            ? cfg.learning_rate
            : 1.0 / (H * std::sqrt(static_cast<double>(
                             std::max<long long>(1, k_local))));
    out.learning_rate = inner.learning_rate;
    TabularMdp env = mdp;
    auto factory = [env, inner, k_local,
                    dynamics = cfg.dynamics]() -> std::unique_ptr<Learner> {
      if (dynamics == DynamicsMode::known) {
        return std::make_unique<DelayedOppo>(env, k_local, inner);
      }
      return std::make_unique<DelayedOppo>(shape_of(env), k_local, inner);
    };
    out.learner = blackbox_reduction(factory, d_max);
    return out;
  }

  // Direct (possibly wrapped) delayed optimistic policy optimization.
  TabularMdp env = mdp;
  DoublingLearner::Factory factory;
  if (cfg.dynamics == DynamicsMode::known) {
    factory = [env, K, oc](double eta, double gamma,
                           long long /*first*/) -> std::unique_ptr<Learner> {
      OppoConfig c = oc;
      c.learning_rate = eta;
      c.exploration = gamma;
      return std::make_unique<DelayedOppo>(env, K, c);
    };
  } else {
    // Transition statistics are environment facts, not phase state: phases
    // of a restarting wrapper share one confidence set and snapshot store.
    auto confidence =
        std::make_shared<ConfidenceSet>(S, A, H, K, oc.delta, oc.delta_mult);
    auto snapshots = std::make_shared<SnapshotStore>();
    factory = [env, K, oc, confidence,
               snapshots](double eta, double gamma,
                          long long first) -> std::unique_ptr<Learner> {
      OppoConfig c = oc;
      c.learning_rate = eta;
      c.exploration = gamma;
      return std::make_unique<DelayedOppo>(shape_of(env), K, c, confidence,
                                           snapshots, first);
    };
  }
  std::unique_ptr<Learner> base;
  if (!doubling) base = factory(oc.learning_rate, oc.exploration, 1);
  out.learner =
      wrap_learner(std::move(base), cfg, out.skip_threshold, factory, H);
  if (doubling) {
    out.learning_rate = doubling_eta(1, H);
    out.exploration = doubling_gamma(1);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  mdp.validate();
  costs.validate();
  learner.validate();
  require(episodes >= 1, "ExperimentConfig: episodes must be >= 1");
  require(!seeds.empty(), "ExperimentConfig: seed list is empty");
  require(delay_params.fixed_delay >= 0 && delay_params.uniform_hi >= 0,
          "ExperimentConfig: delays cannot be negative");
  for (long long k : sweep_grid.episodes) {
    require(k >= 1, "ExperimentConfig: sweep episodes must be >= 1");
  }
  for (long long d : sweep_grid.fixed_delays) {
    require(d >= 0, "ExperimentConfig: sweep delays cannot be negative");
  }
  for (const std::string& l : sweep_grid.learners) {
    require(l == "oppo" || l == "oreps" || l == "blackbox",
            "ExperimentConfig: unknown sweep learner '" + l + "'");
  }
}

namespace {

void check_keys(const json& j, const char* where,
                std::initializer_list<std::string_view> allowed) {
  require(j.is_object(), std::string(where) + ": expected a JSON object");
  for (const auto& item : j.items()) {
    const bool known =
        std::find(allowed.begin(), allowed.end(), item.key()) != allowed.end();
    require(known,
            std::string(where) + ": unknown key '" + item.key() + "'");
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

CostKind cost_kind_from_string(const std::string& s) {
  if (s == "iid_stochastic") return CostKind::iid_stochastic;
  if (s == "piecewise_switching") return CostKind::piecewise_switching;
  if (s == "sinusoidal_drift") return CostKind::sinusoidal_drift;
  if (s == "fixed_file") return CostKind::fixed_file;
  throw ContractViolation("costs: unknown kind '" + s + "'");
}

std::string to_string(CostKind k) {
  switch (k) {
    case CostKind::iid_stochastic: return "iid_stochastic";
    case CostKind::piecewise_switching: return "piecewise_switching";
    case CostKind::sinusoidal_drift: return "sinusoidal_drift";
    case CostKind::fixed_file: return "fixed_file";
  }
  return "";
}

ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "fixed") return ScheduleKind::fixed;
  if (s == "uniform_random") return ScheduleKind::uniform_random;
  if (s == "one_missing") return ScheduleKind::one_missing;
  if (s == "adversarial_list") return ScheduleKind::adversarial_list;
  throw ContractViolation("delays: unknown kind '" + s + "'");
}

std::string to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::fixed: return "fixed";
    case ScheduleKind::uniform_random: return "uniform_random";
    case ScheduleKind::one_missing: return "one_missing";
    case ScheduleKind::adversarial_list: return "adversarial_list";
  }
  return "";
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  check_keys(j, "config",
             {"mdp", "costs", "delays", "learner", "episodes", "seeds",
              "hindsight", "out", "sweep"});
  ExperimentConfig cfg;

  if (j.contains("mdp")) {
    const json& m = j.at("mdp");
    check_keys(m, "mdp",
               {"kind", "num_states", "num_actions", "horizon", "mdp_seed",
                "path"});
    cfg.mdp.kind = get_or<std::string>(m, "kind", "random");
    cfg.mdp.num_states = get_or<int>(m, "num_states", cfg.mdp.num_states);
    cfg.mdp.num_actions = get_or<int>(m, "num_actions", cfg.mdp.num_actions);
    cfg.mdp.horizon = get_or<int>(m, "horizon", cfg.mdp.horizon);
    cfg.mdp.mdp_seed = get_or<std::uint64_t>(m, "mdp_seed", cfg.mdp.mdp_seed);
    cfg.mdp.path = get_or<std::string>(m, "path", "");
  }

  if (j.contains("costs")) {
    const json& c = j.at("costs");
    check_keys(c, "costs",
               {"kind", "distribution", "mean", "random_means", "mean_lo",
                "mean_hi", "concentration", "period", "low", "high",
                "favored_weight", "amplitude", "path"});
    cfg.costs.kind =
        cost_kind_from_string(get_or<std::string>(c, "kind", "iid_stochastic"));
    cfg.costs.distribution =
        get_or<std::string>(c, "distribution", cfg.costs.distribution);
    cfg.costs.mean = get_or<double>(c, "mean", cfg.costs.mean);
    cfg.costs.random_means =
        get_or<bool>(c, "random_means", cfg.costs.random_means);
    cfg.costs.mean_lo = get_or<double>(c, "mean_lo", cfg.costs.mean_lo);
    cfg.costs.mean_hi = get_or<double>(c, "mean_hi", cfg.costs.mean_hi);
    cfg.costs.concentration =
        get_or<double>(c, "concentration", cfg.costs.concentration);
    cfg.costs.period = get_or<long long>(c, "period", cfg.costs.period);
    cfg.costs.low = get_or<double>(c, "low", cfg.costs.low);
    cfg.costs.high = get_or<double>(c, "high", cfg.costs.high);
    cfg.costs.favored_weight =
        get_or<double>(c, "favored_weight", cfg.costs.favored_weight);
    cfg.costs.amplitude = get_or<double>(c, "amplitude", cfg.costs.amplitude);
    cfg.costs.path = get_or<std::string>(c, "path", "");
  }

  if (j.contains("delays")) {
    const json& d = j.at("delays");
    check_keys(d, "delays", {"kind", "value", "hi", "list"});
    cfg.delay_kind =
        schedule_kind_from_string(get_or<std::string>(d, "kind", "fixed"));
    cfg.delay_params.fixed_delay = get_or<long long>(d, "value", 0);
    cfg.delay_params.uniform_hi = get_or<long long>(d, "hi", 0);
    cfg.delay_params.list =
        get_or<std::vector<long long>>(d, "list", {});
  }

  if (j.contains("learner")) {
    const json& l = j.at("learner");
    check_keys(l, "learner",
               {"kind", "feedback", "dynamics", "learning_rate",
                "exploration", "delta", "explicit_exploration", "d_max",
                "wrappers", "skip_threshold", "feed_skipped_transitions"});
    cfg.learner.kind = get_or<std::string>(l, "kind", "oppo");
    const std::string fb = get_or<std::string>(l, "feedback", "full_info");
    require(fb == "full_info" || fb == "bandit",
            "learner: feedback must be full_info or bandit");
    cfg.learner.feedback =
        fb == "bandit" ? FeedbackMode::bandit : FeedbackMode::full_info;
    const std::string dy = get_or<std::string>(l, "dynamics", "known");
    require(dy == "known" || dy == "unknown",
            "learner: dynamics must be known or unknown");
    cfg.learner.dynamics =
        dy == "unknown" ? DynamicsMode::unknown : DynamicsMode::known;
    cfg.learner.learning_rate = get_or<double>(l, "learning_rate", 0.0);
    cfg.learner.exploration = get_or<double>(l, "exploration", -1.0);
    cfg.learner.delta = get_or<double>(l, "delta", cfg.learner.delta);
    cfg.learner.explicit_exploration =
        get_or<bool>(l, "explicit_exploration", false);
    cfg.learner.d_max = get_or<long long>(l, "d_max", -1);
    cfg.learner.wrappers = get_or<std::vector<std::string>>(l, "wrappers", {});
    cfg.learner.skip_threshold = get_or<double>(l, "skip_threshold", 0.0);
    cfg.learner.feed_skipped_transitions =
        get_or<bool>(l, "feed_skipped_transitions", false);
  }

  require(j.contains("episodes"), "config: episodes is required");
  cfg.episodes = j.at("episodes").get<long long>();
  cfg.seeds = get_or<std::vector<std::uint64_t>>(j, "seeds", {1});
  const std::string hs = get_or<std::string>(j, "hindsight", "checkpoints");
  require(hs == "checkpoints" || hs == "full",
          "config: hindsight must be checkpoints or full");
  cfg.hindsight =
      hs == "full" ? HindsightMode::full : HindsightMode::checkpoints;
  cfg.out_dir = get_or<std::string>(j, "out", ".");

  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    check_keys(s, "sweep", {"episodes", "fixed_delays", "learners"});
    cfg.sweep_grid.episodes =
        get_or<std::vector<long long>>(s, "episodes", {});
    cfg.sweep_grid.fixed_delays =
        get_or<std::vector<long long>>(s, "fixed_delays", {});
    cfg.sweep_grid.learners =
        get_or<std::vector<std::string>>(s, "learners", {});
  }

  cfg.validate();
  return cfg;
}

json to_json(const ExperimentConfig& cfg) {
  json j;
  j["mdp"] = {{"kind", cfg.mdp.kind},
              {"num_states", cfg.mdp.num_states},
              {"num_actions", cfg.mdp.num_actions},
              {"horizon", cfg.mdp.horizon},
              {"mdp_seed", cfg.mdp.mdp_seed},
              {"path", cfg.mdp.path}};
  j["costs"] = {{"kind", to_string(cfg.costs.kind)},
                {"distribution", cfg.costs.distribution},
                {"mean", cfg.costs.mean},
                {"random_means", cfg.costs.random_means},
                {"mean_lo", cfg.costs.mean_lo},
                {"mean_hi", cfg.costs.mean_hi},
                {"concentration", cfg.costs.concentration},
                {"period", cfg.costs.period},
                {"low", cfg.costs.low},
                {"high", cfg.costs.high},
                {"favored_weight", cfg.costs.favored_weight},
                {"amplitude", cfg.costs.amplitude},
                {"path", cfg.costs.path}};
  j["delays"] = {{"kind", to_string(cfg.delay_kind)},
                 {"value", cfg.delay_params.fixed_delay},
                 {"hi", cfg.delay_params.uniform_hi},
                 {"list", cfg.delay_params.list}};
  j["learner"] = {
      {"kind", cfg.learner.kind},
      {"feedback",
       cfg.learner.feedback == FeedbackMode::bandit ? "bandit" : "full_info"},
      {"dynamics",
       cfg.learner.dynamics == DynamicsMode::unknown ? "unknown" : "known"},
      {"learning_rate", cfg.learner.learning_rate},
      {"exploration", cfg.learner.exploration},
      {"delta", cfg.learner.delta},
      {"explicit_exploration", cfg.learner.explicit_exploration},
      {"d_max", cfg.learner.d_max},
      {"wrappers", cfg.learner.wrappers},
      {"skip_threshold", cfg.learner.skip_threshold},
      {"feed_skipped_transitions", cfg.learner.feed_skipped_transitions}};
  j["episodes"] = cfg.episodes;
  j["seeds"] = cfg.seeds;
  j["hindsight"] =
      cfg.hindsight == HindsightMode::full ? "full" : "checkpoints";
  j["out"] = cfg.out_dir;
  if (!cfg.sweep_grid.empty()) {
    j["sweep"] = {{"episodes", cfg.sweep_grid.episodes},
                  {"fixed_delays", cfg.sweep_grid.fixed_delays},
                  {"learners", cfg.sweep_grid.learners}};
  }
  return j;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "load_config: cannot open " + path);
  return config_from_json(json::parse(in));
}

// ---------------------------------------------------------------------------
// Running experiments
// ---------------------------------------------------------------------------

RegretRecord run_loop(const TabularMdp& mdp, const CostSequence& costs,
                      const DelaySchedule& schedule, FeedbackMode feedback,
                      HindsightMode hindsight, Learner& learner,
                      Rng& env_rng) {
  const long long K = schedule.episodes();
  require(K >= 1, "run_loop: empty schedule");
  require(static_cast<long long>(costs.size()) >= K,
          "run_loop: need one cost table per episode");
  mdp.validate();

  const int H = mdp.horizon;
  RegretRecord rec;
  rec.rows.reserve(static_cast<std::size_t>(K));
  rec.suffered.reserve(static_cast<std::size_t>(K));

  FeedbackBuffer buffer(mdp.num_states, mdp.num_actions, H);
  CostFunction summed =
      CostFunction::zeros(mdp.num_states, mdp.num_actions, H);
  double cum_value = 0.0;
  double hindsight_value = 0.0;

  for (long long k = 1; k <= K; ++k) {
    const CostFunction& cost = costs[static_cast<std::size_t>(k - 1)];
    const Policy& played = learner.begin_episode();

    Trajectory traj;
    traj.states.reserve(static_cast<std::size_t>(H));
    traj.actions.reserve(static_cast<std::size_t>(H));
    traj.suffered_costs.reserve(static_cast<std::size_t>(H));
    int s = mdp.initial_state;
    for (int h = 1; h <= H; ++h) {
      const int a = learner.act(s, h, env_rng);
      traj.states.push_back(s);
      traj.actions.push_back(a);
      traj.suffered_costs.push_back(cost.at(h, s, a));
      if (h < H) s = sample_weighted(mdp.row(h, s, a), env_rng);
    }
    learner.end_episode(traj);

    // The policy references mutate once feedback is processed: take the
    // exact value and the packet's snapshot first.
    const double value = policy_value(mdp, played, cost).v(1, mdp.initial_state);

    FeedbackPacket pkt;
    pkt.episode = k;
    pkt.arrival = k + schedule.delay(k);
    pkt.payload_kind = feedback;
    pkt.trajectory = traj;
    if (feedback == FeedbackMode::full_info) pkt.full_costs = cost;
    pkt.policy_snapshot = learner.decision_policy();
    pkt.exploration_used = learner.exploration_used();
    buffer.record_visit(traj);
    buffer.push(std::move(pkt));
    learner.on_feedback(buffer.take_arrivals(k));

    summed += cost;
    const bool checkpoint = hindsight == HindsightMode::full || k == K ||
                            (k & (k - 1)) == 0;
    if (checkpoint) {
      hindsight_value = hindsight_for_summed_cost(mdp, summed).total_value;
    }
    cum_value += value;

    RegretRow row;
    row.k = k;
    row.value = value;
    row.cum_value = cum_value;
    row.hindsight = hindsight_value;
    row.regret = cum_value - hindsight_value;
    row.missing = buffer.missing();
    row.skipped = learner.skipped_count();
    row.phase = learner.phase();
    rec.rows.push_back(row);
    rec.suffered.push_back(std::accumulate(traj.suffered_costs.begin(),
                                           traj.suffered_costs.end(), 0.0));
  }
  return rec;
}

RegretRecord run_experiment(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const TabularMdp mdp = build_mdp(cfg.mdp);

  Rng cost_rng = substream(seed, 1);
  const CostSequence costs =
      generate_costs(cfg.costs, mdp.num_states, mdp.num_actions, mdp.horizon,
                     cfg.episodes, cost_rng);
  Rng schedule_rng = substream(seed, 2);
  const DelaySchedule schedule =
      make_schedule(cfg.delay_kind, cfg.delay_params, cfg.episodes,
                    schedule_rng);

  AssembledLearner built = build_learner(cfg.learner, mdp, schedule,
                                         cfg.episodes);
  Rng env_rng = substream(seed, 0);
  RegretRecord rec = run_loop(mdp, costs, schedule, cfg.learner.feedback,
                              cfg.hindsight, *built.learner, env_rng);
  rec.name = cfg.learner.kind;
  rec.seed = seed;

  json echo = to_json(cfg);
  echo["seed"] = seed;
  echo["resolved"] = {{"learning_rate", built.learning_rate},
                      {"exploration", built.exploration},
                      {"skip_threshold", built.skip_threshold},
                      {"d_max", built.d_max},
                      {"total_delay", schedule.total},
                      {"max_delay", schedule.max_delay}};
  rec.config_json = echo.dump();
  return rec;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

int worker_count() {
  if (const char* env = std::getenv("DELAYLAB_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    require(end != env && *end == '\0' && v >= 1,
            "DELAYLAB_WORKERS must be a positive integer");
    return static_cast<int>(std::min<long>(v, 256));
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 4;
}

SweepResult sweep(const ExperimentConfig& base) {
  base.validate();
  const std::vector<long long> ks = base.sweep_grid.episodes.empty()
                                        ? std::vector<long long>{base.episodes}
                                        : base.sweep_grid.episodes;
  const std::vector<long long> ds =
      base.sweep_grid.fixed_delays.empty()
          ? std::vector<long long>{-1}
          : base.sweep_grid.fixed_delays;
  const std::vector<std::string> ls =
      base.sweep_grid.learners.empty()
          ? std::vector<std::string>{base.learner.kind}
          : base.sweep_grid.learners;

  SweepResult result;
  result.config_json = to_json(base).dump();

  struct Job {
    std::size_t cell = 0;
    std::size_t slot = 0;
    ExperimentConfig cfg;
    std::uint64_t seed = 0;
  };
  std::vector<Job> jobs;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  for (long long k : ks) {
    for (long long d : ds) {
      for (const std::string& l : ls) {
        ExperimentConfig cfg = base;
        cfg.episodes = k;
        cfg.learner.kind = l;
        cfg.sweep_grid = SweepGrid{};
        if (d >= 0) {
          cfg.delay_kind = ScheduleKind::fixed;
          cfg.delay_params.fixed_delay = d;
        }
        SweepCell cell;
        cell.episodes = k;
        cell.fixed_delay = d;
        cell.learner_kind = l;
        cell.seeds = base.seeds;
        cell.final_regrets.assign(base.seeds.size(), nan);
        cell.errors.assign(base.seeds.size(), std::string());
        const std::size_t cell_index = result.cells.size();
        for (std::size_t i = 0; i < base.seeds.size(); ++i) {
          jobs.push_back(Job{cell_index, i, cfg, base.seeds[i]});
        }
        result.cells.push_back(std::move(cell));
      }
    }
  }

  // Pre-sized per-seed slots make the reduce a pure write into disjoint
  // elements: the aggregate below is independent of scheduling order.
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      Job& job = jobs[i];
      SweepCell& cell = result.cells[job.cell];
      try {
        cell.final_regrets[job.slot] =
            run_experiment(job.cfg, job.seed).final_regret();
      } catch (const std::exception& e) {
        cell.errors[job.slot] = e.what();
      }
    }
  };
  const int workers = std::min<int>(worker_count(),
                                    static_cast<int>(jobs.size()));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }

  for (SweepCell& cell : result.cells) {
    double sum = 0.0;
    int n = 0;
    for (double r : cell.final_regrets) {
      if (!std::isnan(r)) {
        sum += r;
        ++n;
      }
    }
    cell.completed = n;
    cell.mean_regret = n > 0 ? sum / n : nan;
    if (n >= 2) {
      double ss = 0.0;
      for (double r : cell.final_regrets) {
        if (!std::isnan(r)) ss += (r - cell.mean_regret) * (r - cell.mean_regret);
      }
      cell.stderr_regret = std::sqrt(ss / (n - 1)) / std::sqrt(n);
    } else {
      cell.stderr_regret = 0.0;
    }
  }
  return result;
}

}  // namespace delaylab
