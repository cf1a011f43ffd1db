#include "delaylab/mdp.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>

#include <nlohmann/json.hpp>

namespace delaylab {

namespace {

constexpr double kRowSumTolerance = 1e-12;

void require_dims(int S, int A, int H) {
  require(S > 0 && A > 0 && H > 0, "dimensions must be positive");
}

}  // namespace

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

void TabularMdp::validate() const {
  require_dims(num_states, num_actions, horizon);
  require(initial_state >= 0 && initial_state < num_states,
          "TabularMdp: initial_state out of range");
  const std::size_t expected = static_cast<std::size_t>(horizon) * num_states *
                               num_actions * num_states;
  require(transitions.size() == expected,
          "TabularMdp: transition table has wrong size");
  for (int h = 1; h <= horizon; ++h) {
    for (int s = 0; s < num_states; ++s) {
      for (int a = 0; a < num_actions; ++a) {
        double sum = 0.0;
        for (double p : row(h, s, a)) {
          require(p >= 0.0 && p <= 1.0,
                  "TabularMdp: transition probability outside [0,1]");
          sum += p;
        }
        require(std::abs(sum - 1.0) <= kRowSumTolerance,
                "TabularMdp: transition row does not sum to 1");
      }
    }
  }
}

CostFunction CostFunction::zeros(int S, int A, int H) {
  require_dims(S, A, H);
  CostFunction c;
  c.num_states = S;
  c.num_actions = A;
  c.horizon = H;
  c.costs.assign(static_cast<std::size_t>(H) * S * A, 0.0);
  return c;
}

CostFunction& CostFunction::operator+=(const CostFunction& other) {
  require(num_states == other.num_states && num_actions == other.num_actions &&
              horizon == other.horizon,
          "CostFunction+=: dimension mismatch");
  for (std::size_t i = 0; i < costs.size(); ++i) costs[i] += other.costs[i];
  return *this;
}

void CostFunction::validate() const {
  require_dims(num_states, num_actions, horizon);
  require(costs.size() == static_cast<std::size_t>(horizon) * num_states *
                              num_actions,
          "CostFunction: table has wrong size");
  for (double c : costs)
    require(c >= 0.0 && c <= 1.0, "CostFunction: entry outside [0,1]");
}

Policy Policy::uniform(int S, int A, int H) {
  require_dims(S, A, H);
  Policy pi;
  pi.num_states = S;
  pi.num_actions = A;
  pi.horizon = H;
  pi.probs.assign(static_cast<std::size_t>(H) * S * A, 1.0 / A);
  return pi;
}

void Policy::validate() const {
  require_dims(num_states, num_actions, horizon);
  require(probs.size() == static_cast<std::size_t>(horizon) * num_states *
                              num_actions,
          "Policy: table has wrong size");
  for (int h = 1; h <= horizon; ++h) {
    for (int s = 0; s < num_states; ++s) {
      double sum = 0.0;
      for (double p : row(h, s)) {
        require(p >= 0.0, "Policy: negative probability");
        sum += p;
      }
      require(std::abs(sum - 1.0) <= kRowSumTolerance,
              "Policy: row does not sum to 1");
    }
  }
}

ValueTables ValueTables::zeros(int S, int A, int H) {
  require_dims(S, A, H);
  ValueTables t;
  t.num_states = S;
  t.num_actions = A;
  t.horizon = H;
  t.V.assign(static_cast<std::size_t>(H + 1) * S, 0.0);
  t.Q.assign(static_cast<std::size_t>(H) * S * A, 0.0);
  return t;
}

OccupancyMeasure OccupancyMeasure::zeros(int S, int A, int H) {
  require_dims(S, A, H);
  OccupancyMeasure m;
  m.num_states = S;
  m.num_actions = A;
  m.horizon = H;
  m.q.assign(static_cast<std::size_t>(H) * S * A * S, 0.0);
  return m;
}

double OccupancyMeasure::state_action(int h, int s, int a) const {
  double sum = 0.0;
  const std::size_t base = index(h, s, a, 0);
  for (int s2 = 0; s2 < num_states; ++s2) sum += q[base + s2];
  return sum;
}

double OccupancyMeasure::state(int h, int s) const {
  double sum = 0.0;
  for (int a = 0; a < num_actions; ++a) sum += state_action(h, s, a);
  return sum;
}

// ---------------------------------------------------------------------------
// Exact dynamic programming
// ---------------------------------------------------------------------------

void q_backup(std::span<const double> cost_layer,
              std::span<const double> transition_layer,
              std::span<const double> v_next, int num_states, int num_actions,
              std::span<double> q_out) {
  const std::size_t cells =
      static_cast<std::size_t>(num_states) * num_actions;
  require(cost_layer.size() == cells, "q_backup: cost layer size mismatch");
  require(transition_layer.size() == cells * num_states,
          "q_backup: transition layer size mismatch");
  require(v_next.size() == static_cast<std::size_t>(num_states),
          "q_backup: v_next size mismatch");
  require(q_out.size() == cells, "q_backup: output size mismatch");
  for (std::size_t sa = 0; sa < cells; ++sa) {
    double expect = 0.0;
    const double* p = transition_layer.data() + sa * num_states;
    for (int s2 = 0; s2 < num_states; ++s2) expect += p[s2] * v_next[s2];
    q_out[sa] = cost_layer[sa] + expect;
  }
}

void v_from_q(std::span<const double> q_layer,
              std::span<const double> policy_layer, int num_states,
              int num_actions, std::span<double> v_out) {
  const std::size_t cells =
      static_cast<std::size_t>(num_states) * num_actions;
  require(q_layer.size() == cells, "v_from_q: Q layer size mismatch");
  require(policy_layer.size() == cells, "v_from_q: policy layer size mismatch");
  require(v_out.size() == static_cast<std::size_t>(num_states),
          "v_from_q: output size mismatch");
  for (int s = 0; s < num_states; ++s) {
    double v = 0.0;
    double row_sum = 0.0;
    const double* q = q_layer.data() + static_cast<std::size_t>(s) * num_actions;
    const double* pi =
        policy_layer.data() + static_cast<std::size_t>(s) * num_actions;
    for (int a = 0; a < num_actions; ++a) {
      v += pi[a] * q[a];
      row_sum += pi[a];
    }
    require(std::abs(row_sum - 1.0) <= kRowSumTolerance,
            "v_from_q: policy row not normalized");
    v_out[s] = v;
  }
}

ValueTables policy_value(const TabularMdp& mdp, const Policy& policy,
                         const CostFunction& cost) {
  const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
  require(policy.num_states == S && policy.num_actions == A &&
              policy.horizon == H,
          "policy_value: policy dimension mismatch");
  require(cost.num_states == S && cost.num_actions == A && cost.horizon == H,
          "policy_value: cost dimension mismatch");
  ValueTables t = ValueTables::zeros(S, A, H);
  const std::size_t layer = static_cast<std::size_t>(S) * A;
  for (int h = H; h >= 1; --h) {
    std::span<double> q_out{
        t.Q.data() + static_cast<std::size_t>(h - 1) * layer, layer};
    std::span<const double> v_next{
        t.V.data() + static_cast<std::size_t>(h) * S,
        static_cast<std::size_t>(S)};
    std::span<const double> p_layer{
        mdp.transitions.data() + static_cast<std::size_t>(h - 1) * layer * S,
        layer * S};
    q_backup(cost.layer(h), p_layer, v_next, S, A, q_out);
    std::span<double> v_out{t.V.data() + static_cast<std::size_t>(h - 1) * S,
                            static_cast<std::size_t>(S)};
    v_from_q(q_out, policy.layer(h), S, A, v_out);
  }
  return t;
}

OccupancyMeasure occupancy_measure(const TabularMdp& mdp,
                                   const Policy& policy) {
  const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
  require(policy.num_states == S && policy.num_actions == A &&
              policy.horizon == H,
          "occupancy_measure: policy dimension mismatch");
  OccupancyMeasure m = OccupancyMeasure::zeros(S, A, H);
  std::vector<double> rho(S, 0.0);  // state marginal at the current step
  rho[mdp.initial_state] = 1.0;
  std::vector<double> rho_next(S, 0.0);
  for (int h = 1; h <= H; ++h) {
    std::fill(rho_next.begin(), rho_next.end(), 0.0);
    for (int s = 0; s < S; ++s) {
      if (rho[s] == 0.0) continue;
      for (int a = 0; a < A; ++a) {
        const double mass = rho[s] * policy.at(h, s, a);
        if (mass == 0.0) continue;
        const std::size_t base = m.index(h, s, a, 0);
        std::span<const double> p = mdp.row(h, s, a);
        for (int s2 = 0; s2 < S; ++s2) {
          const double cell = mass * p[s2];
          m.q[base + s2] = cell;
          rho_next[s2] += cell;
        }
      }
    }
    rho.swap(rho_next);
  }
  return m;
}

HindsightResult hindsight_for_summed_cost(const TabularMdp& mdp,
                                          const CostFunction& summed_cost) {
  const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
  require(summed_cost.num_states == S && summed_cost.num_actions == A &&
              summed_cost.horizon == H,
          "hindsight_for_summed_cost: cost dimension mismatch");
  HindsightResult result;
  result.policy.num_states = S;
  result.policy.num_actions = A;
  result.policy.horizon = H;
  result.policy.probs.assign(static_cast<std::size_t>(H) * S * A, 0.0);
  std::vector<double> v_next(S, 0.0);
  std::vector<double> v(S, 0.0);
  for (int h = H; h >= 1; --h) {
    for (int s = 0; s < S; ++s) {
      int best_a = 0;
      double best_q = std::numeric_limits<double>::infinity();
      for (int a = 0; a < A; ++a) {
        double q = summed_cost.at(h, s, a);
        std::span<const double> p = mdp.row(h, s, a);
        for (int s2 = 0; s2 < S; ++s2) q += p[s2] * v_next[s2];
        if (q < best_q) {  // strict: ties stay with the lowest index
          best_q = q;
          best_a = a;
        }
      }
      v[s] = best_q;
      result.policy.at(h, s, best_a) = 1.0;
    }
    v_next = v;
  }
  result.total_value = v_next[mdp.initial_state];
  return result;
}

HindsightResult best_policy_in_hindsight(const TabularMdp& mdp,
                                         const CostSequence& costs) {
  require(!costs.empty(), "best_policy_in_hindsight: empty cost sequence");
  CostFunction summed = costs.front();
  for (std::size_t k = 1; k < costs.size(); ++k) summed += costs[k];
  // Values are linear in the cost table for a fixed kernel, so the best
  // policy for the summed table minimizes the summed value.
  return hindsight_for_summed_cost(mdp, summed);
}

Trajectory sample_episode(const TabularMdp& mdp, const Policy& policy,
                          const CostFunction& cost, Rng& rng) {
  const int H = mdp.horizon;
  Trajectory traj;
  traj.states.resize(H);
  traj.actions.resize(H);
  traj.suffered_costs.resize(H);
  int s = mdp.initial_state;
  for (int h = 1; h <= H; ++h) {
    const int a = sample_weighted(policy.row(h, s), rng);
    traj.states[h - 1] = s;
    traj.actions[h - 1] = a;
    traj.suffered_costs[h - 1] = cost.at(h, s, a);
    if (h < H) s = sample_weighted(mdp.row(h, s, a), rng);
  }
  return traj;
}

std::vector<double> empirical_regret(
    std::span<const double> played_values,
    std::span<const double> hindsight_prefix_values) {
  require(played_values.size() == hindsight_prefix_values.size(),
          "empirical_regret: length mismatch");
  std::vector<double> regret(played_values.size());
  double cum = 0.0;
  for (std::size_t k = 0; k < played_values.size(); ++k) {
    cum += played_values[k];
    regret[k] = cum - hindsight_prefix_values[k];
  }
  return regret;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

nlohmann::json to_json(const TabularMdp& mdp) {
  return nlohmann::json{{"num_states", mdp.num_states},
                        {"num_actions", mdp.num_actions},
                        {"horizon", mdp.horizon},
                        {"initial_state", mdp.initial_state},
                        {"transitions", mdp.transitions}};
}

TabularMdp mdp_from_json(const nlohmann::json& j) {
  TabularMdp mdp;
  mdp.num_states = j.at("num_states").get<int>();
  mdp.num_actions = j.at("num_actions").get<int>();
  mdp.horizon = j.at("horizon").get<int>();
  mdp.initial_state = j.at("initial_state").get<int>();
  mdp.transitions = j.at("transitions").get<std::vector<double>>();
  mdp.validate();
  return mdp;
}

nlohmann::json to_json(const CostSequence& costs) {
  require(!costs.empty(), "to_json: empty cost sequence");
  nlohmann::json flat = nlohmann::json::array();
  for (const CostFunction& c : costs) flat.push_back(c.costs);
  return nlohmann::json{{"num_states", costs.front().num_states},
                        {"num_actions", costs.front().num_actions},
                        {"horizon", costs.front().horizon},
                        {"episodes", costs.size()},
                        {"costs", std::move(flat)}};
}

CostSequence cost_sequence_from_json(const nlohmann::json& j) {
  const int S = j.at("num_states").get<int>();
  const int A = j.at("num_actions").get<int>();
  const int H = j.at("horizon").get<int>();
  CostSequence seq;
  for (const auto& flat : j.at("costs")) {
    CostFunction c = CostFunction::zeros(S, A, H);
    c.costs = flat.get<std::vector<double>>();
    c.validate();
    seq.push_back(std::move(c));
  }
  require(!seq.empty(), "cost_sequence_from_json: empty cost sequence");
  return seq;
}

}  // namespace delaylab
