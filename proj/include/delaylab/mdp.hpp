#pragma once

// Tabular episodic MDP core: the environment representation and the exact
// dynamic-programming primitives everything else is built on.
//
// Conventions used throughout the library:
//   * steps are indexed h = 1..H, states s = 0..S-1, actions a = 0..A-1;
//   * tables are dense row-major vectors indexed (h, s, a[, s']);
//   * an episode always starts from the fixed initial state;
//   * costs live in [0, 1] per step, so exact values satisfy
//     0 <= V_h(s) <= H - h + 1;
//   * ties in argmin/argmax are broken toward the lowest index, which keeps
//     every computation reproducible.

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "delaylab/common.hpp"
#include "delaylab/rng.hpp"

namespace delaylab {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

// Episodic tabular MDP: state/action spaces, horizon, fixed initial state,
// and a step-indexed transition kernel p_h(s'|s,a).
struct TabularMdp {
  int num_states = 0;     // S
  int num_actions = 0;    // A
  int horizon = 0;        // H
  int initial_state = 0;  // episodes start here at h = 1
  std::vector<double> transitions;  // [(h-1)*S*A*S + (s*A + a)*S + s']

  std::size_t row_index(int h, int s, int a) const {
    return ((static_cast<std::size_t>(h - 1) * num_states + s) * num_actions +
            a) *
           num_states;
  }
  std::span<const double> row(int h, int s, int a) const {
    return {transitions.data() + row_index(h, s, a),
            static_cast<std::size_t>(num_states)};
  }
  double prob(int h, int s, int a, int s_next) const {
    return transitions[row_index(h, s, a) + s_next];
  }

  // Throws ContractViolation unless every row is a probability vector
  // (entries in [0,1], sum within 1e-12 of 1) and the dimensions are sane.
  void validate() const;
};

// Per-episode cost table c_h(s,a) with entries in [0, 1].
struct CostFunction {
  int num_states = 0;
  int num_actions = 0;
  int horizon = 0;
  std::vector<double> costs;  // [(h-1)*S*A + s*A + a]

  static CostFunction zeros(int S, int A, int H);

  std::size_t index(int h, int s, int a) const {
    return (static_cast<std::size_t>(h - 1) * num_states + s) * num_actions +
           a;
  }
  double at(int h, int s, int a) const { return costs[index(h, s, a)]; }
  double& at(int h, int s, int a) { return costs[index(h, s, a)]; }
  std::span<const double> layer(int h) const {
    return {costs.data() +
                static_cast<std::size_t>(h - 1) * num_states * num_actions,
            static_cast<std::size_t>(num_states) * num_actions};
  }

  // Entrywise sum, used for hindsight DPs over prefixes of a cost sequence.
  CostFunction& operator+=(const CostFunction& other);

  void validate() const;  // entries in [0,1], dimensions consistent
};

// The adversary: one cost table per episode.
using CostSequence = std::vector<CostFunction>;

// Time-inhomogeneous stochastic policy pi_h(a|s); rows sum to 1.
struct Policy {
  int num_states = 0;
  int num_actions = 0;
  int horizon = 0;
  std::vector<double> probs;  // [(h-1)*S*A + s*A + a]

  static Policy uniform(int S, int A, int H);

  std::size_t row_index(int h, int s) const {
    return (static_cast<std::size_t>(h - 1) * num_states + s) * num_actions;
  }
  std::span<const double> row(int h, int s) const {
    return {probs.data() + row_index(h, s),
            static_cast<std::size_t>(num_actions)};
  }
  double at(int h, int s, int a) const { return probs[row_index(h, s) + a]; }
  double& at(int h, int s, int a) { return probs[row_index(h, s) + a]; }
  std::span<const double> layer(int h) const {
    return {probs.data() +
                static_cast<std::size_t>(h - 1) * num_states * num_actions,
            static_cast<std::size_t>(num_states) * num_actions};
  }

  void validate() const;  // rows nonnegative, sum within 1e-12 of 1
};

// State values V_h(s) and state-action values Q_h(s,a), h = 1..H, with the
// boundary row V_{H+1} stored explicitly (and identically zero).
struct ValueTables {
  int num_states = 0;
  int num_actions = 0;
  int horizon = 0;
  std::vector<double> V;  // [(h-1)*S + s], h = 1..H+1
  std::vector<double> Q;  // [(h-1)*S*A + s*A + a], h = 1..H

  static ValueTables zeros(int S, int A, int H);

  double v(int h, int s) const {
    return V[static_cast<std::size_t>(h - 1) * num_states + s];
  }
  double& v(int h, int s) {
    return V[static_cast<std::size_t>(h - 1) * num_states + s];
  }
  std::span<const double> v_layer(int h) const {
    return {V.data() + static_cast<std::size_t>(h - 1) * num_states,
            static_cast<std::size_t>(num_states)};
  }
  double q(int h, int s, int a) const {
    return Q[(static_cast<std::size_t>(h - 1) * num_states + s) * num_actions +
             a];
  }
  double& q(int h, int s, int a) {
    return Q[(static_cast<std::size_t>(h - 1) * num_states + s) * num_actions +
             a];
  }
  std::span<const double> q_layer(int h) const {
    return {Q.data() +
                static_cast<std::size_t>(h - 1) * num_states * num_actions,
            static_cast<std::size_t>(num_states) * num_actions};
  }
};

// One executed episode: the H (state, action) pairs in order plus the cost
// suffered at each step. The step-1 state is always the initial state.
struct Trajectory {
  std::vector<int> states;            // length H
  std::vector<int> actions;           // length H
  std::vector<double> suffered_costs;  // length H
};

// Occupancy measure q_h(s,a,s') of a policy under a kernel: the probability
// of traversing (s,a,s') at step h. Feasible measures satisfy, within 1e-9,
//   (init) the h = 1 state marginal is a point mass at the initial state,
//   (mass) every layer sums to 1,
//   (flow) inflow at (h+1, s') equals its outflow.
struct OccupancyMeasure {
  int num_states = 0;
  int num_actions = 0;
  int horizon = 0;
  std::vector<double> q;  // [((h-1)*S + s)*A*S + a*S + s']

  static OccupancyMeasure zeros(int S, int A, int H);

  std::size_t index(int h, int s, int a, int s_next) const {
    return ((static_cast<std::size_t>(h - 1) * num_states + s) * num_actions +
            a) *
               num_states +
           s_next;
  }
  double at(int h, int s, int a, int s_next) const {
    return q[index(h, s, a, s_next)];
  }
  double& at(int h, int s, int a, int s_next) {
    return q[index(h, s, a, s_next)];
  }
  // Marginals, by plain summation.
  double state_action(int h, int s, int a) const;
  double state(int h, int s) const;
};

// ---------------------------------------------------------------------------
// Exact dynamic programming
// ---------------------------------------------------------------------------

// One Bellman backup layer: q_out(s,a) = cost(s,a) + <p(s,a,.), v_next>.
// cost_layer is S*A, transition_layer is S*A*S, v_next is S, q_out is S*A.
void q_backup(std::span<const double> cost_layer,
              std::span<const double> transition_layer,
              std::span<const double> v_next, int num_states, int num_actions,
              std::span<double> q_out);

// Policy average of a Q layer: v_out(s) = <pi(s,.), q_layer(s,.)>.
void v_from_q(std::span<const double> q_layer,
              std::span<const double> policy_layer, int num_states,
              int num_actions, std::span<double> v_out);

// Exact policy evaluation by backward recursion h = H..1.
// V_1(initial_state) is the expected cumulative cost of following the policy.
ValueTables policy_value(const TabularMdp& mdp, const Policy& policy,
                         const CostFunction& cost);

// Forward recursion: q_h(s,a,s') = Pr[s_h = s, a_h = a, s_{h+1} = s'].
OccupancyMeasure occupancy_measure(const TabularMdp& mdp,
                                   const Policy& policy);

// Minimizer over all policies of the total value under a summed cost table
// (one backward greedy DP; valid because values are linear in costs for a
// fixed kernel). Returns the deterministic minimizer, ties toward the lowest
// action index, and its value from the initial state.
struct HindsightResult {
  Policy policy;
  double total_value = 0.0;
};
HindsightResult hindsight_for_summed_cost(const TabularMdp& mdp,
                                          const CostFunction& summed_cost);

// Best fixed policy in hindsight over a whole cost sequence:
// argmin_pi sum_k V^{k,pi}_1(initial_state).
HindsightResult best_policy_in_hindsight(const TabularMdp& mdp,
                                         const CostSequence& costs);

// Sample one episode: a_h ~ pi_h(.|s_h), s_{h+1} ~ p_h(.|s_h,a_h), costs
// read off the given table. Consumes exactly 2H-1 generator draws (the
// terminal transition is not sampled: no decision or statistic depends on
// it). Bitwise reproducible for a fixed generator state.
Trajectory sample_episode(const TabularMdp& mdp, const Policy& policy,
                          const CostFunction& cost, Rng& rng);

// Cumulative regret series: R_k = sum_{j<=k} value_j - hindsight_prefix_k,
// where hindsight_prefix_k is the best fixed-policy total over episodes 1..k.
// Both inputs must have equal length.
std::vector<double> empirical_regret(
    std::span<const double> played_values,
    std::span<const double> hindsight_prefix_values);

// ---------------------------------------------------------------------------
// Serialization (reproducible fixtures for the experiment harness)
// ---------------------------------------------------------------------------

nlohmann::json to_json(const TabularMdp& mdp);
TabularMdp mdp_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CostSequence& costs);
CostSequence cost_sequence_from_json(const nlohmann::json& j);

}  // namespace delaylab
