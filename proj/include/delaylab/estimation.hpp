#pragma once

// Empirical transition model with per-entry confidence intervals, the
// optimistic transition chooser used by policy evaluation, upper occupancy
// bounds, and the importance-sampled cost estimator for bandit feedback.
//
// The confidence set around the empirical kernel is the product over rows
// (h,s,a) of the boxes
//   { p' on the simplex : |p'(s') - p_bar(s'|s,a)| <= eps(s'|s,a) for all s' },
// with radius
//   eps = 4 sqrt( p_bar (1 - p_bar) L / (n v 1) ) + 10 L / (n v 1),
//   L   = ln( H S A K / (4 delta) ).
// Rows that have never been observed default to the uniform distribution;
// their radius 10L exceeds 1, so membership tests on them are vacuous.

#include <cstdint>
#include <span>
#include <vector>

#include "delaylab/mdp.hpp"

namespace delaylab {

// eps for a single entry; exact formula, no clipping (radii >= 1 simply make
// the membership test vacuous).
double confidence_radius(double p_bar_entry, long long n, double L);

// ---------------------------------------------------------------------------
// ConfidenceSet
// ---------------------------------------------------------------------------

// Empirical transitions p_bar, observed-visit counts n, and materialized
// radii eps, updated one observed transition at a time. Copyable: learners
// snapshot the whole set when delayed evaluation must run against the
// history the episode was played with.
class ConfidenceSet {
 public:
  // K and delta fix the log term L = ln(H S A K / (4 delta_mult * delta)).
  // delta_mult is an optional union-bound split (e.g. 1/9); the default 1
  // uses delta directly.
  ConfidenceSet(int num_states, int num_actions, int horizon, long long K,
                double delta, double delta_mult = 1.0);

  // Record one observed transition (h, s, a) -> s_next and refresh the row.
  void observe(int h, int s, int a, int s_next);

  // Record every transition a delivered trajectory exhibits: steps h = 1..H-1
  // (the step-H successor is never part of a trajectory, so step-H rows keep
  // their vacuous defaults; nothing downstream reads them since V_{H+1} = 0).
  void observe_trajectory(const Trajectory& trajectory);

  long long n(int h, int s, int a) const { return n_[sa_index(h, s, a)]; }
  double p_bar(int h, int s, int a, int s_next) const {
    return p_bar_[sa_index(h, s, a) * num_states_ + s_next];
  }
  double epsilon(int h, int s, int a, int s_next) const {
    return eps_[sa_index(h, s, a) * num_states_ + s_next];
  }
  std::span<const double> p_bar_row(int h, int s, int a) const {
    return {p_bar_.data() + sa_index(h, s, a) * num_states_,
            static_cast<std::size_t>(num_states_)};
  }
  std::span<const double> epsilon_row(int h, int s, int a) const {
    return {eps_.data() + sa_index(h, s, a) * num_states_,
            static_cast<std::size_t>(num_states_)};
  }

  double log_term() const { return L_; }
  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }
  int horizon() const { return horizon_; }

 private:
  std::size_t sa_index(int h, int s, int a) const {
    return (static_cast<std::size_t>(h - 1) * num_states_ + s) * num_actions_ +
           a;
  }
  void refresh_row(std::size_t sa);

  int num_states_, num_actions_, horizon_;
  double L_;
  std::vector<long long> counts_;  // (h,s,a,s') observed transitions
  std::vector<long long> n_;       // (h,s,a) row totals
  std::vector<double> p_bar_;      // (h,s,a,s') empirical kernel
  std::vector<double> eps_;        // (h,s,a,s') radii
};

// True iff |p - p_bar| <= eps for every entry — the coverage diagnostic.
bool contains_truth(const ConfidenceSet& set, const TabularMdp& mdp);

// Diagnostic only (no learner consumes it): true iff every row satisfies
// ||p(.|s,a) - p_bar(.|s,a)||_1 <= sqrt(14 S L / (n v 1)).
bool within_l1_ball(const ConfidenceSet& set, const TabularMdp& mdp);

// ---------------------------------------------------------------------------
// Optimism primitives
// ---------------------------------------------------------------------------

// Exact minimizer of <p', v_next> over the box around p_bar_row intersected
// with the simplex: start every state at its lower bound max(0, p_bar - eps)
// and greedily raise states toward min(1, p_bar + eps) in ascending v_next
// order (ties toward the lower state index) until the total mass reaches 1.
// Feasibility is structural: p_bar itself lies in the box.
void optimistic_transition(std::span<const double> p_bar_row,
                           std::span<const double> eps_row,
                           std::span<const double> v_next,
                           std::span<double> out);

// u(h,s) = max over kernels in the confidence set of the probability that
// the policy, started from initial_state, visits s at step h. One maximizing
// DP per target (the terminal reward is the indicator of the target): exact,
// because the set is a product of per-row boxes and a layered episode visits
// each row at most once, so per-step greedy choices are globally consistent.
// Returned table is indexed [(h-1) * S + s].
std::vector<double> upper_occupancy(const ConfidenceSet& set,
                                    const Policy& policy, int initial_state);

// Known-dynamics counterpart: the exact visit probabilities q^{p,pi}_h(s).
std::vector<double> state_occupancy(const TabularMdp& mdp,
                                    const Policy& policy);

// ---------------------------------------------------------------------------
// Bandit cost estimation
// ---------------------------------------------------------------------------

// Importance-sampled cost table: zero except possibly at the H visited
// pairs, where entries are bounded by 1/gamma. Layout matches CostFunction
// but entries may exceed 1, so it is a distinct type with its own contract.
struct EstimatedCost {
  int num_states = 0;
  int num_actions = 0;
  int horizon = 0;
  std::vector<double> values;  // [(h-1)*S*A + s*A + a]

  static EstimatedCost zeros(int S, int A, int H);
  // Full-information estimate: the exact cost table, copied.
  static EstimatedCost from_exact(const CostFunction& cost);

  std::size_t index(int h, int s, int a) const {
    return (static_cast<std::size_t>(h - 1) * num_states + s) * num_actions +
           a;
  }
  double at(int h, int s, int a) const { return values[index(h, s, a)]; }
  double& at(int h, int s, int a) { return values[index(h, s, a)]; }
  std::span<const double> layer(int h) const {
    return {values.data() +
                static_cast<std::size_t>(h - 1) * num_states * num_actions,
            static_cast<std::size_t>(num_states) * num_actions};
  }
};

// One entry of the estimator: suffered_cost / (u * pi + gamma) if the pair
// was visited at that step, else 0. The denominator must be positive for
// visited pairs (bandit configurations enforce gamma > 0 upstream).
double is_cost_estimator(double suffered_cost, bool visited, double u_hs,
                         double pi_has, double gamma);

// The full estimated table for one delivered episode: applies
// is_cost_estimator at the H visited pairs of the trajectory, using the
// upper occupancy u of the episode's policy and the policy itself.
EstimatedCost bandit_cost_estimate(const Trajectory& trajectory,
                                   std::span<const double> u,
                                   const Policy& policy, double gamma);

}  // namespace delaylab
