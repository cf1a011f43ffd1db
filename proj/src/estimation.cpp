#include "delaylab/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace delaylab {

double confidence_radius(double p_bar_entry, long long n, double L) {
  require(p_bar_entry >= 0.0 && p_bar_entry <= 1.0,
          "confidence_radius: p_bar entry outside [0,1]");
  require(n >= 0, "confidence_radius: negative count");
  require(L > 0.0, "confidence_radius: log term must be positive");
  const double denom = static_cast<double>(std::max<long long>(n, 1));
  return 4.0 * std::sqrt(p_bar_entry * (1.0 - p_bar_entry) * L / denom) +
         10.0 * L / denom;
}

// ---------------------------------------------------------------------------
// ConfidenceSet
// ---------------------------------------------------------------------------

ConfidenceSet::ConfidenceSet(int num_states, int num_actions, int horizon,
                             long long K, double delta, double delta_mult)
    : num_states_(num_states), num_actions_(num_actions), horizon_(horizon) {
  require(num_states > 0 && num_actions > 0 && horizon > 0,
          "ConfidenceSet: dimensions must be positive");
  require(K >= 1, "ConfidenceSet: K must be at least 1");
  require(delta > 0.0 && delta < 1.0, "ConfidenceSet: delta must be in (0,1)");
  require(delta_mult > 0.0 && delta_mult <= 1.0,
          "ConfidenceSet: delta multiplier must be in (0,1]");
  L_ = std::log(static_cast<double>(horizon) * num_states * num_actions *
                static_cast<double>(K) / (4.0 * delta * delta_mult));
  require(L_ > 0.0, "ConfidenceSet: log term is nonpositive at these sizes");

  const std::size_t rows = static_cast<std::size_t>(horizon) * num_states *
                           num_actions;
  counts_.assign(rows * num_states, 0);
  n_.assign(rows, 0);
  p_bar_.assign(rows * num_states, 1.0 / num_states);
  eps_.assign(rows * num_states, 10.0 * L_);  // the n = 0 radius, vacuous
}

void ConfidenceSet::observe(int h, int s, int a, int s_next) {
  require(h >= 1 && h <= horizon_ && s >= 0 && s < num_states_ && a >= 0 &&
              a < num_actions_ && s_next >= 0 && s_next < num_states_,
          "ConfidenceSet::observe: index out of range");
  const std::size_t sa = sa_index(h, s, a);
  ++counts_[sa * num_states_ + s_next];
  ++n_[sa];
  refresh_row(sa);
}

void ConfidenceSet::observe_trajectory(const Trajectory& trajectory) {
  require(static_cast<int>(trajectory.states.size()) == horizon_ &&
              trajectory.actions.size() == trajectory.states.size(),
          "ConfidenceSet::observe_trajectory: trajectory length mismatch");
  for (int h = 1; h < horizon_; ++h)
    observe(h, trajectory.states[h - 1], trajectory.actions[h - 1],
            trajectory.states[h]);
}

void ConfidenceSet::refresh_row(std::size_t sa) {
  const long long row_n = n_[sa];
  double* p = p_bar_.data() + sa * num_states_;
  double* e = eps_.data() + sa * num_states_;
  const long long* c = counts_.data() + sa * num_states_;
  for (int s_next = 0; s_next < num_states_; ++s_next) {
    p[s_next] = row_n > 0 ? static_cast<double>(c[s_next]) / row_n
                          : 1.0 / num_states_;
    e[s_next] = confidence_radius(p[s_next], row_n, L_);
  }
}

bool contains_truth(const ConfidenceSet& set, const TabularMdp& mdp) {
  require(mdp.num_states == set.num_states() &&
              mdp.num_actions == set.num_actions() &&
              mdp.horizon == set.horizon(),
          "contains_truth: dimension mismatch");
  for (int h = 1; h <= mdp.horizon; ++h)
    for (int s = 0; s < mdp.num_states; ++s)
      for (int a = 0; a < mdp.num_actions; ++a)
        for (int s2 = 0; s2 < mdp.num_states; ++s2)
          if (std::abs(mdp.prob(h, s, a, s2) - set.p_bar(h, s, a, s2)) >
              set.epsilon(h, s, a, s2))
            return false;
  return true;
}

bool within_l1_ball(const ConfidenceSet& set, const TabularMdp& mdp) {
  require(mdp.num_states == set.num_states() &&
              mdp.num_actions == set.num_actions() &&
              mdp.horizon == set.horizon(),
          "within_l1_ball: dimension mismatch");
  for (int h = 1; h <= mdp.horizon; ++h)
    for (int s = 0; s < mdp.num_states; ++s)
      for (int a = 0; a < mdp.num_actions; ++a) {
        double dev = 0.0;
        for (int s2 = 0; s2 < mdp.num_states; ++s2)
          dev += std::abs(mdp.prob(h, s, a, s2) - set.p_bar(h, s, a, s2));
        const double denom =
            static_cast<double>(std::max<long long>(set.n(h, s, a), 1));
        if (dev > std::sqrt(14.0 * mdp.num_states * set.log_term() / denom))
          return false;
      }
  return true;
}

// ---------------------------------------------------------------------------
// Optimism primitives
// ---------------------------------------------------------------------------

void optimistic_transition(std::span<const double> p_bar_row,
                           std::span<const double> eps_row,
                           std::span<const double> v_next,
                           std::span<double> out) {
  const int S = static_cast<int>(p_bar_row.size());
  require(eps_row.size() == p_bar_row.size() &&
              v_next.size() == p_bar_row.size() && out.size() == p_bar_row.size(),
          "optimistic_transition: size mismatch");

  double mass = 0.0;
  for (int i = 0; i < S; ++i) {
    out[i] = std::max(0.0, p_bar_row[i] - eps_row[i]);
    mass += out[i];
  }

  // Cheapest-first fill; ties toward the lower state index.
  std::vector<int> order(S);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    if (v_next[i] != v_next[j]) return v_next[i] < v_next[j];
    return i < j;
  });

  double left = 1.0 - mass;
  for (int i : order) {
    if (left <= 0.0) break;
    const double headroom = std::min(1.0, p_bar_row[i] + eps_row[i]) - out[i];
    const double add = std::min(headroom, left);
    out[i] += add;
    left -= add;
  }
  require(left <= 1e-9, "optimistic_transition: box-simplex infeasible");
}

std::vector<double> upper_occupancy(const ConfidenceSet& set,
                                    const Policy& policy, int initial_state) {
  const int S = set.num_states(), A = set.num_actions(), H = set.horizon();
  require(policy.num_states == S && policy.num_actions == A &&
              policy.horizon == H,
          "upper_occupancy: dimension mismatch");
  require(initial_state >= 0 && initial_state < S,
          "upper_occupancy: initial state out of range");

  std::vector<double> u(static_cast<std::size_t>(H) * S, 0.0);
  std::vector<double> reach(S), reach_prev(S), neg(S), p_opt(S);
  for (int target_h = 1; target_h <= H; ++target_h)
    for (int target_s = 0; target_s < S; ++target_s) {
      // reach[s] = max over in-set kernels of Pr[visit target | s at step h].
      std::fill(reach.begin(), reach.end(), 0.0);
      reach[target_s] = 1.0;
      for (int h = target_h - 1; h >= 1; --h) {
        for (int s = 0; s < S; ++s) neg[s] = -reach[s];
        for (int s = 0; s < S; ++s) {
          double v = 0.0;
          for (int a = 0; a < A; ++a) {
            optimistic_transition(set.p_bar_row(h, s, a),
                                  set.epsilon_row(h, s, a), neg, p_opt);
            double best = 0.0;
            for (int s2 = 0; s2 < S; ++s2) best += p_opt[s2] * reach[s2];
            v += policy.at(h, s, a) * best;
          }
          reach_prev[s] = v;
        }
        std::swap(reach, reach_prev);
      }
      u[static_cast<std::size_t>(target_h - 1) * S + target_s] =
          reach[initial_state];
    }
  return u;
}

std::vector<double> state_occupancy(const TabularMdp& mdp,
                                    const Policy& policy) {
  const OccupancyMeasure occ = occupancy_measure(mdp, policy);
  std::vector<double> u(static_cast<std::size_t>(mdp.horizon) *
                            mdp.num_states,
                        0.0);
  for (int h = 1; h <= mdp.horizon; ++h)
    for (int s = 0; s < mdp.num_states; ++s)
      u[static_cast<std::size_t>(h - 1) * mdp.num_states + s] =
          occ.state(h, s);
  return u;
}

// ---------------------------------------------------------------------------
// Bandit cost estimation
// ---------------------------------------------------------------------------

EstimatedCost EstimatedCost::zeros(int S, int A, int H) {
  EstimatedCost e;
  e.num_states = S;
  e.num_actions = A;
  e.horizon = H;
  e.values.assign(static_cast<std::size_t>(H) * S * A, 0.0);
  return e;
}

EstimatedCost EstimatedCost::from_exact(const CostFunction& cost) {
  EstimatedCost e;
  e.num_states = cost.num_states;
  e.num_actions = cost.num_actions;
  e.horizon = cost.horizon;
  e.values = cost.costs;
  return e;
}

double is_cost_estimator(double suffered_cost, bool visited, double u_hs,
                         double pi_has, double gamma) {
  if (!visited) return 0.0;
  require(suffered_cost >= 0.0, "is_cost_estimator: negative cost");
  require(u_hs >= 0.0 && u_hs <= 1.0 + 1e-9 && pi_has >= 0.0 &&
              pi_has <= 1.0 + 1e-9,
          "is_cost_estimator: u and pi must be probabilities");
  require(gamma >= 0.0, "is_cost_estimator: negative gamma");
  const double denom = u_hs * pi_has + gamma;
  require(denom > 0.0, "is_cost_estimator: zero denominator on a visit");
  return suffered_cost / denom;
}

EstimatedCost bandit_cost_estimate(const Trajectory& trajectory,
                                   std::span<const double> u,
                                   const Policy& policy, double gamma) {
  const int S = policy.num_states, A = policy.num_actions,
            H = policy.horizon;
  require(static_cast<int>(trajectory.states.size()) == H &&
              trajectory.actions.size() == trajectory.states.size() &&
              trajectory.suffered_costs.size() == trajectory.states.size(),
          "bandit_cost_estimate: trajectory length mismatch");
  require(u.size() == static_cast<std::size_t>(H) * S,
          "bandit_cost_estimate: u table size mismatch");

  EstimatedCost est = EstimatedCost::zeros(S, A, H);
  for (int h = 1; h <= H; ++h) {
    const int s = trajectory.states[h - 1];
    const int a = trajectory.actions[h - 1];
    est.at(h, s, a) = is_cost_estimator(
        trajectory.suffered_costs[h - 1], true,
        u[static_cast<std::size_t>(h - 1) * S + s], policy.at(h, s, a), gamma);
  }
  return est;
}

}  // namespace delaylab
