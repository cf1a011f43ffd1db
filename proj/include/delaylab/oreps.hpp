#pragma once

// Delayed O-REPS for known transitions and full-information feedback.
//
// The learner's iterate is an occupancy measure q over transition triples
// (h, s, a, s').  Each batch of arrived episode costs triggers one entropic
// update q~ = q * exp(-eta * summed costs) followed by an exact KL projection
// back onto the occupancy polytope of the (known) kernel.  Because the
// feasible set is an intersection of affine constraints with the positive
// orthant and entropic updates never touch the boundary, projections compose:
// the iterate after any delayed, batched delivery order depends only on the
// sum of the delivered costs.

#include <vector>

#include "delaylab/learner.hpp"
#include "delaylab/mdp.hpp"

namespace delaylab {

// ---------------------------------------------------------------------------
// The occupancy polytope of a known kernel
// ---------------------------------------------------------------------------

// Residuals of the four membership conditions; a measure is accepted when
// every one of them is small.
struct PolytopeResiduals {
  double start_mass = 0.0;  // layer-1 mass at the initial state vs 1, plus
                            // any layer-1 mass placed elsewhere
  double layer_mass = 0.0;  // worst per-layer total-mass deviation from 1
  double flow = 0.0;        // worst |outflow - inflow| over (h, s), h >= 2
  double kernel = 0.0;      // worst |q(s'|s,a) - p(s'|s,a)| where the (s,a)
                            // marginal exceeds the support cutoff

  double max() const;
};

class OccupancyPolytope {
 public:
  // The cutoff below which a state-action marginal is treated as zero for
  // the kernel-consistency check (conditionals of vanishing mass carry no
  // information).
  static constexpr double kSupportCutoff = 1e-12;

  explicit OccupancyPolytope(const TabularMdp& mdp);

  PolytopeResiduals residuals(const OccupancyMeasure& q) const;
  bool contains(const OccupancyMeasure& q, double tolerance = 1e-9) const;

  const TabularMdp& mdp() const { return *mdp_; }

 private:
  const TabularMdp* mdp_;
};

// ---------------------------------------------------------------------------
// Update and projection primitives
// ---------------------------------------------------------------------------

// Entrywise exponential decay: q~_h(s,a,s') = q_h(s,a,s') * e^{-eta * c_h(s,a)}.
OccupancyMeasure unconstrained_update(const OccupancyMeasure& q,
                                      const CostFunction& summed_cost,
                                      double eta);

// Exact Bregman projection of q~ onto the occupancy polytope of mdp under
// the unnormalized negative-entropy divergence:
//
//   argmin_{q in Delta(M)}  sum q log(q / q~)  -  sum q  +  sum q~.
//
// Kernel consistency pins q_h(s,a,.) to a multiple of p_h(.|s,a), so the
// problem reduces to state-action occupancies; the remaining flow and
// start-mass constraints are handled through their dual potentials, which
// are found by a damped Newton iteration (the dual gradient is exactly the
// vector of flow violations, so convergence is certified by the feasibility
// residual itself).  States unreachable from the initial state get zero mass.
//
// q~ must be strictly positive on the kernel's support at every reachable
// (h, s).  warm_beta, when given, carries the dual potentials from a
// previous projection against the same kernel and is updated in place.
OccupancyMeasure kl_project_known_p(const OccupancyMeasure& q_tilde,
                                    const TabularMdp& mdp,
                                    std::vector<double>* warm_beta = nullptr);

// The policy induced by a measure: pi_h(a|s) proportional to the (s,a)
// marginal.  States whose marginal is below the support cutoff get the
// uniform row (nothing depends on the policy at unreachable states).
Policy policy_from_occupancy(const OccupancyMeasure& q);

// <q, c> = sum over (h,s,a) of the state-action marginal times the cost.
double occupancy_cost(const OccupancyMeasure& q, const CostFunction& cost);

// ---------------------------------------------------------------------------
// The learner
// ---------------------------------------------------------------------------

struct OrepsConfig {
  double learning_rate = 0.0;  // eta > 0

  void validate() const;
};

// The functional core of the update loop: iterate plus its induced policy.
struct OrepsState {
  OccupancyMeasure q;
  Policy policy;
};

// Start from the occupancy measure of the uniform policy.  (A uniform table
// over all triples would be projected onto the polytope before first use
// anyway; starting feasible makes episode 1 well-defined without a
// degenerate repair step.)
OrepsState oreps_initial_state(const TabularMdp& mdp);

// One delayed update: a single entropic step with the batch's summed cost,
// then one projection.  An empty batch returns the state unchanged.
OrepsState oreps_on_feedback(const OrepsState& state,
                             const std::vector<CostFunction>& arrived_costs,
                             double eta, const TabularMdp& mdp,
                             std::vector<double>* warm_beta = nullptr);

// Learner-protocol wrapper so the harness can drive O-REPS exactly like the
// policy-optimization learners.  Requires full-information packets; the
// payload trajectories are ignored (the kernel is known and costs arrive
// in full).
class DelayedOreps : public Learner {
 public:
  DelayedOreps(const TabularMdp& mdp, OrepsConfig config);

  const Policy& begin_episode() override { return state_.policy; }
  const Policy& played_policy() const override { return state_.policy; }
  const Policy& decision_policy() const override { return state_.policy; }
  void end_episode(const Trajectory&) override {}
  void on_feedback(const std::vector<FeedbackPacket>& packets) override;

  const OccupancyMeasure& occupancy() const { return state_.q; }

 private:
  TabularMdp mdp_;
  OrepsConfig cfg_;
  OrepsState state_;
  std::vector<double> beta_;  // dual potentials, warm-started across updates
};

}  // namespace delaylab
