#pragma once

// Delayed optimistic policy optimization: policies are improved by
// exponential weights over the state-action value estimates of whichever
// episodes' feedback arrived, and (with unknown dynamics) the estimates are
// made optimistic through the confidence set.
//
// End-of-episode processing order, which the whole module is built around:
//   1. every arrived, non-exploration episode j is evaluated against the
//      model state that existed before this batch arrived (full information:
//      the current confidence set; bandit + unknown dynamics: the per-episode
//      snapshot taken when j was played),
//   2. one exponential-weights improvement ingests the evaluated batch,
//   3. only then does the arrived transition data enter the empirical model.
//
// The policy is stored as cumulative scores S(h,s,a) = sum of processed
// Q^j(h,s,a); the played distribution is the per-row softmax of -eta * S.
// This is algebraically the product form of the multiplicative update but
// does not underflow over long horizons.

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "delaylab/estimation.hpp"
#include "delaylab/learner.hpp"

namespace delaylab {

struct OppoConfig {
  double learning_rate = 0.0;  // eta > 0
  double exploration = 0.0;    // gamma; must be positive under bandit feedback
  double delta = 0.1;          // confidence parameter for the model
  double delta_mult = 1.0;     // optional union-bound split applied to delta
  FeedbackMode feedback_mode = FeedbackMode::full_info;
  DynamicsMode dynamics_mode = DynamicsMode::known;
  bool use_explicit_exploration = false;
  // Delay bound driving the exploration gate threshold
  // 2 * d_max * ln(H S A / delta); must be set (>= 0) when the gate is on.
  long long d_max_hint = -1;

  void validate() const;
};

// Per-row softmax of -eta * scores; strictly positive rows that sum to 1.
Policy policy_from_scores(std::span<const double> scores, double eta,
                          int num_states, int num_actions, int horizon);

// Adds each arrived Q table into the cumulative scores and returns the
// refreshed policy. An empty batch leaves the scores (hence the policy)
// unchanged. Throws on non-finite Q entries.
Policy improve_policy(std::vector<double>& scores,
                      std::span<const ValueTables> arrived_q, double eta,
                      int num_states, int num_actions, int horizon);

// Optimistic evaluation of the packet's decision policy.
//   known dynamics:   exactly one of the two model arguments set: known_mdp;
//                     backups use the true kernel.
//   unknown dynamics: confidence set; each backup row minimizes over the set.
//   full information: costs are the packet's exact table.
//   bandit:           costs are importance-sampled from the trajectory with
//                     the upper occupancy of the snapshot (unknown) or the
//                     exact occupancy (known).
// No clipping is applied to Q anywhere.
ValueTables evaluate_policy_optimistic(const FeedbackPacket& packet,
                                       const TabularMdp* known_mdp,
                                       const ConfidenceSet* confidence,
                                       int initial_state,
                                       const OppoConfig& cfg);

// ---------------------------------------------------------------------------
// The learner
// ---------------------------------------------------------------------------

// Snapshots of the empirical model, keyed by the absolute episode index they
// were taken for. Held in a shared store so a restarting combinator can hand
// outstanding snapshots to its next phase.
using SnapshotStore = std::map<long long, ConfidenceSet>;

class DelayedOppo : public Learner {
 public:
  // Known dynamics: the learner keeps a copy of the true kernel.
  DelayedOppo(const TabularMdp& mdp, long long K, OppoConfig cfg);

  // Unknown dynamics: the learner sees only the shape. The confidence set
  // and snapshot store may be shared with other phases of a restarting
  // wrapper; fresh ones are created when omitted. first_episode is the
  // absolute index this learner's first begin_episode corresponds to.
  DelayedOppo(EnvShape shape, long long K, OppoConfig cfg,
              std::shared_ptr<ConfidenceSet> shared_confidence = nullptr,
              std::shared_ptr<SnapshotStore> shared_snapshots = nullptr,
              long long first_episode = 1);

  const Policy& begin_episode() override;
  const Policy& played_policy() const override { return played_policy_; }
  const Policy& decision_policy() const override { return decision_policy_; }
  void end_episode(const Trajectory& trajectory) override;
  bool exploration_used() const override { return exploration_used_; }
  void on_feedback(const std::vector<FeedbackPacket>& packets) override;
  void on_dropped(const std::vector<long long>& episodes) override;
  void observe_transitions(const Trajectory& trajectory) override;

  // Diagnostics.
  const ConfidenceSet* confidence() const { return confidence_.get(); }
  std::span<const double> scores() const { return scores_; }
  std::size_t snapshot_count() const {
    return snapshots_ ? snapshots_->size() : 0;
  }
  long long gate_visits(int h, int s) const {
    return observed_visits_[static_cast<std::size_t>(h - 1) *
                                shape_.num_states +
                            s];
  }

 private:
  void rebuild_policies();
  bool row_gated(int h, int s) const;
  void ingest(const Trajectory& trajectory);

  EnvShape shape_;
  long long K_;
  OppoConfig cfg_;
  std::optional<TabularMdp> mdp_;  // known-dynamics mode only

  std::shared_ptr<ConfidenceSet> confidence_;  // unknown-dynamics mode only
  std::shared_ptr<SnapshotStore> snapshots_;   // bandit + unknown only

  std::vector<double> scores_;  // (h,s,a) cumulative evaluated Q
  Policy decision_policy_;
  Policy played_policy_;

  // Exploration gate state for the episode in flight.
  double gate_threshold_ = -1.0;     // < 0 when the gate is off
  std::vector<char> gated_;          // (h,s): row forced uniform this episode
  bool any_gated_ = false;
  bool exploration_used_ = false;    // set by end_episode
  std::vector<long long> observed_visits_;  // (h,s) from delivered feedback

  long long episode_ = 0;  // absolute index of the episode in flight
};

}  // namespace delaylab
