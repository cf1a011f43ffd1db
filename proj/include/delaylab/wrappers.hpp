#pragma once

// Learner combinators for delayed feedback:
//   * SkippingLearner   — drop every packet whose delay exceeds a threshold
//                         beta; at most D/beta packets are ever dropped.
//   * DoublingLearner   — restart the wrapped learner with re-tuned
//                         (eta, gamma, beta) whenever the online estimate
//                         k + sum_{j<=k} M^j of K + D doubles.
//   * RoundRobinLearner — the black-box reduction baseline: d_max + 1
//                         independent non-delayed learners take turns, so
//                         each sees its own feedback before it plays again.

#include <functional>
#include <memory>

#include "delaylab/learner.hpp"

namespace delaylab {

// ---------------------------------------------------------------------------
// Skipping
// ---------------------------------------------------------------------------

struct SkipConfig {
  double threshold = 0.0;  // beta > 0
  // Forward the trajectories of dropped packets as transition-only data;
  // useful when trajectories are trustworthy even where costs are stale.
  bool feed_skipped_transitions = false;

  void validate() const {
    require(threshold > 0.0, "SkipConfig: threshold must be positive");
  }
};

// Keep iff the packet's delay is at most beta.
bool skip_filter(const FeedbackPacket& packet, double beta);

// The standalone choice beta = sqrt(D / (S*H)) when the total delay is known.
double default_skip_threshold(long long total_delay, int num_states,
                              int horizon);

class SkippingLearner : public Learner {
 public:
  SkippingLearner(std::unique_ptr<Learner> inner, SkipConfig cfg);

  const Policy& begin_episode() override { return inner_->begin_episode(); }
  const Policy& played_policy() const override {
    return inner_->played_policy();
  }
  const Policy& decision_policy() const override {
    return inner_->decision_policy();
  }
  int act(int state, int step, Rng& rng) override {
    return inner_->act(state, step, rng);
  }
  void end_episode(const Trajectory& trajectory) override {
    inner_->end_episode(trajectory);
  }
  bool exploration_used() const override { return inner_->exploration_used(); }
  void on_feedback(const std::vector<FeedbackPacket>& packets) override;
  void observe_transitions(const Trajectory& trajectory) override {
    inner_->observe_transitions(trajectory);
  }
  int phase() const override { return inner_->phase(); }
  long long skipped_count() const override { return skipped_; }

  Learner& inner() { return *inner_; }

 private:
  std::unique_ptr<Learner> inner_;
  SkipConfig cfg_;
  long long skipped_ = 0;
};

// ---------------------------------------------------------------------------
// Doubling
// ---------------------------------------------------------------------------

// The phase-e parameter schedule.
double doubling_eta(int phase, int horizon);  // H^-1 * 2^(-2e/3)
double doubling_gamma(int phase);             // 2^(-e/3)
double doubling_beta(int phase);              // 2^(e/2)

// True when the end-of-episode estimate k + sum_{j<=k} M^j has outgrown the
// current phase's budget 2^e.
bool doubling_controller(long long k, long long missing_sum, int phase);

struct DoublingState {
  int phase = 1;
  long long episodes_begun = 0;   // k
  long long delivered = 0;        // sum over j <= k of |F^j|
  long long missing_sum = 0;      // sum over j <= k of M^j
};

class DoublingLearner : public Learner {
 public:
  // The factory builds one phase's learner from that phase's parameters;
  // first_episode is the absolute index of the first episode the new phase
  // will play (phase learners that keep cross-phase state need it to key
  // their bookkeeping consistently).
  using Factory = std::function<std::unique_ptr<Learner>(
      double eta, double gamma, long long first_episode)>;

  // Requires exactly one on_feedback call per episode (possibly with an
  // empty batch): the restart decision happens there.
  DoublingLearner(int horizon, Factory factory,
                  bool feed_skipped_transitions = false);

  const Policy& begin_episode() override {
    ++state_.episodes_begun;
    return inner_->begin_episode();
  }
  const Policy& played_policy() const override {
    return inner_->played_policy();
  }
  const Policy& decision_policy() const override {
    return inner_->decision_policy();
  }
  int act(int state, int step, Rng& rng) override {
    return inner_->act(state, step, rng);
  }
  void end_episode(const Trajectory& trajectory) override {
    inner_->end_episode(trajectory);
  }
  bool exploration_used() const override { return inner_->exploration_used(); }
  void on_feedback(const std::vector<FeedbackPacket>& packets) override;
  void observe_transitions(const Trajectory& trajectory) override {
    inner_->observe_transitions(trajectory);
  }
  int phase() const override { return state_.phase; }
  long long skipped_count() const override { return skipped_; }

  const DoublingState& state() const { return state_; }
  double current_beta() const { return doubling_beta(state_.phase); }

 private:
  Factory factory_;
  int horizon_;
  bool feed_skipped_transitions_;
  std::unique_ptr<Learner> inner_;
  DoublingState state_;
  long long skipped_ = 0;
};

// ---------------------------------------------------------------------------
// Black-box round-robin reduction
// ---------------------------------------------------------------------------

class RoundRobinLearner : public Learner {
 public:
  // d_max must bound every delay in the run; instances are non-delayed
  // learners produced by the factory.
  RoundRobinLearner(long long d_max,
                    const std::function<std::unique_ptr<Learner>()>& factory);

  const Policy& begin_episode() override;
  const Policy& played_policy() const override {
    return active().played_policy();
  }
  const Policy& decision_policy() const override {
    return active().decision_policy();
  }
  int act(int state, int step, Rng& rng) override {
    return active().act(state, step, rng);
  }
  void end_episode(const Trajectory& trajectory) override {
    active().end_episode(trajectory);
  }
  bool exploration_used() const override { return active().exploration_used(); }
  void on_feedback(const std::vector<FeedbackPacket>& packets) override;

  long long instance_episodes(long long instance) const {
    return episodes_played_[static_cast<std::size_t>(instance)];
  }

 private:
  Learner& active() const { return *instances_[active_]; }

  long long d_max_;
  std::vector<std::unique_ptr<Learner>> instances_;
  std::vector<long long> episodes_played_;
  std::size_t active_ = 0;
  long long k_ = 0;
};

// Convenience spelling of the reduction.
std::unique_ptr<Learner> blackbox_reduction(
    const std::function<std::unique_ptr<Learner>()>& base_learner_factory,
    long long d_max);

}  // namespace delaylab
