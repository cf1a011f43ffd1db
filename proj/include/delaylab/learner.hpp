#pragma once

// The learner protocol the experiment harness drives, shared by the direct
// learners and the combinators that wrap them.
//
// Per-episode call order (harness side):
//   1. begin_episode()            -> the policy actions are sampled from
//   2. act(s, h, rng) for h=1..H  -> executes the episode
//   3. end_episode(trajectory)    -> the learner sees what it just played
//   4. exploration_used()         -> tag for the episode's feedback packet
//   5. on_feedback(arrivals)      -> everything whose delay expired now
//
// Learners own no randomness: act consumes the harness's generator, so runs
// are reproducible from the seed and two learners given the same generator
// stream are comparable policy-by-policy.

#include <memory>
#include <vector>

#include "delaylab/delay.hpp"
#include "delaylab/mdp.hpp"

namespace delaylab {

// What a learner may know about the environment a priori, regardless of
// whether the transition kernel itself is known.
struct EnvShape {
  int num_states = 0;
  int num_actions = 0;
  int horizon = 0;
  int initial_state = 0;
};

inline EnvShape shape_of(const TabularMdp& mdp) {
  return {mdp.num_states, mdp.num_actions, mdp.horizon, mdp.initial_state};
}

class Learner {
 public:
  virtual ~Learner() = default;

  // Starts the next episode and returns the policy to play (exploration
  // mixing applied). The reference stays valid until the next begin_episode.
  virtual const Policy& begin_episode() = 0;

  // The policy actually played this episode (repeats begin_episode's value).
  virtual const Policy& played_policy() const = 0;

  // The decision policy pi^k, with no exploration mixing: what delayed
  // evaluation of this episode must later run against.
  virtual const Policy& decision_policy() const = 0;

  // Samples an action from the played policy's (h, s) row.
  virtual int act(int state, int step, Rng& rng) {
    return sample_weighted(played_policy().row(step, state), rng);
  }

  // Hands the learner the trajectory it just produced (before arrivals).
  virtual void end_episode(const Trajectory& trajectory) = 0;

  // Whether the episode just ended visited any forced-uniform row; such
  // episodes are excluded from evaluation and improvement when their
  // feedback eventually arrives.
  virtual bool exploration_used() const { return false; }

  // Feedback arriving at the end of the current episode, ascending episode
  // order, after any wrapper-level filtering.
  virtual void on_feedback(const std::vector<FeedbackPacket>& packets) = 0;

  // A wrapper permanently dropped these episodes' packets: the learner can
  // release whatever it was holding for them.
  virtual void on_dropped(const std::vector<long long>& /*episodes*/) {}

  // Trajectory-only feedback for an episode whose cost packet was dropped:
  // extra transition data can only help the model and is otherwise inert.
  virtual void observe_transitions(const Trajectory& /*trajectory*/) {}

  // Diagnostics surfaced into run reports.
  virtual int phase() const { return 1; }
  virtual long long skipped_count() const { return 0; }
};

}  // namespace delaylab
