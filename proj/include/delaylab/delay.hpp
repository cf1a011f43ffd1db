#pragma once

// Delayed-feedback bookkeeping: delay schedules d^k, the arrival sets
// F^k = {j : j + d^j = k}, missing-feedback counts M^k, and the buffer that
// carries feedback packets from execution to delivery while maintaining the
// visit counters m (episodes executed) and n (episodes whose feedback has
// been observed).
//
// Feedback whose arrival would land after the final episode is simply never
// delivered: the interaction ends at K.

#include <cstdint>
#include <map>
#include <unordered_set>
#include <vector>

#include "delaylab/mdp.hpp"

namespace delaylab {

enum class FeedbackMode { full_info, bandit };
enum class DynamicsMode { known, unknown };

// ---------------------------------------------------------------------------
// Schedules
// ---------------------------------------------------------------------------

struct DelaySchedule {
  std::vector<long long> delays;  // d^k for k = 1..K at index k-1
  long long total = 0;            // D = sum of delays
  long long max_delay = 0;        // d_max

  long long episodes() const { return static_cast<long long>(delays.size()); }
  long long delay(long long k) const { return delays[k - 1]; }

  static DelaySchedule from_list(std::vector<long long> delays);
};

enum class ScheduleKind { fixed, uniform_random, one_missing, adversarial_list };

struct ScheduleParams {
  long long fixed_delay = 0;       // fixed: every d^k = fixed_delay
  long long uniform_hi = 0;        // uniform_random: d^k ~ Uniform{0..uniform_hi}
  std::vector<long long> list;     // adversarial_list: used verbatim
};

// Builds a length-K schedule. one_missing sets d^1 = K (that feedback never
// arrives) and all other delays to zero.
DelaySchedule make_schedule(ScheduleKind kind, const ScheduleParams& params,
                            long long K, Rng& rng);

// F^k by direct definition, ascending episode order. k may exceed the
// schedule length: those sets describe feedback the protocol never delivers.
std::vector<long long> arrivals(const DelaySchedule& schedule, long long k);

// M^k = k - sum_{j<=k} |F^j| = #{j <= k : j + d^j > k}.
long long missing_count(const DelaySchedule& schedule, long long k);

// ---------------------------------------------------------------------------
// Packets and the arrival buffer
// ---------------------------------------------------------------------------

// Everything the learner may see about episode j once its feedback arrives.
// In bandit mode the observable costs are the H suffered scalars inside the
// trajectory; full_costs is populated only under full information. The
// policy snapshot is the decision policy pi^j the learner submitted for the
// episode (exploration mixing excluded) — the policy the delayed evaluation
// must be run against.
struct FeedbackPacket {
  long long episode = 0;  // j
  long long arrival = 0;  // j + d^j
  FeedbackMode payload_kind = FeedbackMode::full_info;
  Trajectory trajectory;
  CostFunction full_costs;  // empty in bandit mode
  Policy policy_snapshot;
  bool exploration_used = false;  // episode played a forced-uniform row

  long long delay() const { return arrival - episode; }
};

// Per-run arrival queue plus the m/n visit counters. Componentwise n <= m at
// all times, and the slack sums to H * (number of episodes still missing
// feedback).
class FeedbackBuffer {
 public:
  FeedbackBuffer(int num_states, int num_actions, int horizon);

  // Execution side: count the visits of a just-played trajectory (m).
  void record_visit(const Trajectory& trajectory);

  // Queue a packet for delivery at the end of episode packet.arrival.
  // Queuing the same episode twice is a contract violation.
  void push(FeedbackPacket packet);

  // Delivery side: all packets arriving at the end of episode k, in
  // ascending episode order; their visits move into n. Calls must use
  // strictly increasing k so no packet can be delivered twice.
  std::vector<FeedbackPacket> take_arrivals(long long k);

  // M^k after the most recent take_arrivals: episodes executed whose
  // feedback has not been delivered.
  long long missing() const { return executed_ - delivered_; }

  long long visits(int h, int s, int a) const;    // m
  long long observed(int h, int s, int a) const;  // n

 private:
  // Counts per (h,s,a) the visits the packet's trajectory makes.
  void count_trajectory(const Trajectory& t, std::vector<long long>& into);

  int num_states_, num_actions_, horizon_;
  std::vector<long long> m_, n_;
  std::map<long long, std::vector<FeedbackPacket>> pending_;  // arrival -> packets
  std::unordered_set<long long> queued_episodes_;
  long long executed_ = 0;
  long long delivered_ = 0;
  long long last_taken_k_ = 0;
};

}  // namespace delaylab
