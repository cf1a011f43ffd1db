#include "delaylab/delay.hpp"

#include <algorithm>

namespace delaylab {

DelaySchedule DelaySchedule::from_list(std::vector<long long> delays) {
  DelaySchedule s;
  s.delays = std::move(delays);
  for (long long d : s.delays) {
    require(d >= 0, "DelaySchedule: negative delay");
    s.total += d;
    s.max_delay = std::max(s.max_delay, d);
  }
  return s;
}

DelaySchedule make_schedule(ScheduleKind kind, const ScheduleParams& params,
                            long long K, Rng& rng) {
  require(K >= 1, "make_schedule: K must be positive");
  std::vector<long long> d;
  switch (kind) {
    case ScheduleKind::fixed:
      require(params.fixed_delay >= 0, "make_schedule: fixed delay < 0");
      d.assign(K, params.fixed_delay);
      break;
    case ScheduleKind::uniform_random: {
      require(params.uniform_hi >= 0, "make_schedule: uniform_hi < 0");
      d.resize(K);
      for (long long k = 0; k < K; ++k)
        d[k] = static_cast<long long>(uniform01(rng) *
                                      (params.uniform_hi + 1));
      break;
    }
    case ScheduleKind::one_missing:
      d.assign(K, 0);
      d[0] = K;  // arrival at K+1: never delivered
      break;
    case ScheduleKind::adversarial_list:
      require(static_cast<long long>(params.list.size()) == K,
              "make_schedule: list length must equal K");
      d = params.list;
      break;
  }
  return DelaySchedule::from_list(std::move(d));
}

std::vector<long long> arrivals(const DelaySchedule& schedule, long long k) {
  require(k >= 1, "arrivals: k must be positive");
  std::vector<long long> f;
  const long long upto = std::min(k, schedule.episodes());
  for (long long j = 1; j <= upto; ++j)
    if (j + schedule.delay(j) == k) f.push_back(j);
  return f;
}

long long missing_count(const DelaySchedule& schedule, long long k) {
  require(k >= 1 && k <= schedule.episodes(),
          "missing_count: k out of range");
  long long missing = 0;
  for (long long j = 1; j <= k; ++j)
    if (j + schedule.delay(j) > k) ++missing;
  return missing;
}

FeedbackBuffer::FeedbackBuffer(int num_states, int num_actions, int horizon)
    : num_states_(num_states),
      num_actions_(num_actions),
      horizon_(horizon),
      m_(static_cast<std::size_t>(horizon) * num_states * num_actions, 0),
      n_(static_cast<std::size_t>(horizon) * num_states * num_actions, 0) {
  require(num_states > 0 && num_actions > 0 && horizon > 0,
          "FeedbackBuffer: dimensions must be positive");
}

void FeedbackBuffer::count_trajectory(const Trajectory& t,
                                      std::vector<long long>& into) {
  require(static_cast<int>(t.states.size()) == horizon_ &&
              t.actions.size() == t.states.size(),
          "FeedbackBuffer: trajectory length must equal the horizon");
  for (int h = 1; h <= horizon_; ++h) {
    const int s = t.states[h - 1];
    const int a = t.actions[h - 1];
    require(s >= 0 && s < num_states_ && a >= 0 && a < num_actions_,
            "FeedbackBuffer: trajectory index out of range");
    into[(static_cast<std::size_t>(h - 1) * num_states_ + s) * num_actions_ +
         a]++;
  }
}

void FeedbackBuffer::record_visit(const Trajectory& trajectory) {
  count_trajectory(trajectory, m_);
  ++executed_;
}

void FeedbackBuffer::push(FeedbackPacket packet) {
  require(packet.arrival >= packet.episode,
          "FeedbackBuffer: arrival before the episode itself");
  require(queued_episodes_.insert(packet.episode).second,
          "FeedbackBuffer: packet for this episode already queued");
  require(packet.arrival > last_taken_k_,
          "FeedbackBuffer: packet queued for an already-delivered episode end");
  pending_[packet.arrival].push_back(std::move(packet));
}

std::vector<FeedbackPacket> FeedbackBuffer::take_arrivals(long long k) {
  require(k > last_taken_k_,
          "FeedbackBuffer: take_arrivals must use strictly increasing k");
  last_taken_k_ = k;
  auto it = pending_.find(k);
  if (it == pending_.end()) return {};
  std::vector<FeedbackPacket> out = std::move(it->second);
  pending_.erase(it);
  std::sort(out.begin(), out.end(),
            [](const FeedbackPacket& a, const FeedbackPacket& b) {
              return a.episode < b.episode;
            });
  for (const FeedbackPacket& p : out) {
    count_trajectory(p.trajectory, n_);
    ++delivered_;
  }
  return out;
}

long long FeedbackBuffer::visits(int h, int s, int a) const {
  return m_[(static_cast<std::size_t>(h - 1) * num_states_ + s) *
                num_actions_ +
            a];
}

long long FeedbackBuffer::observed(int h, int s, int a) const {
  return n_[(static_cast<std::size_t>(h - 1) * num_states_ + s) *
                num_actions_ +
            a];
}

}  // namespace delaylab
