#include "delaylab/wrappers.hpp"

#include <cmath>

namespace delaylab {

// ---------------------------------------------------------------------------
// Skipping
// ---------------------------------------------------------------------------

bool skip_filter(const FeedbackPacket& packet, double beta) {
  require(beta > 0.0, "skip_filter: threshold must be positive");
  return static_cast<double>(packet.delay()) <= beta;
}

double default_skip_threshold(long long total_delay, int num_states,
                              int horizon) {
  require(total_delay >= 0, "default_skip_threshold: negative total delay");
  require(num_states > 0 && horizon > 0,
          "default_skip_threshold: dimensions must be positive");
  return std::sqrt(static_cast<double>(total_delay) /
                   (static_cast<double>(num_states) * horizon));
}

SkippingLearner::SkippingLearner(std::unique_ptr<Learner> inner,
                                 SkipConfig cfg)
    : inner_(std::move(inner)), cfg_(cfg) {
  require(inner_ != nullptr, "SkippingLearner: no inner learner");
  cfg_.validate();
}

void SkippingLearner::on_feedback(const std::vector<FeedbackPacket>& packets) {
  std::vector<FeedbackPacket> kept;
  std::vector<const FeedbackPacket*> dropped;
  kept.reserve(packets.size());
  for (const FeedbackPacket& pkt : packets)
    if (skip_filter(pkt, cfg_.threshold))
      kept.push_back(pkt);
    else
      dropped.push_back(&pkt);

  // Kept packets first, so their evaluation sees exactly the data that had
  // arrived by the previous episode; the dropped packets' trajectories (when
  // forwarded) are strictly additional model food.
  inner_->on_feedback(kept);
  if (!dropped.empty()) {
    std::vector<long long> dropped_episodes;
    dropped_episodes.reserve(dropped.size());
    for (const FeedbackPacket* pkt : dropped) {
      dropped_episodes.push_back(pkt->episode);
      if (cfg_.feed_skipped_transitions)
        inner_->observe_transitions(pkt->trajectory);
    }
    inner_->on_dropped(dropped_episodes);
    skipped_ += static_cast<long long>(dropped.size());
  }
}

// ---------------------------------------------------------------------------
// Doubling
// ---------------------------------------------------------------------------

double doubling_eta(int phase, int horizon) {
  require(phase >= 1 && horizon >= 1, "doubling_eta: bad arguments");
  return std::exp2(-2.0 * phase / 3.0) / static_cast<double>(horizon);
}

double doubling_gamma(int phase) {
  require(phase >= 1, "doubling_gamma: bad phase");
  return std::exp2(-static_cast<double>(phase) / 3.0);
}

double doubling_beta(int phase) {
  require(phase >= 1, "doubling_beta: bad phase");
  return std::exp2(static_cast<double>(phase) / 2.0);
}

bool doubling_controller(long long k, long long missing_sum, int phase) {
  require(k >= 0 && missing_sum >= 0 && phase >= 1,
          "doubling_controller: bad arguments");
  // 2^e as a double is exact for every phase that can occur in practice
  // (e is O(log(K + D))).
  return static_cast<double>(k) + static_cast<double>(missing_sum) >
         std::exp2(phase);
}

DoublingLearner::DoublingLearner(int horizon, Factory factory,
                                 bool feed_skipped_transitions)
    : factory_(std::move(factory)),
      horizon_(horizon),
      feed_skipped_transitions_(feed_skipped_transitions) {
  require(horizon_ >= 1, "DoublingLearner: bad horizon");
  inner_ = factory_(doubling_eta(1, horizon_), doubling_gamma(1), 1);
  require(inner_ != nullptr, "DoublingLearner: factory returned nothing");
}

void DoublingLearner::on_feedback(const std::vector<FeedbackPacket>& packets) {
  // The current phase's beta filters every arrival, old episodes included.
  const double beta = doubling_beta(state_.phase);
  std::vector<FeedbackPacket> kept;
  kept.reserve(packets.size());
  std::vector<long long> dropped_episodes;
  for (const FeedbackPacket& pkt : packets) {
    if (skip_filter(pkt, beta))
      kept.push_back(pkt);
    else {
      dropped_episodes.push_back(pkt.episode);
      if (feed_skipped_transitions_)
        inner_->observe_transitions(pkt.trajectory);
    }
  }
  inner_->on_feedback(kept);
  if (!dropped_episodes.empty()) {
    inner_->on_dropped(dropped_episodes);
    skipped_ += static_cast<long long>(dropped_episodes.size());
  }

  // Account this episode's arrivals, then check the doubling condition.
  state_.delivered += static_cast<long long>(packets.size());
  const long long missing_now = state_.episodes_begun - state_.delivered;
  require(missing_now >= 0, "DoublingLearner: more arrivals than episodes");
  state_.missing_sum += missing_now;
  if (doubling_controller(state_.episodes_begun, state_.missing_sum,
                          state_.phase)) {
    ++state_.phase;
    inner_ = factory_(doubling_eta(state_.phase, horizon_),
                      doubling_gamma(state_.phase),
                      state_.episodes_begun + 1);
    require(inner_ != nullptr, "DoublingLearner: factory returned nothing");
  }
}

// ---------------------------------------------------------------------------
// Black-box round-robin reduction
// ---------------------------------------------------------------------------

RoundRobinLearner::RoundRobinLearner(
    long long d_max, const std::function<std::unique_ptr<Learner>()>& factory)
    : d_max_(d_max) {
  require(d_max_ >= 0, "RoundRobinLearner: d_max must be nonnegative");
  for (long long i = 0; i <= d_max_; ++i) {
    instances_.push_back(factory());
    require(instances_.back() != nullptr,
            "RoundRobinLearner: factory returned nothing");
  }
  episodes_played_.assign(instances_.size(), 0);
}

const Policy& RoundRobinLearner::begin_episode() {
  ++k_;
  active_ = static_cast<std::size_t>(k_ % (d_max_ + 1));
  ++episodes_played_[active_];
  return active().begin_episode();
}

void RoundRobinLearner::on_feedback(
    const std::vector<FeedbackPacket>& packets) {
  for (const FeedbackPacket& pkt : packets) {
    // The whole construction rests on the bound d^j <= d_max: it guarantees
    // episode j's feedback is processed before its instance plays again.
    require(pkt.delay() <= d_max_,
            "RoundRobinLearner: delay exceeds the configured bound");
    const std::size_t owner =
        static_cast<std::size_t>(pkt.episode % (d_max_ + 1));
    // The owner saw pkt.episode as its ceil(episode / (d_max+1))-th episode.
    FeedbackPacket local = pkt;
    local.episode = (pkt.episode + d_max_) / (d_max_ + 1);
    local.arrival = local.episode;  // non-delayed from the instance's view
    instances_[owner]->on_feedback({local});
  }
}

std::unique_ptr<Learner> blackbox_reduction(
    const std::function<std::unique_ptr<Learner>()>& base_learner_factory,
    long long d_max) {
  return std::make_unique<RoundRobinLearner>(d_max, base_learner_factory);
}

}  // namespace delaylab
