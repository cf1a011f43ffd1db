#include "delaylab/oppo.hpp"

#include <algorithm>
#include <cmath>

namespace delaylab {

void OppoConfig::validate() const {
  require(learning_rate > 0.0, "OppoConfig: learning rate must be positive");
  require(exploration >= 0.0, "OppoConfig: exploration must be nonnegative");
  require(feedback_mode == FeedbackMode::full_info || exploration > 0.0,
          "OppoConfig: bandit feedback requires positive exploration");
  require(delta > 0.0 && delta < 1.0, "OppoConfig: delta must be in (0,1)");
  require(delta_mult > 0.0 && delta_mult <= 1.0,
          "OppoConfig: delta multiplier must be in (0,1]");
  require(!use_explicit_exploration || d_max_hint >= 0,
          "OppoConfig: explicit exploration needs a delay bound");
}

Policy policy_from_scores(std::span<const double> scores, double eta,
                          int num_states, int num_actions, int horizon) {
  require(eta > 0.0, "policy_from_scores: eta must be positive");
  require(scores.size() == static_cast<std::size_t>(horizon) * num_states *
                               num_actions,
          "policy_from_scores: score table size mismatch");
  Policy pi;
  pi.num_states = num_states;
  pi.num_actions = num_actions;
  pi.horizon = horizon;
  pi.probs.resize(scores.size());
  for (std::size_t row = 0; row < scores.size();
       row += static_cast<std::size_t>(num_actions)) {
    // Per-row min subtraction: the softmax of -eta*s is invariant to shifts
    // and the largest exponent becomes exactly zero.
    double lo = scores[row];
    for (int a = 1; a < num_actions; ++a) lo = std::min(lo, scores[row + a]);
    double z = 0.0;
    for (int a = 0; a < num_actions; ++a) {
      const double w = std::exp(-eta * (scores[row + a] - lo));
      pi.probs[row + a] = w;
      z += w;
    }
    for (int a = 0; a < num_actions; ++a) pi.probs[row + a] /= z;
  }
  return pi;
}

Policy improve_policy(std::vector<double>& scores,
                      std::span<const ValueTables> arrived_q, double eta,
                      int num_states, int num_actions, int horizon) {
  for (const ValueTables& vt : arrived_q) {
    require(vt.Q.size() == scores.size(),
            "improve_policy: Q table size mismatch");
    for (double q : vt.Q)
      require(std::isfinite(q), "improve_policy: non-finite Q entry");
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i] += vt.Q[i];
  }
  return policy_from_scores(scores, eta, num_states, num_actions, horizon);
}

ValueTables evaluate_policy_optimistic(const FeedbackPacket& packet,
                                       const TabularMdp* known_mdp,
                                       const ConfidenceSet* confidence,
                                       int initial_state,
                                       const OppoConfig& cfg) {
  const bool known = cfg.dynamics_mode == DynamicsMode::known;
  require(known ? known_mdp != nullptr : confidence != nullptr,
          "evaluate_policy_optimistic: no model for the configured dynamics");
  const Policy& pi = packet.policy_snapshot;
  const int S = pi.num_states, A = pi.num_actions, H = pi.horizon;
  require(S > 0 && A > 0 && H > 0,
          "evaluate_policy_optimistic: packet carries no policy snapshot");
  if (known)
    require(known_mdp->num_states == S && known_mdp->num_actions == A &&
                known_mdp->horizon == H,
            "evaluate_policy_optimistic: policy/model dimension mismatch");
  else
    require(confidence->num_states() == S && confidence->num_actions() == A &&
                confidence->horizon() == H,
            "evaluate_policy_optimistic: policy/model dimension mismatch");

  EstimatedCost chat;
  if (cfg.feedback_mode == FeedbackMode::full_info) {
    require(packet.full_costs.costs.size() ==
                static_cast<std::size_t>(H) * S * A,
            "evaluate_policy_optimistic: full-information packet lacks costs");
    chat = EstimatedCost::from_exact(packet.full_costs);
  } else {
    const std::vector<double> u =
        known ? state_occupancy(*known_mdp, pi)
              : upper_occupancy(*confidence, pi, initial_state);
    chat = bandit_cost_estimate(packet.trajectory, u, pi, cfg.exploration);
  }

  ValueTables vt = ValueTables::zeros(S, A, H);
  std::vector<double> p_opt(S);
  for (int h = H; h >= 1; --h) {
    const std::span<const double> v_next = vt.v_layer(h + 1);
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        double dot = 0.0;
        if (known) {
          const std::span<const double> row = known_mdp->row(h, s, a);
          for (int s2 = 0; s2 < S; ++s2) dot += row[s2] * v_next[s2];
        } else {
          optimistic_transition(confidence->p_bar_row(h, s, a),
                                confidence->epsilon_row(h, s, a), v_next,
                                p_opt);
          for (int s2 = 0; s2 < S; ++s2) dot += p_opt[s2] * v_next[s2];
        }
        vt.q(h, s, a) = chat.at(h, s, a) + dot;
      }
    v_from_q(vt.q_layer(h), pi.layer(h), S, A,
             {vt.V.data() + static_cast<std::size_t>(h - 1) * S,
              static_cast<std::size_t>(S)});
  }
  return vt;
}

// ---------------------------------------------------------------------------
// DelayedOppo
// ---------------------------------------------------------------------------

DelayedOppo::DelayedOppo(const TabularMdp& mdp, long long K, OppoConfig cfg)
    : shape_(shape_of(mdp)), K_(K), cfg_(cfg), mdp_(mdp) {
  cfg_.validate();
  require(cfg_.dynamics_mode == DynamicsMode::known,
          "DelayedOppo: this constructor is for known dynamics");
  mdp_->validate();
  scores_.assign(static_cast<std::size_t>(shape_.horizon) *
                     shape_.num_states * shape_.num_actions,
                 0.0);
  decision_policy_ = Policy::uniform(shape_.num_states, shape_.num_actions,
                                     shape_.horizon);
  played_policy_ = decision_policy_;
  observed_visits_.assign(
      static_cast<std::size_t>(shape_.horizon) * shape_.num_states, 0);
  gated_.assign(observed_visits_.size(), 0);
  if (cfg_.use_explicit_exploration)
    gate_threshold_ =
        2.0 * static_cast<double>(cfg_.d_max_hint) *
        std::log(static_cast<double>(shape_.horizon) * shape_.num_states *
                 shape_.num_actions / cfg_.delta);
}

DelayedOppo::DelayedOppo(EnvShape shape, long long K, OppoConfig cfg,
                         std::shared_ptr<ConfidenceSet> shared_confidence,
                         std::shared_ptr<SnapshotStore> shared_snapshots,
                         long long first_episode)
    : shape_(shape), K_(K), cfg_(cfg), episode_(first_episode - 1) {
  cfg_.validate();
  require(cfg_.dynamics_mode == DynamicsMode::unknown,
          "DelayedOppo: this constructor is for unknown dynamics");
  require(first_episode >= 1, "DelayedOppo: first episode must be >= 1");
  confidence_ = shared_confidence
                    ? std::move(shared_confidence)
                    : std::make_shared<ConfidenceSet>(
                          shape.num_states, shape.num_actions, shape.horizon,
                          K, cfg_.delta, cfg_.delta_mult);
  require(confidence_->num_states() == shape.num_states &&
              confidence_->num_actions() == shape.num_actions &&
              confidence_->horizon() == shape.horizon,
          "DelayedOppo: shared confidence set has the wrong shape");
  if (cfg_.feedback_mode == FeedbackMode::bandit)
    snapshots_ = shared_snapshots ? std::move(shared_snapshots)
                                  : std::make_shared<SnapshotStore>();
  scores_.assign(static_cast<std::size_t>(shape_.horizon) *
                     shape_.num_states * shape_.num_actions,
                 0.0);
  decision_policy_ = Policy::uniform(shape_.num_states, shape_.num_actions,
                                     shape_.horizon);
  played_policy_ = decision_policy_;
  observed_visits_.assign(
      static_cast<std::size_t>(shape_.horizon) * shape_.num_states, 0);
  gated_.assign(observed_visits_.size(), 0);
  if (cfg_.use_explicit_exploration)
    gate_threshold_ =
        2.0 * static_cast<double>(cfg_.d_max_hint) *
        std::log(static_cast<double>(shape_.horizon) * shape_.num_states *
                 shape_.num_actions / cfg_.delta);
}

bool DelayedOppo::row_gated(int h, int s) const {
  return gate_threshold_ >= 0.0 &&
         static_cast<double>(gate_visits(h, s)) <= gate_threshold_;
}

const Policy& DelayedOppo::begin_episode() {
  ++episode_;
  exploration_used_ = false;
  played_policy_ = decision_policy_;
  any_gated_ = false;
  if (gate_threshold_ >= 0.0) {
    for (int h = 1; h <= shape_.horizon; ++h)
      for (int s = 0; s < shape_.num_states; ++s) {
        const std::size_t i =
            static_cast<std::size_t>(h - 1) * shape_.num_states + s;
        gated_[i] = row_gated(h, s) ? 1 : 0;
        if (gated_[i]) {
          any_gated_ = true;
          const double uniform = 1.0 / shape_.num_actions;
          for (int a = 0; a < shape_.num_actions; ++a)
            played_policy_.at(h, s, a) = uniform;
        }
      }
  }
  // Bandit evaluation of this episode must later run against the model as
  // it stands right now, before any of this episode's contemporaries arrive.
  if (snapshots_) {
    const bool inserted = snapshots_->emplace(episode_, *confidence_).second;
    require(inserted, "DelayedOppo: duplicate model snapshot for an episode");
  }
  return played_policy_;
}

void DelayedOppo::end_episode(const Trajectory& trajectory) {
  require(static_cast<int>(trajectory.states.size()) == shape_.horizon &&
              trajectory.actions.size() == trajectory.states.size(),
          "DelayedOppo::end_episode: trajectory length mismatch");
  if (any_gated_)
    for (int h = 1; h <= shape_.horizon; ++h)
      if (gated_[static_cast<std::size_t>(h - 1) * shape_.num_states +
                 trajectory.states[h - 1]]) {
        exploration_used_ = true;
        break;
      }
}

void DelayedOppo::ingest(const Trajectory& trajectory) {
  for (int h = 1; h <= shape_.horizon; ++h)
    ++observed_visits_[static_cast<std::size_t>(h - 1) * shape_.num_states +
                       trajectory.states[h - 1]];
  if (cfg_.dynamics_mode == DynamicsMode::unknown)
    confidence_->observe_trajectory(trajectory);
}

void DelayedOppo::on_feedback(const std::vector<FeedbackPacket>& packets) {
  if (packets.empty()) return;

  // Evaluate eligible episodes against pre-arrival model state.
  std::vector<ValueTables> qs;
  qs.reserve(packets.size());
  for (const FeedbackPacket& pkt : packets) {
    if (pkt.exploration_used) continue;
    const ConfidenceSet* model = nullptr;
    if (cfg_.dynamics_mode == DynamicsMode::unknown) {
      if (cfg_.feedback_mode == FeedbackMode::bandit) {
        const auto it = snapshots_->find(pkt.episode);
        require(it != snapshots_->end(),
                "DelayedOppo: missing model snapshot for a bandit episode");
        model = &it->second;
      } else {
        model = confidence_.get();
      }
    }
    qs.push_back(evaluate_policy_optimistic(
        pkt, mdp_ ? &*mdp_ : nullptr, model, shape_.initial_state, cfg_));
  }

  // One exponential-weights step with the whole batch.
  decision_policy_ =
      improve_policy(scores_, qs, cfg_.learning_rate, shape_.num_states,
                     shape_.num_actions, shape_.horizon);

  // Only now does the arrived data (exploration episodes included) enter the
  // empirical model and the gate counters.
  for (const FeedbackPacket& pkt : packets) {
    ingest(pkt.trajectory);
    if (snapshots_) snapshots_->erase(pkt.episode);
  }
}

void DelayedOppo::on_dropped(const std::vector<long long>& episodes) {
  if (!snapshots_) return;
  for (long long j : episodes) snapshots_->erase(j);
}

void DelayedOppo::observe_transitions(const Trajectory& trajectory) {
  ingest(trajectory);
}

}  // namespace delaylab
