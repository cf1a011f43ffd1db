#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "delaylab/oppo.hpp"
#include "reference_learners.hpp"
#include "test_util.hpp"

using namespace delaylab;

namespace {

// Drives one learner against one environment exactly the way the harness
// does, with a zero-or-positive delay schedule, returning the decision
// policy after every episode.
struct MiniRun {
  std::vector<Policy> decision_policies;
  std::vector<Trajectory> trajectories;
};

MiniRun drive(Learner& learner, const TabularMdp& mdp,
              const CostSequence& costs, const DelaySchedule& schedule,
              uint64_t seed) {
  const long long K = schedule.episodes();
  FeedbackBuffer buf(mdp.num_states, mdp.num_actions, mdp.horizon);
  Rng env_rng = substream(seed, 0);
  MiniRun out;
  for (long long k = 1; k <= K; ++k) {
    const Policy& played = learner.begin_episode();
    (void)played;
    Trajectory t;
    int s = mdp.initial_state;
    for (int h = 1; h <= mdp.horizon; ++h) {
      const int a = learner.act(s, h, env_rng);
      t.states.push_back(s);
      t.actions.push_back(a);
      t.suffered_costs.push_back(costs[k - 1].at(h, s, a));
      if (h < mdp.horizon) s = sample_weighted(mdp.row(h, s, a), env_rng);
    }
    learner.end_episode(t);

    FeedbackPacket pkt;
    pkt.episode = k;
    pkt.arrival = k + schedule.delay(k);
    pkt.payload_kind = FeedbackMode::full_info;
    pkt.trajectory = t;
    pkt.full_costs = costs[k - 1];
    pkt.policy_snapshot = learner.decision_policy();
    pkt.exploration_used = learner.exploration_used();
    buf.record_visit(t);
    buf.push(pkt);
    learner.on_feedback(buf.take_arrivals(k));

    out.decision_policies.push_back(learner.decision_policy());
    out.trajectories.push_back(t);
  }
  return out;
}

}  // namespace

TEST_CASE("policy_from_scores and improve_policy algebra") {
  const int S = 1, A = 2, H = 1;
  std::vector<double> scores(2, 0.0);

  // Zero scores: uniform.
  Policy uniform = policy_from_scores(scores, 0.5, S, A, H);
  CHECK(uniform.at(1, 0, 0) == 0.5);
  CHECK(uniform.at(1, 0, 1) == 0.5);

  // One Q row (0, 2) at eta = 0.5: (1, e^-1)/(1 + e^-1).
  ValueTables q = ValueTables::zeros(S, A, H);
  q.q(1, 0, 0) = 0.0;
  q.q(1, 0, 1) = 2.0;
  Policy improved = improve_policy(scores, std::span(&q, 1), 0.5, S, A, H);
  CHECK(improved.at(1, 0, 0) == doctest::Approx(0.73105857863).epsilon(1e-10));
  CHECK(improved.at(1, 0, 1) == doctest::Approx(0.26894142137).epsilon(1e-10));

  // Empty batch leaves everything untouched.
  Policy same = improve_policy(scores, {}, 0.5, S, A, H);
  CHECK(same.probs == improved.probs);

  // Constant shift of a Q row leaves the policy bitwise unchanged (the
  // per-row min subtraction removes it exactly).
  std::vector<double> s1 = {0.3, 1.1}, s2 = {0.3 + 7.0, 1.1 + 7.0};
  CHECK(policy_from_scores(s1, 0.4, S, A, H).probs ==
        policy_from_scores(s2, 0.4, S, A, H).probs);

  // Batch additivity: {Qa, Qb} == {Qa+Qb} == sequential, bit for bit.
  Rng rng = substream(41, 0);
  ValueTables qa = ValueTables::zeros(2, 3, 2), qb = ValueTables::zeros(2, 3, 2);
  for (auto& x : qa.Q) x = uniform01(rng);
  for (auto& x : qb.Q) x = uniform01(rng);
  ValueTables qsum = qa;
  for (std::size_t i = 0; i < qsum.Q.size(); ++i) qsum.Q[i] += qb.Q[i];

  std::vector<double> base(qa.Q.size());
  for (auto& x : base) x = uniform01(rng);
  std::vector<double> sa = base, sb = base, sc = base;
  std::vector<ValueTables> both = {qa, qb};
  Policy p_batch = improve_policy(sa, both, 0.3, 2, 3, 2);
  Policy p_sum = improve_policy(sb, std::span(&qsum, 1), 0.3, 2, 3, 2);
  improve_policy(sc, std::span(&qa, 1), 0.3, 2, 3, 2);
  Policy p_seq = improve_policy(sc, std::span(&qb, 1), 0.3, 2, 3, 2);
  CHECK(p_batch.probs == p_sum.probs);
  CHECK(p_batch.probs == p_seq.probs);

  // Rows are normalized and strictly positive.
  for (int h = 1; h <= 2; ++h)
    for (int s = 0; s < 2; ++s) {
      double z = 0.0;
      for (int a = 0; a < 3; ++a) {
        CHECK(p_batch.at(h, s, a) > 0.0);
        z += p_batch.at(h, s, a);
      }
      CHECK(z == doctest::Approx(1.0).epsilon(1e-12));
    }

  ValueTables bad = ValueTables::zeros(S, A, H);
  bad.q(1, 0, 0) = std::numeric_limits<double>::infinity();
  std::vector<double> sd(2, 0.0);
  CHECK_THROWS_AS(improve_policy(sd, std::span(&bad, 1), 0.5, S, A, H),
                  ContractViolation);
}

TEST_CASE("evaluate_policy_optimistic across regimes") {
  Rng rng = substream(42, 0);
  const int S = 3, A = 2, H = 3;

  OppoConfig known_full;
  known_full.learning_rate = 0.3;
  known_full.feedback_mode = FeedbackMode::full_info;
  known_full.dynamics_mode = DynamicsMode::known;

  // Known dynamics + full information is exact policy evaluation.
  for (int trial = 0; trial < 50; ++trial) {
    TabularMdp mdp = testutil::random_mdp(S, A, H, rng);
    Policy pi = testutil::random_policy(S, A, H, rng);
    CostFunction c = testutil::random_cost(S, A, H, rng);
    FeedbackPacket pkt;
    pkt.episode = pkt.arrival = 1;
    pkt.full_costs = c;
    pkt.policy_snapshot = pi;
    ValueTables got = evaluate_policy_optimistic(pkt, &mdp, nullptr,
                                                 mdp.initial_state, known_full);
    ValueTables exact = policy_value(mdp, pi, c);
    for (std::size_t i = 0; i < got.Q.size(); ++i)
      CHECK(got.Q[i] == doctest::Approx(exact.Q[i]).epsilon(1e-14));
    for (std::size_t i = 0; i < got.V.size(); ++i)
      CHECK(got.V[i] == doctest::Approx(exact.V[i]).epsilon(1e-14));
    for (double q : got.Q) CHECK((q >= -1e-12 && q <= H + 1e-12));
  }

  // Unknown dynamics + full information: optimism whenever the set contains
  // the truth.
  OppoConfig unknown_full = known_full;
  unknown_full.dynamics_mode = DynamicsMode::unknown;
  int contained_cases = 0;
  for (int trial = 0; trial < 500; ++trial) {
    TabularMdp mdp = testutil::random_mdp(2, 2, 2, rng);
    Policy pi = testutil::random_policy(2, 2, 2, rng);
    CostFunction c = testutil::random_cost(2, 2, 2, rng);
    ConfidenceSet set(2, 2, 2, 100, 0.1);
    const int n_obs = static_cast<int>(uniform01(rng) * 120);
    for (int i = 0; i < n_obs; ++i) {
      const int h = 1;
      const int s = static_cast<int>(uniform01(rng) * 2);
      const int a = static_cast<int>(uniform01(rng) * 2);
      set.observe(h, s, a, sample_weighted(mdp.row(h, s, a), rng));
    }
    FeedbackPacket pkt;
    pkt.episode = pkt.arrival = 1;
    pkt.full_costs = c;
    pkt.policy_snapshot = pi;
    ValueTables opt = evaluate_policy_optimistic(pkt, nullptr, &set,
                                                 mdp.initial_state, unknown_full);
    if (contains_truth(set, mdp)) {
      ++contained_cases;
      ValueTables exact = policy_value(mdp, pi, c);
      CHECK(opt.v(1, mdp.initial_state) <=
            exact.v(1, mdp.initial_state) + 1e-12);
    }
  }
  CHECK(contained_cases > 400);  // radii are generous at these sizes

  // Bandit + known dynamics: the estimator bound propagates to Q <= H/gamma.
  OppoConfig bandit_known = known_full;
  bandit_known.feedback_mode = FeedbackMode::bandit;
  bandit_known.exploration = 0.1;
  for (int trial = 0; trial < 50; ++trial) {
    TabularMdp mdp = testutil::random_mdp(S, A, H, rng);
    Policy pi = testutil::random_policy(S, A, H, rng);
    CostFunction c = testutil::random_cost(S, A, H, rng);
    Trajectory t = sample_episode(mdp, pi, c, rng);
    FeedbackPacket pkt;
    pkt.episode = pkt.arrival = 1;
    pkt.payload_kind = FeedbackMode::bandit;
    pkt.trajectory = t;
    pkt.policy_snapshot = pi;
    ValueTables got = evaluate_policy_optimistic(pkt, &mdp, nullptr,
                                                 mdp.initial_state, bandit_known);
    for (double q : got.Q)
      CHECK((q >= -1e-12 && q <= H / bandit_known.exploration + 1e-9));
  }

  // Model pointer for the wrong mode is rejected.
  FeedbackPacket pkt;
  pkt.policy_snapshot = Policy::uniform(S, A, H);
  CHECK_THROWS_AS(evaluate_policy_optimistic(pkt, nullptr, nullptr, 0, known_full),
                  ContractViolation);
}

TEST_CASE("zero-delay runs reproduce the non-delayed reference bitwise") {
  Rng rng = substream(43, 0);
  const int S = 3, A = 2, H = 2;
  const long long K = 60;
  TabularMdp mdp = testutil::random_mdp(S, A, H, rng);
  CostSequence costs;
  for (long long k = 0; k < K; ++k)
    costs.push_back(testutil::random_cost(S, A, H, rng));
  ScheduleParams zero_params;
  Rng srng = substream(43, 9);
  DelaySchedule zero = make_schedule(ScheduleKind::fixed, zero_params, K, srng);

  struct Regime {
    FeedbackMode fm;
    DynamicsMode dm;
    bool exploration;
  };
  const Regime regimes[] = {
      {FeedbackMode::full_info, DynamicsMode::known, false},
      {FeedbackMode::full_info, DynamicsMode::unknown, false},
      {FeedbackMode::bandit, DynamicsMode::known, false},
      {FeedbackMode::bandit, DynamicsMode::unknown, false},
      {FeedbackMode::full_info, DynamicsMode::unknown, true},
  };
  for (const Regime& regime : regimes) {
    CAPTURE(static_cast<int>(regime.fm));
    CAPTURE(static_cast<int>(regime.dm));
    OppoConfig cfg;
    cfg.learning_rate = 0.25;
    cfg.delta = 0.1;
    cfg.feedback_mode = regime.fm;
    cfg.dynamics_mode = regime.dm;
    if (regime.fm == FeedbackMode::bandit) cfg.exploration = 0.15;
    if (regime.exploration) {
      cfg.use_explicit_exploration = true;
      cfg.d_max_hint = 1;
    }

    std::unique_ptr<DelayedOppo> learner;
    if (regime.dm == DynamicsMode::known)
      learner = std::make_unique<DelayedOppo>(mdp, K, cfg);
    else
      learner = std::make_unique<DelayedOppo>(shape_of(mdp), K, cfg);

    // Reference: same environment stream, no delay machinery at all.
    testutil::ReferenceOppo ref(mdp, K, cfg);
    Rng ref_rng = substream(77, 0);
    std::vector<Policy> ref_policies;
    std::vector<Trajectory> ref_trajs;
    for (long long k = 1; k <= K; ++k) {
      const Policy& played = ref.played();
      Trajectory t;
      int s = mdp.initial_state;
      for (int h = 1; h <= H; ++h) {
        const int a = sample_weighted(played.row(h, s), ref_rng);
        t.states.push_back(s);
        t.actions.push_back(a);
        t.suffered_costs.push_back(costs[k - 1].at(h, s, a));
        if (h < H) s = sample_weighted(mdp.row(h, s, a), ref_rng);
      }
      ref.process(t, costs[k - 1]);
      ref_policies.push_back(ref.policy());
      ref_trajs.push_back(t);
    }

    // Delayed learner under the same seed. Full-info packets are built by
    // drive(); for bandit regimes the packet's cost table is ignored by the
    // learner, so reusing drive() is still faithful: what matters is that
    // payload costs are only read under full information.
    MiniRun run = drive(*learner, mdp, costs, zero, 77);
    for (long long k = 0; k < K; ++k) {
      CHECK(run.trajectories[k].states == ref_trajs[k].states);
      CHECK(run.trajectories[k].actions == ref_trajs[k].actions);
      CHECK(run.decision_policies[k].probs == ref_policies[k].probs);
    }
  }
}

TEST_CASE("delayed batches follow the evaluate-then-ingest discipline") {
  Rng rng = substream(44, 0);
  const int S = 2, A = 2, H = 2;
  TabularMdp mdp = testutil::random_mdp(S, A, H, rng);
  CostSequence costs;
  for (int k = 0; k < 3; ++k) costs.push_back(testutil::random_cost(S, A, H, rng));

  OppoConfig cfg;
  cfg.learning_rate = 0.5;
  cfg.delta = 0.1;
  cfg.feedback_mode = FeedbackMode::full_info;
  cfg.dynamics_mode = DynamicsMode::unknown;

  // Delays (1,1,0): F^2 = {1}, F^3 = {2,3}: episode 3 ends with a batch.
  ScheduleParams p;
  p.list = {1, 1, 0};
  Rng srng = substream(44, 9);
  DelaySchedule sched = make_schedule(ScheduleKind::adversarial_list, p, 3, srng);

  DelayedOppo learner(shape_of(mdp), 3, cfg);
  MiniRun run = drive(learner, mdp, costs, sched, 5);

  // Oracle: replay the primitives by hand in the order the rule dictates.
  std::vector<double> scores(static_cast<std::size_t>(H) * S * A, 0.0);
  ConfidenceSet set(S, A, H, 3, cfg.delta);
  std::vector<Policy> expected;

  auto eval = [&](long long j, const Policy& snapshot) {
    FeedbackPacket pkt;
    pkt.episode = j;
    pkt.arrival = j + sched.delay(j);
    pkt.trajectory = run.trajectories[j - 1];
    pkt.full_costs = costs[j - 1];
    pkt.policy_snapshot = snapshot;
    return evaluate_policy_optimistic(pkt, nullptr, &set, mdp.initial_state,
                                      cfg);
  };

  const Policy pi1 = Policy::uniform(S, A, H);
  // k = 1: nothing arrives.
  expected.push_back(pi1);
  // k = 2: episode 1 arrives; evaluated against the empty model, then its
  // trajectory is ingested.
  {
    std::vector<ValueTables> qs = {eval(1, pi1)};
    expected.push_back(improve_policy(scores, qs, cfg.learning_rate, S, A, H));
    set.observe_trajectory(run.trajectories[0]);
  }
  const Policy pi3 = expected.back();  // decision policy of episode 3
  // k = 3: episodes 2 and 3 arrive together. Both are evaluated against the
  // model that knows only episode 1, then one improvement ingests the batch.
  {
    // Episode 2's decision policy was still pi1 (no arrivals by its start);
    // episode 3's is pi3.
    std::vector<ValueTables> qs = {eval(2, pi1), eval(3, pi3)};
    expected.push_back(improve_policy(scores, qs, cfg.learning_rate, S, A, H));
    set.observe_trajectory(run.trajectories[1]);
    set.observe_trajectory(run.trajectories[2]);
  }
  for (int k = 0; k < 3; ++k)
    CHECK(run.decision_policies[k].probs == expected[k].probs);

  // The learner's model must now agree with the oracle's.
  const ConfidenceSet* model = learner.confidence();
  for (int h = 1; h <= H; ++h)
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        CHECK(model->n(h, s, a) == set.n(h, s, a));
        for (int s2 = 0; s2 < S; ++s2)
          CHECK(model->p_bar(h, s, a, s2) == set.p_bar(h, s, a, s2));
      }
}

TEST_CASE("no arrivals means no policy movement") {
  Rng rng = substream(45, 0);
  const int S = 2, A = 3, H = 2;
  TabularMdp mdp = testutil::random_mdp(S, A, H, rng);
  CostSequence costs;
  for (int k = 0; k < 10; ++k) costs.push_back(testutil::random_cost(S, A, H, rng));

  OppoConfig cfg;
  cfg.learning_rate = 0.5;
  cfg.feedback_mode = FeedbackMode::full_info;
  cfg.dynamics_mode = DynamicsMode::known;

  // Every delay larger than the horizon: nothing ever arrives.
  ScheduleParams p;
  p.fixed_delay = 100;
  Rng srng = substream(45, 9);
  DelaySchedule sched = make_schedule(ScheduleKind::fixed, p, 10, srng);

  DelayedOppo learner(mdp, 10, cfg);
  MiniRun run = drive(learner, mdp, costs, sched, 3);
  const Policy uniform = Policy::uniform(S, A, H);
  for (const Policy& pi : run.decision_policies)
    CHECK(pi.probs == uniform.probs);
}

TEST_CASE("explicit exploration gates, tags and eventually lifts") {
  Rng rng = substream(46, 0);
  const int S = 2, A = 2, H = 2;
  TabularMdp mdp = testutil::random_mdp(S, A, H, rng);

  OppoConfig cfg;
  cfg.learning_rate = 0.6;
  cfg.delta = 0.1;
  cfg.feedback_mode = FeedbackMode::full_info;
  cfg.dynamics_mode = DynamicsMode::unknown;
  cfg.use_explicit_exploration = true;
  cfg.d_max_hint = 1;
  // threshold = 2 * 1 * ln(2*2*2/0.1) = 2 ln 80 ~ 8.76: rows stay gated
  // until they have been observed 9 times.
  const double threshold = 2.0 * std::log(8.0 / 0.1);

  const long long K = 400;
  CostSequence costs;
  CostFunction biased = CostFunction::zeros(S, A, H);
  for (int h = 1; h <= H; ++h)
    for (int s = 0; s < S; ++s) biased.at(h, s, 1) = 1.0;  // action 1 is bad
  for (long long k = 0; k < K; ++k) costs.push_back(biased);

  ScheduleParams p;
  p.fixed_delay = 1;
  Rng srng = substream(46, 9);
  DelaySchedule sched = make_schedule(ScheduleKind::fixed, p, K, srng);

  DelayedOppo learner(shape_of(mdp), K, cfg);
  FeedbackBuffer buf(S, A, H);
  Rng env_rng = substream(46, 1);
  bool saw_gated_uniform = false, saw_exploration_tag = false;
  for (long long k = 1; k <= K; ++k) {
    const Policy& played = learner.begin_episode();
    // While a row is gated its played distribution is uniform even though
    // the decision policy may already prefer action 0.
    for (int h = 1; h <= H; ++h)
      for (int s = 0; s < S; ++s)
        if (static_cast<double>(learner.gate_visits(h, s)) <= threshold) {
          CHECK(played.at(h, s, 0) == 0.5);
          CHECK(played.at(h, s, 1) == 0.5);
          saw_gated_uniform = true;
        }
    Trajectory t;
    int s = mdp.initial_state;
    for (int h = 1; h <= H; ++h) {
      const int a = learner.act(s, h, env_rng);
      t.states.push_back(s);
      t.actions.push_back(a);
      t.suffered_costs.push_back(costs[k - 1].at(h, s, a));
      if (h < H) s = sample_weighted(mdp.row(h, s, a), env_rng);
    }
    learner.end_episode(t);
    if (learner.exploration_used()) saw_exploration_tag = true;

    FeedbackPacket pkt;
    pkt.episode = k;
    pkt.arrival = k + sched.delay(k);
    pkt.trajectory = t;
    pkt.full_costs = costs[k - 1];
    pkt.policy_snapshot = learner.decision_policy();
    pkt.exploration_used = learner.exploration_used();
    buf.record_visit(t);
    buf.push(pkt);
    learner.on_feedback(buf.take_arrivals(k));
  }
  CHECK(saw_gated_uniform);
  CHECK(saw_exploration_tag);
  // After 400 episodes with delay 1, every visited row is long since
  // released and the improvement has pushed hard toward the free action.
  CHECK(learner.decision_policy().at(1, mdp.initial_state, 0) > 0.99);
}

TEST_CASE("bandit snapshots are taken per episode and released on arrival") {
  Rng rng = substream(47, 0);
  const int S = 2, A = 2, H = 2;
  TabularMdp mdp = testutil::random_mdp(S, A, H, rng);

  OppoConfig cfg;
  cfg.learning_rate = 0.4;
  cfg.exploration = 0.2;
  cfg.feedback_mode = FeedbackMode::bandit;
  cfg.dynamics_mode = DynamicsMode::unknown;

  DelayedOppo learner(shape_of(mdp), 10, cfg);
  CostFunction c = testutil::random_cost(S, A, H, rng);
  Rng env_rng = substream(47, 1);

  std::vector<FeedbackPacket> stash;
  for (long long k = 1; k <= 3; ++k) {
    learner.begin_episode();
    Trajectory t;
    int s = mdp.initial_state;
    for (int h = 1; h <= H; ++h) {
      const int a = learner.act(s, h, env_rng);
      t.states.push_back(s);
      t.actions.push_back(a);
      t.suffered_costs.push_back(c.at(h, s, a));
      if (h < H) s = sample_weighted(mdp.row(h, s, a), env_rng);
    }
    learner.end_episode(t);
    FeedbackPacket pkt;
    pkt.episode = k;
    pkt.arrival = k + 5;
    pkt.payload_kind = FeedbackMode::bandit;
    pkt.trajectory = t;
    pkt.policy_snapshot = learner.decision_policy();
    stash.push_back(pkt);
    learner.on_feedback({});
  }
  CHECK(learner.snapshot_count() == 3);

  learner.on_feedback({stash[1]});  // episode 2 arrives
  CHECK(learner.snapshot_count() == 2);

  learner.on_dropped({1});  // a wrapper dropped episode 1
  CHECK(learner.snapshot_count() == 1);

  // A packet for an episode that was never begun has no snapshot.
  FeedbackPacket bogus = stash[2];
  bogus.episode = 99;
  CHECK_THROWS_AS(learner.on_feedback({bogus}), ContractViolation);
}
