#include "delaylab/oreps.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>

namespace delaylab {

namespace {

// reach[(h-1)*S + s] == 1 iff (h, s) has positive probability under some
// policy; mass at unreachable pairs can only be projected to zero.
std::vector<char> reachable_states(const TabularMdp& mdp) {
  const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
  std::vector<char> reach(static_cast<std::size_t>(H) * S, 0);
  reach[static_cast<std::size_t>(mdp.initial_state)] = 1;
  for (int h = 1; h < H; ++h)
    for (int s = 0; s < S; ++s) {
      if (!reach[static_cast<std::size_t>(h - 1) * S + s]) continue;
      for (int a = 0; a < A; ++a) {
        const std::span<const double> row = mdp.row(h, s, a);
        for (int t = 0; t < S; ++t)
          if (row[t] > 0.0) reach[static_cast<std::size_t>(h) * S + t] = 1;
      }
    }
  return reach;
}

}  // namespace

// ---------------------------------------------------------------------------
// Polytope membership
// ---------------------------------------------------------------------------

double PolytopeResiduals::max() const {
  return std::max(std::max(start_mass, layer_mass), std::max(flow, kernel));
}

OccupancyPolytope::OccupancyPolytope(const TabularMdp& mdp) : mdp_(&mdp) {
  mdp.validate();
}

PolytopeResiduals OccupancyPolytope::residuals(const OccupancyMeasure& q) const {
  const int S = mdp_->num_states, A = mdp_->num_actions, H = mdp_->horizon;
  require(q.num_states == S && q.num_actions == A && q.horizon == H,
          "OccupancyPolytope: dimension mismatch");
  PolytopeResiduals r;

  // Layer-1 mass sits entirely on the initial state.
  double start = 0.0, elsewhere = 0.0;
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a)
      for (int t = 0; t < S; ++t)
        (s == mdp_->initial_state ? start : elsewhere) +=
            (s == mdp_->initial_state ? q.at(1, s, a, t)
                                      : std::abs(q.at(1, s, a, t)));
  r.start_mass = std::max(std::abs(start - 1.0), elsewhere);

  for (int h = 1; h <= H; ++h) {
    double mass = 0.0;
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a)
        for (int t = 0; t < S; ++t) mass += q.at(h, s, a, t);
    r.layer_mass = std::max(r.layer_mass, std::abs(mass - 1.0));
  }

  for (int h = 2; h <= H; ++h)
    for (int s = 0; s < S; ++s) {
      double out = 0.0, in = 0.0;
      for (int a = 0; a < A; ++a) {
        for (int t = 0; t < S; ++t) out += q.at(h, s, a, t);
        for (int u = 0; u < S; ++u) in += q.at(h - 1, u, a, s);
      }
      r.flow = std::max(r.flow, std::abs(out - in));
    }

  for (int h = 1; h <= H; ++h)
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        double m = 0.0;
        for (int t = 0; t < S; ++t) m += q.at(h, s, a, t);
        if (m <= kSupportCutoff) continue;
        const std::span<const double> p = mdp_->row(h, s, a);
        for (int t = 0; t < S; ++t)
          r.kernel = std::max(r.kernel, std::abs(q.at(h, s, a, t) / m - p[t]));
      }

  return r;
}

bool OccupancyPolytope::contains(const OccupancyMeasure& q,
                                 double tolerance) const {
  return residuals(q).max() <= tolerance;
}

// ---------------------------------------------------------------------------
// Update and projection
// ---------------------------------------------------------------------------

OccupancyMeasure unconstrained_update(const OccupancyMeasure& q,
                                      const CostFunction& summed_cost,
                                      double eta) {
  const int S = q.num_states, A = q.num_actions, H = q.horizon;
  require(summed_cost.num_states == S && summed_cost.num_actions == A &&
              summed_cost.horizon == H,
          "unconstrained_update: dimension mismatch");
  require(std::isfinite(eta), "unconstrained_update: eta must be finite");
  OccupancyMeasure out = q;
  for (int h = 1; h <= H; ++h)
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        const double factor = std::exp(-eta * summed_cost.at(h, s, a));
        require(std::isfinite(factor),
                "unconstrained_update: non-finite decay factor");
        for (int t = 0; t < S; ++t) out.at(h, s, a, t) *= factor;
      }
  return out;
}

OccupancyMeasure kl_project_known_p(const OccupancyMeasure& q_tilde,
                                    const TabularMdp& mdp,
                                    std::vector<double>* warm_beta) {
  const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
  require(q_tilde.num_states == S && q_tilde.num_actions == A &&
              q_tilde.horizon == H,
          "kl_project_known_p: dimension mismatch");

  const std::vector<char> reach = reachable_states(mdp);
  const auto reached = [&](int h, int s) {
    return reach[static_cast<std::size_t>(h - 1) * S + s] != 0;
  };

  // Kernel consistency reduces the measure to state-action occupancies
  // w_h(s,a) with effective log-targets
  //   log w~_h(s,a) = sum_{s'} p(s'|s,a) log(q~_h(s,a,s') / p(s'|s,a)).
  std::vector<double> logw(static_cast<std::size_t>(H) * S * A, 0.0);
  for (int h = 1; h <= H; ++h)
    for (int s = 0; s < S; ++s) {
      if (!reached(h, s)) continue;
      if (h == 1 && s != mdp.initial_state) continue;
      for (int a = 0; a < A; ++a) {
        const std::span<const double> p = mdp.row(h, s, a);
        double acc = 0.0;
        for (int t = 0; t < S; ++t) {
          if (p[t] <= 0.0) continue;
          const double v = q_tilde.at(h, s, a, t);
          require(v > 0.0,
                  "kl_project_known_p: q~ must be positive on the kernel "
                  "support of reachable states");
          acc += p[t] * (std::log(v) - std::log(p[t]));
        }
        logw[(static_cast<std::size_t>(h - 1) * S + s) * A + a] = acc;
      }
    }
  const auto logw_at = [&](int h, int s, int a) {
    return logw[(static_cast<std::size_t>(h - 1) * S + s) * A + a];
  };

  // One dual potential per reachable (h, s) with h >= 2; the layer-1
  // normalization multiplier has the closed form log Z_1 and is eliminated.
  std::vector<int> id(static_cast<std::size_t>(H) * S, -1);
  int n = 0;
  for (int h = 2; h <= H; ++h)
    for (int s = 0; s < S; ++s)
      if (reached(h, s)) id[static_cast<std::size_t>(h - 1) * S + s] = n++;
  const auto id_at = [&](int h, int s) {
    return id[static_cast<std::size_t>(h - 1) * S + s];
  };

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(n);
  if (warm_beta != nullptr &&
      static_cast<int>(warm_beta->size()) == n)
    for (int i = 0; i < n; ++i) beta[i] = (*warm_beta)[static_cast<std::size_t>(i)];

  // Exponents of the dual-parametrized occupancies.
  //   h >= 2:  e_h(s,a) = log w~ - beta_h(s) + <p_h(.|s,a), beta_{h+1}>
  //   h == 1:  e_1(a)   = log w~ + <p_1(.|s_init,a), beta_2>   (normalized)
  const auto exponent = [&](const Eigen::VectorXd& b, int h, int s, int a) {
    double e = logw_at(h, s, a);
    if (h >= 2) e -= b[id_at(h, s)];
    if (h < H) {
      const std::span<const double> p = mdp.row(h, s, a);
      for (int t = 0; t < S; ++t)
        if (p[t] > 0.0) e += p[t] * b[id_at(h + 1, t)];
    }
    return e;
  };

  // Dual objective F(beta) = sum_{h>=2} w_h(beta) + log Z_1(beta); its
  // gradient at coordinate (h, s) is inflow - outflow of w(beta).
  const auto eval_objective = [&](const Eigen::VectorXd& b) {
    double f = 0.0;
    for (int h = 2; h <= H; ++h)
      for (int s = 0; s < S; ++s) {
        if (!reached(h, s)) continue;
        for (int a = 0; a < A; ++a) f += std::exp(exponent(b, h, s, a));
      }
    if (H >= 1) {
      double hi = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < A; ++a)
        hi = std::max(hi, exponent(b, 1, mdp.initial_state, a));
      double z = 0.0;
      for (int a = 0; a < A; ++a)
        z += std::exp(exponent(b, 1, mdp.initial_state, a) - hi);
      f += hi + std::log(z);
    }
    return f;
  };

  if (n > 0 && !std::isfinite(eval_objective(beta))) beta.setZero();

  Eigen::VectorXd grad(n);
  Eigen::MatrixXd hess(n, n);
  std::vector<double> pi1(static_cast<std::size_t>(A), 0.0);

  // Evaluates F and its gradient; the Hessian only when requested.  The
  // gradient coordinate at (h, s) is inflow minus outflow of w(beta), so its
  // infinity norm is exactly the worst flow violation of the current primal.
  const auto evaluate = [&](const Eigen::VectorXd& b, double* f_out,
                            Eigen::VectorXd* g_out, Eigen::MatrixXd* h_out) {
    if (g_out != nullptr) g_out->setZero();
    if (h_out != nullptr) h_out->setZero();
    double f = 0.0;
    std::vector<std::pair<int, double>> coef;
    for (int h = 2; h <= H; ++h)
      for (int s = 0; s < S; ++s) {
        if (!reached(h, s)) continue;
        for (int a = 0; a < A; ++a) {
          const double w = std::exp(exponent(b, h, s, a));
          f += w;
          if (g_out == nullptr && h_out == nullptr) continue;
          coef.clear();
          coef.emplace_back(id_at(h, s), -1.0);
          if (h < H) {
            const std::span<const double> p = mdp.row(h, s, a);
            for (int t = 0; t < S; ++t)
              if (p[t] > 0.0) coef.emplace_back(id_at(h + 1, t), p[t]);
          }
          for (const auto& [i, ci] : coef) {
            if (g_out != nullptr) (*g_out)[i] += w * ci;
            if (h_out != nullptr)
              for (const auto& [j, cj] : coef) (*h_out)(i, j) += w * ci * cj;
          }
        }
      }
    // Layer 1: a normalized softmax row; log-sum-exp contributes its own
    // gradient (the normalized inflow into layer 2) and Gram-minus-outer
    // Hessian block.
    {
      const int s0 = mdp.initial_state;
      double hi = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < A; ++a)
        hi = std::max(hi, exponent(b, 1, s0, a));
      double z = 0.0;
      for (int a = 0; a < A; ++a) {
        pi1[static_cast<std::size_t>(a)] = std::exp(exponent(b, 1, s0, a) - hi);
        z += pi1[static_cast<std::size_t>(a)];
      }
      for (int a = 0; a < A; ++a) pi1[static_cast<std::size_t>(a)] /= z;
      f += hi + std::log(z);
      if (H >= 2 && (g_out != nullptr || h_out != nullptr)) {
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
        for (int a = 0; a < A; ++a) {
          const std::span<const double> p = mdp.row(1, s0, a);
          const double w = pi1[static_cast<std::size_t>(a)];
          for (int t = 0; t < S; ++t) {
            if (p[t] <= 0.0) continue;
            if (g_out != nullptr) (*g_out)[id_at(2, t)] += w * p[t];
            mean[id_at(2, t)] += w * p[t];
          }
          if (h_out != nullptr)
            for (int t = 0; t < S; ++t) {
              if (p[t] <= 0.0) continue;
              for (int u = 0; u < S; ++u)
                if (p[u] > 0.0)
                  (*h_out)(id_at(2, t), id_at(2, u)) += w * p[t] * p[u];
            }
        }
        if (h_out != nullptr) h_out->noalias() -= mean * mean.transpose();
      }
    }
    if (f_out != nullptr) *f_out = f;
  };
  const auto eval_all = [&](const Eigen::VectorXd& b, double* f_out) {
    evaluate(b, f_out, &grad, &hess);
  };
  const auto grad_norm = [&](const Eigen::VectorXd& b) {
    Eigen::VectorXd g(n);
    evaluate(b, nullptr, &g, nullptr);
    return g.lpNorm<Eigen::Infinity>();
  };

  // Inflow into (h, s) under the current duals; layer-1 sources are the
  // normalized softmax row.
  const auto inflow = [&](const Eigen::VectorXd& b, int h, int s) {
    double in = 0.0;
    if (h == 2) {
      const int s0 = mdp.initial_state;
      double hi = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < A; ++a) hi = std::max(hi, exponent(b, 1, s0, a));
      double z = 0.0, num = 0.0;
      for (int a = 0; a < A; ++a) {
        const double e = std::exp(exponent(b, 1, s0, a) - hi);
        z += e;
        num += e * mdp.prob(1, s0, a, s);
      }
      in = num / z;
    } else {
      for (int u = 0; u < S; ++u) {
        if (!reached(h - 1, u)) continue;
        for (int a = 0; a < A; ++a) {
          const double p = mdp.prob(h - 1, u, a, s);
          if (p > 0.0) in += p * std::exp(exponent(b, h - 1, u, a));
        }
      }
    }
    return in;
  };

  if (n > 0) {
    constexpr double kTol = 1e-12;
    constexpr int kMaxIter = 200;
    bool converged = false;
    double f = 0.0;
    for (int iter = 0; iter < kMaxIter; ++iter) {
      eval_all(beta, &f);
      const double gmax = grad.lpNorm<Eigen::Infinity>();
      if (gmax <= kTol) {
        converged = true;
        break;
      }
      // Damped Newton; when a direction is rejected by both acceptance rules
      // the ridge escalates and the step is recomputed.
      bool moved = false;
      double ridge = 0.0;
      for (int attempt = 0; attempt < 8 && !moved; ++attempt) {
        Eigen::MatrixXd m = hess;
        if (ridge > 0.0) m.diagonal().array() += ridge;
        ridge = (ridge == 0.0)
                    ? 1e-12 * std::max(1.0, hess.diagonal().maxCoeff())
                    : ridge * 100.0;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
        if (ldlt.info() != Eigen::Success) continue;
        const Eigen::VectorXd step = ldlt.solve(-grad);
        if (!step.allFinite()) continue;
        const double slope = grad.dot(step);
        if (slope >= 0.0) continue;
        double t = 1.0;
        for (int half = 0; half < 40 && !moved; ++half) {
          const Eigen::VectorXd trial = beta + t * step;
          const double fnew = eval_objective(trial);
          // Accept on sufficient decrease of F, or near the optimum (where
          // F differences vanish in double precision) on decrease of the
          // gradient norm, which Newton contracts quadratically.
          if (std::isfinite(fnew) &&
              (fnew <= f + 1e-4 * t * slope || grad_norm(trial) < 0.9 * gmax)) {
            beta = trial;
            moved = true;
          }
          t *= 0.5;
        }
      }
      if (!moved) break;  // hand over to the balancing sweeps below
    }
    if (!converged) {
      // Multiplicative balancing (coordinate-exact in log scale): each
      // update matches a state's outflow to its inflow, immune to the
      // dynamic range that defeats the Hessian factorization when parts of
      // the measure are vanishingly small.
      double gmax = grad_norm(beta);
      for (int sweep = 0; sweep < 20000 && gmax > kTol; ++sweep) {
        for (int h = H; h >= 2; --h)
          for (int s = 0; s < S; ++s) {
            if (!reached(h, s)) continue;
            double out = 0.0;
            for (int a = 0; a < A; ++a)
              out += std::exp(exponent(beta, h, s, a));
            const double in = inflow(beta, h, s);
            if (out > 0.0 && in > 0.0) beta[id_at(h, s)] += std::log(out / in);
          }
        gmax = grad_norm(beta);
      }
      if (gmax > 1e-10) {
        std::ostringstream msg;
        msg << "kl_project_known_p: projection stalled at flow residual "
            << gmax;
        throw NumericalError(msg.str());
      }
    }
    eval_all(beta, &f);  // refresh pi1 for the primal read-out
  } else {
    // H == 1: only the layer-1 normalization remains, handled in closed form.
    double f = 0.0;
    if (n == 0) {
      const int s0 = mdp.initial_state;
      double hi = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < A; ++a) hi = std::max(hi, logw_at(1, s0, a));
      double z = 0.0;
      for (int a = 0; a < A; ++a) {
        pi1[static_cast<std::size_t>(a)] = std::exp(logw_at(1, s0, a) - hi);
        z += pi1[static_cast<std::size_t>(a)];
      }
      for (int a = 0; a < A; ++a) pi1[static_cast<std::size_t>(a)] /= z;
      f = hi + std::log(z);
    }
    (void)f;
  }

  if (warm_beta != nullptr) {
    warm_beta->assign(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) (*warm_beta)[static_cast<std::size_t>(i)] = beta[i];
  }

  // Primal read-out: w_1 is the softmax row pi1, deeper layers come straight
  // from the dual exponents, and the kernel supplies the s' dimension.
  OccupancyMeasure out = OccupancyMeasure::zeros(S, A, H);
  {
    const int s0 = mdp.initial_state;
    for (int a = 0; a < A; ++a) {
      const std::span<const double> p = mdp.row(1, s0, a);
      for (int t = 0; t < S; ++t)
        out.at(1, s0, a, t) = pi1[static_cast<std::size_t>(a)] * p[t];
    }
  }
  for (int h = 2; h <= H; ++h)
    for (int s = 0; s < S; ++s) {
      if (!reached(h, s)) continue;
      for (int a = 0; a < A; ++a) {
        const double w = std::exp(exponent(beta, h, s, a));
        const std::span<const double> p = mdp.row(h, s, a);
        for (int t = 0; t < S; ++t) out.at(h, s, a, t) = w * p[t];
      }
    }
  return out;
}

Policy policy_from_occupancy(const OccupancyMeasure& q) {
  const int S = q.num_states, A = q.num_actions, H = q.horizon;
  Policy out = Policy::uniform(S, A, H);
  for (int h = 1; h <= H; ++h)
    for (int s = 0; s < S; ++s) {
      double m = 0.0;
      for (int a = 0; a < A; ++a)
        for (int t = 0; t < S; ++t) m += q.at(h, s, a, t);
      if (m <= OccupancyPolytope::kSupportCutoff) continue;  // keep uniform
      for (int a = 0; a < A; ++a) {
        double ma = 0.0;
        for (int t = 0; t < S; ++t) ma += q.at(h, s, a, t);
        out.at(h, s, a) = ma / m;
      }
    }
  out.validate();
  return out;
}

double occupancy_cost(const OccupancyMeasure& q, const CostFunction& cost) {
  const int S = q.num_states, A = q.num_actions, H = q.horizon;
  require(cost.num_states == S && cost.num_actions == A && cost.horizon == H,
          "occupancy_cost: dimension mismatch");
  double total = 0.0;
  for (int h = 1; h <= H; ++h)
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        double m = 0.0;
        for (int t = 0; t < S; ++t) m += q.at(h, s, a, t);
        total += m * cost.at(h, s, a);
      }
  return total;
}

// ---------------------------------------------------------------------------
// Learner
// ---------------------------------------------------------------------------

void OrepsConfig::validate() const {
  require(learning_rate > 0.0 && std::isfinite(learning_rate),
          "OrepsConfig: learning_rate must be positive");
}

OrepsState oreps_initial_state(const TabularMdp& mdp) {
  OrepsState state;
  state.q = occupancy_measure(
      mdp, Policy::uniform(mdp.num_states, mdp.num_actions, mdp.horizon));
  state.policy = policy_from_occupancy(state.q);
  return state;
}

OrepsState oreps_on_feedback(const OrepsState& state,
                             const std::vector<CostFunction>& arrived_costs,
                             double eta, const TabularMdp& mdp,
                             std::vector<double>* warm_beta) {
  if (arrived_costs.empty()) return state;
  CostFunction total = CostFunction::zeros(mdp.num_states, mdp.num_actions,
                                           mdp.horizon);
  for (const CostFunction& c : arrived_costs) total += c;
  OrepsState next;
  next.q = kl_project_known_p(unconstrained_update(state.q, total, eta), mdp,
                              warm_beta);
  next.policy = policy_from_occupancy(next.q);
  return next;
}

DelayedOreps::DelayedOreps(const TabularMdp& mdp, OrepsConfig config)
    : mdp_(mdp), cfg_(config) {
  mdp_.validate();
  cfg_.validate();
  state_ = oreps_initial_state(mdp_);
}

void DelayedOreps::on_feedback(const std::vector<FeedbackPacket>& packets) {
  if (packets.empty()) return;
  std::vector<CostFunction> costs;
  costs.reserve(packets.size());
  for (const FeedbackPacket& pkt : packets) {
    require(pkt.payload_kind == FeedbackMode::full_info,
            "DelayedOreps: requires full-information feedback");
    costs.push_back(pkt.full_costs);
  }
  state_ = oreps_on_feedback(state_, costs, cfg_.learning_rate, mdp_, &beta_);
}

}  // namespace delaylab
