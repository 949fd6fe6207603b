#pragma once

#include <cmath>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "airfl/channel.hpp"
#include "airfl/data.hpp"
#include "airfl/rng.hpp"
#include "airfl/tasks.hpp"

namespace airfl::bound {

class BoundError : public std::runtime_error {
 public:
  explicit BoundError(const std::string& m) : std::runtime_error(m) {}
};

// Per-round contraction factor of the optimality-gap recursion.
inline double contraction_factor(double eta, int E, double L) {
  const double eel = eta * E * L;
  const double denom = 1.0 - 4.0 * eel * eel;
  if (!(denom > 0))
    throw BoundError("contraction factor undefined: 1 - 4*eta^2*E^2*L^2 <= 0");
  return 1.0 + eel * (20.0 * eel * eel + 16.0 * eel - 1.0) / denom;
}

// The four per-round gap terms: (a) gradient variance and heterogeneity
// amplified by local drift, (b) heterogeneity alone, (c) downlink noise, (d)
// uplink noise.
struct GapBreakdown {
  double term_a = 0, term_b = 0, term_c = 0, term_d = 0;
  double A_t = 1.0;

  double total() const { return term_a + term_b + term_c + term_d; }
};

struct RoundInputs {
  double eta = 0;
  int E = 1;
  double L = 1;
  int d = 1;
  double sigma_d2 = 0, sigma_u2 = 0;
  double mu2 = 0, delta = 0;
  Eigen::VectorXd q;          // data fractions, sum to 1
  Eigen::VectorXd rho;        // aggregation weights, sum to 1 over selected
  Eigen::VectorXd h_dl_abs2;  // downlink channel gains
  double p_s2 = 1;            // squared downlink amplitude
  Eigen::VectorXd p;          // uplink powers
  Eigen::VectorXi a;          // selection mask
};

inline GapBreakdown round_gap(const RoundInputs& in) {
  const double eel = in.eta * in.E * in.L;
  const double denom = 1.0 - 4.0 * eel * eel;
  if (!(denom > 0)) throw BoundError("denominator 1 - 4*eta^2*E^2*L^2 <= 0");
  if (!(in.p_s2 > 0)) throw BoundError("p_s^2 must be positive");

  double zeta = 0;
  for (Eigen::Index k = 0; k < in.p.size(); ++k) zeta += in.a[k] * in.p[k];
  if (!(zeta > 0)) throw BoundError("sum of selected powers is zero");

  GapBreakdown g;
  g.A_t = contraction_factor(in.eta, in.E, in.L);
  g.term_a = (2.0 * in.eta * in.eta * in.E * in.E * in.L * (1.0 + eel) / denom) *
             (in.mu2 + 4.0 * in.delta);
  double inv_q = 0;
  for (Eigen::Index k = 0; k < in.q.size(); ++k) {
    if (!(in.q[k] > 0)) throw BoundError("data fractions must be positive");
    inv_q += 1.0 / in.q[k];
  }
  g.term_b = in.eta * in.delta * in.E * (inv_q + 1.0);
  double dl_sum = 0;
  for (Eigen::Index k = 0; k < in.rho.size(); ++k)
    dl_sum += in.rho[k] * in.rho[k] / in.h_dl_abs2[k];
  g.term_c = in.d * in.sigma_d2 * in.L *
             (1.0 + 2.0 * in.eta * in.E + 4.0 * eel * eel) /
             (denom * in.p_s2) * dl_sum;
  g.term_d = 2.0 * in.d * in.sigma_u2 * in.L / (zeta * zeta);
  return g;
}

// Accumulates prod(A) * delta1 + sum_t (prod_{i>t} A(i)) G(t) by the forward
// recursion gap <- A(t) * gap + G(t), with compensated addition: products of
// many factors near one make the raw sum lose digits.
inline double optimality_gap(std::span<const double> A, std::span<const double> G,
                             double f_w1_minus_fstar) {
  if (A.size() != G.size()) throw BoundError("A and G must have equal length");
  double gap = f_w1_minus_fstar;
  double comp = 0.0;
  for (std::size_t t = 0; t < A.size(); ++t) {
    gap *= A[t];
    comp *= A[t];
    const double y = G[t] - comp;
    const double s = gap + y;
    comp = (s - gap) - y;
    gap = s;
  }
  return gap;
}

// ---- Monte-Carlo audit of the descaled-broadcast noise ---------------------
//
// Simulates the actual mechanism (independent per-device equivalent noise,
// weighted combination) and compares the empirical moments with the
// closed-form second moment d*sigma_d2/p_s^2 * sum_k rho_k^2 / |h_k|^2.
struct BroadcastNoiseAudit {
  double predicted_second_moment = 0;
  double mc_second_moment = 0;
  double rel_err = 0;
  double max_abs_mean = 0;
  double mean_limit = 0;  // three standard errors
  bool pass = false;
};

inline BroadcastNoiseAudit broadcast_noise_audit(
    int d, double sigma_d2, double p_s, const Eigen::VectorXd& rho,
    const Eigen::VectorXd& h_dl_abs2, long samples, std::mt19937_64& g) {
  const int K = static_cast<int>(rho.size());
  BroadcastNoiseAudit rep;
  double pred = 0;
  for (int k = 0; k < K; ++k)
    pred += rho[k] * rho[k] / h_dl_abs2[k];
  pred *= d * sigma_d2 / (p_s * p_s);
  rep.predicted_second_moment = pred;

  if (sigma_d2 == 0.0) {
    rep.pass = true;
    return rep;
  }

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  double sq = 0;
  Eigen::VectorXd v(d);
  for (long s = 0; s < samples; ++s) {
    v.setZero();
    for (int k = 0; k < K; ++k) {
      if (rho[k] == 0.0) continue;
      const double var = sigma_d2 / (p_s * p_s * h_dl_abs2[k]);
      v += rho[k] * channel::gaussian_vector(g, d, var);
    }
    mean += v;
    sq += v.squaredNorm();
  }
  mean /= double(samples);
  rep.mc_second_moment = sq / double(samples);
  rep.rel_err = std::abs(rep.mc_second_moment - pred) / pred;
  rep.max_abs_mean = mean.cwiseAbs().maxCoeff();
  rep.mean_limit = 3.0 * std::sqrt(pred / d / double(samples));
  rep.pass = rep.rel_err <= 0.01 && rep.max_abs_mean <= rep.mean_limit;
  return rep;
}

// ---- smoothness-bound audit: ||grad F(w)||^2 <= 2L (F(w) - F*) -------------

struct GradientBoundAudit {
  double max_violation = 0;      // max of lhs - rhs over samples
  double max_equality_err = 0;   // max |lhs - rhs| relative, for exact tasks
  bool pass = false;
};

inline GradientBoundAudit gradient_bound_audit(
    const tasks::LearningTask& task, const data::Dataset& ds,
    std::span<const Eigen::VectorXd> models, double L, double f_star,
    bool expect_equality = false) {
  GradientBoundAudit rep;
  const auto idx = tasks::all_indices(ds);
  rep.pass = true;
  for (const auto& w : models) {
    const double lhs = task.gradient(w, ds, idx).squaredNorm();
    const double rhs = 2.0 * L * (task.loss(w, ds, idx) - f_star);
    rep.max_violation = std::max(rep.max_violation, lhs - rhs);
    const double scale = std::max({std::abs(lhs), std::abs(rhs), 1e-300});
    rep.max_equality_err = std::max(rep.max_equality_err,
                                    std::abs(lhs - rhs) / scale);
    if (lhs > rhs + 1e-9 * scale) rep.pass = false;
    if (expect_equality && std::abs(lhs - rhs) > 8 * 2.220446049250313e-16 * scale)
      rep.pass = false;
  }
  return rep;
}

// ---- empirical surrogates for the SGD-variance / heterogeneity constants ---

struct MomentEstimates {
  double mu2 = 0;
  double delta = 0;
};

inline MomentEstimates estimate_mu_delta(const tasks::LearningTask& task,
                                         const data::Dataset& ds,
                                         const data::Partition& part,
                                         std::span<const Eigen::VectorXd> models,
                                         int batch_samples, int B,
                                         std::mt19937_64& g) {
  if (models.size() < 1) throw BoundError("at least one model sample required");
  MomentEstimates est;
  const int K = part.devices();
  for (const auto& w : models) {
    // Global full-batch gradient, q-weighted.
    Eigen::VectorXd gF = Eigen::VectorXd::Zero(task.dim());
    std::vector<Eigen::VectorXd> gk(K);
    for (int k = 0; k < K; ++k) {
      gk[k] = task.gradient(w, ds, part.assignment[k]);
      gF += part.q[k] * gk[k];
    }
    for (int k = 0; k < K; ++k) {
      est.delta = std::max(est.delta, (gk[k] - gF).squaredNorm());
      if (B >= static_cast<int>(part.assignment[k].size()))
        continue;  // full batch: the stochastic gradient is exact
      double acc = 0;
      for (int s = 0; s < batch_samples; ++s) {
        const auto batch = data::sample_minibatch(part, k, B, g);
        acc += (task.gradient(w, ds, batch) - gk[k]).squaredNorm();
      }
      est.mu2 = std::max(est.mu2, acc / batch_samples);
    }
  }
  return est;
}

}  // namespace airfl::bound
