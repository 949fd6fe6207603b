#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <json.hpp>

namespace airfl::sdp {

// Small dense SDP:
//   minimize    tr(obj * Z)
//   subject to  tr(A_j * Z)  = b_j        (eqs)
//               tr(Q_i * Z) <= 0          (ineqs)
//               Z PSD.
struct SdpStandardForm {
  int n = 0;
  Eigen::MatrixXd obj;
  std::vector<std::pair<Eigen::MatrixXd, double>> eqs;
  std::vector<Eigen::MatrixXd> ineqs;
};

struct IterateLog {
  double primal_obj = 0, dual_obj = 0, mu = 0, rp = 0, rd = 0;
  bool primal_feasible = false, dual_feasible = false;
};

struct SdpSolution {
  Eigen::MatrixXd Z;
  Eigen::VectorXd y;  // multipliers: eqs first, then ineqs
  double objective_value = 0;
  double dual_objective = 0;
  double primal_residual = 0;  // worst equality/inequality violation
  double gap = 0;              // primal minus dual objective
  int iterations = 0;
  std::vector<IterateLog> history;
};

// Strictly feasible warm start supplied by a caller that knows the problem
// structure. Z0 must satisfy the equalities, hold every inequality strictly,
// and be PD; y0 must give S0 = obj - sum y0_j A_j PD with y0 < 0 on
// inequality rows.
struct SdpStart {
  Eigen::MatrixXd Z0;
  Eigen::VectorXd y0;
};

class SdpError : public std::runtime_error {
 public:
  explicit SdpError(const std::string& m) : std::runtime_error(m) {}
};

namespace detail {

inline double inner(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a.array() * b.array()).sum();
}

// Largest step alpha with X + alpha*D staying PSD, given chol(X).
inline double max_psd_step(const Eigen::LLT<Eigen::MatrixXd>& llt,
                           const Eigen::MatrixXd& D) {
  const auto& L = llt.matrixL();
  Eigen::MatrixXd Y = L.solve(D);
  Eigen::MatrixXd A = L.solve(Y.transpose()).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
      0.5 * (A + A.transpose()), Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues().minCoeff();
  if (lmin >= 0) return std::numeric_limits<double>::infinity();
  return -1.0 / lmin;
}

inline double max_orthant_step(const Eigen::VectorXd& x,
                               const Eigen::VectorXd& dx) {
  double a = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (dx[i] < 0) a = std::min(a, -x[i] / dx[i]);
  return a;
}

// Nesterov-Todd scaling point: W with W S W = Z. Computed from the Cholesky
// factors of Z and S through an SVD of Ls^T Lz.
inline Eigen::MatrixXd nt_scaling(const Eigen::LLT<Eigen::MatrixXd>& lltZ,
                                  const Eigen::LLT<Eigen::MatrixXd>& lltS) {
  Eigen::MatrixXd Lz = lltZ.matrixL();
  Eigen::MatrixXd Ls = lltS.matrixL();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(
      Ls.transpose() * Lz, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::MatrixXd V = svd.matrixV();
  Eigen::VectorXd sig_inv = svd.singularValues().cwiseInverse();
  Eigen::MatrixXd W =
      Lz * V * sig_inv.asDiagonal() * V.transpose() * Lz.transpose();
  return 0.5 * (W + W.transpose());
}

}  // namespace detail

struct SdpOptions {
  double tol = 1e-8;
  int max_iterations = 100;
  double step_fraction = 0.98;
};

// Primal-dual path-following interior-point method with Nesterov-Todd
// scaling and a Mehrotra-style adaptive centering parameter. Inequalities
// are handled through nonnegative slack variables, which form a diagonal
// second cone block. Dense factorizations throughout; intended for n up to
// a few hundred.
inline SdpSolution solve_sdp(const SdpStandardForm& prob,
                             const SdpOptions& opts = {},
                             const std::optional<SdpStart>& start = std::nullopt) {
  const int n = prob.n;
  const int n_eq = static_cast<int>(prob.eqs.size());
  const int m = static_cast<int>(prob.ineqs.size());
  const int p = n_eq + m;
  if (n < 1) throw SdpError("empty problem");
  if (p < 1) throw SdpError("at least one constraint is required");

  // Scale objective and constraints to unit Frobenius norm.
  const double f_obj = std::max(1.0, prob.obj.norm());
  Eigen::MatrixXd obj = prob.obj / f_obj;

  std::vector<Eigen::MatrixXd> A(p);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
  std::vector<int> slack(p, -1);  // index into u for inequality rows
  Eigen::VectorXd f_con(p);
  for (int j = 0; j < n_eq; ++j) {
    f_con[j] = std::max(1e-12, prob.eqs[j].first.norm());
    A[j] = prob.eqs[j].first / f_con[j];
    b[j] = prob.eqs[j].second / f_con[j];
  }
  for (int i = 0; i < m; ++i) {
    const int j = n_eq + i;
    f_con[j] = std::max(1e-12, prob.ineqs[i].norm());
    A[j] = prob.ineqs[i] / f_con[j];
    b[j] = 0.0;
    slack[j] = i;
  }

  // ---- starting point -------------------------------------------------
  Eigen::MatrixXd Z, S;
  Eigen::VectorXd u(m), sig(m), y = Eigen::VectorXd::Zero(p);
  bool started_feasible = false;

  auto try_feasible_primal = [&]() -> bool {
    if (n_eq != 1) return false;
    const double tr = A[0].trace();
    if (std::abs(tr) < 1e-12) return false;
    const double alpha = b[0] / tr;
    if (alpha <= 0) return false;
    for (int i = 0; i < m; ++i)
      if (alpha * A[n_eq + i].trace() >= -1e-12) return false;
    Z = alpha * Eigen::MatrixXd::Identity(n, n);
    for (int i = 0; i < m; ++i) u[i] = -alpha * A[n_eq + i].trace();
    return true;
  };

  if (start.has_value()) {
    Z = start->Z0;
    // Scaled multipliers: y_scaled_j = y_j * f_con_j / f_obj keeps
    // sum y_scaled_j A_scaled_j equal to (sum y_j A_j) / f_obj.
    for (int j = 0; j < p; ++j) y[j] = start->y0[j] * f_con[j] / f_obj;
    for (int i = 0; i < m; ++i) {
      u[i] = -detail::inner(A[n_eq + i], Z);
      if (!(u[i] > 0)) throw SdpError("warm start violates an inequality");
      sig[i] = -y[n_eq + i];
      if (!(sig[i] > 0)) throw SdpError("warm start has nonnegative inequality multiplier");
    }
    S = obj;
    for (int j = 0; j < p; ++j) S -= y[j] * A[j];
    S = 0.5 * (S + S.transpose());
    started_feasible = true;
  } else if (try_feasible_primal()) {
    // Dual side: y = 0 works when there are no inequalities and obj is PD.
    bool dual_ok = false;
    if (m == 0) {
      Eigen::LLT<Eigen::MatrixXd> llt(obj);
      dual_ok = llt.info() == Eigen::Success;
    }
    if (dual_ok) {
      S = obj;
      started_feasible = true;
    } else {
      const double sd = std::max(1.0, obj.norm() / std::sqrt(double(n)));
      S = sd * Eigen::MatrixXd::Identity(n, n);
      sig.setConstant(m, sd);
    }
  } else {
    const double sp = std::max(1.0, b.cwiseAbs().maxCoeff()) * n;
    Z = sp * Eigen::MatrixXd::Identity(n, n);
    u.setConstant(m, sp);
    const double sd = std::max(1.0, obj.norm() / std::sqrt(double(n)));
    S = sd * Eigen::MatrixXd::Identity(n, n);
    sig.setConstant(m, sd);
  }

  const double cone_dim = n + m;
  SdpSolution sol;

  auto unscaled_primal = [&]() { return detail::inner(obj, Z) * f_obj; };
  auto unscaled_dual = [&]() {
    double v = 0;
    for (int j = 0; j < p; ++j) v += b[j] * y[j];
    return v * f_obj;
  };

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    // Residuals.
    Eigen::VectorXd rp = b;
    for (int j = 0; j < p; ++j) {
      rp[j] -= detail::inner(A[j], Z);
      if (slack[j] >= 0) rp[j] -= u[slack[j]];
    }
    Eigen::MatrixXd Rd = obj - S;
    for (int j = 0; j < p; ++j) Rd -= y[j] * A[j];
    Rd = 0.5 * (Rd + Rd.transpose());
    Eigen::VectorXd rlp(m);
    for (int i = 0; i < m; ++i) rlp[i] = -y[n_eq + i] - sig[i];

    const double gap_total = detail::inner(Z, S) + u.dot(sig);
    const double mu = gap_total / cone_dim;
    const double pobj = unscaled_primal();
    const double dobj = unscaled_dual();

    const double rp_rel = rp.cwiseAbs().maxCoeff() / (1.0 + b.cwiseAbs().maxCoeff());
    const double rd_rel =
        (Rd.norm() + (m ? rlp.cwiseAbs().maxCoeff() : 0.0)) / (1.0 + obj.norm());
    const double gap_rel =
        gap_total * f_obj / (1.0 + std::abs(pobj) + std::abs(dobj));

    IterateLog log;
    log.primal_obj = pobj;
    log.dual_obj = dobj;
    log.mu = mu;
    log.rp = rp_rel;
    log.rd = rd_rel;
    log.primal_feasible = rp_rel <= 1e-7;
    log.dual_feasible = rd_rel <= 1e-7;
    sol.history.push_back(log);

    if (rp_rel <= opts.tol && rd_rel <= opts.tol && gap_rel <= opts.tol) {
      sol.iterations = iter;
      break;
    }
    if (iter == opts.max_iterations - 1)
      throw SdpError("interior-point method did not converge in " +
                     std::to_string(opts.max_iterations) + " iterations");
    if (!Z.allFinite() || !S.allFinite() || Z.norm() > 1e14 || S.norm() > 1e14)
      throw SdpError("iterates diverged; problem is likely infeasible or unbounded");

    // NT scaling for both cone blocks.
    Eigen::LLT<Eigen::MatrixXd> lltZ(Z), lltS(S);
    if (lltZ.info() != Eigen::Success || lltS.info() != Eigen::Success)
      throw SdpError("iterate left the cone interior");
    Eigen::MatrixXd W = detail::nt_scaling(lltZ, lltS);
    Eigen::VectorXd w2 = u.cwiseQuotient(sig);  // LP-block scaling squared

    // Schur complement.
    std::vector<Eigen::MatrixXd> WAW(p);
    for (int j = 0; j < p; ++j) {
      Eigen::MatrixXd t = W * A[j] * W;
      WAW[j] = 0.5 * (t + t.transpose());
    }
    Eigen::MatrixXd M(p, p);
    for (int j = 0; j < p; ++j)
      for (int k = 0; k <= j; ++k) {
        const double v = detail::inner(A[j], WAW[k]);
        M(j, k) = v;
        M(k, j) = v;
      }
    for (int j = 0; j < p; ++j)
      if (slack[j] >= 0) M(j, j) += w2[slack[j]];
    Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
    if (ldlt.info() != Eigen::Success)
      throw SdpError("Schur complement factorization failed");

    Eigen::MatrixXd WRdW = W * Rd * W;
    WRdW = 0.5 * (WRdW + WRdW.transpose());
    Eigen::MatrixXd Sinv = lltS.solve(Eigen::MatrixXd::Identity(n, n));
    Sinv = 0.5 * (Sinv + Sinv.transpose());

    auto solve_direction = [&](double sigma_mu, Eigen::MatrixXd& dZ,
                               Eigen::VectorXd& dy, Eigen::MatrixXd& dS,
                               Eigen::VectorXd& du, Eigen::VectorXd& dsig) {
      Eigen::MatrixXd Rc = sigma_mu * Sinv - Z;
      Eigen::VectorXd rhs(p);
      for (int j = 0; j < p; ++j) {
        rhs[j] = rp[j] - detail::inner(A[j], Rc) + detail::inner(A[j], WRdW);
        if (slack[j] >= 0) {
          const int i = slack[j];
          const double rc_i = sigma_mu / sig[i] - u[i];
          rhs[j] -= rc_i - w2[i] * rlp[i];
        }
      }
      dy = ldlt.solve(rhs);
      dS = Rd;
      for (int j = 0; j < p; ++j) dS -= dy[j] * A[j];
      dS = 0.5 * (dS + dS.transpose());
      dZ = Rc - W * dS * W;
      dZ = 0.5 * (dZ + dZ.transpose());
      dsig.resize(m);
      du.resize(m);
      for (int i = 0; i < m; ++i) {
        dsig[i] = rlp[i] - dy[n_eq + i];
        du[i] = (sigma_mu / sig[i] - u[i]) - w2[i] * dsig[i];
      }
    };

    auto step_lengths = [&](const Eigen::MatrixXd& dZ, const Eigen::VectorXd& du,
                            const Eigen::MatrixXd& dS, const Eigen::VectorXd& dsig) {
      double ap = detail::max_psd_step(lltZ, dZ);
      double ad = detail::max_psd_step(lltS, dS);
      if (m) {
        ap = std::min(ap, detail::max_orthant_step(u, du));
        ad = std::min(ad, detail::max_orthant_step(sig, dsig));
      }
      ap = std::min(1.0, opts.step_fraction * ap);
      ad = std::min(1.0, opts.step_fraction * ad);
      return std::make_pair(ap, ad);
    };

    // Predictor.
    Eigen::MatrixXd dZ, dS;
    Eigen::VectorXd dy, du, dsig;
    solve_direction(0.0, dZ, dy, dS, du, dsig);
    auto [ap_aff, ad_aff] = step_lengths(dZ, du, dS, dsig);
    const double gap_aff = detail::inner(Z + ap_aff * dZ, S + ad_aff * dS) +
                           (u + ap_aff * du).dot(sig + ad_aff * dsig);
    double sigma = std::pow(std::max(gap_aff, 0.0) / gap_total, 3.0);
    sigma = std::min(std::max(sigma, 1e-8), 0.99);

    // Corrector (recentering with the adaptive sigma).
    solve_direction(sigma * mu, dZ, dy, dS, du, dsig);
    auto [ap, ad] = step_lengths(dZ, du, dS, dsig);
    if (ap < 1e-12 && ad < 1e-12)
      throw SdpError("step length collapsed; problem is likely ill-posed");

    Z += ap * dZ;
    u += ap * du;
    y += ad * dy;
    S += ad * dS;
    sig += ad * dsig;
    sol.iterations = iter + 1;
  }

  // Unscale.
  sol.Z = Z;
  sol.objective_value = unscaled_primal();
  sol.dual_objective = unscaled_dual();
  sol.gap = sol.objective_value - sol.dual_objective;
  sol.y.resize(p);
  for (int j = 0; j < p; ++j) sol.y[j] = y[j] * f_obj / f_con[j];
  double worst = 0;
  for (int j = 0; j < n_eq; ++j)
    worst = std::max(worst, std::abs(detail::inner(prob.eqs[j].first, Z) -
                                     prob.eqs[j].second));
  for (int i = 0; i < m; ++i)
    worst = std::max(worst, std::max(0.0, detail::inner(prob.ineqs[i], Z)));
  sol.primal_residual = worst;
  (void)started_feasible;
  return sol;
}

// ---- independent residual checker ------------------------------------------

struct ResidualReport {
  double min_eigenvalue = 0;       // of Z
  double z_spectral_norm = 0;
  double eq_residual = 0;          // max |tr(A Z) - b|
  double ineq_residual = 0;        // max positive part of tr(Q Z)
  double dual_slack_min_eig = 0;   // of obj - sum y_j A_j
  double ineq_multiplier_max = 0;  // max y_i over inequality rows (should be <= 0)
  double duality_gap = 0;          // primal - dual
  double primal_obj = 0, dual_obj = 0;
  bool ok = false;
};

// Recomputes every contract quantity from (problem, Z, y) alone.
inline ResidualReport check_solution(const SdpStandardForm& prob,
                                     const SdpSolution& sol,
                                     double tol = 1e-8) {
  ResidualReport r;
  const int n_eq = static_cast<int>(prob.eqs.size());
  const int m = static_cast<int>(prob.ineqs.size());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esZ(
      0.5 * (sol.Z + sol.Z.transpose()), Eigen::EigenvaluesOnly);
  r.min_eigenvalue = esZ.eigenvalues().minCoeff();
  r.z_spectral_norm = esZ.eigenvalues().cwiseAbs().maxCoeff();

  r.primal_obj = detail::inner(prob.obj, sol.Z);
  for (int j = 0; j < n_eq; ++j)
    r.eq_residual =
        std::max(r.eq_residual, std::abs(detail::inner(prob.eqs[j].first, sol.Z) -
                                         prob.eqs[j].second));
  for (int i = 0; i < m; ++i)
    r.ineq_residual =
        std::max(r.ineq_residual, std::max(0.0, detail::inner(prob.ineqs[i], sol.Z)));

  Eigen::MatrixXd Sd = prob.obj;
  double dual = 0;
  for (int j = 0; j < n_eq; ++j) {
    Sd -= sol.y[j] * prob.eqs[j].first;
    dual += sol.y[j] * prob.eqs[j].second;
  }
  r.ineq_multiplier_max = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < m; ++i) {
    Sd -= sol.y[n_eq + i] * prob.ineqs[i];
    r.ineq_multiplier_max = std::max(r.ineq_multiplier_max, sol.y[n_eq + i]);
  }
  if (m == 0) r.ineq_multiplier_max = 0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esS(
      0.5 * (Sd + Sd.transpose()), Eigen::EigenvaluesOnly);
  r.dual_slack_min_eig = esS.eigenvalues().minCoeff();
  r.dual_obj = dual;
  r.duality_gap = r.primal_obj - r.dual_obj;

  const double scale = 1.0 + std::abs(r.primal_obj) + std::abs(r.dual_obj);
  const double con_scale = 1.0 + r.z_spectral_norm;
  r.ok = r.min_eigenvalue >= -tol * std::max(1.0, r.z_spectral_norm) &&
         r.eq_residual <= tol * con_scale * 10 &&
         r.ineq_residual <= tol * con_scale * 10 &&
         r.dual_slack_min_eig >= -tol * std::max(1.0, Sd.norm()) &&
         r.ineq_multiplier_max <= tol &&
         r.duality_gap >= -10 * tol * scale && r.duality_gap <= 10 * tol * scale;
  return r;
}

// Debug dump for regression fixtures.
inline nlohmann::json dump_debug(const SdpStandardForm& prob,
                                 const SdpSolution& sol) {
  auto mat_to_json = [](const Eigen::MatrixXd& M) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
      rows.push_back(row);
    }
    return rows;
  };
  nlohmann::json j;
  j["n"] = prob.n;
  j["obj"] = mat_to_json(prob.obj);
  j["eqs"] = nlohmann::json::array();
  for (const auto& [Aj, bj] : prob.eqs)
    j["eqs"].push_back({{"mat", mat_to_json(Aj)}, {"rhs", bj}});
  j["ineqs"] = nlohmann::json::array();
  for (const auto& Q : prob.ineqs) j["ineqs"].push_back(mat_to_json(Q));
  j["Z"] = mat_to_json(sol.Z);
  j["y"] = std::vector<double>(sol.y.data(), sol.y.data() + sol.y.size());
  j["objective_value"] = sol.objective_value;
  j["dual_objective"] = sol.dual_objective;
  j["primal_residual"] = sol.primal_residual;
  j["gap"] = sol.gap;
  j["iterations"] = sol.iterations;
  return j;
}

}  // namespace airfl::sdp
