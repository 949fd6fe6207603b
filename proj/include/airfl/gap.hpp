#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "airfl/config.hpp"
#include "airfl/sdp.hpp"

namespace airfl::gap {

// Per-round power-control problem: minimize
//     (p' diag(theta) p + c) / (1' p)^2
// over p >= 0 subject to q_k p_k^2 <= P_k (individual) or
// sum_k q_k p_k^2 <= P_tot (sum).
struct GapProblem {
  Eigen::VectorXd theta;
  double c = 0.0;
  Eigen::VectorXd q_diag;
  Eigen::VectorXd budgets;  // length K (individual) or length 1 (sum)
  ConstraintMode mode = ConstraintMode::individual;

  int K() const { return static_cast<int>(theta.size()); }
};

// Homogenized lifting: z = (y, s) with y = s p, minimized over the PSD
// matrix Z = z z' after dropping the rank-one constraint.
struct SdpProblem {
  int K = 0;
  Eigen::MatrixXd objective;            // blockdiag(diag(theta), c)
  Eigen::MatrixXd normalization;        // blockdiag(ones, 0), tr(. Z) = 1
  std::vector<Eigen::MatrixXd> ineqs;   // blockdiag(Q_k, -P_k) or single sum form
  ConstraintMode mode = ConstraintMode::individual;
};

class GapError : public std::runtime_error {
 public:
  explicit GapError(const std::string& m) : std::runtime_error(m) {}
};

inline double sum_power_used(const GapProblem& gp, const Eigen::VectorXd& p) {
  return p.array().square().matrix().dot(gp.q_diag);
}

// Worst constraint violation of p, in absolute power units.
inline double feasibility_residual(const GapProblem& gp,
                                   const Eigen::VectorXd& p) {
  if (gp.mode == ConstraintMode::individual) {
    double worst = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < gp.K(); ++k)
      worst = std::max(worst, gp.q_diag[k] * p[k] * p[k] - gp.budgets[k]);
    return worst;
  }
  return sum_power_used(gp, p) - gp.budgets[0];
}

inline double gap_objective(const GapProblem& gp, const Eigen::VectorXd& p) {
  const double den = p.sum();
  if (!(den > 0)) throw GapError("objective undefined for sum(p) <= 0");
  return (p.array().square().matrix().dot(gp.theta) + gp.c) / (den * den);
}

inline GapProblem build_problem(const Eigen::VectorXd& h_dl_abs2,
                                const Eigen::VectorXd& h_up_abs2,
                                const Eigen::VectorXd& update_norm2,
                                const SystemConfig& cfg, double eta,
                                double w_norm2) {
  const int K = cfg.K;
  if (h_dl_abs2.size() != K || h_up_abs2.size() != K || update_norm2.size() != K)
    throw GapError("channel/update vectors must have length K");
  if (!(w_norm2 > 0)) throw GapError("global model norm must be positive");
  const double eel = eta * cfg.E * cfg.L;
  const double denom = 1.0 - 4.0 * eel * eel;
  if (!(denom > 0))
    throw GapError("learning rate too large: 1 - 4*eta^2*E^2*L^2 <= 0");

  const double p_dl_bar = cfg.p_dl_max / w_norm2;
  const double factor = (1.0 + 2.0 * eta * cfg.E + 4.0 * eel * eel) / denom;
  const double dl_scale = cfg.d * cfg.sigma_d2 * cfg.L * factor / p_dl_bar;

  GapProblem gp;
  gp.mode = cfg.constraint_mode;
  gp.theta.resize(K);
  gp.q_diag.resize(K);
  for (int k = 0; k < K; ++k) {
    if (!(h_dl_abs2[k] > 0) || !(h_up_abs2[k] > 0))
      throw GapError("channel gains must be positive");
    if (!(update_norm2[k] > 0))
      throw GapError("local update norm must be positive");
    gp.theta[k] = dl_scale / h_dl_abs2[k];
    gp.q_diag[k] = update_norm2[k] / h_up_abs2[k];
  }
  gp.c = 2.0 * cfg.d * cfg.sigma_u2 * cfg.L;
  if (gp.mode == ConstraintMode::individual) {
    gp.budgets = cfg.p_k_max;
  } else {
    gp.budgets.resize(1);
    gp.budgets[0] = cfg.p_tot;
  }
  return gp;
}

inline SdpProblem homogenize(const GapProblem& gp) {
  const int K = gp.K();
  const int n = K + 1;
  SdpProblem sp;
  sp.K = K;
  sp.mode = gp.mode;
  sp.objective = Eigen::MatrixXd::Zero(n, n);
  sp.objective.topLeftCorner(K, K) = gp.theta.asDiagonal();
  sp.objective(K, K) = gp.c;
  sp.normalization = Eigen::MatrixXd::Zero(n, n);
  sp.normalization.topLeftCorner(K, K).setOnes();
  if (gp.mode == ConstraintMode::individual) {
    for (int k = 0; k < K; ++k) {
      Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n, n);
      Q(k, k) = gp.q_diag[k];
      Q(K, K) = -gp.budgets[k];
      sp.ineqs.push_back(std::move(Q));
    }
  } else {
    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n, n);
    Q.topLeftCorner(K, K) = gp.q_diag.asDiagonal();
    Q(K, K) = -gp.budgets[0];
    sp.ineqs.push_back(std::move(Q));
  }
  return sp;
}

inline sdp::SdpStandardForm to_standard_form(const SdpProblem& sp) {
  sdp::SdpStandardForm f;
  f.n = sp.K + 1;
  f.obj = sp.objective;
  f.eqs.emplace_back(sp.normalization, 1.0);
  f.ineqs = sp.ineqs;
  return f;
}

// Strictly feasible primal/dual pair exploiting the block structure; valid
// whenever c > 0 and all q_diag, budgets are positive.
inline sdp::SdpStart make_warm_start(const GapProblem& gp) {
  const int K = gp.K();
  const int n = K + 1;
  const int m =
      gp.mode == ConstraintMode::individual ? K : 1;

  double t = 1.0;
  if (gp.mode == ConstraintMode::individual) {
    for (int k = 0; k < K; ++k)
      t = std::max(t, 2.0 * gp.q_diag[k] / (K * gp.budgets[k]));
  } else {
    t = std::max(1.0, 2.0 * gp.q_diag.sum() / (K * gp.budgets[0]));
  }
  Eigen::MatrixXd Z0 = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k < K; ++k) Z0(k, k) = 1.0 / K;
  Z0(K, K) = t;

  const double budget_sum =
      gp.mode == ConstraintMode::individual ? gp.budgets.sum() : gp.budgets[0];
  if (!(gp.c > 0))
    throw GapError("warm start requires a positive uplink-noise coefficient");
  const double eps = 0.5 * gp.c / budget_sum;

  sdp::SdpStart st;
  st.Z0 = Z0;
  st.y0.resize(1 + m);
  st.y0[0] = -0.1 * (1.0 + gp.theta.maxCoeff());
  for (int i = 0; i < m; ++i) st.y0[1 + i] = -eps;
  return st;
}

struct RecoveredSolution {
  Eigen::VectorXd p;
  double rank_residual = 0;  // ||Z_K - b b'||_F / ||Z_K||_F
};

// Extracts p from the leading K x K block of Z through its dominant
// eigenpair. The relaxation is expected to be tight; a residual above the
// gate is reported as an error rather than repaired.
inline RecoveredSolution recover_power_vector(const Eigen::MatrixXd& Z, int K,
                                              double residual_gate = 1e-6) {
  if (Z.rows() != K + 1 || Z.cols() != K + 1)
    throw GapError("solution matrix has wrong dimension");
  const double s2 = Z(K, K);
  const double scale = std::max(Z.trace(), 0.0);
  if (!(s2 > 1e-12 * std::max(scale, 1.0)))
    throw GapError("homogenization variable vanished in the SDP solution");

  Eigen::MatrixXd Zk = 0.5 * (Z.topLeftCorner(K, K) +
                              Z.topLeftCorner(K, K).transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Zk);
  const Eigen::VectorXd& ev = es.eigenvalues();  // ascending
  const double lmax = ev[K - 1];
  if (!(lmax > 0)) throw GapError("leading block of the SDP solution is zero");

  double resid2 = 0;
  for (int i = 0; i < K - 1; ++i) resid2 += ev[i] * ev[i];
  const double rank_residual = std::sqrt(resid2) / Zk.norm();
  if (rank_residual > residual_gate)
    throw GapError("relaxation not tight: rank-one residual " +
                   std::to_string(rank_residual));

  Eigen::VectorXd b = std::sqrt(lmax) * es.eigenvectors().col(K - 1);
  if (b.sum() < 0) b = -b;
  const double clamp = 1e-9 * b.cwiseAbs().maxCoeff();
  for (int k = 0; k < K; ++k) {
    if (b[k] < 0) {
      if (b[k] > -clamp)
        b[k] = 0.0;
      else
        throw GapError("recovered power vector has a negative entry");
    }
  }
  RecoveredSolution out;
  out.p = b / std::sqrt(s2);
  out.rank_residual = rank_residual;
  return out;
}

inline Eigen::VectorXi select_devices(const Eigen::VectorXd& p,
                                      double rel_threshold = 1e-8) {
  const double pmax = p.maxCoeff();
  if (!(pmax > 0)) throw GapError("all-zero power vector");
  Eigen::VectorXi a(p.size());
  for (Eigen::Index k = 0; k < p.size(); ++k)
    a[k] = p[k] > rel_threshold * pmax ? 1 : 0;
  return a;
}

struct GapSolveResult {
  Eigen::VectorXd p;
  Eigen::VectorXi a;
  double objective = 0;        // ratio objective evaluated at p
  double sdp_value = 0;        // relaxation primal value at termination
  double sdp_lower_bound = 0;  // certified bound (dual objective)
  double rank_residual = 0;
  int sdp_iterations = 0;
};

// Adapter seam: any solver satisfying the solve_sdp contract can be swapped
// in behind this signature.
using SdpBackend = std::function<sdp::SdpSolution(
    const sdp::SdpStandardForm&, const sdp::SdpOptions&,
    const std::optional<sdp::SdpStart>&)>;

inline sdp::SdpSolution default_backend(const sdp::SdpStandardForm& f,
                                        const sdp::SdpOptions& o,
                                        const std::optional<sdp::SdpStart>& s) {
  return sdp::solve_sdp(f, o, s);
}

inline void validate_problem(const GapProblem& gp) {
  const int K = gp.K();
  if (K < 1) throw GapError("empty problem");
  if (gp.q_diag.size() != K) throw GapError("q_diag has wrong length");
  const int want_budgets = gp.mode == ConstraintMode::individual ? K : 1;
  if (gp.budgets.size() != want_budgets) throw GapError("budgets have wrong length");
  for (int k = 0; k < K; ++k) {
    if (!(gp.theta[k] >= 0) || !std::isfinite(gp.theta[k]))
      throw GapError("theta must be finite and >= 0");
    if (!(gp.q_diag[k] > 0) || !std::isfinite(gp.q_diag[k]))
      throw GapError("q_diag must be finite and > 0");
  }
  for (Eigen::Index i = 0; i < gp.budgets.size(); ++i)
    if (!(gp.budgets[i] > 0) || !std::isfinite(gp.budgets[i]))
      throw GapError("budgets must be finite and > 0");
  if (!(gp.c >= 0) || !std::isfinite(gp.c)) throw GapError("c must be finite and >= 0");
}

// Largest feasible uniform scaling of the direction vector.
inline double scale_to_boundary(const GapProblem& gp,
                                const Eigen::VectorXd& dir) {
  if (gp.mode == ConstraintMode::individual) {
    double lam = std::numeric_limits<double>::infinity();
    for (int k = 0; k < gp.K(); ++k)
      if (dir[k] > 0)
        lam = std::min(lam, std::sqrt(gp.budgets[k] / gp.q_diag[k]) / dir[k]);
    return lam;
  }
  const double used = dir.array().square().matrix().dot(gp.q_diag);
  return std::sqrt(gp.budgets[0] / used);
}

inline GapSolveResult solve(const GapProblem& gp,
                            const sdp::SdpOptions& sdp_opts = {},
                            const SdpBackend& backend = default_backend) {
  validate_problem(gp);
  const int K = gp.K();
  GapSolveResult out;

  if (gp.theta.maxCoeff() == 0.0 && gp.c == 0.0) {
    // Noise-free objective is identically zero; return the equal-power point
    // scaled to the tightest budget so downstream weighting is uniform.
    Eigen::VectorXd dir = Eigen::VectorXd::Ones(K);
    out.p = scale_to_boundary(gp, dir) * dir;
    out.a = Eigen::VectorXi::Ones(K);
    out.objective = 0.0;
    out.sdp_value = 0.0;
    out.sdp_lower_bound = 0.0;
    return out;
  }

  if (gp.c == 0.0) {
    // Noise-free uplink: the objective is scale-invariant and reduces to a
    // diagonal Rayleigh quotient with closed-form minimizer p ~ 1/theta.
    Eigen::VectorXd dir = gp.theta.cwiseInverse();
    out.p = scale_to_boundary(gp, dir) * dir;
    out.a = select_devices(out.p);
    out.objective = gap_objective(gp, out.p);
    out.sdp_value = 1.0 / gp.theta.cwiseInverse().sum();
    out.sdp_lower_bound = out.sdp_value;
    return out;
  }

  const SdpProblem sp = homogenize(gp);
  const sdp::SdpStandardForm form = to_standard_form(sp);
  const sdp::SdpSolution sol = backend(form, sdp_opts, make_warm_start(gp));
  const RecoveredSolution rec = recover_power_vector(sol.Z, K);

  out.p = rec.p;
  out.rank_residual = rec.rank_residual;
  out.sdp_iterations = sol.iterations;
  out.sdp_value = sol.objective_value;
  out.sdp_lower_bound = sol.dual_objective;
  out.a = select_devices(out.p);
  out.objective = gap_objective(gp, out.p);

  const double budget_scale = gp.budgets.maxCoeff();
  if (feasibility_residual(gp, out.p) > 1e-8 * budget_scale)
    throw GapError("recovered power vector violates the power constraints");
  return out;
}

// Exhaustive grid search over the feasible box, used as an independent check
// of the relaxation pipeline on small instances.
struct OracleResult {
  Eigen::VectorXd p;
  double objective = std::numeric_limits<double>::infinity();
};

inline OracleResult brute_force_oracle(const GapProblem& gp, int grid = 200) {
  validate_problem(gp);
  const int K = gp.K();
  if (K > 3) throw GapError("oracle supports K <= 3 only");
  if (grid < 2) throw GapError("grid resolution must be >= 2");

  Eigen::VectorXd ub(K);
  for (int k = 0; k < K; ++k) {
    const double cap =
        gp.mode == ConstraintMode::individual ? gp.budgets[k] : gp.budgets[0];
    ub[k] = std::sqrt(cap / gp.q_diag[k]);
  }
  if (!(ub.maxCoeff() > 0)) throw GapError("empty feasible interior");

  std::vector<std::vector<double>> axis(K);
  for (int k = 0; k < K; ++k) {
    axis[k].resize(grid);
    for (int i = 0; i < grid; ++i)
      axis[k][i] = ub[k] * static_cast<double>(i) / (grid - 1);
  }

  const bool sum_mode = gp.mode == ConstraintMode::sum;
  const double p_tot = sum_mode ? gp.budgets[0] : 0.0;
  OracleResult best;
  Eigen::VectorXd cand(K);

  auto consider = [&](double num, double den, const double* vals) {
    if (!(den > 0)) return;
    const double obj = num / (den * den);
    if (obj < best.objective) {
      best.objective = obj;
      for (int k = 0; k < K; ++k) cand[k] = vals[k];
      best.p = cand;
    }
  };

  double vals[3] = {0, 0, 0};
  if (K == 1) {
    for (double p0 : axis[0]) {
      vals[0] = p0;
      consider(gp.theta[0] * p0 * p0 + gp.c, p0, vals);
    }
  } else if (K == 2) {
    for (double p0 : axis[0]) {
      const double n0 = gp.theta[0] * p0 * p0;
      const double q0 = gp.q_diag[0] * p0 * p0;
      for (double p1 : axis[1]) {
        if (sum_mode && q0 + gp.q_diag[1] * p1 * p1 > p_tot) break;
        vals[0] = p0;
        vals[1] = p1;
        consider(n0 + gp.theta[1] * p1 * p1 + gp.c, p0 + p1, vals);
      }
    }
  } else {
    for (double p0 : axis[0]) {
      const double n0 = gp.theta[0] * p0 * p0;
      const double q0 = gp.q_diag[0] * p0 * p0;
      for (double p1 : axis[1]) {
        const double n01 = n0 + gp.theta[1] * p1 * p1;
        const double q01 = q0 + gp.q_diag[1] * p1 * p1;
        if (sum_mode && q01 > p_tot) break;
        for (double p2 : axis[2]) {
          if (sum_mode && q01 + gp.q_diag[2] * p2 * p2 > p_tot) break;
          vals[0] = p0;
          vals[1] = p1;
          vals[2] = p2;
          consider(n01 + gp.theta[2] * p2 * p2 + gp.c, p0 + p1 + p2, vals);
        }
      }
    }
  }
  if (!best.p.size()) throw GapError("oracle found no feasible point");
  return best;
}

// ---- JSON round trip for regression fixtures --------------------------------

inline nlohmann::json problem_to_json(const GapProblem& gp) {
  nlohmann::json j;
  j["theta"] = std::vector<double>(gp.theta.data(), gp.theta.data() + gp.theta.size());
  j["c"] = gp.c;
  j["q_diag"] =
      std::vector<double>(gp.q_diag.data(), gp.q_diag.data() + gp.q_diag.size());
  j["budgets"] =
      std::vector<double>(gp.budgets.data(), gp.budgets.data() + gp.budgets.size());
  j["mode"] = to_string(gp.mode);
  return j;
}

inline GapProblem problem_from_json(const nlohmann::json& j) {
  GapProblem gp;
  auto vec = [](const nlohmann::json& a) {
    Eigen::VectorXd v(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i];
    return v;
  };
  gp.theta = vec(j.at("theta"));
  gp.c = j.at("c").get<double>();
  gp.q_diag = vec(j.at("q_diag"));
  gp.budgets = vec(j.at("budgets"));
  gp.mode = constraint_mode_from_string(j.at("mode").get<std::string>());
  return gp;
}

}  // namespace airfl::gap
