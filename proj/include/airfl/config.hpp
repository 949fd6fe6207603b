#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace airfl {

enum class ConstraintMode { individual, sum };

inline std::string to_string(ConstraintMode m) {
  return m == ConstraintMode::individual ? "individual" : "sum";
}

inline ConstraintMode constraint_mode_from_string(const std::string& s) {
  if (s == "individual") return ConstraintMode::individual;
  if (s == "sum") return ConstraintMode::sum;
  throw std::invalid_argument("unknown constraint_mode: " + s);
}

// All run-level scalars and schedules. Immutable after construction; every
// other module reads from here.
struct SystemConfig {
  int K = 20;                    // device count
  int d = 1;                     // model dimension
  int E = 5;                     // local SGD iterations per round
  int B = 100;                   // mini-batch size
  double L = 10.0;               // smoothness constant used by the bound
  double eta0 = 1.0 / (20.0 * 5.0 * 10.0);
  double eta_decay = 0.995;
  int decay_period = 30;
  double sigma_d2 = 0.01;        // downlink noise power
  double sigma_u2 = 0.01;        // uplink noise power
  double p_dl_max = 10.0;        // downlink power budget
  Eigen::VectorXd p_k_max;       // per-device uplink budgets, length K
  double p_tot = 100.0;          // sum uplink budget
  ConstraintMode constraint_mode = ConstraintMode::individual;
  int T = 100;                   // round budget
  std::uint64_t seed = 1;
  bool skip_unselected_compute = false;  // skip local SGD when a scheme
                                         // deselects before computing
  double mu2 = 0.0;   // reported gradient-variance surrogate, not optimized over
  double delta = 0.0; // reported heterogeneity surrogate, not optimized over
};

// Operating point used throughout the experiments: budgets scale with the
// model dimension, eta0 = 1/(20 E L).
inline SystemConfig default_config(int d, int K = 20) {
  SystemConfig cfg;
  cfg.K = K;
  cfg.d = d;
  cfg.p_dl_max = 10.0 * d;
  cfg.p_k_max = Eigen::VectorXd::Constant(K, 5.0 * d);
  cfg.p_tot = 5.0 * d * K;
  return cfg;
}

inline double learning_rate(const SystemConfig& cfg, int t) {
  if (t < 1) throw std::invalid_argument("round index must be >= 1");
  const int steps = (t - 1) / cfg.decay_period;
  return cfg.eta0 * std::pow(cfg.eta_decay, steps);
}

struct Diagnostic {
  enum class Severity { warning, error };
  Severity severity;
  std::string message;
};

inline std::vector<Diagnostic> validate(const SystemConfig& cfg) {
  std::vector<Diagnostic> out;
  auto err = [&](const std::string& m) {
    out.push_back({Diagnostic::Severity::error, m});
  };
  auto warn = [&](const std::string& m) {
    out.push_back({Diagnostic::Severity::warning, m});
  };

  if (cfg.K < 1) err("K must be >= 1");
  if (cfg.d < 1) err("d must be >= 1");
  if (cfg.E < 1) err("E must be >= 1");
  if (cfg.B < 1) err("B must be >= 1");
  if (!(cfg.L > 0) || !std::isfinite(cfg.L)) err("L must be finite and > 0");
  if (!(cfg.eta0 > 0) || !std::isfinite(cfg.eta0)) err("eta0 must be finite and > 0");
  if (!(cfg.eta_decay > 0 && cfg.eta_decay <= 1)) err("eta_decay must lie in (0,1]");
  if (cfg.decay_period < 1) err("decay_period must be >= 1");
  if (!(cfg.sigma_d2 >= 0) || !std::isfinite(cfg.sigma_d2)) err("sigma_d2 must be finite and >= 0");
  if (!(cfg.sigma_u2 >= 0) || !std::isfinite(cfg.sigma_u2)) err("sigma_u2 must be finite and >= 0");
  if (!(cfg.p_dl_max > 0) || !std::isfinite(cfg.p_dl_max)) err("p_dl_max must be finite and > 0");
  if (cfg.p_k_max.size() != cfg.K) {
    err("p_k_max must have length K");
  } else {
    for (int k = 0; k < cfg.K; ++k) {
      if (!(cfg.p_k_max[k] > 0) || !std::isfinite(cfg.p_k_max[k])) {
        err("p_k_max[" + std::to_string(k) + "] must be finite and > 0");
        break;
      }
    }
  }
  if (!(cfg.p_tot > 0) || !std::isfinite(cfg.p_tot)) err("p_tot must be finite and > 0");
  if (cfg.T < 1) err("T must be >= 1");
  if (cfg.mu2 < 0 || cfg.delta < 0) err("mu2 and delta must be >= 0");

  // Contraction condition on the learning rate; exceeding it does not stop a
  // run, the per-round factor just stops being < 1.
  const double eta_cap = 1.0 / (20.0 * cfg.E * cfg.L);
  if (cfg.eta0 > 0 && cfg.E >= 1 && cfg.L > 0 && cfg.eta0 > eta_cap) {
    warn("eta0 exceeds 1/(20*E*L); per-round contraction is not guaranteed");
  }
  return out;
}

inline bool has_errors(const std::vector<Diagnostic>& diags) {
  for (const auto& dg : diags)
    if (dg.severity == Diagnostic::Severity::error) return true;
  return false;
}

namespace detail {

inline void require_known_keys(const nlohmann::json& j,
                               const std::vector<std::string>& known,
                               const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool found = false;
    for (const auto& k : known)
      if (it.key() == k) { found = true; break; }
    if (!found)
      throw std::invalid_argument("unknown key '" + it.key() + "' in " + where);
  }
}

}  // namespace detail

// Keys match the field names exactly; anything else is rejected. Budgets
// default from d when omitted. p_k_max accepts a scalar (applied to every
// device) or a length-K array.
inline SystemConfig config_from_json(const nlohmann::json& j) {
  detail::require_known_keys(
      j,
      {"K", "d", "E", "B", "L", "eta0", "eta_decay", "decay_period",
       "sigma_d2", "sigma_u2", "p_dl_max", "p_k_max", "p_tot",
       "constraint_mode", "T", "seed", "skip_unselected_compute", "mu2",
       "delta"},
      "system config");

  SystemConfig cfg;
  cfg.K = j.value("K", 20);
  cfg.d = j.value("d", 1);
  cfg.E = j.value("E", 5);
  cfg.B = j.value("B", 100);
  cfg.L = j.value("L", 10.0);
  cfg.eta0 = j.value("eta0", 1.0 / (20.0 * cfg.E * cfg.L));
  cfg.eta_decay = j.value("eta_decay", 0.995);
  cfg.decay_period = j.value("decay_period", 30);
  cfg.sigma_d2 = j.value("sigma_d2", 0.01);
  cfg.sigma_u2 = j.value("sigma_u2", 0.01);
  cfg.p_dl_max = j.value("p_dl_max", 10.0 * cfg.d);
  if (j.contains("p_k_max")) {
    const auto& v = j.at("p_k_max");
    if (v.is_array()) {
      cfg.p_k_max.resize(static_cast<Eigen::Index>(v.size()));
      for (Eigen::Index k = 0; k < cfg.p_k_max.size(); ++k)
        cfg.p_k_max[k] = v.at(static_cast<std::size_t>(k)).get<double>();
    } else {
      cfg.p_k_max = Eigen::VectorXd::Constant(cfg.K, v.get<double>());
    }
  } else {
    cfg.p_k_max = Eigen::VectorXd::Constant(cfg.K, 5.0 * cfg.d);
  }
  cfg.p_tot = j.value("p_tot", 5.0 * cfg.d * cfg.K);
  cfg.constraint_mode =
      constraint_mode_from_string(j.value("constraint_mode", std::string("individual")));
  cfg.T = j.value("T", 100);
  cfg.seed = j.value("seed", std::uint64_t{1});
  cfg.skip_unselected_compute = j.value("skip_unselected_compute", false);
  cfg.mu2 = j.value("mu2", 0.0);
  cfg.delta = j.value("delta", 0.0);
  return cfg;
}

inline nlohmann::json config_to_json(const SystemConfig& cfg) {
  nlohmann::json j;
  j["K"] = cfg.K;
  j["d"] = cfg.d;
  j["E"] = cfg.E;
  j["B"] = cfg.B;
  j["L"] = cfg.L;
  j["eta0"] = cfg.eta0;
  j["eta_decay"] = cfg.eta_decay;
  j["decay_period"] = cfg.decay_period;
  j["sigma_d2"] = cfg.sigma_d2;
  j["sigma_u2"] = cfg.sigma_u2;
  j["p_dl_max"] = cfg.p_dl_max;
  j["p_k_max"] = std::vector<double>(cfg.p_k_max.data(),
                                     cfg.p_k_max.data() + cfg.p_k_max.size());
  j["p_tot"] = cfg.p_tot;
  j["constraint_mode"] = to_string(cfg.constraint_mode);
  j["T"] = cfg.T;
  j["seed"] = cfg.seed;
  j["skip_unselected_compute"] = cfg.skip_unselected_compute;
  j["mu2"] = cfg.mu2;
  j["delta"] = cfg.delta;
  return j;
}

}  // namespace airfl
