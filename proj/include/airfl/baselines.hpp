#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "airfl/engine.hpp"

namespace airfl::baselines {

using engine::LocalUpdate;
using engine::PowerDecision;
using engine::RoundResult;

// Error-free exchange with full participation and fixed data-fraction
// weights. Consumes no channel or noise randomness.
inline RoundResult ideal_fedavg_round(int round, const Eigen::VectorXd& w,
                                      const tasks::LearningTask& task,
                                      const data::Dataset& ds,
                                      const data::Partition& part,
                                      const SystemConfig& cfg) {
  const double eta = learning_rate(cfg, round);
  channel::ChannelDraw no_channels;  // unused: noiseless_downlink skips draws
  auto updates = engine::detail::run_local_phase(
      w, 0.0, no_channels, task, ds, part, cfg, eta, round,
      /*noiseless_downlink=*/true);
  RoundResult rr;
  rr.w_next = engine::weighted_average(updates, part.q);
  rr.record.round = round;
  rr.record.num_selected = cfg.K;
  // No wireless impairments: the noise-driven gap terms vanish.
  bound::RoundInputs in;
  in.eta = eta;
  in.E = cfg.E;
  in.L = cfg.L;
  in.d = cfg.d;
  in.sigma_d2 = 0;
  in.sigma_u2 = 0;
  in.mu2 = cfg.mu2;
  in.delta = cfg.delta;
  in.q = part.q;
  in.rho = part.q;
  in.h_dl_abs2 = Eigen::VectorXd::Ones(cfg.K);
  in.p_s2 = 1.0;
  in.p = Eigen::VectorXd::Ones(cfg.K);
  in.a = Eigen::VectorXi::Ones(cfg.K);
  const auto gb = bound::round_gap(in);
  rr.record.term_a = gb.term_a;
  rr.record.term_b = gb.term_b;
  rr.record.A_t = gb.A_t;
  return rr;
}

// Greedy prefix rule: devices sorted by achievable post-channel amplitude
// alpha_k = sqrt(P_k) |h_k| / ||w_k||; the largest prefix whose equal-weight
// aggregation MSE d sigma_u2 / (|S| min alpha)^2 stays under tau transmits at
// the common amplitude min alpha (inverted channels). Falls back to the
// single best device when no prefix passes.
inline PowerDecision mse_threshold_select(const channel::ChannelDraw& ch,
                                          const std::vector<LocalUpdate>& updates,
                                          const SystemConfig& cfg, double tau,
                                          double p_s) {
  const int K = cfg.K;
  Eigen::VectorXd alpha(K);
  for (int k = 0; k < K; ++k)
    alpha[k] = std::sqrt(cfg.p_k_max[k]) * std::abs(ch.h_up[k]) /
               std::sqrt(updates[k].norm2);

  std::vector<int> order(K);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return alpha[i] > alpha[j]; });

  int best_size = 0;
  for (int s = 1; s <= K; ++s) {
    const double a_min = alpha[order[s - 1]];
    const double mse = cfg.d * cfg.sigma_u2 / (s * a_min * s * a_min);
    if (mse <= tau) best_size = s;
  }
  if (best_size == 0) best_size = 1;

  PowerDecision dec;
  dec.p_s = p_s;
  dec.p = Eigen::VectorXd::Zero(K);
  dec.a = Eigen::VectorXi::Zero(K);
  const double a_common = alpha[order[best_size - 1]];
  for (int s = 0; s < best_size; ++s) {
    dec.p[order[s]] = a_common;
    dec.a[order[s]] = 1;
  }
  return dec;
}

// Aggregation MSE of the s-th prefix under the greedy rule above; exposed for
// threshold calibration.
inline double mse_of_prefix(const Eigen::VectorXd& alpha_sorted_desc, int s,
                            const SystemConfig& cfg) {
  const double a_min = alpha_sorted_desc[s - 1];
  return cfg.d * cfg.sigma_u2 / (s * a_min * s * a_min);
}

inline RoundResult mse_threshold_round(int round, const Eigen::VectorXd& w,
                                       const tasks::LearningTask& task,
                                       const data::Dataset& ds,
                                       const data::Partition& part,
                                       const SystemConfig& cfg, double tau) {
  const auto ch = channel::draw_round_channels(cfg.seed, round, cfg.K);
  const double eta = learning_rate(cfg, round);
  const double w_norm2 = w.squaredNorm();
  if (!(w_norm2 > 0)) throw engine::EngineError("global model has zero norm");
  const double p_s = std::sqrt(cfg.p_dl_max / w_norm2);

  auto updates = engine::detail::run_local_phase(w, p_s, ch, task, ds, part,
                                                 cfg, eta, round, false);
  const auto dec = mse_threshold_select(ch, updates, cfg, tau, p_s);

  auto g_up = rng::substream(cfg.seed, rng::Stream::noise_uplink,
                             static_cast<std::uint64_t>(round));
  RoundResult rr;
  rr.w_next = engine::aircomp_aggregate(updates, dec, ch.h_up, cfg, g_up);
  rr.record.round = round;
  rr.record.num_selected = dec.a.sum();
  rr.record.ps = p_s;
  for (int k = 0; k < cfg.K; ++k) rr.record.sum_ap += dec.a[k] * dec.p[k];
  const auto gb =
      bound::round_gap(engine::detail::make_bound_inputs(cfg, part, ch, dec, eta));
  rr.record.term_a = gb.term_a;
  rr.record.term_b = gb.term_b;
  rr.record.term_c = gb.term_c;
  rr.record.term_d = gb.term_d;
  rr.record.A_t = gb.A_t;
  return rr;
}

// Uplink-gain cutoff with power-feasible channel inversion and equal-weight
// aggregation. An empty selection skips the round: the global model is kept.
inline RoundResult truncated_inversion_round(int round, const Eigen::VectorXd& w,
                                             const tasks::LearningTask& task,
                                             const data::Dataset& ds,
                                             const data::Partition& part,
                                             const SystemConfig& cfg,
                                             double g_th) {
  if (!(g_th >= 0)) throw engine::EngineError("g_th must be >= 0");
  const auto ch = channel::draw_round_channels(cfg.seed, round, cfg.K);
  const double eta = learning_rate(cfg, round);
  const double w_norm2 = w.squaredNorm();
  if (!(w_norm2 > 0)) throw engine::EngineError("global model has zero norm");
  const double p_s = std::sqrt(cfg.p_dl_max / w_norm2);

  std::vector<int> selected(cfg.K, 0);
  int count = 0;
  for (int k = 0; k < cfg.K; ++k) {
    if (std::norm(ch.h_up[k]) >= g_th) {
      selected[k] = 1;
      ++count;
    }
  }

  RoundResult rr;
  rr.record.round = round;
  rr.record.ps = p_s;
  rr.record.A_t = bound::contraction_factor(eta, cfg.E, cfg.L);
  if (count == 0) {
    rr.w_next = w;  // skipped round
    rr.record.num_selected = 0;
    return rr;
  }

  const std::vector<int>* mask = cfg.skip_unselected_compute ? &selected : nullptr;
  auto updates = engine::detail::run_local_phase(w, p_s, ch, task, ds, part,
                                                 cfg, eta, round, false, mask);

  double a_common = std::numeric_limits<double>::infinity();
  for (int k = 0; k < cfg.K; ++k) {
    if (!selected[k]) continue;
    a_common = std::min(a_common, std::sqrt(cfg.p_k_max[k]) *
                                      std::abs(ch.h_up[k]) /
                                      std::sqrt(updates[k].norm2));
  }

  PowerDecision dec;
  dec.p_s = p_s;
  dec.p = Eigen::VectorXd::Zero(cfg.K);
  dec.a = Eigen::VectorXi::Zero(cfg.K);
  for (int k = 0; k < cfg.K; ++k) {
    if (!selected[k]) continue;
    dec.p[k] = a_common;
    dec.a[k] = 1;
  }

  auto g_up = rng::substream(cfg.seed, rng::Stream::noise_uplink,
                             static_cast<std::uint64_t>(round));
  rr.w_next = engine::aircomp_aggregate(updates, dec, ch.h_up, cfg, g_up);
  rr.record.num_selected = count;
  for (int k = 0; k < cfg.K; ++k) rr.record.sum_ap += dec.a[k] * dec.p[k];
  const auto gb =
      bound::round_gap(engine::detail::make_bound_inputs(cfg, part, ch, dec, eta));
  rr.record.term_a = gb.term_a;
  rr.record.term_b = gb.term_b;
  rr.record.term_c = gb.term_c;
  rr.record.term_d = gb.term_d;
  return rr;
}

}  // namespace airfl::baselines
