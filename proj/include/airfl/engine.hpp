#pragma once

#include <atomic>
#include <complex>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>

#include "airfl/bound.hpp"
#include "airfl/channel.hpp"
#include "airfl/config.hpp"
#include "airfl/data.hpp"
#include "airfl/gap.hpp"
#include "airfl/rng.hpp"
#include "airfl/tasks.hpp"

namespace airfl::engine {

using data::Dataset;
using data::Partition;
using tasks::LearningTask;

class EngineError : public std::runtime_error {
 public:
  explicit EngineError(const std::string& m) : std::runtime_error(m) {}
};

struct LocalUpdate {
  Eigen::VectorXd w_E;
  double norm2 = 0;
};

struct PowerDecision {
  double p_s = 0;
  Eigen::VectorXd p;
  Eigen::VectorXi a;
};

struct RoundRecord {
  int round = 0;
  double test_acc = 0;
  double train_loss = 0;
  int num_selected = 0;
  double ps = 0;
  double sum_ap = 0;
  double sdp_obj = 0;
  double term_a = 0, term_b = 0, term_c = 0, term_d = 0;
  double A_t = 1;
  double wall_ms = 0;
};

enum class Scheme { proposed, fedavg_ideal, mse_threshold, truncated_inversion };

inline std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::proposed: return "proposed";
    case Scheme::fedavg_ideal: return "fedavg-ideal";
    case Scheme::mse_threshold: return "mse-threshold";
    case Scheme::truncated_inversion: return "truncated-inversion";
  }
  return "?";
}

inline Scheme scheme_from_string(const std::string& s) {
  if (s == "proposed") return Scheme::proposed;
  if (s == "fedavg-ideal") return Scheme::fedavg_ideal;
  if (s == "mse-threshold") return Scheme::mse_threshold;
  if (s == "truncated-inversion") return Scheme::truncated_inversion;
  throw EngineError("unknown scheme: " + s);
}

struct BaselineParams {
  double tau = -1.0;   // MSE threshold; < 0 means calibrate at round 1
  double g_th = 0.2;   // channel-gain cutoff for truncated inversion
};

inline int worker_count(const SystemConfig& cfg) {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("AIRCOMP_FL_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return std::min(n, cfg.K);
}

// Runs fn(k) for k in [0, K) on the worker pool. Work items are independent
// and write to disjoint slots, so scheduling cannot change results.
template <typename Fn>
inline void parallel_devices(int K, int workers, Fn&& fn) {
  if (workers <= 1 || K == 1) {
    for (int k = 0; k < K; ++k) fn(k);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  auto body = [&] {
    while (true) {
      const int k = next.fetch_add(1);
      if (k >= K) return;
      fn(k);
    }
  };
  for (int t = 0; t < workers; ++t) pool.emplace_back(body);
  for (auto& th : pool) th.join();
}

// Noisy analog broadcast followed by descaling at the device. The returned
// vector is w plus equivalent real noise of per-entry variance
// sigma_d2 / (p_s^2 |h|^2); idle devices receive w untouched and draw
// nothing from their stream.
inline Eigen::VectorXd broadcast_and_estimate(const Eigen::VectorXd& w,
                                              double p_s,
                                              std::complex<double> h_dl,
                                              int a_k, const SystemConfig& cfg,
                                              std::mt19937_64& g) {
  if (a_k == 0) return w;
  const double habs2 = std::norm(h_dl);
  if (!(p_s > 0) || !(habs2 > 0))
    throw EngineError("selected device requires p_s > 0 and |h_dl| > 0");
  const double tx_power = p_s * p_s * w.squaredNorm();
  if (tx_power > cfg.p_dl_max * (1.0 + 1e-12))
    throw EngineError("downlink power budget violated");
  if (cfg.sigma_d2 == 0.0) return w;
  const double var = cfg.sigma_d2 / (p_s * p_s * habs2);
  return w + channel::gaussian_vector(g, static_cast<int>(w.size()), var);
}

// E mini-batch SGD steps from w0 with fresh batches.
inline LocalUpdate local_sgd(const Eigen::VectorXd& w0, const LearningTask& task,
                             const Dataset& ds, const Partition& part, int k,
                             int E, int B, double eta, std::mt19937_64& g) {
  if (E < 1 || B < 1) throw EngineError("E and B must be >= 1");
  Eigen::VectorXd w = w0;
  for (int tau = 0; tau < E; ++tau) {
    const auto batch = data::sample_minibatch(part, k, B, g);
    const Eigen::VectorXd grad = task.gradient(w, ds, batch);
    if (!grad.allFinite())
      throw EngineError("diverged: non-finite gradient at device " +
                        std::to_string(k));
    w -= eta * grad;
  }
  LocalUpdate u;
  u.norm2 = w.squaredNorm();
  u.w_E = std::move(w);
  return u;
}

// Shared by all schemes so that aggregation arithmetic is identical: the sum
// runs in device order with one multiply-add per device.
inline Eigen::VectorXd weighted_average(const std::vector<LocalUpdate>& updates,
                                        const Eigen::VectorXd& weights) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(updates.at(0).w_E.size());
  for (std::size_t k = 0; k < updates.size(); ++k) {
    if (weights[static_cast<Eigen::Index>(k)] == 0.0) continue;
    acc += weights[static_cast<Eigen::Index>(k)] * updates[k].w_E;
  }
  return acc;
}

// Analog multiple-access aggregation with power-proportional weights and
// equivalent uplink noise of per-entry variance sigma_u2 / zeta^2.
inline Eigen::VectorXd aircomp_aggregate(const std::vector<LocalUpdate>& updates,
                                         const PowerDecision& dec,
                                         const Eigen::VectorXcd& h_up,
                                         const SystemConfig& cfg,
                                         std::mt19937_64& g) {
  const int K = static_cast<int>(updates.size());
  double zeta = 0;
  for (int k = 0; k < K; ++k) zeta += dec.a[k] * dec.p[k];
  if (!(zeta > 0)) throw EngineError("no device selected for aggregation");

  // Transmit-power feasibility of the decision.
  double sum_used = 0;
  for (int k = 0; k < K; ++k) {
    if (!dec.a[k]) continue;
    const double used =
        dec.p[k] * dec.p[k] * updates[k].norm2 / std::norm(h_up[k]);
    sum_used += used;
    if (cfg.constraint_mode == ConstraintMode::individual &&
        used > cfg.p_k_max[k] * (1.0 + 1e-8))
      throw EngineError("uplink power budget violated at device " +
                        std::to_string(k));
  }
  if (cfg.constraint_mode == ConstraintMode::sum &&
      sum_used > cfg.p_tot * (1.0 + 1e-8))
    throw EngineError("sum uplink power budget violated");

  Eigen::VectorXd weights(K);
  for (int k = 0; k < K; ++k) weights[k] = dec.a[k] ? dec.p[k] / zeta : 0.0;
  Eigen::VectorXd out = weighted_average(updates, weights);
  if (cfg.sigma_u2 > 0.0)
    out += channel::gaussian_vector(g, static_cast<int>(out.size()),
                                    cfg.sigma_u2 / (zeta * zeta));
  return out;
}

struct RoundResult {
  Eigen::VectorXd w_next;
  RoundRecord record;
};

namespace detail {

inline std::vector<LocalUpdate> run_local_phase(
    const Eigen::VectorXd& w, double p_s, const channel::ChannelDraw& ch,
    const LearningTask& task, const Dataset& ds, const Partition& part,
    const SystemConfig& cfg, double eta, int round, bool noiseless_downlink,
    const std::vector<int>* compute_mask = nullptr) {
  std::vector<LocalUpdate> updates(cfg.K);
  const int workers = worker_count(cfg);
  parallel_devices(cfg.K, workers, [&](int k) {
    if (compute_mask && !(*compute_mask)[k]) return;
    Eigen::VectorXd w_k;
    if (noiseless_downlink) {
      w_k = w;
    } else {
      auto g_dl = rng::substream(cfg.seed, rng::Stream::noise_downlink,
                                 static_cast<std::uint64_t>(round),
                                 static_cast<std::uint64_t>(k));
      w_k = broadcast_and_estimate(w, p_s, ch.h_dl[k], 1, cfg, g_dl);
    }
    auto g_b = rng::substream(cfg.seed, rng::Stream::minibatch,
                              static_cast<std::uint64_t>(round),
                              static_cast<std::uint64_t>(k));
    updates[k] = local_sgd(w_k, task, ds, part, k, cfg.E, cfg.B, eta, g_b);
  });
  return updates;
}

inline bound::RoundInputs make_bound_inputs(const SystemConfig& cfg,
                                            const Partition& part,
                                            const channel::ChannelDraw& ch,
                                            const PowerDecision& dec,
                                            double eta) {
  bound::RoundInputs in;
  in.eta = eta;
  in.E = cfg.E;
  in.L = cfg.L;
  in.d = cfg.d;
  in.sigma_d2 = cfg.sigma_d2;
  in.sigma_u2 = cfg.sigma_u2;
  in.mu2 = cfg.mu2;
  in.delta = cfg.delta;
  in.q = part.q;
  in.p_s2 = dec.p_s * dec.p_s;
  in.p = dec.p;
  in.a = dec.a;
  in.h_dl_abs2.resize(cfg.K);
  for (int k = 0; k < cfg.K; ++k) in.h_dl_abs2[k] = std::norm(ch.h_dl[k]);
  double zeta = 0;
  for (int k = 0; k < cfg.K; ++k) zeta += dec.a[k] * dec.p[k];
  in.rho.resize(cfg.K);
  for (int k = 0; k < cfg.K; ++k)
    in.rho[k] = dec.a[k] && zeta > 0 ? dec.p[k] / zeta : 0.0;
  return in;
}

}  // namespace detail

// One communication round with an externally fixed power decision; used by
// diagnostics that pin the decision instead of optimizing it.
inline RoundResult run_round_with_decision(int round, const Eigen::VectorXd& w,
                                           const LearningTask& task,
                                           const Dataset& ds,
                                           const Partition& part,
                                           const SystemConfig& cfg,
                                           const PowerDecision& dec) {
  const auto ch = channel::draw_round_channels(cfg.seed, round, cfg.K);
  const double eta = learning_rate(cfg, round);
  auto updates = detail::run_local_phase(w, dec.p_s, ch, task, ds, part, cfg,
                                         eta, round, false);
  auto g_up = rng::substream(cfg.seed, rng::Stream::noise_uplink,
                             static_cast<std::uint64_t>(round));
  RoundResult rr;
  rr.w_next = aircomp_aggregate(updates, dec, ch.h_up, cfg, g_up);
  rr.record.round = round;
  rr.record.num_selected = dec.a.sum();
  rr.record.ps = dec.p_s;
  for (int k = 0; k < cfg.K; ++k) rr.record.sum_ap += dec.a[k] * dec.p[k];
  const auto gb = bound::round_gap(detail::make_bound_inputs(cfg, part, ch, dec, eta));
  rr.record.term_a = gb.term_a;
  rr.record.term_b = gb.term_b;
  rr.record.term_c = gb.term_c;
  rr.record.term_d = gb.term_d;
  rr.record.A_t = gb.A_t;
  return rr;
}

// One round of the optimized scheme: noisy broadcast at maximum downlink
// power, local SGD everywhere, per-round power-control solve, selection,
// analog aggregation.
inline RoundResult run_proposed_round(int round, const Eigen::VectorXd& w,
                                      const LearningTask& task, const Dataset& ds,
                                      const Partition& part,
                                      const SystemConfig& cfg) {
  const auto ch = channel::draw_round_channels(cfg.seed, round, cfg.K);
  const double eta = learning_rate(cfg, round);
  const double w_norm2 = w.squaredNorm();
  if (!(w_norm2 > 0)) throw EngineError("global model has zero norm");
  const double p_s = std::sqrt(cfg.p_dl_max / w_norm2);

  auto updates =
      detail::run_local_phase(w, p_s, ch, task, ds, part, cfg, eta, round, false);

  Eigen::VectorXd h_dl_abs2(cfg.K), h_up_abs2(cfg.K), norms(cfg.K);
  for (int k = 0; k < cfg.K; ++k) {
    h_dl_abs2[k] = std::norm(ch.h_dl[k]);
    h_up_abs2[k] = std::norm(ch.h_up[k]);
    norms[k] = updates[k].norm2;
  }
  const auto gp = gap::build_problem(h_dl_abs2, h_up_abs2, norms, cfg, eta, w_norm2);
  const auto res = gap::solve(gp);

  PowerDecision dec;
  dec.p_s = p_s;
  dec.p = res.p;
  dec.a = res.a;

  auto g_up = rng::substream(cfg.seed, rng::Stream::noise_uplink,
                             static_cast<std::uint64_t>(round));
  RoundResult rr;
  rr.w_next = aircomp_aggregate(updates, dec, ch.h_up, cfg, g_up);
  rr.record.round = round;
  rr.record.num_selected = dec.a.sum();
  rr.record.ps = p_s;
  for (int k = 0; k < cfg.K; ++k) rr.record.sum_ap += dec.a[k] * dec.p[k];
  rr.record.sdp_obj = res.sdp_value;
  const auto gb = bound::round_gap(detail::make_bound_inputs(cfg, part, ch, dec, eta));
  rr.record.term_a = gb.term_a;
  rr.record.term_b = gb.term_b;
  rr.record.term_c = gb.term_c;
  rr.record.term_d = gb.term_d;
  rr.record.A_t = gb.A_t;
  return rr;
}

}  // namespace airfl::engine
