#pragma once

#include <chrono>
#include <vector>

#include "airfl/baselines.hpp"
#include "airfl/engine.hpp"

namespace airfl::training {

using engine::BaselineParams;
using engine::RoundRecord;
using engine::RoundResult;
using engine::Scheme;

// Initial global model: small seeded Gaussian. A zero start would make the
// first maximum-power broadcast degenerate.
inline Eigen::VectorXd initial_model(const SystemConfig& cfg, int d) {
  auto g = rng::substream(cfg.seed, rng::Stream::model_init);
  std::normal_distribution<double> n(0.0, 0.01);
  Eigen::VectorXd w(d);
  for (int i = 0; i < d; ++i) w[i] = n(g);
  return w;
}

// Threshold giving the ceil(K/2)-device prefix at this round's statistics.
inline double calibrate_tau(int round, const Eigen::VectorXd& w,
                            const tasks::LearningTask& task,
                            const data::Dataset& ds, const data::Partition& part,
                            const SystemConfig& cfg) {
  const auto ch = channel::draw_round_channels(cfg.seed, round, cfg.K);
  const double eta = learning_rate(cfg, round);
  const double p_s = std::sqrt(cfg.p_dl_max / w.squaredNorm());
  auto updates = engine::detail::run_local_phase(w, p_s, ch, task, ds, part,
                                                 cfg, eta, round, false);
  Eigen::VectorXd alpha(cfg.K);
  for (int k = 0; k < cfg.K; ++k)
    alpha[k] = std::sqrt(cfg.p_k_max[k]) * std::abs(ch.h_up[k]) /
               std::sqrt(updates[k].norm2);
  std::sort(alpha.data(), alpha.data() + cfg.K, std::greater<double>());
  const int target = (cfg.K + 1) / 2;
  return baselines::mse_of_prefix(alpha, target, cfg);
}

struct SchemeRunner {
  Scheme scheme = Scheme::proposed;
  BaselineParams params;
  double tau_used = -1.0;  // populated after the first thresholded round
};

inline RoundResult run_round(SchemeRunner& runner, int round,
                             const Eigen::VectorXd& w,
                             const tasks::LearningTask& task,
                             const data::Dataset& ds, const data::Partition& part,
                             const SystemConfig& cfg) {
  switch (runner.scheme) {
    case Scheme::proposed:
      return engine::run_proposed_round(round, w, task, ds, part, cfg);
    case Scheme::fedavg_ideal:
      return baselines::ideal_fedavg_round(round, w, task, ds, part, cfg);
    case Scheme::mse_threshold: {
      if (runner.tau_used < 0) {
        runner.tau_used = runner.params.tau > 0
                              ? runner.params.tau
                              : calibrate_tau(round, w, task, ds, part, cfg);
      }
      return baselines::mse_threshold_round(round, w, task, ds, part, cfg,
                                            runner.tau_used);
    }
    case Scheme::truncated_inversion:
      return baselines::truncated_inversion_round(round, w, task, ds, part, cfg,
                                                  runner.params.g_th);
  }
  throw engine::EngineError("unreachable scheme");
}

struct TrainingResult {
  std::vector<RoundRecord> records;
  Eigen::VectorXd w_final;
  double tau_used = -1.0;
  std::vector<double> wall_ms;        // measured, kept out of the CSV
  std::vector<Eigen::VectorXd> checkpoints;
  std::vector<int> checkpoint_rounds;
};

// T rounds from the seeded initial model; accuracy on `test` and loss over
// the union of assigned training samples are recorded every round.
inline TrainingResult run_training(SchemeRunner& runner, const SystemConfig& cfg,
                                   const tasks::LearningTask& task,
                                   const data::Dataset& train,
                                   const data::Dataset& test,
                                   const data::Partition& part,
                                   int checkpoint_every = 0) {
  TrainingResult res;
  res.w_final = initial_model(cfg, task.dim());

  // The assigned samples are gathered once so the per-round loss evaluation
  // runs on contiguous storage.
  data::Dataset eval;
  {
    std::vector<int> assigned;
    for (const auto& idx : part.assignment)
      assigned.insert(assigned.end(), idx.begin(), idx.end());
    eval.num_classes = train.num_classes;
    eval.inputs.resize(train.inputs.rows(),
                       static_cast<Eigen::Index>(assigned.size()));
    eval.labels.resize(assigned.size());
    for (std::size_t i = 0; i < assigned.size(); ++i) {
      eval.inputs.col(static_cast<Eigen::Index>(i)) = train.inputs.col(assigned[i]);
      eval.labels[i] = train.labels[assigned[i]];
    }
  }
  const auto eval_idx = tasks::all_indices(eval);

  for (int t = 1; t <= cfg.T; ++t) {
    const auto t0 = std::chrono::steady_clock::now();
    RoundResult rr = run_round(runner, t, res.w_final, task, train, part, cfg);
    res.w_final = std::move(rr.w_next);

    rr.record.test_acc = test.size() ? task.accuracy(res.w_final, test) : 0.0;
    rr.record.train_loss = task.loss(res.w_final, eval, eval_idx);
    const auto t1 = std::chrono::steady_clock::now();
    res.wall_ms.push_back(
        std::chrono::duration<double, std::milli>(t1 - t0).count());
    res.records.push_back(rr.record);
    if (checkpoint_every > 0 && t % checkpoint_every == 0) {
      res.checkpoints.push_back(res.w_final);
      res.checkpoint_rounds.push_back(t);
    }
  }
  res.tau_used = runner.tau_used;
  return res;
}

}  // namespace airfl::training
