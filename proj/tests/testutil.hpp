#pragma once

#include <random>

#include <Eigen/Core>

#include "airfl/config.hpp"
#include "airfl/data.hpp"
#include "airfl/gap.hpp"
#include "airfl/rng.hpp"
#include "airfl/tasks.hpp"

namespace testutil {

// Central finite differences of the task loss, the independent oracle for
// gradient implementations.
inline Eigen::VectorXd fd_gradient(const airfl::tasks::LearningTask& task,
                                   const Eigen::VectorXd& w,
                                   const airfl::data::Dataset& ds,
                                   std::span<const int> batch,
                                   double h = 1e-5) {
  Eigen::VectorXd g(w.size());
  Eigen::VectorXd wp = w;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double orig = wp[i];
    wp[i] = orig + h;
    const double fp = task.loss(wp, ds, batch);
    wp[i] = orig - h;
    const double fm = task.loss(wp, ds, batch);
    wp[i] = orig;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

inline Eigen::VectorXd random_vector(std::mt19937_64& g, int d, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v[i] = n(g);
  return v;
}

// Random power-control instance at the default operating point's scalar
// parameters: channel gains are unit-mean exponentials, update norms spread
// around d.
inline airfl::gap::GapProblem random_instance(std::mt19937_64& g, int K,
                                              airfl::ConstraintMode mode,
                                              int d = 64) {
  airfl::SystemConfig cfg = airfl::default_config(d, K);
  std::exponential_distribution<double> expo(1.0);
  std::uniform_real_distribution<double> uni(0.5, 2.0);
  Eigen::VectorXd h_dl(K), h_up(K), norms(K);
  for (int k = 0; k < K; ++k) {
    h_dl[k] = std::max(expo(g), 1e-6);
    h_up[k] = std::max(expo(g), 1e-6);
    norms[k] = d * uni(g);
  }
  cfg.constraint_mode = mode;
  const double w_norm2 = d * uni(g);
  return airfl::gap::build_problem(h_dl, h_up, norms, cfg,
                                   airfl::learning_rate(cfg, 1), w_norm2);
}

}  // namespace testutil
