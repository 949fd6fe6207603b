#include <catch2/catch_amalgamated.hpp>

#include "airfl/tasks.hpp"
#include "testutil.hpp"

using namespace airfl;

namespace {

void check_gradient_against_fd(const tasks::LearningTask& task,
                               const data::Dataset& ds,
                               std::span<const int> batch,
                               const Eigen::VectorXd& w) {
  const Eigen::VectorXd g = task.gradient(w, ds, batch);
  const Eigen::VectorXd fd = testutil::fd_gradient(task, w, ds, batch);
  const double scale = std::max(1.0, fd.norm());
  CHECK((g - fd).cwiseAbs().maxCoeff() <= 1e-6 * scale);
  CHECK((g - fd).norm() / std::max(fd.norm(), 1e-12) <= 1e-4);
}

}  // namespace

TEST_CASE("quadratic task is stationary at the minimizer") {
  auto task = tasks::quadratic_task(12);
  const auto opt = task->optimum();
  REQUIRE(opt.has_value());
  data::Dataset dummy;
  dummy.inputs = Eigen::MatrixXd::Zero(1, 1);
  dummy.labels = {0};
  dummy.num_classes = 1;
  const std::vector<int> batch{0};
  CHECK(task->gradient(opt->w_star, dummy, batch).isZero());
  CHECK(task->loss(opt->w_star, dummy, batch) == 0.0);
  CHECK(opt->smoothness == 1.0);
}

TEST_CASE("quadratic task satisfies the gradient identity exactly") {
  // ||grad F||^2 = 2 L (F - F*) with L = 1, an equality for this loss.
  auto task = tasks::quadratic_task(6);
  data::Dataset dummy;
  dummy.inputs = Eigen::MatrixXd::Zero(1, 1);
  dummy.labels = {0};
  dummy.num_classes = 1;
  const std::vector<int> batch{0};
  auto g = rng::substream(1, rng::Stream::audit);
  for (int i = 0; i < 50; ++i) {
    const Eigen::VectorXd w = testutil::random_vector(g, 6, 2.0);
    const double lhs = task->gradient(w, dummy, batch).squaredNorm();
    const double rhs = 2.0 * task->loss(w, dummy, batch);
    CHECK(std::abs(lhs - rhs) <=
          8 * std::numeric_limits<double>::epsilon() * std::max(lhs, rhs));
  }
}

TEST_CASE("logistic gradient matches finite differences") {
  const auto ds = data::make_gaussian_mixture(3, 5, 3, 60, 2.0);
  auto task = tasks::logistic_task(5, 3);
  auto g = rng::substream(2, rng::Stream::audit);
  const Eigen::VectorXd w = testutil::random_vector(g, task->dim(), 0.5);

  const auto all = tasks::all_indices(ds);
  check_gradient_against_fd(*task, ds, all, w);

  const std::vector<int> batch{0, 7, 13, 13, 44};
  check_gradient_against_fd(*task, ds, batch, w);
}

TEST_CASE("logistic loss agrees between gathered and identity batches") {
  const auto ds = data::make_gaussian_mixture(4, 6, 4, 40, 2.0);
  auto task = tasks::logistic_task(6, 4);
  auto g = rng::substream(3, rng::Stream::audit);
  const Eigen::VectorXd w = testutil::random_vector(g, task->dim(), 0.3);
  const auto all = tasks::all_indices(ds);
  std::vector<int> shuffled = all;
  std::reverse(shuffled.begin(), shuffled.end());
  CHECK(task->loss(w, ds, all) ==
        Catch::Approx(task->loss(w, ds, shuffled)).epsilon(1e-12));
}

TEST_CASE("mlp gradient matches finite differences") {
  const auto ds = data::make_gaussian_mixture(4, 4, 3, 30, 2.0);
  auto task = tasks::tiny_mlp_task(4, 6, 3);
  auto g = rng::substream(4, rng::Stream::audit);
  const Eigen::VectorXd w = testutil::random_vector(g, task->dim(), 0.4);
  const auto all = tasks::all_indices(ds);
  check_gradient_against_fd(*task, ds, all, w);
}

TEST_CASE("mlp trains on a separable mixture") {
  const auto ds = data::make_gaussian_mixture(6, 8, 3, 120, 5.0);
  auto task = tasks::tiny_mlp_task(8, 16, 3);
  auto g = rng::substream(5, rng::Stream::model_init);
  Eigen::VectorXd w = testutil::random_vector(g, task->dim(), 0.1);
  const auto all = tasks::all_indices(ds);
  const double initial = task->loss(w, ds, all);
  double current = initial;
  for (int step = 0; step < 50; ++step) {
    w -= 0.5 * task->gradient(w, ds, all);
    current = task->loss(w, ds, all);
  }
  CHECK(current < initial);
  CHECK(task->accuracy(w, ds) > 0.5);
}

TEST_CASE("accuracy counts argmax hits") {
  data::Dataset ds;
  ds.inputs.resize(2, 3);
  ds.inputs << 1, -1, 1, 0, 0, 0;
  ds.labels = {0, 1, 1};
  ds.num_classes = 2;
  auto task = tasks::logistic_task(2, 2);
  // W = [[1,0],[0,0]], b = 0: predicts class 0 iff x0 > 0.
  Eigen::VectorXd w = Eigen::VectorXd::Zero(task->dim());
  w[0] = 1.0;
  CHECK(task->accuracy(w, ds) == Catch::Approx(2.0 / 3.0));
}
