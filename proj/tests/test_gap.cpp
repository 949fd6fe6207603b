#include <catch2/catch_amalgamated.hpp>

#include "airfl/gap.hpp"
#include "testutil.hpp"

using namespace airfl;

TEST_CASE("problem coefficients reduce to unity in the degenerate setup") {
  // d=1, sigma_d2=1, L=1, eta=0, p_dl_bar=1, |h_dl|^2=1  ->  theta = 1.
  SystemConfig cfg = default_config(1, 2);
  cfg.d = 1;
  cfg.sigma_d2 = 1.0;
  cfg.sigma_u2 = 0.0;
  cfg.L = 1.0;
  cfg.p_dl_max = 1.0;
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(2);
  const auto gp = gap::build_problem(ones, ones, ones, cfg, 0.0, 1.0);
  CHECK(gp.theta[0] == Catch::Approx(1.0).epsilon(1e-15));
  CHECK(gp.theta[1] == Catch::Approx(1.0).epsilon(1e-15));
  CHECK(gp.c == 0.0);  // sigma_u2 = 0
  CHECK(gp.q_diag[0] == Catch::Approx(1.0));
}

TEST_CASE("theta carries the learning-rate amplification factor") {
  // (1 + 2 eta E + 4 eta^2 E^2 L^2) / (1 - 4 eta^2 E^2 L^2) at the default
  // operating point: (1 + 0.01 + 0.01) / 0.99.
  SystemConfig cfg = default_config(16, 1);
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(1);
  const double eta = 0.001;
  const auto gp = gap::build_problem(ones, ones, ones, cfg, eta, 1.0);
  const double p_dl_bar = cfg.p_dl_max / 1.0;
  const double factor = gp.theta[0] * p_dl_bar / (cfg.d * cfg.sigma_d2 * cfg.L);
  CHECK(factor == Catch::Approx(1.02 / 0.99).epsilon(1e-12));
}

TEST_CASE("build rejects learning rates past the homogenization pole") {
  SystemConfig cfg = default_config(4, 2);
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(2);
  // eta >= 1/(2 E L) makes 1 - 4 eta^2 E^2 L^2 <= 0.
  CHECK_THROWS_AS(
      gap::build_problem(ones, ones, ones, cfg, 1.0 / (2.0 * cfg.E * cfg.L), 1.0),
      gap::GapError);
  CHECK_THROWS_AS(gap::build_problem(ones, ones, ones, cfg, 0.001, 0.0),
                  gap::GapError);
}

TEST_CASE("homogenization produces the block structure") {
  gap::GapProblem gp;
  gp.theta = Eigen::VectorXd::LinSpaced(3, 1.0, 3.0);
  gp.c = 7.0;
  gp.q_diag = Eigen::VectorXd::Constant(3, 2.0);
  gp.budgets = Eigen::VectorXd::Constant(3, 5.0);
  gp.mode = ConstraintMode::individual;

  const auto sp = gap::homogenize(gp);
  REQUIRE(sp.objective.rows() == 4);
  CHECK(sp.objective(0, 0) == 1.0);
  CHECK(sp.objective(3, 3) == 7.0);
  CHECK(sp.objective(0, 1) == 0.0);

  // Normalization block: K^2 ones in the leading block, zeros elsewhere.
  CHECK(sp.normalization.topLeftCorner(3, 3).sum() == 9.0);
  CHECK(sp.normalization.row(3).isZero());
  CHECK(sp.normalization.col(3).isZero());

  REQUIRE(sp.ineqs.size() == 3);
  for (int k = 0; k < 3; ++k) {
    const auto& Q = sp.ineqs[k];
    CHECK(Q(k, k) == 2.0);
    CHECK(Q(3, 3) == -5.0);
    int nonzeros = 0;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) nonzeros += Q(i, j) != 0.0;
    CHECK(nonzeros == 2);
  }

  gp.mode = ConstraintMode::sum;
  gp.budgets = Eigen::VectorXd::Constant(1, 11.0);
  const auto sps = gap::homogenize(gp);
  REQUIRE(sps.ineqs.size() == 1);
  CHECK(sps.ineqs[0](1, 1) == 2.0);
  CHECK(sps.ineqs[0](3, 3) == -11.0);
}

TEST_CASE("power recovery from an exact rank-one lift") {
  // Z = v v' with v = (1, 2, 0.5): b = (1, 2), s^2 = 0.25, p = b / 0.5.
  Eigen::VectorXd v(3);
  v << 1, 2, 0.5;
  const Eigen::MatrixXd Z = v * v.transpose();
  const auto rec = gap::recover_power_vector(Z, 2);
  CHECK(rec.p[0] == Catch::Approx(2.0).epsilon(1e-12));
  CHECK(rec.p[1] == Catch::Approx(4.0).epsilon(1e-12));
  CHECK(rec.rank_residual <= 1e-12);

  // Global sign is normalized to a nonnegative vector.
  const Eigen::MatrixXd Zneg = (-v) * (-v).transpose();
  CHECK(gap::recover_power_vector(Zneg, 2).p[1] == Catch::Approx(4.0));
}

TEST_CASE("power recovery rejects non-tight or degenerate lifts") {
  Eigen::MatrixXd Z = Eigen::MatrixXd::Identity(3, 3);  // rank-2 leading block
  CHECK_THROWS_AS(gap::recover_power_vector(Z, 2), gap::GapError);

  Eigen::VectorXd v(3);
  v << 1, 2, 0.0;  // vanished homogenization variable
  const Eigen::MatrixXd Z0 = v * v.transpose();
  CHECK_THROWS_AS(gap::recover_power_vector(Z0, 2), gap::GapError);
}

TEST_CASE("device selection thresholds relative to the largest power") {
  Eigen::VectorXd p(3);
  p << 0.5, 0.0, 1.2;
  const auto a = gap::select_devices(p);
  CHECK(a[0] == 1);
  CHECK(a[1] == 0);
  CHECK(a[2] == 1);

  Eigen::VectorXd tiny(2);
  tiny << 1e-20, 3.0;
  const auto a2 = gap::select_devices(tiny);
  CHECK(a2[0] == 0);
  CHECK(a2[1] == 1);

  Eigen::VectorXd single(1);
  single << 2.0;
  CHECK(gap::select_devices(single)[0] == 1);

  CHECK_THROWS_AS(gap::select_devices(Eigen::VectorXd::Zero(3)), gap::GapError);
}

TEST_CASE("single-device instance matches the analytic optimum") {
  // Feasibility p^2 * 4 <= 16 gives p <= 2; (p^2 + 10)/p^2 is decreasing, so
  // p* = 2 with objective 3.5.
  gap::GapProblem gp;
  gp.theta = Eigen::VectorXd::Constant(1, 1.0);
  gp.c = 10.0;
  gp.q_diag = Eigen::VectorXd::Constant(1, 4.0);
  gp.budgets = Eigen::VectorXd::Constant(1, 16.0);
  gp.mode = ConstraintMode::individual;

  const auto res = gap::solve(gp);
  CHECK(res.p[0] == Catch::Approx(2.0).epsilon(1e-5));
  CHECK(res.objective == Catch::Approx(3.5).epsilon(1e-6));
  CHECK(res.a[0] == 1);

  const auto oracle = gap::brute_force_oracle(gp, 200);
  CHECK(oracle.objective == Catch::Approx(3.5).epsilon(1e-3));
  CHECK(res.objective <= oracle.objective * (1.0 + 1e-9));
}

TEST_CASE("noise-free uplink reduces to the symmetric split") {
  // theta = (1,1), c = 0, q = (1,1), P_tot = 2: minimum value 0.5 at p1 = p2.
  gap::GapProblem gp;
  gp.theta = Eigen::VectorXd::Constant(2, 1.0);
  gp.c = 0.0;
  gp.q_diag = Eigen::VectorXd::Constant(2, 1.0);
  gp.budgets = Eigen::VectorXd::Constant(1, 2.0);
  gp.mode = ConstraintMode::sum;

  const auto res = gap::solve(gp);
  CHECK(res.objective == Catch::Approx(0.5).epsilon(1e-12));
  CHECK(res.p[0] == Catch::Approx(res.p[1]).epsilon(1e-12));

  const auto oracle = gap::brute_force_oracle(gp, 400);
  CHECK(oracle.objective == Catch::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("scale invariance at zero uplink noise") {
  auto g = rng::substream(30, rng::Stream::instance_gen);
  for (int trial = 0; trial < 20; ++trial) {
    auto gp = testutil::random_instance(g, 5, ConstraintMode::individual);
    gp.c = 0.0;
    const auto res = gap::solve(gp);
    // Objective is invariant under p -> lambda p; the returned point sits on
    // the budget boundary, and rescaling it inward must not change the value.
    const Eigen::VectorXd half = 0.5 * res.p;
    CHECK(gap::gap_objective(gp, half) ==
          Catch::Approx(res.objective).epsilon(1e-9));
    CHECK(gap::feasibility_residual(gp, res.p) <= 1e-10 * gp.budgets.maxCoeff());
  }
}

TEST_CASE("weak-downlink devices are deselected") {
  gap::GapProblem gp;
  gp.theta = Eigen::VectorXd::Constant(2, 1.0);
  gp.theta[0] = 1e9;  // first device's downlink is nearly dead
  gp.c = 1.0;
  gp.q_diag = Eigen::VectorXd::Constant(2, 1.0);
  gp.budgets = Eigen::VectorXd::Constant(2, 1.0);
  gp.mode = ConstraintMode::individual;

  const auto res = gap::solve(gp);
  CHECK(res.a[0] == 0);
  CHECK(res.a[1] == 1);

  const auto oracle = gap::brute_force_oracle(gp, 300);
  CHECK(oracle.p[0] <= oracle.p.maxCoeff() * 1e-2);
  CHECK(res.objective <= oracle.objective * (1.0 + 1e-6));
}

TEST_CASE("relaxation sandwich against the grid oracle") {
  auto g = rng::substream(31, rng::Stream::instance_gen);
  for (int trial = 0; trial < 50; ++trial) {
    const auto mode =
        trial % 2 ? ConstraintMode::individual : ConstraintMode::sum;
    const auto gp = testutil::random_instance(g, 2, mode);
    const auto res = gap::solve(gp);
    const auto oracle = gap::brute_force_oracle(gp, 200);

    // Certified relaxation bound holds for any feasible p.
    CHECK(res.sdp_lower_bound <= oracle.objective * (1.0 + 1e-9));
    // Recovered point is within 1% of the grid best and tight to the bound.
    CHECK(res.objective <= oracle.objective * 1.01);
    CHECK(res.objective - res.sdp_value <=
          1e-6 * std::max(1.0, std::abs(res.sdp_value)));
    CHECK(gap::feasibility_residual(gp, res.p) <= 1e-8 * gp.budgets.maxCoeff());
    CHECK(res.p.minCoeff() >= 0.0);
  }
}

TEST_CASE("objective never increases with a larger downlink budget") {
  auto g = rng::substream(32, rng::Stream::instance_gen);
  for (int trial = 0; trial < 20; ++trial) {
    auto gp = testutil::random_instance(g, 6, ConstraintMode::individual);
    const double base = gap::solve(gp).objective;
    gp.theta *= 0.5;  // doubling the downlink budget halves every theta
    const double richer = gap::solve(gp).objective;
    CHECK(richer <= base * (1.0 + 1e-9));
  }
}

TEST_CASE("oracle validates inputs") {
  auto g = rng::substream(33, rng::Stream::instance_gen);
  const auto gp4 = testutil::random_instance(g, 4, ConstraintMode::individual);
  CHECK_THROWS_AS(gap::brute_force_oracle(gp4), gap::GapError);

  gap::GapProblem zero;
  zero.theta = Eigen::VectorXd::Constant(1, 1.0);
  zero.c = 0.0;
  zero.q_diag = Eigen::VectorXd::Constant(1, 1.0);
  zero.budgets = Eigen::VectorXd::Constant(1, 0.0);
  zero.mode = ConstraintMode::individual;
  CHECK_THROWS_AS(gap::brute_force_oracle(zero), gap::GapError);
  CHECK_THROWS_AS(gap::solve(zero), gap::GapError);
}

TEST_CASE("problem JSON round trip") {
  auto g = rng::substream(34, rng::Stream::instance_gen);
  const auto gp = testutil::random_instance(g, 3, ConstraintMode::sum);
  const auto back = gap::problem_from_json(gap::problem_to_json(gp));
  CHECK(back.theta == gp.theta);
  CHECK(back.c == gp.c);
  CHECK(back.q_diag == gp.q_diag);
  CHECK(back.budgets == gp.budgets);
  CHECK(back.mode == gp.mode);
}

TEST_CASE("fully degenerate noise-free problems return equal powers") {
  gap::GapProblem gp;
  gp.theta = Eigen::VectorXd::Zero(3);
  gp.c = 0.0;
  gp.q_diag = Eigen::VectorXd::Constant(3, 1.0);
  gp.budgets = Eigen::VectorXd::Constant(3, 4.0);
  gp.mode = ConstraintMode::individual;
  const auto res = gap::solve(gp);
  CHECK(res.objective == 0.0);
  CHECK(res.a.sum() == 3);
  CHECK(res.p[0] == res.p[1]);
  CHECK(res.p[0] == Catch::Approx(2.0));  // q p^2 = 4 at the boundary
}
