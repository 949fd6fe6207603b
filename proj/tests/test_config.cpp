#include <catch2/catch_amalgamated.hpp>

#include "airfl/config.hpp"

using namespace airfl;

TEST_CASE("learning rate follows the stepped decay schedule") {
  SystemConfig cfg = default_config(4);
  cfg.eta0 = 1.0 / (20.0 * 5 * 10);
  cfg.eta_decay = 0.995;
  cfg.decay_period = 30;

  CHECK(learning_rate(cfg, 1) == Catch::Approx(0.001).epsilon(1e-15));
  CHECK(learning_rate(cfg, 30) == Catch::Approx(0.001).epsilon(1e-15));
  CHECK(learning_rate(cfg, 31) == Catch::Approx(0.000995).epsilon(1e-12));
  CHECK_THROWS(learning_rate(cfg, 0));
}

TEST_CASE("learning rate is positive and non-increasing") {
  SystemConfig cfg = default_config(4);
  double prev = std::numeric_limits<double>::infinity();
  for (int t = 1; t <= 400; ++t) {
    const double lr = learning_rate(cfg, t);
    CHECK(lr > 0);
    CHECK(lr <= prev);
    prev = lr;
  }
}

TEST_CASE("validate accepts the default operating point") {
  const SystemConfig cfg = default_config(100);
  CHECK(validate(cfg).empty());
}

TEST_CASE("validate flags the contraction condition as a warning") {
  SystemConfig cfg = default_config(4);
  cfg.eta0 = 0.01;  // above 1/(20*5*10)
  const auto diags = validate(cfg);
  REQUIRE(diags.size() == 1);
  CHECK(diags[0].severity == Diagnostic::Severity::warning);
  CHECK_FALSE(has_errors(diags));
}

TEST_CASE("validate flags degenerate device counts as errors") {
  SystemConfig cfg = default_config(4);
  cfg.K = 0;
  cfg.p_k_max.resize(0);
  CHECK(has_errors(validate(cfg)));
}

TEST_CASE("validate is pure") {
  SystemConfig cfg = default_config(4);
  cfg.eta0 = 0.02;
  const auto a = validate(cfg);
  const auto b = validate(cfg);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].message == b[i].message);
}

TEST_CASE("json config round trip and defaults") {
  nlohmann::json j;
  j["K"] = 4;
  j["d"] = 10;
  j["seed"] = 99;
  const SystemConfig cfg = config_from_json(j);
  CHECK(cfg.K == 4);
  CHECK(cfg.d == 10);
  CHECK(cfg.p_dl_max == Catch::Approx(100.0));
  REQUIRE(cfg.p_k_max.size() == 4);
  CHECK(cfg.p_k_max[0] == Catch::Approx(50.0));
  CHECK(cfg.seed == 99);

  const SystemConfig back = config_from_json(config_to_json(cfg));
  CHECK(back.eta0 == cfg.eta0);
  CHECK(back.p_tot == cfg.p_tot);
}

TEST_CASE("json config rejects unknown keys") {
  nlohmann::json j;
  j["K"] = 4;
  j["sigma_d"] = 0.1;  // typo for sigma_d2
  CHECK_THROWS_WITH(config_from_json(j),
                    Catch::Matchers::ContainsSubstring("sigma_d"));
}

TEST_CASE("json config accepts scalar or vector uplink budgets") {
  nlohmann::json j;
  j["K"] = 3;
  j["p_k_max"] = 7.5;
  CHECK(config_from_json(j).p_k_max.isApproxToConstant(7.5));

  j["p_k_max"] = {1.0, 2.0, 3.0};
  const auto cfg = config_from_json(j);
  CHECK(cfg.p_k_max[2] == Catch::Approx(3.0));
}
