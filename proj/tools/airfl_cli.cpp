// Experiment runner for the wireless federated-learning simulator.
//
//   airfl_cli run --config cfg.json --scheme all --rounds 100 --seed 7 --out out/
//   airfl_cli summarize out/*_metrics.csv
//   airfl_cli calibrate-tau --config cfg.json --seeds 16

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "airfl/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"wireless federated learning simulator"};
  app.require_subcommand(1);

  airfl::harness::RunOverrides ov;
  std::string config_path;

  auto* run = app.add_subcommand("run", "execute a training run");
  run->add_option("--config", config_path, "config JSON path")->required();
  run->add_option("--scheme", ov.scheme,
                  "proposed|fedavg-ideal|mse-threshold|truncated-inversion|all")
      ->check(CLI::IsMember({"proposed", "fedavg-ideal", "mse-threshold",
                             "truncated-inversion", "all"}));
  run->add_option("--constraint", ov.constraint, "individual|sum")
      ->check(CLI::IsMember({"individual", "sum"}));
  run->add_option("--rounds", ov.rounds, "round budget T");
  run->add_option("--seed", ov.seed, "master seed");
  run->add_option("--out", ov.out_dir, "output directory");
  run->add_option("--partition", ov.partition, "iid|noniid")
      ->check(CLI::IsMember({"iid", "noniid"}));
  run->add_option("--sizes", ov.sizes, "balanced|unbalanced")
      ->check(CLI::IsMember({"balanced", "unbalanced"}));
  run->add_option("--dump-channels", ov.dump_channels,
                  "write the per-round channel trace CSV here");
  run->add_option("--checkpoint-every", ov.checkpoint_every,
                  "write model checkpoints every N rounds");
  run->add_option("--tau", ov.tau, "MSE threshold (default: calibrated)");
  run->add_option("--g-th", ov.g_th, "truncated-inversion gain cutoff");

  std::vector<std::string> csv_paths;
  auto* summ = app.add_subcommand("summarize", "summarize metrics CSVs");
  summ->add_option("csvs", csv_paths, "metrics CSV paths")->required();

  std::string cal_config;
  int cal_seeds = 16;
  auto* cal = app.add_subcommand(
      "calibrate-tau", "recommend an MSE threshold for the current setup");
  cal->add_option("--config", cal_config, "config JSON path")->required();
  cal->add_option("--seeds", cal_seeds, "number of seeds to average over");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const auto doc = airfl::harness::load_json_file(config_path);
      const auto outs = airfl::harness::run(doc, ov);
      for (const auto& o : outs)
        std::cout << o.scheme << " -> " << o.metrics_path
                  << " (mean acc last 20: " << o.final_acc_mean20 << ")\n";
      return 0;
    }
    if (summ->parsed()) {
      std::cout << airfl::harness::summary_table(
          airfl::harness::summarize(csv_paths));
      return 0;
    }
    if (cal->parsed()) {
      const auto doc = airfl::harness::load_json_file(cal_config);
      airfl::harness::RunOverrides cov;
      double tau_sum = 0;
      for (int s = 0; s < cal_seeds; ++s) {
        cov.seed = s + 1;
        auto ex = airfl::harness::build_experiment(doc, cov);
        const auto w = airfl::training::initial_model(ex.cfg, ex.task->dim());
        tau_sum += airfl::training::calibrate_tau(1, w, *ex.task, ex.train,
                                                  ex.part, ex.cfg);
      }
      std::cout << "recommended tau: " << tau_sum / cal_seeds << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
