#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "airfl/config.hpp"
#include "airfl/training.hpp"

#ifndef AIRFL_REVISION
#define AIRFL_REVISION "dev"
#endif

namespace airfl::harness {

using engine::RoundRecord;
using engine::Scheme;

class HarnessError : public std::runtime_error {
 public:
  explicit HarnessError(const std::string& m) : std::runtime_error(m) {}
};

inline constexpr const char* kMetricsHeader =
    "round,test_acc,train_loss,num_selected,ps,sum_ap,sdp_obj,term_a,term_b,"
    "term_c,term_d,A_t,wall_ms";

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Metrics CSV with 17-significant-digit floats. wall_ms is always written as
// 0: measured timings are nondeterministic and live in the manifest instead,
// keeping the CSV bytes a pure function of (config, seed).
inline void write_metrics_csv(const std::string& path,
                              const std::vector<RoundRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw HarnessError("cannot open " + path + " for writing");
  out << kMetricsHeader << "\n";
  for (const auto& r : records) {
    out << r.round << ',' << format_double(r.test_acc) << ','
        << format_double(r.train_loss) << ',' << r.num_selected << ','
        << format_double(r.ps) << ',' << format_double(r.sum_ap) << ','
        << format_double(r.sdp_obj) << ',' << format_double(r.term_a) << ','
        << format_double(r.term_b) << ',' << format_double(r.term_c) << ','
        << format_double(r.term_d) << ',' << format_double(r.A_t) << ','
        << format_double(0.0) << "\n";
  }
}

struct CsvTable {
  std::vector<RoundRecord> records;
};

inline CsvTable read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw HarnessError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw HarnessError("empty CSV " + path);
  if (line != kMetricsHeader)
    throw HarnessError("unexpected CSV header in " + path);
  CsvTable t;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 13) throw HarnessError("malformed CSV row in " + path);
    RoundRecord r;
    r.round = std::stoi(cells[0]);
    r.test_acc = std::stod(cells[1]);
    r.train_loss = std::stod(cells[2]);
    r.num_selected = std::stoi(cells[3]);
    r.ps = std::stod(cells[4]);
    r.sum_ap = std::stod(cells[5]);
    r.sdp_obj = std::stod(cells[6]);
    r.term_a = std::stod(cells[7]);
    r.term_b = std::stod(cells[8]);
    r.term_c = std::stod(cells[9]);
    r.term_d = std::stod(cells[10]);
    r.A_t = std::stod(cells[11]);
    r.wall_ms = std::stod(cells[12]);
    t.records.push_back(r);
  }
  return t;
}

// ---- experiment assembly ----------------------------------------------------

struct Experiment {
  SystemConfig cfg;
  std::shared_ptr<tasks::LearningTask> task;
  data::Dataset train;
  data::Dataset test;
  data::Partition part;
  std::string partition_kind = "iid";
  std::string sizes_kind = "balanced";
};

struct RunOverrides {
  std::string scheme = "proposed";  // or fedavg-ideal|mse-threshold|truncated-inversion|all
  std::string constraint;           // empty = keep config
  int rounds = -1;
  long long seed = -1;
  std::string partition;            // iid|noniid, empty = keep config
  std::string sizes;                // balanced|unbalanced
  std::string out_dir = "out";
  std::string dump_channels;        // optional path
  int checkpoint_every = 0;
  double tau = -1.0;
  double g_th = 0.2;
  bool estimate_moments = false;
};

inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw HarnessError("cannot open config file " + path);
  return nlohmann::json::parse(in);
}

// Builds dataset, task and partition from the config document, applying CLI
// overrides. Top-level keys: system, task, data, partition.
inline Experiment build_experiment(const nlohmann::json& doc,
                                   const RunOverrides& ov) {
  detail::require_known_keys(doc, {"system", "task", "data", "partition"},
                             "config document");
  nlohmann::json sys = doc.value("system", nlohmann::json::object());
  const nlohmann::json task_j = doc.value("task", nlohmann::json::object());
  const nlohmann::json data_j = doc.value("data", nlohmann::json::object());
  const nlohmann::json part_j = doc.value("partition", nlohmann::json::object());

  detail::require_known_keys(
      task_j, {"type", "hidden", "dim"}, "task section");
  detail::require_known_keys(
      data_j,
      {"type", "features", "classes", "train_size", "test_size", "separation",
       "dir", "train_per_class", "data_seed"},
      "data section");
  detail::require_known_keys(
      part_j,
      {"kind", "sizes", "per_device", "lo", "hi", "num_shards",
       "classes_per_shard"},
      "partition section");

  Experiment ex;

  // Apply overrides into the raw system json first so defaults that depend on
  // other fields resolve consistently.
  if (ov.rounds > 0) sys["T"] = ov.rounds;
  if (ov.seed >= 0) sys["seed"] = static_cast<std::uint64_t>(ov.seed);
  if (!ov.constraint.empty()) sys["constraint_mode"] = ov.constraint;

  const std::string data_type = data_j.value("type", std::string("synthetic"));
  const std::uint64_t data_seed = data_j.value("data_seed", std::uint64_t{12345});

  const std::string task_type = task_j.value("type", std::string("logistic"));

  if (data_type == "synthetic") {
    const int features = data_j.value("features", 32);
    const int classes = data_j.value("classes", 10);
    const int train_size = data_j.value("train_size", 16000);
    const int test_size = data_j.value("test_size", 4000);
    const double sep = data_j.value("separation", 3.0);
    ex.train = data::make_gaussian_mixture(data_seed, features, classes,
                                           train_size, sep, /*salt=*/0);
    ex.test = data::make_gaussian_mixture(data_seed, features, classes,
                                          test_size, sep, /*salt=*/1);
  } else if (data_type == "mnist") {
    const std::string dir = data_j.value("dir", std::string("data/mnist"));
    data::Dataset full_train = data::load_idx(dir + "/train-images-idx3-ubyte",
                                              dir + "/train-labels-idx1-ubyte");
    ex.test = data::load_idx(dir + "/t10k-images-idx3-ubyte",
                             dir + "/t10k-labels-idx1-ubyte");
    const int per_class = data_j.value("train_per_class", 1600);
    auto g = rng::substream(data_seed, rng::Stream::data_synth, 2);
    ex.train = data::stratified_subset(full_train, per_class, g);
  } else if (data_type == "none") {
    // Placeholder corpus for data-free tasks; the index machinery still runs.
    const int n = 256 * std::max(1, sys.value("K", 20));
    ex.train.inputs = Eigen::MatrixXd::Zero(1, n);
    ex.train.labels.assign(n, 0);
    ex.train.num_classes = 1;
    ex.test = ex.train;
  } else {
    throw HarnessError("unknown data type: " + data_type);
  }

  if (task_type == "logistic") {
    ex.task = tasks::logistic_task(ex.train.features(), ex.train.num_classes);
  } else if (task_type == "mlp") {
    ex.task = tasks::tiny_mlp_task(ex.train.features(),
                                   task_j.value("hidden", 32),
                                   ex.train.num_classes);
  } else if (task_type == "quadratic") {
    ex.task = tasks::quadratic_task(task_j.value("dim", 16));
  } else {
    throw HarnessError("unknown task type: " + task_type);
  }

  // The model dimension comes from the task; budgets that were left to
  // default scale with it.
  if (!sys.contains("d")) sys["d"] = ex.task->dim();
  ex.cfg = config_from_json(sys);
  if (ex.cfg.d != ex.task->dim())
    throw HarnessError("config d=" + std::to_string(ex.cfg.d) +
                       " does not match task dimension " +
                       std::to_string(ex.task->dim()));

  const auto diags = validate(ex.cfg);
  for (const auto& dg : diags) {
    if (dg.severity == Diagnostic::Severity::error)
      throw HarnessError("config error: " + dg.message);
    std::cerr << "[config warning] " << dg.message << "\n";
  }

  ex.partition_kind = !ov.partition.empty()
                          ? ov.partition
                          : part_j.value("kind", std::string("iid"));
  ex.sizes_kind =
      !ov.sizes.empty() ? ov.sizes : part_j.value("sizes", std::string("balanced"));

  auto gp = rng::substream(ex.cfg.seed, rng::Stream::partition);
  std::vector<int> sizes;
  if (ex.sizes_kind == "balanced") {
    const int per_device =
        part_j.value("per_device", ex.train.size() / ex.cfg.K);
    sizes = data::balanced_sizes(ex.cfg.K, per_device);
  } else if (ex.sizes_kind == "unbalanced") {
    sizes = data::unbalanced_sizes(ex.cfg.K, part_j.value("lo", 500),
                                   part_j.value("hi", 1000), gp);
  } else {
    throw HarnessError("unknown sizes kind: " + ex.sizes_kind);
  }

  if (ex.partition_kind == "iid") {
    ex.part = data::partition_iid(ex.train, ex.cfg.K, sizes, gp);
  } else if (ex.partition_kind == "noniid") {
    ex.part = data::partition_noniid(ex.train, ex.cfg.K, sizes, gp,
                                     part_j.value("num_shards", 5),
                                     part_j.value("classes_per_shard", 2));
  } else {
    throw HarnessError("unknown partition kind: " + ex.partition_kind);
  }
  return ex;
}

// ---- run + outputs ----------------------------------------------------------

inline std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&tt));
  return buf;
}

inline void dump_channel_trace(const std::string& path, const SystemConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw HarnessError("cannot open " + path);
  out << "round,device,re_h_dl,im_h_dl,re_h_up,im_h_up\n";
  for (int t = 1; t <= cfg.T; ++t) {
    const auto ch = channel::draw_round_channels(cfg.seed, t, cfg.K);
    for (int k = 0; k < cfg.K; ++k)
      out << t << ',' << k << ',' << format_double(ch.h_dl[k].real()) << ','
          << format_double(ch.h_dl[k].imag()) << ','
          << format_double(ch.h_up[k].real()) << ','
          << format_double(ch.h_up[k].imag()) << "\n";
  }
}

inline void write_checkpoint(const std::string& stem, const Eigen::VectorXd& w,
                             int round, std::uint64_t seed) {
  std::ofstream raw(stem + ".f64", std::ios::binary);
  if (!raw) throw HarnessError("cannot open checkpoint " + stem);
  raw.write(reinterpret_cast<const char*>(w.data()),
            static_cast<std::streamsize>(sizeof(double) * w.size()));
  nlohmann::json side;
  side["dimension"] = w.size();
  side["round"] = round;
  side["seed"] = seed;
  std::ofstream js(stem + ".json");
  js << side.dump(2) << "\n";
}

inline nlohmann::json bound_report(const std::vector<RoundRecord>& records,
                                   const SystemConfig& cfg) {
  std::vector<double> A, G;
  for (const auto& r : records) {
    A.push_back(r.A_t);
    G.push_back(r.term_a + r.term_b + r.term_c + r.term_d);
  }
  nlohmann::json j;
  j["mu2"] = cfg.mu2;
  j["delta"] = cfg.delta;
  j["A"] = A;
  j["G"] = G;
  j["accumulated_gap"] = bound::optimality_gap(A, G, 0.0);
  return j;
}

struct RunOutput {
  std::string scheme;
  std::string metrics_path;
  std::string manifest_path;
  std::string bound_path;
  double final_acc_mean20 = 0;
};

inline RunOutput run_one_scheme(const Experiment& ex, Scheme scheme,
                                const RunOverrides& ov) {
  namespace fs = std::filesystem;
  fs::create_directories(ov.out_dir);
  const std::string label = engine::to_string(scheme);
  const std::string base = ov.out_dir + "/" + label;

  nlohmann::json manifest;
  manifest["config"] = config_to_json(ex.cfg);
  manifest["scheme"] = label;
  manifest["revision"] = AIRFL_REVISION;
  manifest["seed"] = ex.cfg.seed;
  manifest["partition"] = ex.partition_kind;
  manifest["sizes"] = ex.sizes_kind;
  manifest["started_at"] = iso_timestamp();
  manifest["outputs"] = {base + "_metrics.csv", base + "_bound.json"};
  {
    std::ofstream mf(base + "_manifest.json");
    if (!mf) throw HarnessError("cannot open manifest for writing");
    mf << manifest.dump(2) << "\n";
  }

  training::SchemeRunner runner;
  runner.scheme = scheme;
  runner.params.tau = ov.tau;
  runner.params.g_th = ov.g_th;

  auto result = training::run_training(runner, ex.cfg, *ex.task, ex.train,
                                       ex.test, ex.part, ov.checkpoint_every);

  write_metrics_csv(base + "_metrics.csv", result.records);
  {
    std::ofstream bf(base + "_bound.json");
    bf << bound_report(result.records, ex.cfg).dump(2) << "\n";
  }
  for (std::size_t i = 0; i < result.checkpoints.size(); ++i)
    write_checkpoint(base + "_ckpt_" + std::to_string(result.checkpoint_rounds[i]),
                     result.checkpoints[i], result.checkpoint_rounds[i],
                     ex.cfg.seed);

  manifest["finished_at"] = iso_timestamp();
  manifest["tau_used"] = result.tau_used;
  manifest["g_th"] = ov.g_th;
  manifest["per_round_wall_ms"] = result.wall_ms;
  {
    std::ofstream mf(base + "_manifest.json");
    mf << manifest.dump(2) << "\n";
  }

  RunOutput out;
  out.scheme = label;
  out.metrics_path = base + "_metrics.csv";
  out.manifest_path = base + "_manifest.json";
  out.bound_path = base + "_bound.json";
  const int n = static_cast<int>(result.records.size());
  if (n >= 20) {
    double acc = 0;
    for (int i = n - 20; i < n; ++i) acc += result.records[i].test_acc;
    out.final_acc_mean20 = acc / 20.0;
  }
  return out;
}

inline std::vector<RunOutput> run(const nlohmann::json& doc,
                                  const RunOverrides& ov) {
  const Experiment ex = build_experiment(doc, ov);
  if (!ov.dump_channels.empty()) dump_channel_trace(ov.dump_channels, ex.cfg);

  std::vector<Scheme> schemes;
  if (ov.scheme == "all") {
    schemes = {Scheme::fedavg_ideal, Scheme::proposed, Scheme::mse_threshold,
               Scheme::truncated_inversion};
  } else {
    schemes = {engine::scheme_from_string(ov.scheme)};
  }
  std::vector<RunOutput> outs;
  for (Scheme s : schemes) outs.push_back(run_one_scheme(ex, s, ov));
  return outs;
}

// ---- summaries --------------------------------------------------------------

struct SchemeSummary {
  std::string path;
  double mean_acc_last20 = 0;
  double mean_selected = 0;
  double mean_gap = 0;
};

// Per CSV: mean test accuracy over the final 20 rounds, mean selected count,
// mean per-round gap total. Errors out on runs shorter than 20 rounds.
inline std::vector<SchemeSummary> summarize(const std::vector<std::string>& paths) {
  std::vector<SchemeSummary> out;
  for (const auto& p : paths) {
    const CsvTable t = read_metrics_csv(p);
    const int n = static_cast<int>(t.records.size());
    if (n < 20) throw HarnessError("run too short to summarize: " + p);
    SchemeSummary s;
    s.path = p;
    for (int i = n - 20; i < n; ++i) s.mean_acc_last20 += t.records[i].test_acc;
    s.mean_acc_last20 /= 20.0;
    for (const auto& r : t.records) {
      s.mean_selected += r.num_selected;
      s.mean_gap += r.term_a + r.term_b + r.term_c + r.term_d;
    }
    s.mean_selected /= n;
    s.mean_gap /= n;
    out.push_back(s);
  }
  return out;
}

inline std::string summary_table(const std::vector<SchemeSummary>& rows) {
  std::ostringstream os;
  os << "metrics_csv,mean_acc_last20,mean_selected,mean_gap\n";
  for (const auto& r : rows)
    os << r.path << ',' << format_double(r.mean_acc_last20) << ','
       << format_double(r.mean_selected) << ',' << format_double(r.mean_gap)
       << "\n";
  if (rows.size() > 1) {
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return rows[a].mean_acc_last20 > rows[b].mean_acc_last20;
    });
    os << "ordering:";
    for (std::size_t i : order) os << " " << rows[i].path;
    os << "\n";
  }
  return os.str();
}

}  // namespace airfl::harness
