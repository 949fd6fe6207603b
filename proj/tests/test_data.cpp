#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include <catch2/catch_amalgamated.hpp>

#include "airfl/data.hpp"

using namespace airfl;

namespace {

data::Dataset labeled_dataset(int n, int classes) {
  data::Dataset ds;
  ds.inputs = Eigen::MatrixXd::Zero(2, n);
  ds.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    ds.labels[i] = i % classes;
    ds.inputs(0, i) = i;
  }
  ds.num_classes = classes;
  return ds;
}

void check_disjoint(const data::Partition& p) {
  std::set<int> seen;
  for (const auto& idx : p.assignment)
    for (int i : idx) CHECK(seen.insert(i).second);
}

}  // namespace

TEST_CASE("iid partition respects requested sizes and stays disjoint") {
  const auto ds = labeled_dataset(16000, 10);
  auto g = rng::substream(3, rng::Stream::partition);
  const auto part = data::partition_iid(ds, 20, data::balanced_sizes(20, 800), g);
  REQUIRE(part.devices() == 20);
  for (const auto& idx : part.assignment) CHECK(idx.size() == 800);
  check_disjoint(part);

  // Sum of fractions is 1 to within one ulp.
  long double q_sum = 0;
  for (int k = 0; k < 20; ++k) q_sum += part.q[k];
  CHECK(std::abs(double(q_sum - 1.0L)) <= 2.3e-16);
}

TEST_CASE("iid partition with unbalanced sizes stays in range") {
  const auto ds = labeled_dataset(32000, 10);
  auto g = rng::substream(4, rng::Stream::partition);
  const auto sizes = data::unbalanced_sizes(20, 500, 1000, g);
  for (int s : sizes) {
    CHECK(s >= 500);
    CHECK(s <= 1000);
  }
  const auto part = data::partition_iid(ds, 20, sizes, g);
  for (int k = 0; k < 20; ++k)
    CHECK(static_cast<int>(part.assignment[k].size()) == sizes[k]);
}

TEST_CASE("single-device partition owns everything assigned") {
  const auto ds = labeled_dataset(100, 2);
  auto g = rng::substream(5, rng::Stream::partition);
  const auto part = data::partition_iid(ds, 1, {100}, g);
  CHECK(part.assignment[0].size() == 100);
  CHECK(part.q[0] == 1.0);
}

TEST_CASE("iid partition rejects oversubscription") {
  const auto ds = labeled_dataset(100, 2);
  auto g = rng::substream(6, rng::Stream::partition);
  CHECK_THROWS(data::partition_iid(ds, 2, {80, 80}, g));
}

TEST_CASE("noniid sharding gives every device at most two labels") {
  const auto ds = labeled_dataset(16000, 10);
  auto g = rng::substream(7, rng::Stream::partition);
  const auto part =
      data::partition_noniid(ds, 20, data::balanced_sizes(20, 800), g);
  check_disjoint(part);

  std::vector<std::set<int>> device_labels(20);
  for (int k = 0; k < 20; ++k)
    for (int i : part.assignment[k]) device_labels[k].insert(ds.labels[i]);
  for (int k = 0; k < 20; ++k) CHECK(device_labels[k].size() <= 2);

  // Devices in the same shard share the class pair; across shards they differ.
  for (int s = 0; s < 5; ++s)
    for (int k = 1; k < 4; ++k) CHECK(device_labels[4 * s + k] == device_labels[4 * s]);
  std::set<std::set<int>> distinct(device_labels.begin(), device_labels.end());
  CHECK(distinct.size() == 5);
}

TEST_CASE("noniid sharding with one device per shard") {
  const auto ds = labeled_dataset(5000, 10);
  auto g = rng::substream(8, rng::Stream::partition);
  const auto part = data::partition_noniid(ds, 5, data::balanced_sizes(5, 100), g);
  CHECK(part.devices() == 5);
}

TEST_CASE("noniid sharding rejects bad divisibility") {
  const auto ds = labeled_dataset(5000, 10);
  auto g = rng::substream(9, rng::Stream::partition);
  CHECK_THROWS(data::partition_noniid(ds, 7, data::balanced_sizes(7, 10), g));
}

TEST_CASE("minibatch sampling is uniform with replacement") {
  const auto ds = labeled_dataset(100, 2);
  auto g = rng::substream(10, rng::Stream::partition);
  auto part = data::partition_iid(ds, 1, {10}, g);

  auto gb = rng::substream(10, rng::Stream::minibatch);
  std::map<int, long> freq;
  const long draws = 100'000;
  const int B = 10;
  for (long i = 0; i < draws / B; ++i) {
    const auto batch = data::sample_minibatch(part, 0, B, gb);
    REQUIRE(batch.size() == static_cast<std::size_t>(B));
    for (int idx : batch) ++freq[idx];
  }
  REQUIRE(freq.size() == 10);
  for (const auto& [idx, count] : freq)
    CHECK(std::abs(count / double(draws) - 0.1) < 0.01 * 0.1 * 10);
}

TEST_CASE("minibatch on a single-element set is forced") {
  const auto ds = labeled_dataset(10, 2);
  data::Partition part;
  part.assignment = {{7}};
  part.q = Eigen::VectorXd::Ones(1);
  auto g = rng::substream(11, rng::Stream::minibatch);
  const auto batch = data::sample_minibatch(part, 0, 1, g);
  CHECK(batch == std::vector<int>{7});

  data::Partition empty;
  empty.assignment = {{}};
  empty.q = Eigen::VectorXd::Ones(1);
  CHECK_THROWS(data::sample_minibatch(empty, 0, 1, g));
}

TEST_CASE("IDX round trip through temporary files") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "airfl_idx_test";
  fs::create_directories(dir);
  const std::string img = (dir / "img").string();
  const std::string lab = (dir / "lab").string();

  // Two 2x3 images with labels 1 and 0.
  auto be32 = [](std::ofstream& o, std::uint32_t v) {
    for (int i = 3; i >= 0; --i) o.put(char((v >> (8 * i)) & 0xff));
  };
  {
    std::ofstream o(img, std::ios::binary);
    be32(o, 0x00000803);
    be32(o, 2);
    be32(o, 2);
    be32(o, 3);
    for (int i = 0; i < 12; ++i) o.put(char(i * 20));
  }
  {
    std::ofstream o(lab, std::ios::binary);
    be32(o, 0x00000801);
    be32(o, 2);
    o.put(1);
    o.put(0);
  }

  const auto ds = data::load_idx(img, lab);
  CHECK(ds.size() == 2);
  CHECK(ds.features() == 6);
  CHECK(ds.labels[0] == 1);
  CHECK(ds.labels[1] == 0);
  CHECK(ds.inputs(1, 0) == Catch::Approx(20.0 / 255.0));
  CHECK(ds.num_classes == 2);

  // Wrong magic is rejected.
  {
    std::ofstream o(img, std::ios::binary);
    be32(o, 0x00000801);
  }
  CHECK_THROWS(data::load_idx(img, lab));
  fs::remove_all(dir);
}

TEST_CASE("gaussian mixture generator is deterministic and stratified") {
  const auto a = data::make_gaussian_mixture(5, 8, 4, 100, 3.0);
  const auto b = data::make_gaussian_mixture(5, 8, 4, 100, 3.0);
  CHECK(a.inputs == b.inputs);
  CHECK(a.labels == b.labels);
  std::map<int, int> counts;
  for (int lab : a.labels) ++counts[lab];
  for (const auto& [lab, c] : counts) CHECK(c == 25);
}

TEST_CASE("stratified subset keeps per-class counts") {
  const auto ds = labeled_dataset(1000, 10);
  auto g = rng::substream(12, rng::Stream::data_synth);
  const auto sub = data::stratified_subset(ds, 30, g);
  CHECK(sub.size() == 300);
  std::map<int, int> counts;
  for (int lab : sub.labels) ++counts[lab];
  for (const auto& [lab, c] : counts) CHECK(c == 30);
}
