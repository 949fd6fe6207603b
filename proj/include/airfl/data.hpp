#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "airfl/rng.hpp"

namespace airfl::data {

// Feature vectors are columns of `inputs`; labels are class indices.
struct Dataset {
  Eigen::MatrixXd inputs;          // n x N
  std::vector<int> labels;         // length N
  int num_classes = 0;

  int size() const { return static_cast<int>(labels.size()); }
  int features() const { return static_cast<int>(inputs.rows()); }
};

// Disjoint assignment of global sample indices to devices plus the resulting
// data fractions q_k = D_k / D (D = total assigned samples).
struct Partition {
  std::vector<std::vector<int>> assignment;  // device -> indices
  Eigen::VectorXd q;

  int devices() const { return static_cast<int>(assignment.size()); }
};

inline Partition finalize_partition(std::vector<std::vector<int>> assignment) {
  Partition p;
  p.assignment = std::move(assignment);
  const int K = p.devices();
  long total = 0;
  for (const auto& idx : p.assignment) total += static_cast<long>(idx.size());
  p.q.resize(K);
  for (int k = 0; k < K; ++k)
    p.q[k] = static_cast<double>(p.assignment[k].size()) / static_cast<double>(total);
  return p;
}

// Uniform random disjoint assignment with the requested per-device sizes.
inline Partition partition_iid(const Dataset& ds, int K,
                               const std::vector<int>& sizes,
                               std::mt19937_64& g) {
  if (static_cast<int>(sizes.size()) != K)
    throw std::invalid_argument("sizes must have length K");
  long want = 0;
  for (int s : sizes) {
    if (s < 0) throw std::invalid_argument("sizes must be >= 0");
    want += s;
  }
  if (want > ds.size())
    throw std::invalid_argument("not enough samples for requested partition");

  std::vector<int> perm(ds.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), g);

  std::vector<std::vector<int>> assignment(K);
  int pos = 0;
  for (int k = 0; k < K; ++k) {
    assignment[k].assign(perm.begin() + pos, perm.begin() + pos + sizes[k]);
    pos += sizes[k];
  }
  return finalize_partition(std::move(assignment));
}

// Label-sharded assignment: classes are grouped into `num_shards` disjoint
// shards of `classes_per_shard` classes each, and every device draws all of
// its samples from a single shard. Devices in different shards therefore
// carry different class pairs.
inline Partition partition_noniid(const Dataset& ds, int K,
                                  const std::vector<int>& sizes,
                                  std::mt19937_64& g, int num_shards = 5,
                                  int classes_per_shard = 2) {
  if (static_cast<int>(sizes.size()) != K)
    throw std::invalid_argument("sizes must have length K");
  if (num_shards < 1 || K % num_shards != 0)
    throw std::invalid_argument("K must be divisible by num_shards");
  if (ds.num_classes < num_shards * classes_per_shard)
    throw std::invalid_argument("dataset has too few classes for sharding");

  std::vector<int> class_order(ds.num_classes);
  std::iota(class_order.begin(), class_order.end(), 0);
  std::shuffle(class_order.begin(), class_order.end(), g);

  std::vector<int> class_to_shard(ds.num_classes, -1);
  for (int s = 0; s < num_shards; ++s)
    for (int c = 0; c < classes_per_shard; ++c)
      class_to_shard[class_order[s * classes_per_shard + c]] = s;

  std::vector<std::vector<int>> shard_pool(num_shards);
  for (int i = 0; i < ds.size(); ++i) {
    const int s = class_to_shard[ds.labels[i]];
    if (s >= 0) shard_pool[s].push_back(i);
  }
  for (auto& pool : shard_pool) std::shuffle(pool.begin(), pool.end(), g);

  const int per_shard = K / num_shards;
  std::vector<std::vector<int>> assignment(K);
  std::vector<int> used(num_shards, 0);
  for (int k = 0; k < K; ++k) {
    const int s = k / per_shard;
    if (used[s] + sizes[k] > static_cast<int>(shard_pool[s].size()))
      throw std::invalid_argument("shard " + std::to_string(s) +
                                  " has too few samples for requested sizes");
    auto first = shard_pool[s].begin() + used[s];
    assignment[k].assign(first, first + sizes[k]);
    used[s] += sizes[k];
  }
  return finalize_partition(std::move(assignment));
}

// B indices drawn independently and uniformly with replacement from device
// k's local index set.
inline std::vector<int> sample_minibatch(const Partition& part, int k, int B,
                                         std::mt19937_64& g) {
  if (B < 1) throw std::invalid_argument("B must be >= 1");
  const auto& local = part.assignment.at(k);
  if (local.empty())
    throw std::invalid_argument("device " + std::to_string(k) +
                                " has an empty local set");
  std::uniform_int_distribution<int> u(0, static_cast<int>(local.size()) - 1);
  std::vector<int> batch(B);
  for (int i = 0; i < B; ++i) batch[i] = local[u(g)];
  return batch;
}

// Balanced or unbalanced per-device sizes. Unbalanced sizes are uniform on
// [lo, hi] per device.
inline std::vector<int> balanced_sizes(int K, int per_device) {
  return std::vector<int>(K, per_device);
}

inline std::vector<int> unbalanced_sizes(int K, int lo, int hi,
                                         std::mt19937_64& g) {
  std::uniform_int_distribution<int> u(lo, hi);
  std::vector<int> sizes(K);
  for (int k = 0; k < K; ++k) sizes[k] = u(g);
  return sizes;
}

// Gaussian mixture with one spherical component per class; class means are
// drawn once at radius `separation`. Deterministic in (seed, shape).
inline Dataset make_gaussian_mixture(std::uint64_t seed, int n_features,
                                     int n_classes, int n_samples,
                                     double separation = 3.0,
                                     std::uint64_t salt = 0) {
  auto g = rng::substream(seed, rng::Stream::data_synth, salt);
  std::normal_distribution<double> n01(0.0, 1.0);

  Eigen::MatrixXd means(n_features, n_classes);
  for (int c = 0; c < n_classes; ++c) {
    Eigen::VectorXd m(n_features);
    for (int i = 0; i < n_features; ++i) m[i] = n01(g);
    means.col(c) = separation * m / std::max(m.norm(), 1e-12);
  }

  Dataset ds;
  ds.num_classes = n_classes;
  ds.inputs.resize(n_features, n_samples);
  ds.labels.resize(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    const int c = i % n_classes;  // stratified
    ds.labels[i] = c;
    for (int r = 0; r < n_features; ++r)
      ds.inputs(r, i) = means(r, c) + n01(g);
  }
  return ds;
}

// ---- IDX (big-endian) image/label files -----------------------------------

namespace detail {

inline std::uint32_t read_be32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("truncated IDX header");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace detail

// Reads an idx3/idx1 pair into a Dataset with pixel values scaled to [0,1].
inline Dataset load_idx(const std::string& image_path,
                        const std::string& label_path) {
  std::ifstream imgs(image_path, std::ios::binary);
  if (!imgs) throw std::runtime_error("cannot open " + image_path);
  std::ifstream labs(label_path, std::ios::binary);
  if (!labs) throw std::runtime_error("cannot open " + label_path);

  if (detail::read_be32(imgs) != 0x00000803u)
    throw std::runtime_error("bad magic in " + image_path);
  const std::uint32_t n_img = detail::read_be32(imgs);
  const std::uint32_t rows = detail::read_be32(imgs);
  const std::uint32_t cols = detail::read_be32(imgs);

  if (detail::read_be32(labs) != 0x00000801u)
    throw std::runtime_error("bad magic in " + label_path);
  const std::uint32_t n_lab = detail::read_be32(labs);
  if (n_img != n_lab)
    throw std::runtime_error("image/label count mismatch in IDX pair");

  const std::size_t pix = std::size_t(rows) * cols;
  std::vector<unsigned char> buf(pix);

  Dataset ds;
  ds.inputs.resize(static_cast<Eigen::Index>(pix), n_img);
  ds.labels.resize(n_img);
  int max_label = 0;
  for (std::uint32_t i = 0; i < n_img; ++i) {
    imgs.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pix));
    if (!imgs) throw std::runtime_error("truncated image data in " + image_path);
    for (std::size_t p = 0; p < pix; ++p)
      ds.inputs(static_cast<Eigen::Index>(p), i) = buf[p] / 255.0;
    const int lab = labs.get();
    if (lab == EOF) throw std::runtime_error("truncated label data in " + label_path);
    ds.labels[i] = lab;
    max_label = std::max(max_label, lab);
  }
  ds.num_classes = max_label + 1;
  return ds;
}

// Stratified subset with `per_class` samples of each class, in deterministic
// order. Used to cut a desk-scale training set out of a full corpus.
inline Dataset stratified_subset(const Dataset& ds, int per_class,
                                 std::mt19937_64& g) {
  std::vector<std::vector<int>> by_class(ds.num_classes);
  for (int i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);
  std::vector<int> keep;
  for (int c = 0; c < ds.num_classes; ++c) {
    auto& pool = by_class[c];
    if (static_cast<int>(pool.size()) < per_class)
      throw std::invalid_argument("class " + std::to_string(c) +
                                  " has fewer than requested samples");
    std::shuffle(pool.begin(), pool.end(), g);
    keep.insert(keep.end(), pool.begin(), pool.begin() + per_class);
  }
  std::sort(keep.begin(), keep.end());
  Dataset out;
  out.num_classes = ds.num_classes;
  out.inputs.resize(ds.inputs.rows(), static_cast<Eigen::Index>(keep.size()));
  out.labels.resize(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out.inputs.col(static_cast<Eigen::Index>(i)) = ds.inputs.col(keep[i]);
    out.labels[i] = ds.labels[keep[i]];
  }
  return out;
}

}  // namespace airfl::data
