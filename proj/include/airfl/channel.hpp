#pragma once

#include <complex>
#include <random>
#include <stdexcept>

#include <Eigen/Core>

#include "airfl/rng.hpp"

namespace airfl::channel {

// Per-round fading coefficients, one downlink and one uplink coefficient per
// device. Quasi-static: constant within a round, independent across rounds.
struct ChannelDraw {
  Eigen::VectorXcd h_dl;
  Eigen::VectorXcd h_up;
  int round = 0;
};

// Unit-variance circularly symmetric complex Gaussian. Magnitudes below the
// clamp are redrawn: exact zeros would blow up the descaler before the
// optimizer gets a chance to deselect the device.
inline std::complex<double> draw_cn01(std::mt19937_64& g,
                                      double min_abs = 1e-9) {
  std::normal_distribution<double> n(0.0, std::sqrt(0.5));
  while (true) {
    std::complex<double> h(n(g), n(g));
    if (std::abs(h) >= min_abs) return h;
  }
}

inline ChannelDraw draw_round_channels(std::uint64_t seed, int round, int K) {
  if (K < 1) throw std::invalid_argument("K must be >= 1");
  ChannelDraw out;
  out.round = round;
  out.h_dl.resize(K);
  out.h_up.resize(K);
  for (int k = 0; k < K; ++k) {
    auto gd = rng::substream(seed, rng::Stream::channel_downlink,
                             static_cast<std::uint64_t>(round),
                             static_cast<std::uint64_t>(k));
    auto gu = rng::substream(seed, rng::Stream::channel_uplink,
                             static_cast<std::uint64_t>(round),
                             static_cast<std::uint64_t>(k));
    out.h_dl[k] = draw_cn01(gd);
    out.h_up[k] = draw_cn01(gu);
  }
  return out;
}

// i.i.d. zero-mean real Gaussian entries with the given per-entry variance.
inline Eigen::VectorXd gaussian_vector(std::mt19937_64& g, int dim,
                                       double per_entry_variance) {
  if (dim < 1) throw std::invalid_argument("dim must be >= 1");
  if (per_entry_variance < 0)
    throw std::invalid_argument("variance must be >= 0");
  if (per_entry_variance == 0.0) return Eigen::VectorXd::Zero(dim);
  std::normal_distribution<double> n(0.0, std::sqrt(per_entry_variance));
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = n(g);
  return v;
}

}  // namespace airfl::channel
