#pragma once

#include <cstdint>
#include <random>

namespace airfl::rng {

// Finalizer from splitmix64. Full-avalanche on 64 bits.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Logical stream identities. Every random decision in a run is keyed by
// (master seed, stream, a, b) so the realized values never depend on the
// order in which modules happen to draw.
enum class Stream : std::uint64_t {
  channel_downlink = 0x11,
  channel_uplink = 0x12,
  noise_downlink = 0x21,
  noise_uplink = 0x22,
  minibatch = 0x31,
  model_init = 0x41,
  partition = 0x51,
  data_synth = 0x61,
  audit = 0x71,
  instance_gen = 0x81,
};

inline std::uint64_t stream_key(std::uint64_t seed, Stream s,
                                std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t x = mix64(seed);
  x = mix64(x ^ static_cast<std::uint64_t>(s));
  x = mix64(x ^ a);
  x = mix64(x ^ b);
  return x;
}

inline std::mt19937_64 substream(std::uint64_t seed, Stream s,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
  return std::mt19937_64(stream_key(seed, s, a, b));
}

}  // namespace airfl::rng
