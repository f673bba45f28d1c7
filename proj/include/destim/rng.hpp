#pragma once

#include <cstdint>
#include <random>

namespace destim {

// SplitMix64 finalizer. Used to derive decorrelated engine seeds from a
// root seed plus a list of stream ids (trial, terminal, ...), so results
// never depend on thread scheduling or call order.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t stream_key(std::uint64_t seed) { return mix64(seed); }

template <class... Ids>
std::uint64_t stream_key(std::uint64_t seed, std::uint64_t id, Ids... rest) {
  return stream_key(mix64(seed ^ mix64(id + 0x6a09e667f3bcc909ull)), rest...);
}

using Rng = std::mt19937_64;

template <class... Ids>
Rng make_rng(std::uint64_t seed, Ids... ids) {
  return Rng(stream_key(seed, static_cast<std::uint64_t>(ids)...));
}

// Counter-based SplitMix64 engine for per-terminal and per-trial substreams.
// Construction is one word of state, which matters when millions of short
// streams are spawned inside a protocol round.
struct SplitMix64 {
  using result_type = std::uint64_t;
  std::uint64_t state = 0;

  explicit SplitMix64(std::uint64_t s = 0) : state(s) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~0ull; }
  result_type operator()() {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
};

template <class... Ids>
SplitMix64 make_stream(std::uint64_t seed, Ids... ids) {
  return SplitMix64(stream_key(seed, static_cast<std::uint64_t>(ids)...));
}

}  // namespace destim
