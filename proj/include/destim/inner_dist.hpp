#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "destim/regimes.hpp"
#include "destim/rng.hpp"

namespace destim {

struct BudgetTooSmall : std::runtime_error {
  explicit BudgetTooSmall(const std::string& what) : std::runtime_error(what) {}
};

// One coded message of exactly l bits, packed high bit first.
struct Message {
  int l = 0;
  std::vector<std::uint8_t> bytes;

  explicit Message(int l_bits = 0) : l(l_bits), bytes(static_cast<std::size_t>((l_bits + 7) / 8), 0) {}

  int bit(int j) const { return (bytes[static_cast<std::size_t>(j >> 3)] >> (7 - (j & 7))) & 1; }

  void set_bit(int j, int v) {
    const std::uint8_t mask = static_cast<std::uint8_t>(0x80u >> (j & 7));
    if (v)
      bytes[static_cast<std::size_t>(j >> 3)] |= mask;
    else
      bytes[static_cast<std::size_t>(j >> 3)] &= static_cast<std::uint8_t>(~mask);
  }

  // Big-endian field of `width` bits starting at bit `pos`.
  void set_field(int pos, int width, std::uint64_t value) {
    for (int j = 0; j < width; ++j)
      set_bit(pos + j, static_cast<int>((value >> (width - 1 - j)) & 1ull));
  }

  std::uint64_t field(int pos, int width) const {
    std::uint64_t v = 0;
    for (int j = 0; j < width; ++j) v = (v << 1) | static_cast<std::uint64_t>(bit(pos + j));
    return v;
  }
};

struct Transcript {
  int m = 0;
  int l = 0;
  std::vector<Message> messages;

  long long total_bits() const { return static_cast<long long>(m) * l; }
};

inline bool budget_exact(const Transcript& tr) {
  if (static_cast<int>(tr.messages.size()) != tr.m) return false;
  for (const Message& msg : tr.messages) {
    if (msg.l != tr.l) return false;
    if (msg.bytes.size() != static_cast<std::size_t>((tr.l + 7) / 8)) return false;
    // padding bits past l must be zero
    for (int j = tr.l; j < 8 * static_cast<int>(msg.bytes.size()); ++j)
      if ((msg.bytes[static_cast<std::size_t>(j >> 3)] >> (7 - (j & 7))) & 1) return false;
  }
  return true;
}

// Binary format: m and l as 32-bit little-endian unsigned, then m messages of
// ceil(l/8) bytes each, high bits first, zero padded.
inline std::vector<std::uint8_t> serialize(const Transcript& tr) {
  std::vector<std::uint8_t> out;
  auto push_u32 = [&out](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xffu));
  };
  push_u32(static_cast<std::uint32_t>(tr.m));
  push_u32(static_cast<std::uint32_t>(tr.l));
  for (const Message& msg : tr.messages) out.insert(out.end(), msg.bytes.begin(), msg.bytes.end());
  return out;
}

inline Transcript deserialize_transcript(std::span<const std::uint8_t> buf) {
  if (buf.size() < 8) throw std::invalid_argument("transcript: truncated header");
  auto read_u32 = [&buf](std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[at + static_cast<std::size_t>(i)]) << (8 * i);
    return v;
  };
  Transcript tr;
  tr.m = static_cast<int>(read_u32(0));
  tr.l = static_cast<int>(read_u32(4));
  const std::size_t per = static_cast<std::size_t>((tr.l + 7) / 8);
  if (buf.size() != 8 + per * static_cast<std::size_t>(tr.m))
    throw std::invalid_argument("transcript: size mismatch");
  tr.messages.assign(static_cast<std::size_t>(tr.m), Message(tr.l));
  for (int i = 0; i < tr.m; ++i)
    std::memcpy(tr.messages[static_cast<std::size_t>(i)].bytes.data(), buf.data() + 8 + per * static_cast<std::size_t>(i), per);
  return tr;
}

// Estimated pmf values over {0..k-1}. Deliberately unnormalized: the outer
// decoder consumes signed linear functionals, and a simplex projection would
// bias them. project_to_simplex is available for standalone use.
using DistEstimate = std::vector<double>;

inline void project_to_simplex(DistEstimate& p) {
  // Euclidean projection onto the probability simplex.
  std::vector<double> u(p.begin(), p.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double css = 0.0, theta = 0.0;
  int rho = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    css += u[i];
    const double t = (css - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0.0) {
      rho = static_cast<int>(i + 1);
      theta = t;
    }
  }
  (void)rho;
  for (double& v : p) v = std::max(0.0, v - theta);
}

// Per-terminal symbol samples: m rows of n symbols in [0, k).
struct SymbolBlock {
  int m = 0;
  int n = 0;
  int k = 1;
  std::vector<std::uint32_t> w;  // row-major, size m*n

  std::span<const std::uint32_t> row(int i) const {
    return {w.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(n),
            static_cast<std::size_t>(n)};
  }
};

enum class ProtocolVariant { CountFrames, QuantizedFrames, RandomPartition, Idealized };

inline const char* variant_name(ProtocolVariant v) {
  switch (v) {
    case ProtocolVariant::CountFrames: return "count_frames";
    case ProtocolVariant::QuantizedFrames: return "quantized_frames";
    case ProtocolVariant::RandomPartition: return "random_partition";
    case ProtocolVariant::Idealized: return "idealized";
  }
  return "?";
}

inline int bits_for_count(long long n) {
  // counts range over 0..n
  return static_cast<int>(std::bit_width(static_cast<std::uint64_t>(n)));
}

// Round-robin frame layout shared by the two frame protocols. Global frame
// g = i*frames_per_encoder + f carries symbol g mod k, and only the first
// copies*k frames are used, so every symbol gets exactly `copies` frames and
// no encoder holds two frames for the same symbol.
struct FrameLayout {
  int bits_per_frame = 0;
  int frames_per_encoder = 0;  // l'
  long long copies = 0;        // m'

  static FrameLayout make(int k, long long m, int l, int bits_per_frame) {
    if (bits_per_frame < 1) throw std::invalid_argument("frames: bits_per_frame must be >= 1");
    FrameLayout fl;
    fl.bits_per_frame = bits_per_frame;
    fl.frames_per_encoder = std::min<long long>(l / bits_per_frame, k);
    fl.copies = fl.frames_per_encoder > 0 ? (m * fl.frames_per_encoder) / k : 0;
    if (fl.copies < 1)
      throw BudgetTooSmall("frame protocol needs m*floor(l/frame_bits) >= alphabet size");
    return fl;
  }
};

// Appendix-style counting protocol: each used frame carries the encoder's
// exact count of its assigned symbol; the decoder averages num(w)/(m' n).
template <class URBG>
std::pair<Transcript, DistEstimate> count_frames_round(const SymbolBlock& sb, int l,
                                                       URBG& /*rng*/) {
  const int k = sb.k;
  const FrameLayout fl = FrameLayout::make(k, sb.m, l, bits_for_count(sb.n));

  Transcript tr;
  tr.m = sb.m;
  tr.l = l;
  tr.messages.assign(static_cast<std::size_t>(sb.m), Message(l));

  std::vector<long long> num(static_cast<std::size_t>(k), 0);
  std::vector<std::uint32_t> hist(static_cast<std::size_t>(k), 0);
  const long long used_frames = fl.copies * k;
  for (int i = 0; i < sb.m; ++i) {
    std::fill(hist.begin(), hist.end(), 0u);
    for (std::uint32_t w : sb.row(i)) ++hist[w];
    Message& msg = tr.messages[static_cast<std::size_t>(i)];
    for (int f = 0; f < fl.frames_per_encoder; ++f) {
      const long long g = static_cast<long long>(i) * fl.frames_per_encoder + f;
      if (g >= used_frames) break;
      const int w = static_cast<int>(g % k);
      msg.set_field(f * fl.bits_per_frame, fl.bits_per_frame, hist[static_cast<std::size_t>(w)]);
      num[static_cast<std::size_t>(w)] += hist[static_cast<std::size_t>(w)];
    }
  }

  DistEstimate est(static_cast<std::size_t>(k), 0.0);
  const double denom = static_cast<double>(fl.copies) * static_cast<double>(sb.n);
  for (int w = 0; w < k; ++w) est[static_cast<std::size_t>(w)] = static_cast<double>(num[static_cast<std::size_t>(w)]) / denom;
  return {std::move(tr), std::move(est)};
}

// Same frame layout, but each frame carries an unbiased b-bit stochastic
// rounding of the encoder's empirical frequency n_w/n on the (2^b - 1)-level
// grid. The decoder averages the dequantized frames.
template <class URBG>
std::pair<Transcript, DistEstimate> quantized_frames_round(const SymbolBlock& sb, int l,
                                                           int b_bits, URBG& rng) {
  const int k = sb.k;
  if (b_bits < 1 || b_bits > 30) throw std::invalid_argument("quantized_frames: bad b_bits");
  const FrameLayout fl = FrameLayout::make(k, sb.m, l, b_bits);
  const double levels = static_cast<double>((1u << b_bits) - 1u);

  Transcript tr;
  tr.m = sb.m;
  tr.l = l;
  tr.messages.assign(static_cast<std::size_t>(sb.m), Message(l));

  DistEstimate est(static_cast<std::size_t>(k), 0.0);
  std::vector<std::uint32_t> hist(static_cast<std::size_t>(k), 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const long long used_frames = fl.copies * k;
  for (int i = 0; i < sb.m; ++i) {
    std::fill(hist.begin(), hist.end(), 0u);
    for (std::uint32_t w : sb.row(i)) ++hist[w];
    Message& msg = tr.messages[static_cast<std::size_t>(i)];
    for (int f = 0; f < fl.frames_per_encoder; ++f) {
      const long long g = static_cast<long long>(i) * fl.frames_per_encoder + f;
      if (g >= used_frames) break;
      const int w = static_cast<int>(g % k);
      const double q = static_cast<double>(hist[static_cast<std::size_t>(w)]) / static_cast<double>(sb.n);
      const double x = q * levels;
      std::uint32_t v = static_cast<std::uint32_t>(std::floor(x));
      const double frac = x - std::floor(x);
      if (frac > 0.0 && unit(rng) < frac) ++v;
      msg.set_field(f * fl.bits_per_frame, fl.bits_per_frame, v);
      est[static_cast<std::size_t>(w)] += static_cast<double>(v) / levels;
    }
  }
  for (double& v : est) v /= static_cast<double>(fl.copies);
  return {std::move(tr), std::move(est)};
}

// Public-coin random-partition protocol. The alphabet is padded with phantom
// zero-probability symbols to a multiple of 2^l, each encoder announces the
// cell of one uniformly chosen local sample under its own public uniform
// equal-cell partition, and the decoder applies the linear correction
// p_hat(w) = a * mean_i 1{w in cell_i} + c with (a, c) solved from the
// unbiasedness moment equations:
//   E[1{w in cell}] = p(w) (1 - gamma) + gamma,  gamma = (c_size - 1)/(k_pad - 1)
// giving a = 1/(1 - gamma), c = -gamma/(1 - gamma). When 2^l >= k the cells
// are singletons and the message just identifies the sampled symbol.
template <class URBG>
std::pair<Transcript, DistEstimate> random_partition_round(const SymbolBlock& sb, int l,
                                                           URBG& public_rng) {
  const int k = sb.k;
  if (k < 2) throw std::invalid_argument("random_partition: k must be >= 2");
  if (l < 1) throw BudgetTooSmall("random_partition: l must be >= 1");

  Transcript tr;
  tr.m = sb.m;
  tr.l = l;
  tr.messages.assign(static_cast<std::size_t>(sb.m), Message(l));

  // One key drives both the public partitions and the private sample picks;
  // substreams are separated by tag so the transcript is reproducible.
  const std::uint64_t key = public_rng();
  SplitMix64 pick_rng = make_stream(key, 0x5150ull);

  DistEstimate counts(static_cast<std::size_t>(k), 0.0);
  std::uniform_int_distribution<int> pick(0, sb.n - 1);

  const bool singleton = l >= 31 || (1LL << l) >= k;
  if (singleton) {
    const std::uint64_t cells = l >= 63 ? ~0ull : (1ull << l);
    for (int i = 0; i < sb.m; ++i) {
      SplitMix64 pub = make_stream(key, 0xC011ull, static_cast<std::uint64_t>(i));
      const std::uint64_t offset = pub() & (cells - 1ull);
      const std::uint32_t w = sb.row(i)[static_cast<std::size_t>(pick(pick_rng))];
      const std::uint64_t cell = (static_cast<std::uint64_t>(w) + offset) & (cells - 1ull);
      tr.messages[static_cast<std::size_t>(i)].set_field(0, l, cell);
      // decode side: the inverse map is public
      const std::uint64_t sym = (cell + cells - offset) & (cells - 1ull);
      if (sym < static_cast<std::uint64_t>(k)) counts[static_cast<std::size_t>(sym)] += 1.0;
    }
    DistEstimate est(static_cast<std::size_t>(k), 0.0);
    for (int w = 0; w < k; ++w) est[static_cast<std::size_t>(w)] = counts[static_cast<std::size_t>(w)] / static_cast<double>(sb.m);
    return {std::move(tr), std::move(est)};
  }

  const long long cells = 1LL << l;
  const long long k_pad = ((k + cells - 1) / cells) * cells;
  const long long c_size = k_pad / cells;
  const double gamma = static_cast<double>(c_size - 1) / static_cast<double>(k_pad - 1);
  const double a = 1.0 / (1.0 - gamma);
  const double c_coef = -gamma / (1.0 - gamma);

  std::vector<std::uint32_t> perm(static_cast<std::size_t>(k_pad));
  std::vector<std::uint32_t> pos(static_cast<std::size_t>(k_pad));
  for (int i = 0; i < sb.m; ++i) {
    SplitMix64 pub = make_stream(key, 0xC011ull, static_cast<std::uint64_t>(i));
    std::iota(perm.begin(), perm.end(), 0u);
    for (long long j = k_pad - 1; j > 0; --j) {
      const long long r = static_cast<long long>(pub() % static_cast<std::uint64_t>(j + 1));
      std::swap(perm[static_cast<std::size_t>(j)], perm[static_cast<std::size_t>(r)]);
    }
    for (long long p = 0; p < k_pad; ++p) pos[perm[static_cast<std::size_t>(p)]] = static_cast<std::uint32_t>(p);

    const std::uint32_t w = sb.row(i)[static_cast<std::size_t>(pick(pick_rng))];
    const long long cell = pos[w] / c_size;
    tr.messages[static_cast<std::size_t>(i)].set_field(0, l, static_cast<std::uint64_t>(cell));
    for (long long p = cell * c_size; p < (cell + 1) * c_size; ++p) {
      const std::uint32_t sym = perm[static_cast<std::size_t>(p)];
      if (sym < static_cast<std::uint32_t>(k)) counts[sym] += 1.0;
    }
  }

  DistEstimate est(static_cast<std::size_t>(k), 0.0);
  for (int w = 0; w < k; ++w)
    est[static_cast<std::size_t>(w)] = a * counts[static_cast<std::size_t>(w)] / static_cast<double>(sb.m) + c_coef;
  return {std::move(tr), std::move(est)};
}

// Infinite-budget oracle: the pooled empirical distribution of all mn samples.
inline DistEstimate idealized_round(const SymbolBlock& sb) {
  DistEstimate est(static_cast<std::size_t>(sb.k), 0.0);
  for (std::uint32_t w : sb.w) est[w] += 1.0;
  const double total = static_cast<double>(sb.w.size());
  for (double& v : est) v /= total;
  return est;
}

struct InnerChoice {
  ProtocolVariant variant = ProtocolVariant::CountFrames;
  int b_bits = 1;
};

// Fixed case-to-variant mapping. Case 1 and the case-3 counting branch follow
// the source regime analysis; the quantized-frame rows are the engineered
// stand-ins for the inner protocols this artifact does not reproduce.
inline InnerChoice select_protocol(RegimeCase case_id, int /*k*/, long long /*m*/, long long n,
                                   int l) {
  const int count_bits = bits_for_count(n);
  switch (case_id) {
    case RegimeCase::Case1: return {ProtocolVariant::RandomPartition, 0};
    case RegimeCase::Case2: return {ProtocolVariant::QuantizedFrames, std::min(l, count_bits)};
    case RegimeCase::Case3:
      if (l >= count_bits) return {ProtocolVariant::CountFrames, count_bits};
      return {ProtocolVariant::QuantizedFrames, std::min(l, 4)};
    case RegimeCase::Case4: return {ProtocolVariant::QuantizedFrames, std::min(l, count_bits)};
    case RegimeCase::Case5: return {ProtocolVariant::CountFrames, count_bits};
  }
  return {ProtocolVariant::CountFrames, count_bits};
}

// Closed-form MSE predictions under a uniform-pmf proxy, used by the auto
// policy. All three estimators are unbiased, so these are pure variances.
inline double predicted_mse_frames(int k, long long m, long long n, int l, int b_bits,
                                   bool dithered) {
  if (b_bits < 1 || l < b_bits) return std::numeric_limits<double>::infinity();
  const long long lprime = std::min<long long>(l / b_bits, k);
  const long long copies = (m * lprime) / k;
  if (copies < 1) return std::numeric_limits<double>::infinity();
  const double base = (1.0 - 1.0 / k) / (static_cast<double>(copies) * static_cast<double>(n));
  if (!dithered) return base;
  const double levels = static_cast<double>((1u << std::min(b_bits, 30)) - 1u);
  return base + static_cast<double>(k) * (1.0 / 6.0) / (levels * levels * static_cast<double>(copies));
}

inline double predicted_mse_random_partition(int k, long long m, int l) {
  if (l >= 31 || (1LL << l) >= k) return (1.0 - 1.0 / k) / static_cast<double>(m);
  const long long cells = 1LL << l;
  const long long k_pad = ((k + cells - 1) / cells) * cells;
  const long long c_size = k_pad / cells;
  const double gamma = static_cast<double>(c_size - 1) / static_cast<double>(k_pad - 1);
  const double a = 1.0 / (1.0 - gamma);
  const double q = (1.0 - gamma) / static_cast<double>(k) + gamma;
  return a * a * static_cast<double>(k) * q * (1.0 - q) / static_cast<double>(m);
}

// Desk-scale selection policy: keep the pinned rows (case 1 and case 5) and
// resolve the engineered middle cases by predicted MSE. Ties prefer the
// counting protocol, then quantized frames.
inline InnerChoice auto_select(RegimeCase case_id, int k, long long m, long long n, int l) {
  const int count_bits = bits_for_count(n);
  if (case_id == RegimeCase::Case1) return {ProtocolVariant::RandomPartition, 0};
  if (case_id == RegimeCase::Case5) {
    if (l >= count_bits && (m * std::min<long long>(l / count_bits, k)) / k >= 1)
      return {ProtocolVariant::CountFrames, count_bits};
    return {ProtocolVariant::RandomPartition, 0};
  }
  const int b = std::min(l, count_bits);
  const double cf = predicted_mse_frames(k, m, n, l, count_bits, false);
  const double qf = predicted_mse_frames(k, m, n, l, b, true);
  const double rp = predicted_mse_random_partition(k, m, l);
  if (cf <= qf && cf <= rp) return {ProtocolVariant::CountFrames, count_bits};
  if (qf <= rp) return {ProtocolVariant::QuantizedFrames, b};
  return {ProtocolVariant::RandomPartition, 0};
}

// Dispatch one round under an exact l-bit budget.
template <class URBG>
std::pair<Transcript, DistEstimate> run_inner_round(const InnerChoice& choice,
                                                    const SymbolBlock& sb, int l,
                                                    URBG& rng) {
  switch (choice.variant) {
    case ProtocolVariant::CountFrames: return count_frames_round(sb, l, rng);
    case ProtocolVariant::QuantizedFrames: return quantized_frames_round(sb, l, choice.b_bits, rng);
    case ProtocolVariant::RandomPartition: return random_partition_round(sb, l, rng);
    case ProtocolVariant::Idealized: {
      Transcript tr;
      tr.m = sb.m;
      tr.l = l;
      return {std::move(tr), idealized_round(sb)};
    }
  }
  throw std::logic_error("unknown protocol variant");
}

}  // namespace destim
