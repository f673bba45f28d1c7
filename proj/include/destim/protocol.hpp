#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "destim/inner_dist.hpp"
#include "destim/models.hpp"
#include "destim/regimes.hpp"
#include "destim/rng.hpp"
#include "destim/sieve.hpp"
#include "destim/wavelet.hpp"

namespace destim {

// Trunc_{K0}(w) = (w ^ K0) v (-K0).
inline double truncate_to(double w, double K0) {
  if (!(K0 > 0.0)) throw std::invalid_argument("truncate_to: K0 must be positive");
  return std::max(-K0, std::min(w, K0));
}

// Composite per-sample symbol (S, V) with S the cell index in {1..K} and V a
// bit string of length 2S+2 (4 under Haar). Slot j of V corresponds to the
// j-th element of the ascending neighborhood of cell S; slots beyond the
// neighborhood carry Bern(1/2) bits, which are decode-neutral, so the
// alphabet stays {1..K} x {0,1}^{2S+2} with |W| = 2^{2S+2} K.
struct WSample {
  int S = 1;
  std::array<std::uint8_t, 4> V{};
};

inline constexpr int kSlotCount = 4;           // 2S+2 for Haar
inline constexpr int kPatterns = 1 << kSlotCount;

// Serialized symbol index: (S-1) * 2^{2S+2} + integer(V), V big-endian.
inline std::uint32_t w_index(const WSample& ws) {
  std::uint32_t v = 0;
  for (int j = 0; j < kSlotCount; ++j) v = (v << 1) | ws.V[static_cast<std::size_t>(j)];
  return static_cast<std::uint32_t>(ws.S - 1) * kPatterns + v;
}

inline int alphabet_size(int K) { return K * kPatterns; }

// Quantize one sample: locate the cell S = min(floor(Kt)+1, K), then for each
// neighborhood slot compute the truncated estimator and emit one Bernoulli
// bit with success probability Q = (trunc + K0) / (2 K0).
template <class URBG>
WSample quantize_sample(ModelKind model, int H, const Sample& x, double K0, URBG& rng) {
  const int K = 1 << H;
  WSample ws;
  ws.S = std::min(static_cast<int>(std::floor(x.t * K)) + 1, K);
  if (ws.S < 1) ws.S = 1;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::vector<int> nbhd = neighborhood(WaveletFamily::haar(), H, ws.S);
  for (int j = 0; j < kSlotCount; ++j) {
    double q = 0.5;
    if (j < static_cast<int>(nbhd.size())) {
      const double est = samplewise_estimator(model, H, nbhd[static_cast<std::size_t>(j)], x);
      q = (truncate_to(est, K0) + K0) / (2.0 * K0);
    }
    ws.V[static_cast<std::size_t>(j)] = unit(rng) < q ? 1 : 0;
  }
  return ws;
}

// Linear decoder. For each s, sums 2 K0 (sum_{v: v(slot)=1} p(s',v) - p(s')/2)
// over the cells s' whose neighborhood contains s, with the slot given by the
// ascending neighborhood order. The map is linear in p with zero offset.
inline CoeffVector decode_coeffs(const DistEstimate& p_w, int K, double K0) {
  if (static_cast<int>(p_w.size()) != alphabet_size(K))
    throw std::invalid_argument("decode_coeffs: estimate has wrong alphabet size");
  const int H = log2_exact(K);
  CoeffVector cv;
  cv.H = H;
  cv.c.assign(static_cast<std::size_t>(K), 0.0);
  for (int sp = 1; sp <= K; ++sp) {
    const std::vector<int> nbhd = neighborhood(WaveletFamily::haar(), H, sp);
    const std::size_t base = static_cast<std::size_t>(sp - 1) * kPatterns;
    double marginal = 0.0;
    for (int v = 0; v < kPatterns; ++v) marginal += p_w[base + static_cast<std::size_t>(v)];
    for (int j = 0; j < static_cast<int>(nbhd.size()); ++j) {
      const int s = nbhd[static_cast<std::size_t>(j)];
      double ones = 0.0;
      const int bit = kSlotCount - 1 - j;  // slot j is the j-th most significant bit
      for (int v = 0; v < kPatterns; ++v)
        if ((v >> bit) & 1) ones += p_w[base + static_cast<std::size_t>(v)];
      cv.c[static_cast<std::size_t>(s - 1)] += 2.0 * K0 * (ones - 0.5 * marginal);
    }
  }
  return cv;
}

enum class InnerPolicy { Auto, CaseMapped, Forced };

struct OuterConfig {
  PlanOptions plan;
  InnerPolicy policy = InnerPolicy::Auto;
  InnerChoice forced{};      // used when policy == Forced
  bool idealized = false;    // replace the inner layer by the pooled oracle
  bool keep_transcript = false;
};

struct EstimateResult {
  RegimePlan plan;
  InnerChoice inner{};
  CoeffVector coeffs;
  double l2_error = 0.0;
  long long transcript_bits = 0;
  Transcript transcript;  // populated when keep_transcript is set
};

inline InnerChoice resolve_inner(const OuterConfig& cfg, const RegimePlan& plan, int k_w,
                                 const RegimeParams& p) {
  if (cfg.idealized) return {ProtocolVariant::Idealized, 0};
  switch (cfg.policy) {
    case InnerPolicy::Auto: return auto_select(plan.case_id, k_w, p.m, p.n, p.l);
    case InnerPolicy::CaseMapped: return select_protocol(plan.case_id, k_w, p.m, p.n, p.l);
    case InnerPolicy::Forced: {
      InnerChoice ic = cfg.forced;
      if (ic.variant == ProtocolVariant::CountFrames) ic.b_bits = bits_for_count(p.n);
      if (ic.variant == ProtocolVariant::QuantizedFrames && ic.b_bits < 1)
        ic.b_bits = std::min(p.l, bits_for_count(p.n));
      return ic;
    }
  }
  return {};
}

// End-to-end layered round: plan, quantize every sample into a W symbol, run
// the inner round over the 2^{2S+2} K alphabet under the exact l-bit budget,
// decode, and score against the truth in closed form. Encoders are processed
// in index order; per-terminal randomness comes from substreams of one run
// key, so the result is deterministic for a given rng state.
inline EstimateResult run_protocol(const RegimeParams& params, ModelKind model,
                                   const SieveFunction& truth, const OuterConfig& cfg, Rng& rng) {
  validate(params);
  validate_for_model(model, truth);
  if (std::abs(params.r - truth.r) > 1e-12)
    throw std::invalid_argument("run_protocol: truth regularity must match params.r");

  EstimateResult out;
  out.plan = make_plan(params, cfg.plan);
  const int K = out.plan.K;
  const int k_w = alphabet_size(K);
  out.inner = resolve_inner(cfg, out.plan, k_w, params);

  const std::uint64_t run_key = rng();
  SymbolBlock sb;
  sb.m = static_cast<int>(params.m);
  sb.n = static_cast<int>(params.n);
  sb.k = k_w;
  sb.w.resize(static_cast<std::size_t>(params.m) * static_cast<std::size_t>(params.n));
  for (long long i = 0; i < params.m; ++i) {
    SplitMix64 term_rng = make_stream(run_key, 0x7e21ull, static_cast<std::uint64_t>(i));
    for (long long j = 0; j < params.n; ++j) {
      const Sample x = sample(model, truth, term_rng);
      const WSample ws = quantize_sample(model, out.plan.H, x, out.plan.K0, term_rng);
      sb.w[static_cast<std::size_t>(i * params.n + j)] = w_index(ws);
    }
  }

  SplitMix64 inner_rng = make_stream(run_key, 0x1237ull);
  auto [tr, est] = run_inner_round(out.inner, sb, params.l, inner_rng);
  if (out.inner.variant != ProtocolVariant::Idealized && !budget_exact(tr))
    throw std::logic_error("inner round violated the bit budget");

  out.coeffs = decode_coeffs(est, K, out.plan.K0);
  out.l2_error = l2_error_exact(truth, out.coeffs);
  out.transcript_bits = static_cast<long long>(params.m) * params.l;
  if (cfg.keep_transcript) out.transcript = std::move(tr);
  return out;
}

// Mean and standard error of the exact L2 error over independent trials.
// Per-trial RNG streams are derived from (seed, trial), so the sequence is
// reproducible and trial-order independent.
struct MseSummary {
  double mean = 0.0;
  double stderr_ = 0.0;
  int trials = 0;
};

inline MseSummary mse_trials(const RegimeParams& params, ModelKind model,
                             const SieveFunction& truth, const OuterConfig& cfg, int trials,
                             std::uint64_t seed) {
  if (trials < 2) throw std::invalid_argument("mse_trials: trials must be >= 2");
  double sum = 0.0, sumsq = 0.0;
  for (int t = 0; t < trials; ++t) {
    Rng rng = make_rng(seed, 0x3712ull, static_cast<std::uint64_t>(t));
    const EstimateResult res = run_protocol(params, model, truth, cfg, rng);
    sum += res.l2_error;
    sumsq += res.l2_error * res.l2_error;
  }
  MseSummary s;
  s.trials = trials;
  s.mean = sum / trials;
  const double var = std::max(0.0, (sumsq - sum * sum / trials) / (trials - 1));
  s.stderr_ = std::sqrt(var / trials);
  return s;
}

}  // namespace destim
