#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "destim/wavelet.hpp"

namespace destim {

// (m, n, l, r): terminals, samples per terminal, bits per terminal,
// regularity. n_ess and classify accept raw values so the arithmetic can be
// exercised outside the protocol's validity range; validate() gates the
// protocol entry points.
struct RegimeParams {
  long long m = 1;
  long long n = 1;
  int l = 4;
  double r = 0.8;
};

inline void validate(const RegimeParams& p) {
  if (p.m < 1 || p.n < 1) throw std::invalid_argument("regime: m, n must be >= 1");
  if (p.l < 4) throw std::invalid_argument("regime: l must be >= 4");
  if (!(p.r > 0.5 && p.r < 1.0)) throw std::invalid_argument("regime: r must be in (1/2, 1)");
}

enum class RegimeCase { Case1 = 1, Case2, Case3, Case4, Case5 };

inline const char* case_name(RegimeCase c) {
  switch (c) {
    case RegimeCase::Case1: return "case1";
    case RegimeCase::Case2: return "case2";
    case RegimeCase::Case3: return "case3";
    case RegimeCase::Case4: return "case4";
    case RegimeCase::Case5: return "case5";
  }
  return "?";
}

// Effective sample size, evaluated in log2 space so 2^l * m * n cannot
// overflow:
//   { [ (2^l mn)^{(2r+1)/(2r+2)} ^ lm ] v [ (lm)^{2r+1} ^ (lmn)^{(2r+1)/(2r+2)} ] } ^ mn
// with ^ = min and v = max.
inline double log2_n_ess(const RegimeParams& p) {
  const double lg_m = std::log2(static_cast<double>(p.m));
  const double lg_n = std::log2(static_cast<double>(p.n));
  const double lg_l = std::log2(static_cast<double>(p.l));
  const double q = (2.0 * p.r + 1.0) / (2.0 * p.r + 2.0);
  const double a = q * (p.l + lg_m + lg_n);              // (2^l mn)^{(2r+1)/(2r+2)}
  const double b = lg_l + lg_m;                          // lm
  const double c = (2.0 * p.r + 1.0) * (lg_l + lg_m);    // (lm)^{2r+1}
  const double d = q * (lg_l + lg_m + lg_n);             // (lmn)^{(2r+1)/(2r+2)}
  const double e = lg_m + lg_n;                          // mn
  return std::min(std::max(std::min(a, b), std::min(c, d)), e);
}

inline double n_ess(const RegimeParams& p) { return std::exp2(log2_n_ess(p)); }

// Case classification, first match in the listed order, with each listed
// condition cross-checked against the term that actually attains n_ess.
// Boundary logs are in base 2. The listed conditions overlap and do not
// quite cover the plane (boundary log factors are dropped in the source
// statement), so a match whose term does not attain the min/max is skipped,
// and tuples matching nothing fall back to the attaining term directly,
// ties resolved in listed order.
inline RegimeCase classify(const RegimeParams& p) {
  const double lg_m = std::log2(static_cast<double>(p.m));
  const double lg_n = std::log2(static_cast<double>(p.n));
  const double l = static_cast<double>(p.l);
  const double r = p.r;
  const double two_r1 = 2.0 * r + 1.0;
  const double q = two_r1 / (2.0 * r + 2.0);
  const double lg_l = std::log2(l);
  const double terms[5] = {q * (l + lg_m + lg_n), lg_l + lg_m, two_r1 * (lg_l + lg_m),
                           q * (lg_l + lg_m + lg_n), lg_m + lg_n};
  const double v = log2_n_ess(p);
  const auto attains = [&](int i) {
    return std::abs(terms[i] - v) <= 1e-9 * std::max(1.0, std::abs(v));
  };

  // case 1: m >= n^{2r+1}, l <= log2(m / n^{2r+1}) / (2r+1)
  if (lg_m >= two_r1 * lg_n && l <= (lg_m - two_r1 * lg_n) / two_r1 && attains(0))
    return RegimeCase::Case1;
  // case 2: m > n^{2r}, max(log2(m/n^{2r+1})/(2r+1), n^{2r+1}/m) <= l <= n
  if (lg_m > 2.0 * r * lg_n && attains(1)) {
    const double lo1 = (lg_m - two_r1 * lg_n) / two_r1;
    const double lo2 = std::exp2(two_r1 * lg_n - lg_m);
    if (l >= std::max(lo1, lo2) && l <= static_cast<double>(p.n)) return RegimeCase::Case2;
  }
  // case 3: n > m^{2r+1}, l <= n^{1/(2r+1)} / m
  if (lg_n > two_r1 * lg_m && l <= std::exp2(lg_n / two_r1 - lg_m) && attains(2))
    return RegimeCase::Case3;
  // case 4: m < n^{2r+1}, max(n^{1/(2r+1)}/m, 1) <= l <= min(n^{2r+1}/m, (mn)^{1/(2r+1)})
  if (lg_m < two_r1 * lg_n && attains(3)) {
    const double lo = std::max(std::exp2(lg_n / two_r1 - lg_m), 1.0);
    const double hi = std::min(std::exp2(two_r1 * lg_n - lg_m), std::exp2((lg_m + lg_n) / two_r1));
    if (l >= lo && l <= hi) return RegimeCase::Case4;
  }
  // case 5: l >= min(n, (mn)^{1/(2r+1)})
  if (l >= std::min(static_cast<double>(p.n), std::exp2((lg_m + lg_n) / two_r1)) && attains(4))
    return RegimeCase::Case5;

  // fall back to the attaining term
  for (int i = 0; i < 5; ++i)
    if (attains(i)) return static_cast<RegimeCase>(i + 1);
  return RegimeCase::Case5;
}

// Tunables for resolution selection.
//   theory_constants: use the literal 2000 log^2 N divisor in the case 3/4
//     targets; off by default because it collapses K to 1 at desk scale.
//   c_inner: replacement divisor when theory_constants is off.
//   case1_headroom: multiplier on the case-1 target (constant-level slack;
//     the asymptotic target only fixes K up to a constant).
//   c3: truncation constant in K0 = c3 sqrt(K) ln N. The operative criterion
//     is an empirical truncation rate below 1e-3; c3 = 1 meets it with orders
//     of magnitude to spare at N >= 1e4. rule_of_thumb_c3 gives the
//     conservative choice when an estimate of the estimator's sub-exponential
//     beta-scale constant c2 is available.
struct PlanOptions {
  bool theory_constants = false;
  double c_inner = 1.0;
  double case1_headroom = 1.0;
  double c3 = 1.0;
};

inline double rule_of_thumb_c3(double r, double c2) { return 400.0 * (r + 1.0) * c2; }

// K0 = c3 sqrt(K) ln N (natural log).
inline double k0(int K, double N, double c3) {
  if (N < 2.0) throw std::invalid_argument("k0: N must be >= 2");
  return c3 * std::sqrt(static_cast<double>(K)) * std::log(N);
}

struct Resolution {
  int H = 0;
  int K = 1;
};

// Smallest H with 2^{2S+2} * 2^H >= target(case). Targets per case (S = 1):
//   case 1: (2^l mn)^{1/(2r+2)} * case1_headroom
//   case 2: (lm)^{1/(2r+1)}
//   case 3: lm / divisor
//   case 4: (lmn)^{1/(2r+2)} / divisor
//   case 5: case-4 target with l replaced by min(n, (mn)^{1/(2r+1)}) (extra
//           bits are discarded for planning purposes)
// where divisor = 2000 ln^2 N (theory_constants) or c_inner.
inline Resolution choose_resolution(const RegimeParams& p, const PlanOptions& opt = {}) {
  const RegimeCase cs = classify(p);
  const double lg_m = std::log2(static_cast<double>(p.m));
  const double lg_n = std::log2(static_cast<double>(p.n));
  const double N = static_cast<double>(p.m) * static_cast<double>(p.n);
  const double divisor =
      opt.theory_constants ? 2000.0 * std::log(N) * std::log(N) : opt.c_inner;
  const double inv_2r2 = 1.0 / (2.0 * p.r + 2.0);

  double lg_target = 0.0;
  switch (cs) {
    case RegimeCase::Case1:
      lg_target = inv_2r2 * (p.l + lg_m + lg_n) + std::log2(opt.case1_headroom);
      break;
    case RegimeCase::Case2:
      lg_target = (std::log2(static_cast<double>(p.l)) + lg_m) / (2.0 * p.r + 1.0);
      break;
    case RegimeCase::Case3:
      lg_target = std::log2(static_cast<double>(p.l)) + lg_m - std::log2(divisor);
      break;
    case RegimeCase::Case4:
      lg_target = inv_2r2 * (std::log2(static_cast<double>(p.l)) + lg_m + lg_n) -
                  std::log2(divisor);
      break;
    case RegimeCase::Case5: {
      const double l_eff =
          std::min(static_cast<double>(p.n), std::exp2((lg_m + lg_n) / (2.0 * p.r + 1.0)));
      lg_target = inv_2r2 * (std::log2(l_eff) + lg_m + lg_n) - std::log2(divisor);
      break;
    }
  }

  const double target = std::exp2(lg_target);
  Resolution res;
  while (std::ldexp(16.0, res.H) < target) ++res.H;  // 2^{2S+2} = 16 for Haar
  res.K = 1 << res.H;
  return res;
}

// Resolved plan for one (m, n, l, r) tuple.
struct RegimePlan {
  RegimeCase case_id = RegimeCase::Case5;
  double n_ess = 1.0;
  int H = 0;
  int K = 1;
  double K0 = 1.0;
  double c3 = 1.0;
};

inline RegimePlan make_plan(const RegimeParams& p, const PlanOptions& opt = {}) {
  validate(p);
  RegimePlan plan;
  plan.case_id = classify(p);
  plan.n_ess = n_ess(p);
  const Resolution res = choose_resolution(p, opt);
  plan.H = res.H;
  plan.K = res.K;
  plan.c3 = opt.c3;
  // N is clamped to 2 so the degenerate single-sample configuration still
  // yields a usable positive K0.
  const double N = std::max(2.0, static_cast<double>(p.m) * static_cast<double>(p.n));
  plan.K0 = k0(plan.K, N, opt.c3);
  return plan;
}

}  // namespace destim
