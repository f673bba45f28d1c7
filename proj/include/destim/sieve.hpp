#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "destim/rng.hpp"
#include "destim/wavelet.hpp"

namespace destim {

// Ground-truth family: f(t) = C0 + eps * k^{-(r+1/2)} * sum_s z_s psi^k_s(t)
// with z in {-1,+1}^k. Under Haar this is piecewise constant at scale 1/(2k):
// f = C0 + step()*z_s on the left half of cell s and C0 - step()*z_s on the
// right half, where step() = eps * k^{-r}.
struct SieveFunction {
  int k = 1;
  double C0 = 1.0;
  double eps = 0.0;
  std::vector<int> z;  // k entries, each +1 or -1
  double r = 0.8;

  double amp() const { return eps * std::pow(static_cast<double>(k), -(r + 0.5)); }
  double step() const { return eps * std::pow(static_cast<double>(k), -r); }

  // Value on a given half-cell without touching t.
  double cell_value(int s, bool left_half) const {
    return C0 + (left_half ? 1.0 : -1.0) * step() * z[static_cast<std::size_t>(s - 1)];
  }

  double operator()(double t) const {
    const int s = cell_index(t, k);
    if (s == 0) return 0.0;
    const double u = k * t - (s - 1);
    return cell_value(s, u < 0.5);
  }
};

inline void validate(const SieveFunction& f) {
  if (!is_power_of_two(f.k)) throw std::invalid_argument("sieve: k must be a power of two");
  if (static_cast<int>(f.z.size()) != f.k) throw std::invalid_argument("sieve: z must have k entries");
  for (int zi : f.z)
    if (zi != 1 && zi != -1) throw std::invalid_argument("sieve: z entries must be +-1");
  if (!(f.eps >= 0.0 && f.eps <= 1.0)) throw std::invalid_argument("sieve: eps must be in [0,1]");
  if (!(f.r > 0.5 && f.r < 1.0)) throw std::invalid_argument("sieve: r must be in (1/2, 1)");
  if (!(f.C0 >= 0.0) || !std::isfinite(f.C0)) throw std::invalid_argument("sieve: bad C0");
}

inline SieveFunction random_sieve(int k, double C0, double eps, double r, Rng& rng) {
  SieveFunction f;
  f.k = k;
  f.C0 = C0;
  f.eps = eps;
  f.r = r;
  f.z.resize(static_cast<std::size_t>(k));
  for (auto& zi : f.z) zi = (rng() & 1u) ? 1 : -1;
  validate(f);
  return f;
}

inline int log2_exact(long long v) {
  if (!is_power_of_two(v)) throw std::invalid_argument("log2_exact: not a power of two");
  int h = 0;
  while ((1LL << h) < v) ++h;
  return h;
}

// Exact coefficients f_{Hs} of a sieve truth. phi cells of width 2^-H either
// contain whole sieve cells (K <= k, where the psi terms integrate to zero)
// or sit inside one constant half-cell (K >= 2k).
inline CoeffVector project_exact(const SieveFunction& f, int H) {
  validate(f);
  const int K = 1 << H;
  CoeffVector cv;
  cv.H = H;
  cv.c.assign(static_cast<std::size_t>(K), 0.0);
  const double inv_root_k = 1.0 / std::sqrt(static_cast<double>(K));
  if (K <= f.k) {
    for (auto& x : cv.c) x = f.C0 * inv_root_k;
  } else {
    for (int s = 1; s <= K; ++s) {
      const double mid = (s - 0.5) / static_cast<double>(K);
      cv.c[static_cast<std::size_t>(s - 1)] = f(mid) * inv_root_k;
    }
  }
  return cv;
}

// || f - f^H ||_2^2 in closed form: eps^2 k^{-2r} while 2^H <= k, and zero
// once the basis resolves the half-cells (2^H >= 2k).
inline double tail_energy(const SieveFunction& f, int H) {
  validate(f);
  if ((1 << H) <= f.k) return f.eps * f.eps * std::pow(static_cast<double>(f.k), -2.0 * f.r);
  return 0.0;
}

// Exact L2 error || f - sum_s est_s phi_{Hs} ||_2^2 via Parseval plus the
// closed-form tail above.
inline double l2_error_exact(const SieveFunction& truth, const CoeffVector& est) {
  validate(est);
  const CoeffVector exact = project_exact(truth, est.H);
  double sq = 0.0;
  for (std::size_t i = 0; i < est.c.size(); ++i) {
    const double d = exact.c[i] - est.c[i];
    sq += d * d;
  }
  return sq + tail_energy(truth, est.H);
}

}  // namespace destim
