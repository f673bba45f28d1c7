#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace destim {

// Orthonormal wavelet basis on [0,1]. Only the Haar family (S = 1) is
// provided: every quantity stays closed form and L2 errors are exact.
// Supported regularity is r in (1/2, 1), which keeps S > r.
//
// Conventions: dyadic cells are half open, [(s-1)/K, s/K), except the last
// cell which also owns t = 1. The mother function is +1 on the left half of
// its cell and -1 on the right half, with the same right-edge closure.
struct WaveletFamily {
  int S = 1;                  // vanishing moments
  double father_lo = 0.0;     // support of the father function, [0, 2S-1]
  double father_hi = 1.0;
  double mother_lo = 0.0;     // support of the mother function, [-S+1, S]
  double mother_hi = 1.0;
  int h0 = 2;                 // ceil(log2(2S+2))

  static WaveletFamily haar() { return WaveletFamily{}; }
  int slots() const { return 2 * S + 2; }  // quantizer bit-slot count
};

inline bool is_power_of_two(long long v) { return v > 0 && (v & (v - 1)) == 0; }

inline void require_haar(const WaveletFamily& fam) {
  if (fam.S != 1) throw std::invalid_argument("only the Haar family (S = 1) is supported");
}

// 1-based index of the dyadic cell of width 1/K containing t; t = 1 maps to
// the last cell. Returns 0 for t outside [0,1].
inline int cell_index(double t, int K) {
  if (t < 0.0 || t > 1.0) return 0;
  int c = static_cast<int>(std::floor(t * K)) + 1;
  return c > K ? K : c;
}

namespace detail {
// Haar mother on [0,1], right edge closed into the negative half.
inline double haar_mother(double u) {
  if (u < 0.0 || u > 1.0) return 0.0;
  return u < 0.5 ? 1.0 : -1.0;
}
}  // namespace detail

// phi_{Hs}(t) = 2^{H/2} * 1{t in cell s of width 2^-H}.
inline double eval_father(const WaveletFamily& fam, int H, int s, double t) {
  require_haar(fam);
  const int K = 1 << H;
  if (s < 1 || s > K) throw std::out_of_range("eval_father: s out of range");
  return cell_index(t, K) == s ? std::sqrt(static_cast<double>(K)) : 0.0;
}

// Indices s' whose father support intersects cell s. Haar supports are the
// cells themselves, so the neighborhood is the singleton {s}; it is returned
// in ascending order, which fixes the quantizer/decoder slot layout.
inline std::vector<int> neighborhood(const WaveletFamily& fam, int H, int s) {
  require_haar(fam);
  const int K = 1 << H;
  if (s < 1 || s > K) throw std::out_of_range("neighborhood: s out of range");
  return {s};
}

// psi^k_s(t) = sqrt(k) * psi(k t - (s-1)): an L2-normalized mother supported
// in [(s-1)/k, s/k]. Supports are pairwise disjoint across s.
inline double sieve_psi(const WaveletFamily& fam, int k, int s, double t) {
  require_haar(fam);
  if (!is_power_of_two(k)) throw std::invalid_argument("sieve_psi: k must be a power of two");
  if (s < 1 || s > k) throw std::out_of_range("sieve_psi: s out of range");
  if (cell_index(t, k) != s) return 0.0;
  const double u = k * t - (s - 1);
  return std::sqrt(static_cast<double>(k)) * (u < 0.5 ? 1.0 : -1.0);
}

// Coefficients f_{Hs} = (f, phi_{Hs}) for s = 1..2^H.
struct CoeffVector {
  int H = 0;
  std::vector<double> c;

  int K() const { return 1 << H; }
};

inline void validate(const CoeffVector& cv) {
  if (static_cast<int>(cv.c.size()) != (1 << cv.H))
    throw std::invalid_argument("CoeffVector: length must be 2^H");
  for (double v : cv.c)
    if (!std::isfinite(v)) throw std::invalid_argument("CoeffVector: non-finite entry");
}

// Projection by composite midpoint quadrature. The default grid, 2^{H+6}
// points, integrates exactly any function that is piecewise constant on a
// dyadic grid at least that coarse (midpoints never hit dyadic breakpoints).
template <class F>
CoeffVector project(const WaveletFamily& fam, F&& f, int H, long n_points = -1) {
  require_haar(fam);
  const int K = 1 << H;
  long n = n_points > 0 ? n_points : (1L << (H + 6));
  long per_cell = (n + K - 1) / K;  // round up so the grid aligns with cells
  n = per_cell * K;

  CoeffVector cv;
  cv.H = H;
  cv.c.assign(K, 0.0);
  const double h = 1.0 / static_cast<double>(n);
  const double root_k = std::sqrt(static_cast<double>(K));
  for (long j = 0; j < n; ++j) {
    const double t = (j + 0.5) * h;
    const double v = f(t);
    if (!std::isfinite(v)) throw std::domain_error("project: f returned a non-finite value");
    cv.c[static_cast<std::size_t>(j / per_cell)] += v;
  }
  for (double& x : cv.c) x *= root_k * h;
  return cv;
}

// f^H(t) = sum_s c_s phi_{Hs}(t).
inline double reconstruct(const CoeffVector& cv, double t) {
  const int K = cv.K();
  const int s = cell_index(t, K);
  if (s == 0) return 0.0;
  return cv.c[static_cast<std::size_t>(s - 1)] * std::sqrt(static_cast<double>(K));
}

}  // namespace destim
