#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "destim/rng.hpp"

namespace destim {

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
  long n = 0;
};

inline MeanStderr mean_stderr(std::span<const double> xs) {
  MeanStderr s;
  s.n = static_cast<long>(xs.size());
  if (s.n == 0) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / s.n;
  if (s.n < 2) return s;
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.stderr_ = std::sqrt(ss / (s.n - 1) / s.n);
  return s;
}

// ---------------------------------------------------------------------------
// Sub-exponential tail checking (two-branch bound: Gaussian branch for
// t <= nu^2/beta, exponential branch beyond; beta = 0 is sub-Gaussian).

struct TailRow {
  double t = 0.0;
  double empirical = 0.0;
  double bound = 0.0;
  double slack = 0.0;  // 3 * binomial SE at the bound
  bool ok = true;
};

struct TailCheckReport {
  bool pass = false;
  double nu = 0.0;
  double beta = 0.0;
  std::vector<TailRow> rows;
};

inline double subexp_bound(double t, double nu, double beta) {
  if (beta == 0.0 || t <= nu * nu / beta) return 2.0 * std::exp(-t * t / (2.0 * nu * nu));
  return 2.0 * std::exp(-t / (2.0 * beta));
}

inline std::vector<double> tail_thresholds(std::vector<double>& dev_sorted) {
  static constexpr double qs[] = {0.5, 0.75, 0.9, 0.96, 0.99, 0.997, 0.999, 0.9997};
  std::vector<double> ts;
  const std::size_t n = dev_sorted.size();
  for (double q : qs) {
    const std::size_t idx = std::min(n - 1, static_cast<std::size_t>(q * (n - 1)));
    ts.push_back(dev_sorted[idx]);
  }
  ts.push_back(0.95 * dev_sorted[n - 1]);
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  return ts;
}

inline TailCheckReport subexp_tail_check(std::span<const double> samples, double nu,
                                         double beta) {
  if (samples.size() < 1000) throw std::invalid_argument("subexp_tail_check: need >= 1e3 samples");
  if (!(nu > 0.0) || beta < 0.0) throw std::invalid_argument("subexp_tail_check: bad (nu, beta)");
  const MeanStderr ms = mean_stderr(samples);
  std::vector<double> dev(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) dev[i] = std::abs(samples[i] - ms.mean);
  std::sort(dev.begin(), dev.end());
  TailCheckReport rep;
  rep.nu = nu;
  rep.beta = beta;
  if (dev.back() == 0.0) {  // degenerate sample
    rep.pass = true;
    return rep;
  }
  const double n = static_cast<double>(samples.size());
  rep.pass = true;
  for (double t : tail_thresholds(dev)) {
    if (t <= 0.0) continue;
    TailRow row;
    row.t = t;
    row.empirical =
        static_cast<double>(dev.end() - std::lower_bound(dev.begin(), dev.end(), t)) / n;
    row.bound = std::min(1.0, subexp_bound(t, nu, beta));
    row.slack = 3.0 * std::sqrt(row.bound * (1.0 - row.bound) / n);
    row.ok = row.empirical <= row.bound + row.slack;
    rep.pass = rep.pass && row.ok;
    rep.rows.push_back(row);
  }
  return rep;
}

struct SubexpFit {
  bool found = false;
  double nu = 0.0;
  double beta = 0.0;
};

// Smallest passing (nu, beta) on a grid proportional to `scale` (a robust
// dispersion by default), candidates ordered by nu^2 + beta^2. Heavy tails
// fail every grid point up to the 4*scale cap.
inline SubexpFit fit_subexp(std::span<const double> samples, double scale = 0.0) {
  std::vector<double> xs(samples.begin(), samples.end());
  std::sort(xs.begin(), xs.end());
  if (scale <= 0.0) {
    const std::size_t n = xs.size();
    const double q84 = xs[static_cast<std::size_t>(0.84 * (n - 1))];
    const double q16 = xs[static_cast<std::size_t>(0.16 * (n - 1))];
    scale = 0.5 * (q84 - q16);
    if (scale <= 0.0) scale = 1.0;
  }
  std::vector<double> nus, betas{0.0};
  for (double f = 0.25; f <= 4.0001; f *= 1.25) nus.push_back(f * scale);
  for (double f = 0.25; f <= 6.0001; f *= 1.5) betas.push_back(f * scale);

  struct Cand {
    double nu, beta, norm;
  };
  std::vector<Cand> cands;
  for (double nu : nus)
    for (double beta : betas) cands.push_back({nu, beta, nu * nu + beta * beta});
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.norm < b.norm; });

  for (const Cand& c : cands) {
    if (subexp_tail_check(samples, c.nu, c.beta).pass) return {true, c.nu, c.beta};
  }
  return {};
}

// ---------------------------------------------------------------------------
// Balls and bins: n balls thrown uniformly into k bins; checks the two
// occupancy tail bounds k e^{-c/2} (k >= n, threshold c+1) and k e^{-cn/8k}
// (n >= k, threshold cn/k) against Monte-Carlo frequencies.

struct OccupancyBound {
  int which = 1;  // 1: sparse bound, 2: dense bound
  double c = 0.0;
  double threshold = 0.0;
  double empirical = 0.0;
  double bound = 0.0;
  double slack = 0.0;
  bool pass = true;
};

struct BallsBinsReport {
  int n = 0, k = 0, trials = 0;
  double mean_occupancy = 0.0;       // average V_s over bins and trials
  double mean_occupancy_se = 0.0;
  int max_seen = 0;
  std::vector<OccupancyBound> bounds;
  bool all_pass = true;
};

inline BallsBinsReport balls_bins_sim(int n, int k, int trials, Rng& rng,
                                      std::span<const double> c_values) {
  if (n < 1 || k < 1 || trials < 1) throw std::invalid_argument("balls_bins_sim: bad arguments");
  std::vector<int> bins(static_cast<std::size_t>(k));
  std::vector<int> maxima(static_cast<std::size_t>(trials));
  std::uniform_int_distribution<int> bin(0, k - 1);
  double occ_sum = 0.0, occ_sumsq = 0.0;
  for (int t = 0; t < trials; ++t) {
    std::fill(bins.begin(), bins.end(), 0);
    for (int b = 0; b < n; ++b) ++bins[static_cast<std::size_t>(bin(rng))];
    maxima[static_cast<std::size_t>(t)] = *std::max_element(bins.begin(), bins.end());
    const double first = static_cast<double>(bins[0]);  // one bin suffices for E[V_s]
    occ_sum += first;
    occ_sumsq += first * first;
  }
  BallsBinsReport rep;
  rep.n = n;
  rep.k = k;
  rep.trials = trials;
  rep.mean_occupancy = occ_sum / trials;
  rep.mean_occupancy_se =
      std::sqrt(std::max(0.0, (occ_sumsq - occ_sum * occ_sum / trials) / (trials - 1)) / trials);
  rep.max_seen = *std::max_element(maxima.begin(), maxima.end());

  auto tail_freq = [&maxima, trials](double threshold) {
    int cnt = 0;
    for (int mx : maxima)
      if (static_cast<double>(mx) >= threshold) ++cnt;
    return static_cast<double>(cnt) / trials;
  };
  for (double c : c_values) {
    if (k >= n) {
      OccupancyBound ob;
      ob.which = 1;
      ob.c = c;
      ob.threshold = c + 1.0;
      ob.empirical = tail_freq(ob.threshold);
      ob.bound = std::min(1.0, k * std::exp(-c / 2.0));
      ob.slack = 3.0 * std::sqrt(ob.bound * (1.0 - ob.bound) / trials);
      ob.pass = ob.empirical <= ob.bound + ob.slack;
      rep.all_pass = rep.all_pass && ob.pass;
      rep.bounds.push_back(ob);
    }
    if (n >= k) {
      OccupancyBound ob;
      ob.which = 2;
      ob.c = c;
      ob.threshold = c * static_cast<double>(n) / k;
      ob.empirical = tail_freq(ob.threshold);
      ob.bound = std::min(1.0, k * std::exp(-c * static_cast<double>(n) / (8.0 * k)));
      ob.slack = 3.0 * std::sqrt(ob.bound * (1.0 - ob.bound) / trials);
      ob.pass = ob.empirical <= ob.bound + ob.slack;
      rep.all_pass = rep.all_pass && ob.pass;
      rep.bounds.push_back(ob);
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Log-log rate fit: OLS of log(mse) on log(n_ess), optionally weighted by
// inverse squared relative stderr.

struct RateFitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

struct RateObservation {
  double n_ess = 0.0;
  double mean_mse = 0.0;
  double stderr_ = 0.0;
};

inline RateFitResult rate_fit(std::span<const RateObservation> pts, bool weighted = false) {
  if (pts.size() < 4) throw std::invalid_argument("rate_fit: need at least 4 points");
  double lo = pts[0].n_ess, hi = pts[0].n_ess;
  for (const auto& p : pts) {
    lo = std::min(lo, p.n_ess);
    hi = std::max(hi, p.n_ess);
  }
  if (hi < 10.0 * lo) throw std::invalid_argument("rate_fit: points must span a decade of n_ess");

  double sw = 0.0, sx = 0.0, sy = 0.0;
  std::vector<double> w(pts.size(), 1.0);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!(pts[i].mean_mse > 0.0)) throw std::invalid_argument("rate_fit: mse must be positive");
    if (weighted && pts[i].stderr_ > 0.0) {
      const double rel = pts[i].stderr_ / pts[i].mean_mse;
      w[i] = 1.0 / (rel * rel + 1e-12);
    }
    sw += w[i];
    sx += w[i] * std::log(pts[i].n_ess);
    sy += w[i] * std::log(pts[i].mean_mse);
  }
  const double mx = sx / sw, my = sy / sw;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double dx = std::log(pts[i].n_ess) - mx;
    const double dy = std::log(pts[i].mean_mse) - my;
    sxx += w[i] * dx * dx;
    sxy += w[i] * dx * dy;
    syy += w[i] * dy * dy;
  }
  RateFitResult fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  return fit;
}

}  // namespace destim
