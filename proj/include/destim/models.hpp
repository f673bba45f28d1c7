#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>

#include "destim/rng.hpp"
#include "destim/sieve.hpp"
#include "destim/wavelet.hpp"

namespace destim {

// The five sample-generating models. Responses: density samples carry y = 1,
// Gaussian regression y in R, binary y in {0,1}, Poisson y in N,
// heteroskedastic y in R with Var(y|t) = f(t).
enum class ModelKind {
  Density,
  GaussianRegression,
  BinaryRegression,
  PoissonRegression,
  HeteroskedasticRegression,
};

inline const char* model_name(ModelKind m) {
  switch (m) {
    case ModelKind::Density: return "density";
    case ModelKind::GaussianRegression: return "gaussian";
    case ModelKind::BinaryRegression: return "binary";
    case ModelKind::PoissonRegression: return "poisson";
    case ModelKind::HeteroskedasticRegression: return "heteroskedastic";
  }
  return "?";
}

struct Sample {
  double t = 0.0;
  double y = 0.0;
};

inline bool requires_positive_mean(ModelKind m) {
  return m == ModelKind::Density || m == ModelKind::PoissonRegression ||
         m == ModelKind::HeteroskedasticRegression;
}

inline double default_C0(ModelKind m) {
  switch (m) {
    case ModelKind::Density: return 1.0;
    case ModelKind::GaussianRegression: return 0.0;
    case ModelKind::BinaryRegression: return 0.5;
    case ModelKind::PoissonRegression: return 1.0;
    case ModelKind::HeteroskedasticRegression: return 1.0;
  }
  return 0.0;
}

// Largest eps <= 1 keeping the sieve inside [C0/2, 3C0/2] when C0 > 0
// (sup-norm of the perturbation is eps * k^{-r}) and, for the binary model,
// inside [0,1].
inline double eps_max(ModelKind m, int k, double C0, double r) {
  if (!is_power_of_two(k)) throw std::invalid_argument("eps_max: k must be a power of two");
  if (C0 == 0.0 && requires_positive_mean(m))
    throw std::invalid_argument("eps_max: C0 = 0 is invalid for a positivity-requiring model");
  const double kr = std::pow(static_cast<double>(k), r);
  double e = 1.0;
  if (C0 > 0.0) e = std::min(e, 0.5 * C0 * kr);
  if (m == ModelKind::BinaryRegression) e = std::min(e, std::min(C0, 1.0 - C0) * kr);
  return e;
}

inline void validate_for_model(ModelKind m, const SieveFunction& f) {
  validate(f);
  if (m == ModelKind::Density && std::abs(f.C0 - 1.0) > 1e-12)
    throw std::invalid_argument("density model requires C0 = 1");
  const double lo = f.C0 - f.step(), hi = f.C0 + f.step();
  if (requires_positive_mean(m) && lo <= 0.0)
    throw std::invalid_argument("sieve is not positive for this model; lower eps");
  if (m == ModelKind::BinaryRegression && (lo < 0.0 || hi > 1.0))
    throw std::invalid_argument("binary sieve must stay inside [0,1]; lower eps");
}

// Draw one sample. The density model uses the exact two-stage scheme: the
// cell is uniform on {1..k} (the psi terms carry no mass), then the half-cell
// is Bernoulli with the closed-form masses (1 +- eps k^{-r} z_s)/2, then t is
// uniform inside the chosen half.
template <class URBG>
Sample sample(ModelKind m, const SieveFunction& f, URBG& rng) {
  validate_for_model(m, f);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Sample x;
  if (m == ModelKind::Density) {
    std::uniform_int_distribution<int> cell(1, f.k);
    const int s = cell(rng);
    const double d = f.step() * f.z[static_cast<std::size_t>(s - 1)];
    const bool left = unit(rng) < 0.5 * (1.0 + d);
    const double u = 0.5 * (left ? 0.0 : 1.0) + 0.5 * unit(rng);
    x.t = (s - 1 + u) / static_cast<double>(f.k);
    x.y = 1.0;
    return x;
  }
  x.t = unit(rng);
  const double ft = f(x.t);
  switch (m) {
    case ModelKind::GaussianRegression:
      x.y = std::normal_distribution<double>(ft, 1.0)(rng);
      break;
    case ModelKind::BinaryRegression:
      x.y = unit(rng) < ft ? 1.0 : 0.0;
      break;
    case ModelKind::PoissonRegression:
      x.y = static_cast<double>(std::poisson_distribution<long>(ft)(rng));
      break;
    case ModelKind::HeteroskedasticRegression:
      x.y = std::normal_distribution<double>(0.0, std::sqrt(ft))(rng);
      break;
    default: break;
  }
  return x;
}

// h(y) per model: 1, y, y, y, y^2.
inline double response_stat(ModelKind m, double y) {
  switch (m) {
    case ModelKind::Density: return 1.0;
    case ModelKind::HeteroskedasticRegression: return y * y;
    default: return y;
  }
}

// Sample-wise unbiased coefficient estimator hat f_{Hs}(x) = h(y) phi_{Hs}(t).
inline double samplewise_estimator(ModelKind m, int H, int s, const Sample& x) {
  return response_stat(m, x.y) * eval_father(WaveletFamily::haar(), H, s, x.t);
}

// Sample-wise log-likelihood ratio L_{s,z_s}(x) = log(p_{s,-z_s}(x) / p_{s,z_s}(x))
// for t in cell s of the sieve. With a = eps k^{-(r+1/2)} z_s psi^k_s(t), the
// closed forms are
//   density:         log((C0-a)/(C0+a))
//   gaussian:        -2 a (y - C0)
//   binary:          y log((C0-a)/(C0+a)) + (1-y) log((1-C0+a)/(1-C0-a))
//   poisson:         2a + y log((C0-a)/(C0+a))
//   heteroskedastic: (1/2) log((C0+a)/(C0-a)) - y^2 a / (C0^2 - a^2)
inline double samplewise_loglr(ModelKind m, const SieveFunction& f, int s, int z_s,
                               const Sample& x) {
  validate_for_model(m, f);
  if (cell_index(x.t, f.k) != s)
    throw std::invalid_argument("samplewise_loglr: t is outside cell s");
  const double a = f.amp() * z_s * sieve_psi(WaveletFamily::haar(), f.k, s, x.t);
  const double C0 = f.C0;
  switch (m) {
    case ModelKind::Density:
      return std::log((C0 - a) / (C0 + a));
    case ModelKind::GaussianRegression:
      return -2.0 * a * (x.y - C0);
    case ModelKind::BinaryRegression:
      return x.y > 0.5 ? std::log((C0 - a) / (C0 + a))
                       : std::log((1.0 - C0 + a) / (1.0 - C0 - a));
    case ModelKind::PoissonRegression:
      return 2.0 * a + x.y * std::log((C0 - a) / (C0 + a));
    case ModelKind::HeteroskedasticRegression:
      return 0.5 * std::log((C0 + a) / (C0 - a)) - x.y * x.y * a / (C0 * C0 - a * a);
  }
  return 0.0;
}

// Terminal-wise log-likelihood ratio: the sum of L_{s,z_s} over the samples
// that fall in cell s.
inline double terminal_loglr(ModelKind m, const SieveFunction& f, int s,
                             std::span<const Sample> batch) {
  double acc = 0.0;
  const int z_s = f.z[static_cast<std::size_t>(s - 1)];
  for (const Sample& x : batch)
    if (cell_index(x.t, f.k) == s) acc += samplewise_loglr(m, f, s, z_s, x);
  return acc;
}

}  // namespace destim
