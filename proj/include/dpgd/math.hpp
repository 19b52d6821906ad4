#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

#include "dpgd/common.hpp"
#include "dpgd/rng.hpp"

namespace dpgd {

namespace detail {

// Cancellation-free scaled series
// erf(x) = (2/sqrt(pi)) x e^{-x^2} sum_n (2x^2)^n / (2n+1)!!.
// All terms are positive; on |x| < 6 the largest term never exceeds the
// final sum by enough to amplify rounding, and erfc(6) < 2^-53.
inline double erf_series(double x) {
  double x2 = x * x;
  double term = 1.0;
  double sum = 1.0;
  for (int n = 0; n < 500; ++n) {
    term *= 2.0 * x2 / (2.0 * n + 3.0);
    sum += term;
    if (term < 1e-18 * sum) break;
  }
  return 1.1283791670955125738961589031 * x * std::exp(-x2) * sum;
}

}  // namespace detail

/// Gauss error function, absolute accuracy well below 1e-12 on the reals.
inline double erf(double x) {
  if (std::isnan(x)) return x;
  double ax = std::fabs(x);
  double r = ax < 6.0 ? detail::erf_series(ax) : 1.0;
  return x < 0 ? -r : r;
}

/// mu and nu in (0,1): the factors by which clipping at level c shrinks the
/// expected gradient direction and the residual second moment.
struct ClippingFactors {
  double mu = 1;
  double nu = 1;
};

namespace detail {

// Total risk P = R + zeta^2/2; factor formulas take R as the excess risk.
inline double total_risk(double c, double risk, double zeta) {
  if (!(c > 0)) throw config_error("clipping factors: require c > 0");
  if (risk < 0 || !std::isfinite(risk))
    throw config_error("clipping factors: require finite risk >= 0");
  double p = risk + 0.5 * zeta * zeta;
  if (std::isinf(c)) return p;  // clipping inactive, p unused
  if (p <= 0)
    throw config_error(
        "clipping factors: degenerate risk (R + zeta^2/2 = 0 with finite c)");
  return p;
}

inline double big_f(double z) {
  return dpgd::erf(z * 0.70710678118654752440084436210) -
         0.79788456080286535587989211986 * z * std::exp(-0.5 * z * z);
}

}  // namespace detail

inline double mu_c(double c, double risk, double zeta) {
  double p = detail::total_risk(c, risk, zeta);
  if (std::isinf(c)) return 1.0;
  double cp = c / std::sqrt(2.0 * p);
  if (cp > 40.0) return 1.0;
  return erf(c / (2.0 * std::sqrt(p)));
}

inline double nu_c(double c, double risk, double zeta) {
  double p = detail::total_risk(c, risk, zeta);
  if (std::isinf(c)) return 1.0;
  double cp = c / std::sqrt(2.0 * p);
  if (cp > 40.0) return 1.0;
  double v = cp * cp * (1.0 - erf(c / (2.0 * std::sqrt(p)))) + detail::big_f(cp);
  // the tail term cancels at ~cp^2 eps; nu < 1 holds mathematically
  return std::fmin(v, 1.0);
}

inline ClippingFactors clipping_factors(double c, double risk, double zeta) {
  return {mu_c(c, risk, zeta), nu_c(c, risk, zeta)};
}

/// Monte-Carlo estimate of the factors straight from their defining
/// one-dimensional Gaussian expectations, with standard errors. Test oracle
/// for the closed forms; deterministic for a fixed seed.
struct McClippingEstimate {
  double mu = 0;
  double nu = 0;
  double mu_se = 0;
  double nu_se = 0;
};

inline McClippingEstimate mc_clipping_oracle(double c, double risk, double zeta,
                                             std::size_t samples,
                                             std::uint64_t seed) {
  if (samples < 10000)
    throw config_error("mc_clipping_oracle: need at least 1e4 samples");
  double p = detail::total_risk(c, risk, zeta);
  if (!(p > 0)) throw config_error("mc_clipping_oracle: degenerate risk");
  double s = std::sqrt(2.0 * p);
  RngStream rng(seed, /*stream=*/0x6d63u);
  double sv = 0, svv = 0, sw = 0, sww = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    double z = rng.normal();
    double r = s * z;
    double clipped = std::isinf(c) ? r : std::fmin(std::fmax(r, -c), c);
    double v = clipped * z / s;
    double w = clipped * clipped / (s * s);
    sv += v;
    svv += v * v;
    sw += w;
    sww += w * w;
  }
  double n = static_cast<double>(samples);
  McClippingEstimate est;
  est.mu = sv / n;
  est.nu = sw / n;
  est.mu_se = std::sqrt(std::fmax(svv / n - est.mu * est.mu, 0.0) / n);
  est.nu_se = std::sqrt(std::fmax(sww / n - est.nu * est.nu, 0.0) / n);
  return est;
}

}  // namespace dpgd
