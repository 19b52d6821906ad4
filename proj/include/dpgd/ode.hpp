#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "dpgd/common.hpp"
#include "dpgd/math.hpp"
#include "dpgd/schedule.hpp"
#include "dpgd/spectrum.hpp"

namespace dpgd {

/// One deterministic-equivalent problem: spectrum + target energies,
/// schedule, clipping level c, privacy rho, aspect ratio gamma = d/n and
/// label noise zeta. gamma = 0 degenerates to the noiseless gradient flow.
struct OdeProblem {
  std::vector<double> lambda;
  std::vector<double> d0;
  Schedule schedule = Schedule::constant(1.0);
  double c = 1;
  double rho = 1;
  double gamma = 0.1;
  double zeta = 0;

  void validate() const {
    if (lambda.empty() || lambda.size() != d0.size())
      throw config_error("ode: spectrum and mode energies must match");
    if (!(c > 0)) throw config_error("ode: require c > 0");
    if (!(rho > 0)) throw config_error("ode: require rho > 0");
    if (!(gamma >= 0)) throw config_error("ode: require gamma >= 0");
    if (!(zeta >= 0)) throw config_error("ode: require zeta >= 0");
    if (!schedule.bounded_noise_rate())
      throw config_error(
          "ode: noise rate of polynomial schedules with 0 < alpha < 1/2 is "
          "unbounded at t = 1; the engine requires a bounded noise rate");
    if (std::isinf(c) && privacy_noise_active())
      throw config_error("ode: infinite clipping level with active private noise");
  }

  bool privacy_noise_active() const {
    return std::isfinite(rho) && gamma > 0 &&
           !(schedule.kind() == Schedule::Kind::constant ||
             (schedule.kind() == Schedule::Kind::polynomial && schedule.alpha() == 0));
  }

  /// Capped rate eta-bar(t) = min(eta~(t), 2/gamma).
  double eta_bar(double t) const {
    double e = schedule.eta_tilde(t);
    return gamma > 0 ? std::fmin(e, 2.0 / gamma) : e;
  }

  /// 2 c^2 sigma~^2(t) gamma^2 with sigma~^2 = noise_rate / rho^2.
  double noise_term(double t) const {
    if (gamma == 0) return 0;
    double s2 = schedule.noise_rate(t) / (rho * rho);
    if (s2 == 0) return 0;
    return 2.0 * c * c * s2 * gamma * gamma;
  }

  double initial_risk_value() const { return initial_risk(lambda, d0); }
};

/// Sampled risk trajectory: R and Gamma(t) = int_0^t eta-bar mu_c(R) ds on
/// the integration grid, plus the private-output risk after the terminal
/// noise correction.
struct RiskCurve {
  std::vector<double> grid;
  std::vector<double> R;
  std::vector<double> Gamma;
  double final_private_risk = 0;
};

/// R(1) + 2 c^2 eta~^2(1) gamma^2 / rho^2, the last-iterate correction.
inline double final_private_risk(double r1, const Schedule& schedule, double c,
                                 double gamma, double rho) {
  double e1 = schedule.eta_tilde(1.0);
  double term = e1 * e1 * gamma * gamma / (rho * rho);
  if (term == 0) return r1;
  return r1 + 2.0 * c * c * term;
}

/// Uniform grid over [0,1] with step dt, with a node inserted at the kink
/// of min(eta~, 2/gamma) when the cap becomes active inside (0,1).
inline std::vector<double> make_time_grid(const OdeProblem& problem, double dt) {
  if (!(dt > 0) || !(dt <= 1)) throw config_error("make_time_grid: bad dt");
  auto n = static_cast<std::size_t>(std::llround(1.0 / dt));
  if (n < 1) n = 1;
  std::vector<double> grid(n + 1);
  for (std::size_t j = 0; j <= n; ++j)
    grid[j] = static_cast<double>(j) / static_cast<double>(n);
  if (problem.gamma > 0) {
    double kink = problem.schedule.crossing_time(2.0 / problem.gamma);
    if (kink > 0 && kink < 1) {
      auto it = std::lower_bound(grid.begin(), grid.end(), kink);
      if (it != grid.end() && std::fabs(*it - kink) > 1e-12 &&
          std::fabs(*(it - 1) - kink) > 1e-12)
        grid.insert(it, kink);
    }
  }
  return grid;
}

namespace detail {

// mu/nu with transient rounding of R at zero clamped away.
inline double ode_mu(double c, double r, double zeta) {
  return mu_c(c, r < 0 ? 0 : r, zeta);
}
inline double ode_nu(double c, double r, double zeta) {
  return nu_c(c, r < 0 ? 0 : r, zeta);
}

struct StageCoeffs {
  double a, b, e, g;  // dD = (a lam D + b lam + e) dt, dGamma = g dt
};

inline StageCoeffs stage_coeffs(const OdeProblem& p, double t, double r,
                                double r_floor) {
  if (!std::isfinite(r) || r < r_floor)
    throw numerical_error(
        "ode: integration unstable (risk left its admissible range); reduce "
        "the step size");
  double mu = ode_mu(p.c, r, p.zeta);
  double nu = ode_nu(p.c, r, p.zeta);
  double eb = p.eta_bar(t);
  double rr = r < 0 ? 0 : r;
  StageCoeffs s;
  s.a = -2.0 * eb * mu;
  s.b = eb * eb * nu * (rr + 0.5 * p.zeta * p.zeta) * p.gamma;
  s.e = p.noise_term(t);
  s.g = eb * mu;
  return s;
}

using Poly = std::array<double, 5>;  // coefficients of 1, lam, ..., lam^4

inline Poly shift_mul(const Poly& p, double a) {
  Poly out{};
  for (int i = 0; i < 4; ++i) out[i + 1] = a * p[i];
  return out;
}

// One RK4 stage as polynomials in lambda: k = P(lam) D + Q(lam) with
// k = A lam (D + w k_prev) + B lam + E. Stage degrees stay <= 4.
struct StagePoly {
  Poly p{};
  Poly q{};
};

inline StagePoly make_stage(const StagePoly* prev, double w, const StageCoeffs& s) {
  Poly base_p{1, 0, 0, 0, 0};
  Poly base_q{};
  if (prev) {
    for (int i = 0; i < 5; ++i) {
      base_p[i] = (i == 0 ? 1.0 : 0.0) + w * prev->p[i];
      base_q[i] = w * prev->q[i];
    }
  }
  StagePoly out;
  out.p = shift_mul(base_p, s.a);
  out.q = shift_mul(base_q, s.a);
  out.q[0] += s.e;
  out.q[1] += s.b;
  return out;
}

// (1/d) sum_i lam_i (P(lam_i) D_i + Q(lam_i)) from moments
// M[j] = (1/d) sum lam^j D and m[j] = (1/d) sum lam^j.
inline double lam_weighted(const Poly& p, const Poly& q,
                           const std::array<double, 6>& M,
                           const std::array<double, 6>& m) {
  double s = 0;
  for (int i = 0; i < 5; ++i) s += p[i] * M[i + 1] + q[i] * m[i + 1];
  return s;
}

}  // namespace detail

/// Integrates the coupled mode ODEs with classical fixed-step RK4 over the
/// given grid (ascending, grid[0] = 0, grid.back() = 1).
///
/// The right-hand side is affine in each D_i given the scalar coupling
/// R(t), so one RK4 step reduces to degree-4 polynomials P, Q in lambda
/// with D_i <- (1 + P(lambda_i)) D_i + Q(lambda_i); stage risks follow
/// exactly from the spectral moments. One vector pass per step, with a
/// fixed-order reduction so results are reproducible run to run.
inline RiskCurve integrate(const OdeProblem& problem, const std::vector<double>& grid) {
  problem.validate();
  if (grid.size() < 2 || grid.front() != 0.0 || grid.back() != 1.0)
    throw config_error("integrate: grid must cover [0,1] starting at 0");
  for (std::size_t j = 1; j < grid.size(); ++j)
    if (!(grid[j] > grid[j - 1])) throw config_error("integrate: grid not ascending");

  const std::vector<double>& lam = problem.lambda;
  const std::size_t d = lam.size();
  const double inv_d = 1.0 / static_cast<double>(d);

  std::array<double, 6> m{};  // m[j] = (1/d) sum lam^j
  m[0] = 1;
  for (std::size_t i = 0; i < d; ++i) {
    double l = lam[i], p = 1;
    for (int j = 1; j <= 5; ++j) {
      p *= l;
      m[j] += p;
    }
  }
  for (int j = 1; j <= 5; ++j) m[j] *= inv_d;

  std::vector<double> D = problem.d0;
  std::array<double, 6> M{};
  for (std::size_t i = 0; i < d; ++i) {
    double l = lam[i], p = D[i];
    for (int j = 1; j <= 5; ++j) {
      p *= l;
      M[j] += p;
    }
  }
  for (int j = 1; j <= 5; ++j) M[j] *= inv_d;

  const double r0 = M[1];
  const double r_floor = -1e-9 * std::fmax(1.0, r0);
  const double r_ceiling = 1e12 * std::fmax(1.0, r0);

  RiskCurve curve;
  curve.grid = grid;
  curve.R.resize(grid.size());
  curve.Gamma.resize(grid.size());
  curve.R[0] = r0;
  curve.Gamma[0] = 0;

  double gamma_acc = 0;
  using detail::Poly;
  for (std::size_t j = 0; j + 1 < grid.size(); ++j) {
    const double t0 = grid[j];
    const double h = grid[j + 1] - grid[j];

    auto s1 = detail::stage_coeffs(problem, t0, M[1], r_floor);
    auto k1 = detail::make_stage(nullptr, 0.0, s1);

    double r2 = M[1] + 0.5 * h * detail::lam_weighted(k1.p, k1.q, M, m);
    auto s2 = detail::stage_coeffs(problem, t0 + 0.5 * h, r2, r_floor);
    auto k2 = detail::make_stage(&k1, 0.5 * h, s2);

    double r3 = M[1] + 0.5 * h * detail::lam_weighted(k2.p, k2.q, M, m);
    auto s3 = detail::stage_coeffs(problem, t0 + 0.5 * h, r3, r_floor);
    auto k3 = detail::make_stage(&k2, 0.5 * h, s3);

    double r4 = M[1] + h * detail::lam_weighted(k3.p, k3.q, M, m);
    auto s4 = detail::stage_coeffs(problem, t0 + h, r4, r_floor);
    auto k4 = detail::make_stage(&k3, h, s4);

    Poly P{}, Q{};
    for (int i = 0; i < 5; ++i) {
      P[i] = h / 6.0 * (k1.p[i] + 2 * k2.p[i] + 2 * k3.p[i] + k4.p[i]);
      Q[i] = h / 6.0 * (k1.q[i] + 2 * k2.q[i] + 2 * k3.q[i] + k4.q[i]);
    }

    // Fused update + moment refresh, fixed summation order.
    std::array<double, 6> Mn{};
    double dmin = 0;
    for (std::size_t i = 0; i < d; ++i) {
      double l = lam[i];
      double pv = P[0] + l * (P[1] + l * (P[2] + l * (P[3] + l * P[4])));
      double qv = Q[0] + l * (Q[1] + l * (Q[2] + l * (Q[3] + l * Q[4])));
      double dn = D[i] * (1.0 + pv) + qv;
      D[i] = dn;
      dmin = std::fmin(dmin, dn);
      double p = dn;
      for (int k = 1; k <= 5; ++k) {
        p *= l;
        Mn[k] += p;
      }
    }
    for (int k = 1; k <= 5; ++k) Mn[k] *= inv_d;
    M = Mn;

    if (!std::isfinite(M[1]) || M[1] > r_ceiling || dmin < r_floor)
      throw numerical_error(
          "ode: integration unstable (negative or diverging mode energy); "
          "reduce the step size");

    gamma_acc += h / 6.0 * (s1.g + 2 * s2.g + 2 * s3.g + s4.g);
    curve.R[j + 1] = M[1];
    curve.Gamma[j + 1] = gamma_acc;
  }

  curve.final_private_risk = final_private_risk(curve.R.back(), problem.schedule,
                                                problem.c, problem.gamma, problem.rho);
  return curve;
}

inline RiskCurve integrate(const OdeProblem& problem, double dt = 1e-3) {
  return integrate(problem, make_time_grid(problem, dt));
}

/// Scalar comparison ODEs that bracket R(t): lambda_min / lambda_max on
/// the descent term, lambda_max / 1 on the sampling-variance term.
inline std::pair<RiskCurve, RiskCurve> sandwich_bounds(const OdeProblem& problem,
                                                       const std::vector<double>& grid) {
  problem.validate();
  double lam_min = problem.lambda.back();
  double lam_max = problem.lambda.front();
  if (!(lam_min > 0)) throw config_error("sandwich_bounds: require lambda_min > 0");

  auto run_scalar = [&](double lam_descent, double lam_variance) {
    RiskCurve curve;
    curve.grid = grid;
    curve.R.resize(grid.size());
    curve.Gamma.resize(grid.size());
    double r = problem.initial_risk_value();
    double g = 0;
    curve.R[0] = r;
    curve.Gamma[0] = 0;
    const double r_floor = -1e-9 * std::fmax(1.0, r);
    auto rhs = [&](double t, double x, double& dgamma) {
      if (!std::isfinite(x) || x < r_floor)
        throw numerical_error("sandwich_bounds: unstable; reduce the step size");
      double xr = x < 0 ? 0 : x;
      double mu = detail::ode_mu(problem.c, xr, problem.zeta);
      double nu = detail::ode_nu(problem.c, xr, problem.zeta);
      double eb = problem.eta_bar(t);
      dgamma = eb * mu;
      return -2.0 * lam_descent * eb * mu * x +
             lam_variance * eb * eb * nu * (xr + 0.5 * problem.zeta * problem.zeta) *
                 problem.gamma +
             problem.noise_term(t);
    };
    for (std::size_t j = 0; j + 1 < grid.size(); ++j) {
      double t = grid[j], h = grid[j + 1] - grid[j];
      double g1, g2, g3, g4;
      double k1 = rhs(t, r, g1);
      double k2 = rhs(t + 0.5 * h, r + 0.5 * h * k1, g2);
      double k3 = rhs(t + 0.5 * h, r + 0.5 * h * k2, g3);
      double k4 = rhs(t + h, r + h * k3, g4);
      r += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
      g += h / 6.0 * (g1 + 2 * g2 + 2 * g3 + g4);
      curve.R[j + 1] = r;
      curve.Gamma[j + 1] = g;
    }
    curve.final_private_risk = final_private_risk(curve.R.back(), problem.schedule,
                                                  problem.c, problem.gamma, problem.rho);
    return curve;
  };

  return {run_scalar(lam_min, lam_max), run_scalar(lam_max, 1.0)};
}

inline std::pair<RiskCurve, RiskCurve> sandwich_bounds(const OdeProblem& problem,
                                                       double dt = 1e-3) {
  return sandwich_bounds(problem, make_time_grid(problem, dt));
}

/// Sup-norm residual of the stored curve in the implicit risk equation
///   R(t) = F(Gamma(t)) + int_0^t [ eta-bar^2 nu_c (R + zeta^2/2) gamma
///          K(Gamma(t)-Gamma(s)) + 2 c^2 sigma~^2 gamma^2
///          J(Gamma(t)-Gamma(s)) ] ds,
/// with the integral taken by the trapezoid rule on the curve's grid. The
/// kernel convolutions are accumulated incrementally (one exponential per
/// mode and step), which is algebraically the same trapezoid sum.
inline double implicit_residual(const RiskCurve& curve, const OdeProblem& problem) {
  problem.validate();
  const std::vector<double>& lam = problem.lambda;
  const std::size_t d = lam.size();
  const std::size_t nodes = curve.grid.size();
  if (curve.R.size() != nodes || curve.Gamma.size() != nodes || nodes < 2)
    throw config_error("implicit_residual: malformed curve");
  const double inv_d = 1.0 / static_cast<double>(d);

  auto g1 = [&](std::size_t j) {
    double t = curve.grid[j];
    double r = std::fmax(curve.R[j], 0.0);
    double eb = problem.eta_bar(t);
    return eb * eb * detail::ode_nu(problem.c, r, problem.zeta) *
           (r + 0.5 * problem.zeta * problem.zeta) * problem.gamma;
  };
  auto g2 = [&](std::size_t j) { return problem.noise_term(curve.grid[j]); };

  std::vector<double> w(d), u(d, 0.0), v(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) w[i] = problem.d0[i] * lam[i];

  double sup = std::fabs(curve.R[0] - inv_d * [&] {
    double s = 0;
    for (std::size_t i = 0; i < d; ++i) s += w[i];
    return s;
  }());

  for (std::size_t j = 0; j + 1 < nodes; ++j) {
    double dgamma = curve.Gamma[j + 1] - curve.Gamma[j];
    double ds = curve.grid[j + 1] - curve.grid[j];
    double a1 = g1(j), b1 = g1(j + 1);
    double a2 = g2(j), b2 = g2(j + 1);
    double sf = 0, su = 0, sv = 0;
    for (std::size_t i = 0; i < d; ++i) {
      double f = std::exp(-2.0 * lam[i] * dgamma);
      w[i] *= f;
      u[i] = f * (u[i] + 0.5 * ds * a1) + 0.5 * ds * b1;
      v[i] = f * (v[i] + 0.5 * ds * a2) + 0.5 * ds * b2;
      sf += w[i];
      su += lam[i] * lam[i] * u[i];
      sv += lam[i] * v[i];
    }
    double predicted = inv_d * (sf + su + sv);
    sup = std::fmax(sup, std::fabs(curve.R[j + 1] - predicted));
  }
  return sup;
}

}  // namespace dpgd
