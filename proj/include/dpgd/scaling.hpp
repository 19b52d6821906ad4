#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "dpgd/common.hpp"
#include "dpgd/ode.hpp"
#include "dpgd/spectrum.hpp"

namespace dpgd {

/// One scaling-law setting: power-law spectrum phi, alignment psi,
/// polynomial schedule degree alpha and privacy scaling rho = gamma^b.
struct ScalingCase {
  double phi = 0;
  double psi = 0;
  double alpha = 0;
  double b = 0;

  double K() const { return (2.0 - phi - psi) * (alpha + 1.0); }

  void validate() const {
    if (!(phi < 1)) throw config_error("scaling case: require phi < 1");
    if (!(psi < 1 - phi)) throw config_error("scaling case: require psi < 1 - phi");
    if (!(b < 1)) throw config_error("scaling case: out of theory, require b < 1");
    if (!(alpha >= 0)) throw config_error("scaling case: require alpha >= 0");
    bool theory_alpha = alpha == 0 || alpha == 0.5 || alpha >= 1;
    if (!theory_alpha)
      throw config_error(
          "scaling case: out of theory, alpha must lie in {0, 1/2} or [1, inf)");
  }
};

/// Predicted optimal tuning gamma-exponents: c eta~(0) = Theta(gamma^a) and
/// risk = Theta(gamma^h). When phi (alpha+1) = 2 the exponent carries a
/// gamma-dependent logarithmic correction, reported via h_effective.
struct ExponentPrediction {
  double a = 0;
  double h = 0;
  int branch = 0;  // 1..4, the four-way case split
  bool log_correction = false;

  double h_effective(double gamma) const {
    if (!log_correction) return h;
    double l = std::log(1.0 / gamma);
    return h - std::log(std::fabs(a) * l) / l;
  }

  /// Predicted log-risk up to an additive constant, for slope comparisons.
  double log_risk(double gamma) const {
    double lr = h * std::log(gamma);
    if (log_correction) lr += std::log(std::fabs(a) * std::log(1.0 / gamma));
    return lr;
  }
};

inline ExponentPrediction predicted_exponent(const ScalingCase& sc) {
  sc.validate();
  double K = sc.K();
  ExponentPrediction out;
  double pa = sc.phi * (sc.alpha + 1.0);
  if (pa < 2.0) {
    if (sc.b <= K / (2.0 * (K + 1.0))) {
      out.a = -(sc.alpha + 1.0) / (K + 1.0);
      out.h = K / (K + 1.0);
      out.branch = 1;
    } else {
      out.a = -2.0 * (1.0 - sc.b) * (sc.alpha + 1.0) / (K + 2.0);
      out.h = 2.0 * K * (1.0 - sc.b) / (K + 2.0);
      out.branch = 2;
    }
  } else {
    if (sc.b <= 1.0 - (2.0 - sc.psi) * (sc.alpha + 1.0) / (2.0 * (K + 1.0))) {
      out.a = -(sc.alpha + 1.0) / (K + 1.0);
      out.h = K / (K + 1.0);
      out.branch = 3;
    } else {
      out.a = -2.0 * (1.0 - sc.b) / (2.0 - sc.psi);
      out.h = 2.0 * (2.0 - sc.phi - sc.psi) * (1.0 - sc.b) / (2.0 - sc.psi);
      out.branch = 4;
      out.log_correction = pa == 2.0;
    }
  }
  return out;
}

/// Deterministic-equivalent problem minus the schedule scale eta~(0):
/// polynomial schedule family of fixed degree alpha.
struct OdeSetup {
  std::vector<double> lambda;
  std::vector<double> d0;
  double alpha = 0;
  double c = 0.1;
  double rho = 1;
  double gamma = 0.1;
  double zeta = 0.3;
  double dt = 1e-3;

  OdeProblem problem(double eta0) const {
    OdeProblem p;
    p.lambda = lambda;
    p.d0 = d0;
    p.schedule = alpha == 0 ? Schedule::constant(eta0) : Schedule::polynomial(alpha, eta0);
    p.c = c;
    p.rho = rho;
    p.gamma = gamma;
    p.zeta = zeta;
    return p;
  }
};

/// Private-output risk for one candidate; +inf when the fixed-step
/// integration rejects the candidate as unstable.
inline double final_risk_at(const OdeSetup& setup, double eta0) {
  try {
    return integrate(setup.problem(eta0), setup.dt).final_private_risk;
  } catch (const numerical_error&) {
    return std::numeric_limits<double>::infinity();
  }
}

struct OptimizeResult {
  double eta0_star = 0;
  double r_star = std::numeric_limits<double>::infinity();
};

/// Default search grid over eta~(0): 40 log-spaced points on [0.1, 2/gamma].
inline std::vector<double> default_eta0_grid(double gamma, std::size_t points = 40) {
  if (!(gamma > 0)) throw config_error("default_eta0_grid: require gamma > 0");
  double hi = 2.0 / gamma;
  double lo = std::fmin(0.1, hi);
  return log_space(lo, hi, points);
}

/// Grid minimum of a scalar objective followed by one golden-section
/// refinement (in log space) inside the bracket around the best point.
inline OptimizeResult minimize_over_grid(const std::function<double(double)>& objective,
                                         const std::vector<double>& candidates,
                                         bool refine = true) {
  if (candidates.empty()) throw config_error("minimize_over_grid: empty grid");
  std::vector<double> values(candidates.size());
  parallel_for(candidates.size(),
               [&](std::size_t i) { values[i] = objective(candidates[i]); });
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i)
    if (values[i] < values[best]) best = i;
  OptimizeResult out{candidates[best], values[best]};
  if (!std::isfinite(out.r_star))
    throw numerical_error("minimize_over_grid: every candidate diverged");

  if (refine && candidates.size() >= 2 && best > 0 && best + 1 < candidates.size()) {
    double lo = std::log(candidates[best - 1]);
    double hi = std::log(candidates[best + 1]);
    const double gr = 0.61803398874989484820458683437;
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = objective(std::exp(x1)), f2 = objective(std::exp(x2));
    for (int it = 0; it < 24; ++it) {
      if (f1 <= f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - gr * (hi - lo);
        f1 = objective(std::exp(x1));
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + gr * (hi - lo);
        f2 = objective(std::exp(x2));
      }
    }
    double xm = std::exp(0.5 * (lo + hi));
    double fm = objective(xm);
    if (fm < out.r_star) out = {xm, fm};
    if (f1 < out.r_star) out = {std::exp(x1), f1};
    if (f2 < out.r_star) out = {std::exp(x2), f2};
  }
  return out;
}

/// Minimizes the private-output risk over eta~(0) in (0, 2/gamma].
inline OptimizeResult optimize_eta0(const OdeSetup& setup,
                                    const std::vector<double>& candidates,
                                    bool refine = true) {
  for (double c : candidates)
    if (setup.gamma > 0 && c > 2.0 / setup.gamma * (1 + 1e-12))
      throw config_error("optimize_eta0: candidate exceeds 2/gamma");
  return minimize_over_grid([&](double e) { return final_risk_at(setup, e); },
                            candidates, refine);
}

inline OptimizeResult optimize_eta0(const OdeSetup& setup) {
  return optimize_eta0(setup, default_eta0_grid(setup.gamma));
}

struct SweepPoint {
  double gamma = 0;
  double rho = 0;
  double eta0_star = 0;
  double r_star = 0;
};

struct SweepResult {
  ScalingCase scase;
  std::vector<SweepPoint> points;
  double fitted_slope = 0;
  double predicted_h = 0;      // base exponent of the active branch
  double predicted_slope = 0;  // OLS slope of the predicted log-risk curve
  int branch = 0;
};

/// Fits ln R* against ln gamma for externally supplied optimized risks.
inline SweepResult fit_sweep(const ScalingCase& sc, std::vector<SweepPoint> points) {
  if (points.size() < 2) throw config_error("fit_sweep: need >= 2 points");
  SweepResult out;
  out.scase = sc;
  auto pred = predicted_exponent(sc);
  out.predicted_h = pred.h;
  out.branch = pred.branch;
  std::vector<double> lg(points.size()), lr(points.size()), lp(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!(points[i].r_star > 0))
      throw numerical_error("fit_sweep: non-positive optimized risk");
    lg[i] = std::log(points[i].gamma);
    lr[i] = std::log(points[i].r_star);
    lp[i] = pred.log_risk(points[i].gamma);
  }
  out.fitted_slope = fit_line(lg, lr).slope;
  out.predicted_slope = fit_line(lg, lp).slope;
  out.points = std::move(points);
  return out;
}

/// For each gamma in the grid: set rho = gamma^b, optimize eta~(0) on the
/// default grid, record the optimized private-output risk; then fit the
/// log-log slope. Sweep points run in parallel.
inline SweepResult gamma_sweep(const ScalingCase& sc, std::size_t d,
                               const std::vector<double>& gamma_grid, double c,
                               double zeta, double dt = 1e-3,
                               std::size_t grid_points = 40) {
  sc.validate();
  if (gamma_grid.size() < 2) throw config_error("gamma_sweep: need >= 2 gammas");
  auto lam = eigenvalues(SpectrumModel::power_law(d, sc.phi));
  auto energies = mode_energies(lam, TargetSpec::power_aligned(sc.psi), sc.phi);

  std::vector<SweepPoint> points(gamma_grid.size());
  parallel_for(gamma_grid.size(), [&](std::size_t i) {
    OdeSetup setup;
    setup.lambda = lam;
    setup.d0 = energies.d0;
    setup.alpha = sc.alpha;
    setup.c = c;
    setup.gamma = gamma_grid[i];
    setup.rho = std::pow(gamma_grid[i], sc.b);
    setup.zeta = zeta;
    setup.dt = dt;
    auto opt = optimize_eta0(setup, default_eta0_grid(setup.gamma, grid_points));
    points[i] = {setup.gamma, setup.rho, opt.eta0_star, opt.r_star};
  });
  return fit_sweep(sc, std::move(points));
}

/// Harmonic-schedule theory constants (beta, tau, c) from the proof of the
/// minimax upper bound; loose but admissible, exposed for comparison runs.
struct HarmonicTheoryDefaults {
  double beta = 0;
  double tau = 0;
  double c = 0;
};

inline HarmonicTheoryDefaults harmonic_theory_defaults(double lam_min, double lam_max,
                                                       double r0, double zeta,
                                                       double gamma, double rho) {
  if (!(lam_min > 0)) throw config_error("harmonic defaults: require lambda_min > 0");
  double a = r0 + 0.5 * zeta * zeta + 90.0;
  HarmonicTheoryDefaults out;
  out.beta = 3.0 * std::sqrt(a) / lam_min;
  out.tau = std::fmax(9.0 * a * lam_max / (lam_min * lam_min) * gamma,
                      12.0 * std::sqrt(2.0 * a) / lam_min * gamma / rho);
  out.c = 3.0 * std::sqrt(2.0 * a) / lam_min;
  return out;
}

struct HarmonicTuneResult {
  double beta_star = 0;
  double tau_star = 0;
  double r_star = std::numeric_limits<double>::infinity();
};

/// 2-D log-grid search over (beta, tau) minimizing the private-output risk
/// of the harmonic schedule, one local grid refinement around the best
/// cell, with the theory-default pair always included as a candidate.
inline HarmonicTuneResult tune_harmonic(const OdeSetup& setup,
                                        const std::vector<double>& betas,
                                        const std::vector<double>& taus,
                                        bool include_theory_defaults = true) {
  if (betas.empty() || taus.empty())
    throw config_error("tune_harmonic: empty search grid");
  for (double t : taus)
    if (!(t > 0)) throw config_error("tune_harmonic: tau grid must be positive");

  auto risk_of = [&](double beta, double tau) {
    try {
      OdeProblem p;
      p.lambda = setup.lambda;
      p.d0 = setup.d0;
      p.schedule = Schedule::harmonic(beta, tau);
      p.c = setup.c;
      p.rho = setup.rho;
      p.gamma = setup.gamma;
      p.zeta = setup.zeta;
      return integrate(p, setup.dt).final_private_risk;
    } catch (const numerical_error&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  HarmonicTuneResult best;
  auto scan = [&](const std::vector<double>& bs, const std::vector<double>& ts) {
    std::vector<double> values(bs.size() * ts.size());
    parallel_for(values.size(), [&](std::size_t idx) {
      values[idx] = risk_of(bs[idx / ts.size()], ts[idx % ts.size()]);
    });
    for (std::size_t idx = 0; idx < values.size(); ++idx) {
      if (values[idx] < best.r_star)
        best = {bs[idx / ts.size()], ts[idx % ts.size()], values[idx]};
    }
  };

  scan(betas, taus);
  if (!std::isfinite(best.r_star))
    throw numerical_error("tune_harmonic: every candidate diverged");

  if (betas.size() >= 2 && taus.size() >= 2) {
    auto bracket = [](const std::vector<double>& g, double star) {
      double lo = star, hi = star;
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (g[i] == star) {
          lo = g[i > 0 ? i - 1 : i];
          hi = g[i + 1 < g.size() ? i + 1 : i];
        }
      }
      return std::pair<double, double>{lo, hi};
    };
    auto [blo, bhi] = bracket(betas, best.beta_star);
    auto [tlo, thi] = bracket(taus, best.tau_star);
    scan(log_space(blo, bhi, 7), log_space(tlo, thi, 7));
  }

  if (include_theory_defaults && !setup.lambda.empty()) {
    auto td = harmonic_theory_defaults(setup.lambda.back(), setup.lambda.front(),
                                       initial_risk(setup.lambda, setup.d0),
                                       setup.zeta, setup.gamma, setup.rho);
    double v = risk_of(td.beta, td.tau);
    if (v < best.r_star) best = {td.beta, td.tau, v};
  }
  return best;
}

/// Default (beta, tau) grids centered on the harmonic heuristic
/// beta ~ 2/c and tau ~ max(gamma, gamma^2/rho^2).
inline std::pair<std::vector<double>, std::vector<double>> default_harmonic_grids(
    const OdeSetup& setup, std::size_t points = 10) {
  double beta_center = 2.0 / setup.c;
  double tau_center =
      std::fmax(setup.gamma, setup.gamma * setup.gamma / (setup.rho * setup.rho));
  tau_center = std::fmax(tau_center, 1e-8);
  return {log_space(beta_center / 30.0, beta_center * 30.0, points),
          log_space(tau_center / 30.0, tau_center * 1000.0, points)};
}

}  // namespace dpgd
