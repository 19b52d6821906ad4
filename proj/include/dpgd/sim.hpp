#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "dpgd/common.hpp"
#include "dpgd/rng.hpp"
#include "dpgd/schedule.hpp"
#include "dpgd/spectrum.hpp"

namespace dpgd {

/// One synthetic experiment for the one-pass private gradient descent:
/// Gaussian data in the eigenbasis (x = sqrt(lambda) .* z), labels
/// y = x . theta* + zeta w, clipping at C_clip = c sqrt(d), adaptive rate
/// min(eta_k, 2/||x||^2) and Gaussian privacy noise 2 C_clip sigma_k b_k.
struct RunConfig {
  std::size_t n = 0;
  std::size_t d = 1;
  std::vector<double> lambda;
  std::vector<double> d0;  // initial mode energies; theta*_i = sqrt(2 D_i(0)/d)
  double zeta = 0;
  double c = 1;  // C_clip = c sqrt(d); +inf disables clipping
  double rho = 1;
  Schedule schedule = Schedule::constant(1.0);
  std::uint64_t seed = 1;
  std::size_t trials = 1;
  std::size_t record_grid = 200;
  bool halt_on_divergence = true;
  bool record_noise_norms = false;

  double gamma() const {
    return n == 0 ? 0.0 : static_cast<double>(d) / static_cast<double>(n);
  }

  void validate() const {
    if (d < 1 || trials < 1) throw config_error("sim: require d >= 1 and trials >= 1");
    if (lambda.size() != d || d0.size() != d)
      throw config_error("sim: spectrum size must equal d");
    if (!(c > 0) || !(rho > 0) || !(zeta >= 0))
      throw config_error("sim: require c > 0, rho > 0, zeta >= 0");
    if (record_grid < 2) throw config_error("sim: record_grid must be >= 2");
  }
};

struct TrajectoryStats {
  std::vector<double> record_times;          // grid of t values in [0, 1]
  std::vector<std::vector<double>> risks;    // [trial][grid point]
  std::vector<double> penultimate_risks;     // risk of theta_{n-1} per trial
  std::vector<double> final_risks;           // risk of theta_n per trial
  std::vector<char> diverged;                // per-trial flag
  std::vector<double> mean_risk;             // across trials, per grid point
  std::vector<double> std_risk;
  std::vector<std::vector<double>> noise_norms;  // per trial, steps with sigma_k > 0
};

namespace detail {

struct TrialOutput {
  std::vector<double> risks;
  double penultimate = 0;
  double final_risk = 0;
  bool diverged = false;
  std::size_t diverged_at = 0;
  std::vector<double> noise_norms;
};

inline TrialOutput run_trial(const RunConfig& cfg, const PrivacyBudget& budget,
                             const std::vector<double>& record_k,
                             std::uint64_t trial) {
  const std::size_t d = cfg.d;
  const double c_clip = std::isinf(cfg.c)
                            ? std::numeric_limits<double>::infinity()
                            : cfg.c * std::sqrt(static_cast<double>(d));
  std::vector<double> sqrt_lam(d), theta_star(d), theta(d, 0.0), x(d);
  for (std::size_t i = 0; i < d; ++i) {
    sqrt_lam[i] = std::sqrt(cfg.lambda[i]);
    theta_star[i] = std::sqrt(2.0 * cfg.d0[i] / static_cast<double>(d));
  }

  auto risk = [&]() {
    double s = 0;
    for (std::size_t i = 0; i < d; ++i) {
      double diff = theta[i] - theta_star[i];
      s += cfg.lambda[i] * diff * diff;
    }
    return 0.5 * s;
  };

  TrialOutput out;
  out.risks.resize(record_k.size());
  std::size_t rec = 0;
  auto record_through = [&](std::size_t k, double value) {
    while (rec < record_k.size() && record_k[rec] <= static_cast<double>(k)) {
      out.risks[rec] = value;
      ++rec;
    }
  };

  double r = risk();
  record_through(0, r);
  out.penultimate = r;
  out.final_risk = r;

  for (std::size_t k = 1; k <= cfg.n && !out.diverged; ++k) {
    RngStream rng(cfg.seed, trial, k);
    double xt = 0, xs = 0, xnorm2 = 0;
    for (std::size_t i = 0; i < d; ++i) {
      double xi = sqrt_lam[i] * rng.normal();
      x[i] = xi;
      xt += xi * theta[i];
      xs += xi * theta_star[i];
      xnorm2 += xi * xi;
    }
    double y = xs + cfg.zeta * rng.normal();
    double resid = xt - y;
    double gnorm = std::sqrt(xnorm2) * std::fabs(resid);
    double clip_scale = (std::isinf(c_clip) || gnorm <= c_clip) ? 1.0 : c_clip / gnorm;
    double eta_k = budget.eta[k - 1];
    double eta_bar = xnorm2 > 0 ? std::fmin(eta_k, 2.0 / xnorm2) : eta_k;
    double coeff = eta_bar * clip_scale * resid;
    double sigma_k = budget.sigma[k - 1];
    if (sigma_k > 0) {
      double noise_scale = 2.0 * c_clip * sigma_k;
      double nn = 0;
      for (std::size_t i = 0; i < d; ++i) {
        double b = rng.normal();
        theta[i] += noise_scale * b - coeff * x[i];
        nn += b * b;
      }
      if (cfg.record_noise_norms)
        out.noise_norms.push_back(noise_scale * std::sqrt(nn));
    } else {
      for (std::size_t i = 0; i < d; ++i) theta[i] -= coeff * x[i];
    }

    bool need_risk = k + 1 >= cfg.n ||
                     (rec < record_k.size() && record_k[rec] <= static_cast<double>(k));
    if (need_risk) {
      r = risk();
      if (!std::isfinite(r)) {
        out.diverged = true;
        out.diverged_at = k;
        r = std::numeric_limits<double>::infinity();
      }
      if (k + 1 == cfg.n) out.penultimate = r;
      if (k == cfg.n) out.final_risk = r;
      record_through(k, r);
    } else if (!std::isfinite(xt)) {
      out.diverged = true;
      out.diverged_at = k;
    }
  }
  if (out.diverged) {
    out.penultimate = std::numeric_limits<double>::infinity();
    out.final_risk = std::numeric_limits<double>::infinity();
  }
  while (rec < record_k.size()) out.risks[rec++] = out.diverged
                                                       ? std::numeric_limits<double>::infinity()
                                                       : out.final_risk;
  return out;
}

}  // namespace detail

/// Runs Algorithm 1 for cfg.trials independent trials with per-(trial, step)
/// counter substreams; bit-identical for a fixed config and seed regardless
/// of thread scheduling. Each sample is used exactly once (one pass).
inline TrajectoryStats run_dpgd(const RunConfig& cfg) {
  cfg.validate();
  PrivacyBudget budget;
  if (cfg.n > 0) {
    budget = discrete_noise_schedule(cfg.schedule, cfg.n, cfg.rho);
    if (std::isinf(cfg.c))
      for (double s : budget.sigma)
        if (s > 0)
          throw config_error("sim: infinite clipping level with private noise");
  }

  TrajectoryStats stats;
  std::size_t g = cfg.record_grid;
  stats.record_times.resize(g);
  std::vector<double> record_k(g);
  for (std::size_t j = 0; j < g; ++j) {
    double t = static_cast<double>(j) / static_cast<double>(g - 1);
    stats.record_times[j] = t;
    record_k[j] = std::floor(t * static_cast<double>(cfg.n));
  }

  stats.risks.resize(cfg.trials);
  stats.penultimate_risks.resize(cfg.trials);
  stats.final_risks.resize(cfg.trials);
  stats.diverged.resize(cfg.trials, 0);
  if (cfg.record_noise_norms) stats.noise_norms.resize(cfg.trials);

  std::vector<std::size_t> diverged_step(cfg.trials, 0);
  parallel_for(cfg.trials, [&](std::size_t trial) {
    auto out = detail::run_trial(cfg, budget, record_k, trial);
    stats.risks[trial] = std::move(out.risks);
    stats.penultimate_risks[trial] = out.penultimate;
    stats.final_risks[trial] = out.final_risk;
    stats.diverged[trial] = out.diverged ? 1 : 0;
    diverged_step[trial] = out.diverged_at;
    if (cfg.record_noise_norms) stats.noise_norms[trial] = std::move(out.noise_norms);
  });

  if (cfg.halt_on_divergence)
    for (std::size_t trial = 0; trial < cfg.trials; ++trial)
      if (stats.diverged[trial])
        throw numerical_error("sim: trial " + std::to_string(trial) +
                              " diverged at step " +
                              std::to_string(diverged_step[trial]));

  stats.mean_risk.resize(g);
  stats.std_risk.resize(g);
  std::vector<double> column(cfg.trials);
  for (std::size_t j = 0; j < g; ++j) {
    for (std::size_t trial = 0; trial < cfg.trials; ++trial)
      column[trial] = stats.risks[trial][j];
    stats.mean_risk[j] = mean(column);
    stats.std_risk[j] = sample_std(column);
  }
  return stats;
}

/// Mean last-step risk jump R(theta_n) - R(theta_{n-1}) across trials,
/// next to the predicted macroscopic jump 2 c^2 eta~^2(1) gamma^2 / rho^2.
/// Meaningful for single-spike noise schedules (constant profile).
struct LastStepJump {
  double empirical_mean = 0;
  double empirical_std = 0;
  double predicted = 0;
};

inline LastStepJump last_step_jump(const RunConfig& cfg) {
  if (cfg.n < 2) throw config_error("last_step_jump: require n >= 2");
  auto stats = run_dpgd(cfg);
  std::vector<double> jumps(cfg.trials);
  for (std::size_t i = 0; i < cfg.trials; ++i)
    jumps[i] = stats.final_risks[i] - stats.penultimate_risks[i];
  LastStepJump out;
  out.empirical_mean = mean(jumps);
  out.empirical_std = sample_std(jumps);
  double e1 = cfg.schedule.eta_tilde(1.0);
  double g = cfg.gamma();
  out.predicted = std::isinf(cfg.rho)
                      ? 0.0
                      : 2.0 * cfg.c * cfg.c * e1 * e1 * g * g / (cfg.rho * cfg.rho);
  if (e1 == 0) out.predicted = 0;
  return out;
}

}  // namespace dpgd
