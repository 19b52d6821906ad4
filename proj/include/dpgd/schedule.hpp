#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "dpgd/common.hpp"

namespace dpgd {

/// Continuous learning-rate profile eta~(t) on [0,1], non-increasing.
///
/// Variants: constant, polynomial eta0*(1-t)^alpha, harmonic beta/(t+tau),
/// and tabulated values on a uniform t-grid. Table profiles interpolate
/// eta~^2 piecewise-linearly (not eta~) so the noise rate -d(eta~^2)/dt is
/// piecewise constant and non-negative by construction.
class Schedule {
 public:
  enum class Kind { constant, polynomial, harmonic, table };

  static Schedule constant(double eta0) {
    check_eta0(eta0);
    Schedule s;
    s.kind_ = Kind::constant;
    s.eta0_ = eta0;
    return s;
  }

  static Schedule polynomial(double alpha, double eta0) {
    check_eta0(eta0);
    if (alpha < 0) throw config_error("polynomial schedule: require alpha >= 0");
    Schedule s;
    s.kind_ = Kind::polynomial;
    s.eta0_ = eta0;
    s.alpha_ = alpha;
    return s;
  }

  static Schedule harmonic(double beta, double tau) {
    if (!(beta > 0) || !(tau > 0))
      throw config_error("harmonic schedule: require beta > 0 and tau > 0");
    Schedule s;
    s.kind_ = Kind::harmonic;
    s.beta_ = beta;
    s.tau_ = tau;
    s.eta0_ = beta / tau;
    return s;
  }

  static Schedule table(std::vector<double> values) {
    if (values.size() < 2)
      throw config_error("table schedule: need at least two grid values");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!(values[i] >= 0) || !std::isfinite(values[i]))
        throw config_error("table schedule: values must be finite and >= 0");
      if (i > 0 && values[i] > values[i - 1] + 1e-12 * values[i - 1])
        throw config_error("table schedule: profile must be non-increasing");
    }
    if (!(values.front() > 0))
      throw config_error("table schedule: eta~(0) must be positive");
    Schedule s;
    s.kind_ = Kind::table;
    s.eta0_ = values.front();
    s.eta_sq_.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
      s.eta_sq_[i] = values[i] * values[i];
    return s;
  }

  Kind kind() const { return kind_; }
  double eta0() const { return eta0_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  double tau() const { return tau_; }
  const std::vector<double>& table_eta_sq() const { return eta_sq_; }

  /// eta~(t).
  double eta_tilde(double t) const {
    check_t(t);
    switch (kind_) {
      case Kind::constant:
        return eta0_;
      case Kind::polynomial:
        return eta0_ * std::pow(1.0 - t, alpha_);
      case Kind::harmonic:
        return beta_ / (t + tau_);
      case Kind::table:
        return std::sqrt(eta_sq_interp(t));
    }
    return 0;
  }

  double eta_tilde_sq(double t) const {
    check_t(t);
    switch (kind_) {
      case Kind::constant:
        return eta0_ * eta0_;
      case Kind::polynomial:
        return eta0_ * eta0_ * std::pow(1.0 - t, 2.0 * alpha_);
      case Kind::harmonic:
        return beta_ * beta_ / ((t + tau_) * (t + tau_));
      case Kind::table:
        return eta_sq_interp(t);
    }
    return 0;
  }

  /// -d(eta~^2)/dt, i.e. rho^2 sigma~^2(t). Unbounded as t -> 1 for
  /// polynomial 0 < alpha < 1/2 (those profiles sit outside the bounded
  /// noise-rate class).
  double noise_rate(double t) const {
    check_t(t);
    switch (kind_) {
      case Kind::constant:
        return 0.0;
      case Kind::polynomial: {
        if (alpha_ == 0) return 0.0;
        double e = 2.0 * alpha_ - 1.0;
        if (t == 1.0 && e < 0) return std::numeric_limits<double>::infinity();
        return 2.0 * alpha_ * eta0_ * eta0_ * std::pow(1.0 - t, e);
      }
      case Kind::harmonic: {
        double u = t + tau_;
        return 2.0 * beta_ * beta_ / (u * u * u);
      }
      case Kind::table: {
        std::size_t m = eta_sq_.size();
        double pos = t * static_cast<double>(m - 1);
        std::size_t cell = std::min(static_cast<std::size_t>(pos), m - 2);
        return (eta_sq_[cell] - eta_sq_[cell + 1]) * static_cast<double>(m - 1);
      }
    }
    return 0;
  }

  /// True when eta~^2 has a bounded derivative on all of [0,1].
  bool bounded_noise_rate() const {
    return !(kind_ == Kind::polynomial && alpha_ > 0 && alpha_ < 0.5);
  }

  /// Earliest t in (0,1) with eta~(t) = level, or a negative value if the
  /// profile never crosses it. Used to place a grid node at the kink of
  /// min(eta~, 2/gamma).
  double crossing_time(double level) const {
    if (!(level > 0)) return -1;
    if (eta_tilde(0.0) <= level) return -1;
    switch (kind_) {
      case Kind::constant:
        return -1;
      case Kind::polynomial: {
        if (alpha_ == 0) return -1;
        double t = 1.0 - std::pow(level / eta0_, 1.0 / alpha_);
        return (t > 0 && t < 1) ? t : -1;
      }
      case Kind::harmonic: {
        double t = beta_ / level - tau_;
        return (t > 0 && t < 1) ? t : -1;
      }
      case Kind::table: {
        double target = level * level;
        std::size_t m = eta_sq_.size();
        for (std::size_t i = 0; i + 1 < m; ++i) {
          if (eta_sq_[i] > target && eta_sq_[i + 1] <= target) {
            double f = (eta_sq_[i] - target) / (eta_sq_[i] - eta_sq_[i + 1]);
            double t = (static_cast<double>(i) + f) / static_cast<double>(m - 1);
            return (t > 0 && t < 1) ? t : -1;
          }
        }
        return -1;
      }
    }
    return -1;
  }

 private:
  static void check_eta0(double eta0) {
    if (!(eta0 > 0) || !std::isfinite(eta0))
      throw config_error("schedule: require finite eta~(0) > 0");
  }
  static void check_t(double t) {
    if (!(t >= 0.0) || !(t <= 1.0))
      throw config_error("schedule: t outside [0, 1]");
  }
  double eta_sq_interp(double t) const {
    std::size_t m = eta_sq_.size();
    double pos = t * static_cast<double>(m - 1);
    std::size_t cell = std::min(static_cast<std::size_t>(pos), m - 2);
    double f = pos - static_cast<double>(cell);
    return eta_sq_[cell] + f * (eta_sq_[cell + 1] - eta_sq_[cell]);
  }

  Kind kind_ = Kind::constant;
  double eta0_ = 1;
  double alpha_ = 0;
  double beta_ = 0;
  double tau_ = 0;
  std::vector<double> eta_sq_;
};

/// Target zCDP parameter rho together with the per-step noise multipliers
/// sigma_k that realise it with the least total noise.
struct PrivacyBudget {
  double rho = 1;
  std::vector<double> eta;    // eta_k = eta~(k/n)/n, k = 1..n
  std::vector<double> sigma;  // noise multipliers sigma_k, k = 1..n
};

/// Discrete step sizes eta_k = eta~(k/n)/n for k = 1..n.
inline std::vector<double> discrete_steps(const Schedule& schedule, std::size_t n) {
  std::vector<double> eta(n);
  for (std::size_t k = 1; k <= n; ++k)
    eta[k - 1] = schedule.eta_tilde(static_cast<double>(k) / static_cast<double>(n)) /
                 static_cast<double>(n);
  return eta;
}

/// The minimal-noise schedule: rho^2 sigma_k^2 = eta_k^2 - eta_{k+1}^2 for
/// k < n and rho^2 sigma_n^2 = eta_n^2.
inline PrivacyBudget discrete_noise_schedule(const Schedule& schedule, std::size_t n,
                                             double rho) {
  if (n < 1) throw config_error("discrete_noise_schedule: require n >= 1");
  if (!(rho > 0)) throw config_error("discrete_noise_schedule: require rho > 0");
  PrivacyBudget b;
  b.rho = rho;
  b.eta = discrete_steps(schedule, n);
  b.sigma.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    // factored difference of squares: exact zero for equal steps and no
    // contraction asymmetry under fused multiply-add
    double sq = (k + 1 < n)
                    ? (b.eta[k] - b.eta[k + 1]) * (b.eta[k] + b.eta[k + 1])
                    : b.eta[k] * b.eta[k];
    if (sq < 0) {
      if (sq < -1e-12 * b.eta[k] * b.eta[k])
        throw config_error(
            "discrete_noise_schedule: increasing step sizes give negative "
            "noise variance");
      sq = 0;  // monotone profile, difference is rounding noise
    }
    b.sigma[k] = std::isinf(rho) ? 0.0 : std::sqrt(sq) / rho;
  }
  return b;
}

/// zCDP parameter of a run with steps eta and noise multipliers sigma:
/// rho = max_k eta_k / sqrt(sum_{j>=k} sigma_j^2). The run is (rho^2/2)-zCDP.
inline double accountant_rho(const std::vector<double>& eta,
                             const std::vector<double>& sigma) {
  if (eta.size() != sigma.size())
    throw config_error("accountant_rho: eta and sigma lengths differ");
  double rho = 0;
  double suffix = 0, comp = 0;  // Neumaier-compensated suffix sum
  for (std::size_t i = eta.size(); i-- > 0;) {
    double x = sigma[i] * sigma[i];
    double t = suffix + x;
    comp += std::fabs(suffix) >= std::fabs(x) ? (suffix - t) + x : (x - t) + suffix;
    suffix = t;
    double total = suffix + comp;
    if (eta[i] > 0) {
      if (!(total > 0))
        throw numerical_error(
            "accountant_rho: infinite privacy loss (no noise after a "
            "non-trivial step)");
      rho = std::fmax(rho, eta[i] / std::sqrt(total));
    }
  }
  return rho;
}

/// (rho^2/2)-zCDP implies (eps, delta)-DP with
/// eps = rho^2/2 + rho sqrt(2 ln(1/delta)).
inline double zcdp_to_approx_dp(double rho, double delta) {
  if (!(delta > 0) || !(delta < 1))
    throw config_error("zcdp_to_approx_dp: require delta in (0, 1)");
  if (!(rho >= 0)) throw config_error("zcdp_to_approx_dp: require rho >= 0");
  return 0.5 * rho * rho + rho * std::sqrt(2.0 * std::log(1.0 / delta));
}

}  // namespace dpgd
