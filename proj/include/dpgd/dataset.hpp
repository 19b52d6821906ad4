#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "dpgd/common.hpp"
#include "dpgd/rng.hpp"
#include "dpgd/schedule.hpp"

namespace dpgd {

/// Labeled rows for the real-data path.
struct Dataset {
  std::vector<std::vector<double>> x;  // row-major features
  std::vector<double> y;
};

struct DatasetRunConfig {
  Schedule schedule = Schedule::constant(1.0);
  double c = 1;
  double rho = 1;
  std::uint64_t seed = 1;
  std::size_t trials = 1;
  double train_frac = 0.6;
  double norm_frac = 0.2;  // validation gets the remainder

  void validate() const {
    if (!(c > 0) || !(rho > 0)) throw config_error("dataset run: require c, rho > 0");
    if (trials < 1) throw config_error("dataset run: require trials >= 1");
    if (!(train_frac > 0) || !(norm_frac > 0) || !(train_frac + norm_frac < 1))
      throw config_error("dataset run: split fractions must be positive and sum below 1");
  }
};

struct DatasetRunResult {
  std::vector<double> val_losses;  // validation P(theta^p) per trial
  std::vector<char> diverged;
  double mean_val_loss = 0;  // over non-diverged trials
  double std_val_loss = 0;
  double baseline_loss = 0;  // zero-model validation loss, last trial's split
  std::size_t n_train = 0;
  std::size_t d_used = 0;  // features kept after the zero-variance drop
  double gamma = 0;        // d_used / n_train, reported not chosen
  std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed,
                                                   std::uint64_t trial) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  RngStream rng(seed, trial, 0xfeed);
  for (std::size_t i = n; i > 1; --i) {
    auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
    if (j >= i) j = i - 1;
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

}  // namespace detail

/// Splits rows into train / normalization / validation by a seeded shuffle,
/// standardizes features and labels with normalization-subset statistics,
/// runs one pass of the private descent over the training subset and
/// reports the mean validation square loss / 2.
///
/// Zero-variance features on the normalization subset are dropped with a
/// warning; a zero-variance label passes through unscaled. Diverged trials
/// are flagged and excluded from the mean rather than silently removed.
inline DatasetRunResult run_on_dataset(const Dataset& data, const DatasetRunConfig& cfg) {
  cfg.validate();
  const std::size_t rows = data.x.size();
  if (rows != data.y.size() || rows == 0)
    throw config_error("dataset run: empty or inconsistent rows");
  const std::size_t d_raw = data.x.front().size();
  for (const auto& r : data.x)
    if (r.size() != d_raw) throw config_error("dataset run: ragged feature rows");

  auto n_train = static_cast<std::size_t>(cfg.train_frac * static_cast<double>(rows));
  auto n_norm = static_cast<std::size_t>(cfg.norm_frac * static_cast<double>(rows));
  std::size_t n_val = rows - n_train - n_norm;
  if (n_train < 1 || n_norm < 2 || n_val < 1)
    throw config_error("dataset run: too few rows for the requested split");

  DatasetRunResult out;
  out.val_losses.resize(cfg.trials);
  out.diverged.resize(cfg.trials, 0);
  out.n_train = n_train;

  bool warned_label = false, warned_feature = false;
  for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
    auto perm = detail::seeded_permutation(rows, cfg.seed, trial);
    auto row = [&](std::size_t k) -> const std::vector<double>& {
      return data.x[perm[k]];
    };
    auto label = [&](std::size_t k) { return data.y[perm[k]]; };

    // Normalization-subset statistics.
    std::vector<double> mu(d_raw, 0.0), sd(d_raw, 0.0);
    double mu_y = 0, sd_y = 0;
    for (std::size_t k = n_train; k < n_train + n_norm; ++k) {
      const auto& r = row(k);
      for (std::size_t i = 0; i < d_raw; ++i) mu[i] += r[i];
      mu_y += label(k);
    }
    double inv = 1.0 / static_cast<double>(n_norm);
    for (auto& v : mu) v *= inv;
    mu_y *= inv;
    for (std::size_t k = n_train; k < n_train + n_norm; ++k) {
      const auto& r = row(k);
      for (std::size_t i = 0; i < d_raw; ++i)
        sd[i] += (r[i] - mu[i]) * (r[i] - mu[i]);
      sd_y += (label(k) - mu_y) * (label(k) - mu_y);
    }
    for (auto& v : sd) v = std::sqrt(v * inv);
    sd_y = std::sqrt(sd_y * inv);

    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < d_raw; ++i) {
      if (sd[i] > 0)
        keep.push_back(i);
      else if (!warned_feature) {
        out.warnings.push_back("dropped zero-variance feature column " +
                               std::to_string(i));
        warned_feature = true;
      }
    }
    if (keep.empty()) throw config_error("dataset run: all features are constant");
    bool scale_labels = sd_y > 0;
    if (!scale_labels && !warned_label) {
      out.warnings.push_back("label variance is zero; labels passed unscaled");
      warned_label = true;
    }

    const std::size_t d = keep.size();
    out.d_used = d;
    const double c_clip = std::isinf(cfg.c)
                              ? std::numeric_limits<double>::infinity()
                              : cfg.c * std::sqrt(static_cast<double>(d));
    auto budget = discrete_noise_schedule(cfg.schedule, n_train, cfg.rho);

    std::vector<double> theta(d, 0.0), xk(d);
    auto standardize = [&](const std::vector<double>& r, std::vector<double>& dst) {
      for (std::size_t i = 0; i < d; ++i)
        dst[i] = (r[keep[i]] - mu[keep[i]]) / sd[keep[i]];
    };
    auto std_label = [&](double v) {
      return scale_labels ? (v - mu_y) / sd_y : v;
    };

    bool diverged = false;
    for (std::size_t k = 1; k <= n_train && !diverged; ++k) {
      standardize(row(k - 1), xk);
      double y = std_label(label(k - 1));
      double xt = 0, xnorm2 = 0;
      for (std::size_t i = 0; i < d; ++i) {
        xt += xk[i] * theta[i];
        xnorm2 += xk[i] * xk[i];
      }
      double resid = xt - y;
      double gnorm = std::sqrt(xnorm2) * std::fabs(resid);
      double clip_scale =
          (std::isinf(c_clip) || gnorm <= c_clip) ? 1.0 : c_clip / gnorm;
      double eta_bar = xnorm2 > 0 ? std::fmin(budget.eta[k - 1], 2.0 / xnorm2)
                                  : budget.eta[k - 1];
      double coeff = eta_bar * clip_scale * resid;
      double sigma_k = budget.sigma[k - 1];
      if (sigma_k > 0) {
        RngStream rng(cfg.seed, trial, k);
        double noise_scale = 2.0 * c_clip * sigma_k;
        for (std::size_t i = 0; i < d; ++i)
          theta[i] += noise_scale * rng.normal() - coeff * xk[i];
      } else {
        for (std::size_t i = 0; i < d; ++i) theta[i] -= coeff * xk[i];
      }
      if (!std::isfinite(xt)) diverged = true;
    }

    double loss = 0;
    if (!diverged) {
      for (std::size_t k = n_train + n_norm; k < rows; ++k) {
        standardize(row(k), xk);
        double y = std_label(label(k));
        double pred = 0;
        for (std::size_t i = 0; i < d; ++i) pred += xk[i] * theta[i];
        loss += (pred - y) * (pred - y);
      }
      loss *= 0.5 / static_cast<double>(n_val);
      if (!std::isfinite(loss)) diverged = true;
    }
    out.diverged[trial] = diverged ? 1 : 0;
    out.val_losses[trial] = diverged ? std::numeric_limits<double>::infinity() : loss;

    if (trial + 1 == cfg.trials) {
      double base = 0;
      for (std::size_t k = n_train + n_norm; k < rows; ++k) {
        double y = std_label(label(k));
        base += y * y;
      }
      out.baseline_loss = 0.5 * base / static_cast<double>(n_val);
    }
  }

  out.gamma = static_cast<double>(out.d_used) / static_cast<double>(n_train);
  std::vector<double> ok;
  for (std::size_t t = 0; t < cfg.trials; ++t)
    if (!out.diverged[t]) ok.push_back(out.val_losses[t]);
  if (!ok.empty()) {
    out.mean_val_loss = mean(ok);
    out.std_val_loss = sample_std(ok);
  } else {
    out.mean_val_loss = std::numeric_limits<double>::infinity();
  }
  return out;
}

}  // namespace dpgd
