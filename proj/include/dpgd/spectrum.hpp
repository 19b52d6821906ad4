#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "dpgd/common.hpp"

namespace dpgd {

/// Covariance eigenvalue model. All variants are normalised so that
/// sum(lambda) = d after construction (tr(Sigma) = d).
///
/// The power-law variant discretises p(lambda) = (1-phi) C^(phi-1)
/// lambda^(-phi) on (0, C), C = (2-phi)/(1-phi), by deterministic midpoint
/// quantiles lambda_i = C ((i-1/2)/d)^(1/(1-phi)); phi = 0 recovers the
/// uniform spectrum on (0, 2).
struct SpectrumModel {
  enum class Kind { identity, uniform_0_2, power_law, explicit_list };

  Kind kind = Kind::identity;
  std::size_t dimension = 1;
  double phi = 0;                       // power_law only, phi < 1
  std::vector<double> explicit_values;  // explicit_list only

  static SpectrumModel identity(std::size_t d) { return {Kind::identity, d, 0, {}}; }
  static SpectrumModel uniform(std::size_t d) { return {Kind::uniform_0_2, d, 0, {}}; }
  static SpectrumModel power_law(std::size_t d, double phi) {
    if (!(phi < 1)) throw config_error("power_law spectrum: require phi < 1");
    return {Kind::power_law, d, phi, {}};
  }
  static SpectrumModel explicit_list(std::vector<double> values) {
    if (values.empty()) throw config_error("explicit spectrum: empty list");
    SpectrumModel m{Kind::explicit_list, values.size(), 0, std::move(values)};
    for (double v : m.explicit_values)
      if (!(v > 0)) throw config_error("explicit spectrum: eigenvalues must be > 0");
    return m;
  }
};

/// Eigenvalues of the model, sorted descending, rescaled so they sum to d.
inline std::vector<double> eigenvalues(const SpectrumModel& model) {
  std::size_t d = model.dimension;
  if (d < 1) throw config_error("eigenvalues: require d >= 1");
  std::vector<double> lam(d);
  switch (model.kind) {
    case SpectrumModel::Kind::identity:
      std::fill(lam.begin(), lam.end(), 1.0);
      return lam;  // already sums to d
    case SpectrumModel::Kind::uniform_0_2:
      for (std::size_t i = 0; i < d; ++i)
        lam[i] = 2.0 * (static_cast<double>(d - i) - 0.5) / static_cast<double>(d);
      break;
    case SpectrumModel::Kind::power_law: {
      if (!(model.phi < 1)) throw config_error("eigenvalues: require phi < 1");
      double c_phi = (2.0 - model.phi) / (1.0 - model.phi);
      double inv = 1.0 / (1.0 - model.phi);
      for (std::size_t i = 0; i < d; ++i) {
        double q = (static_cast<double>(d - i) - 0.5) / static_cast<double>(d);
        lam[i] = c_phi * std::pow(q, inv);
      }
      break;
    }
    case SpectrumModel::Kind::explicit_list:
      lam = model.explicit_values;
      std::sort(lam.begin(), lam.end(), std::greater<double>());
      break;
  }
  double sum = std::accumulate(lam.begin(), lam.end(), 0.0);
  double scale = static_cast<double>(d) / sum;
  for (double& v : lam) v *= scale;
  return lam;
}

/// Target-vector description: either mode energies aligned with the
/// spectrum as lambda^(-psi), or an isotropic target of given squared norm.
struct TargetSpec {
  enum class Mode { power_aligned, isotropic };
  Mode mode = Mode::isotropic;
  double psi = 0;      // power_aligned
  double norm_sq = 1;  // isotropic: ||theta*||^2

  static TargetSpec power_aligned(double psi) { return {Mode::power_aligned, psi, 0}; }
  static TargetSpec isotropic(double norm_sq) {
    if (!(norm_sq > 0)) throw config_error("isotropic target: require ||theta*||^2 > 0");
    return {Mode::isotropic, 0, norm_sq};
  }
};

struct ModeEnergies {
  std::vector<double> d0;  // D_i(0) = d (omega_i . theta*)^2 / 2
  double psi = 0;
};

/// Initial mode energies for the given spectrum. For power_aligned targets
/// on a power-law spectrum the finiteness condition psi < 1 - phi applies.
inline ModeEnergies mode_energies(const std::vector<double>& lambda,
                                  const TargetSpec& target, double phi = 0) {
  ModeEnergies e;
  e.psi = target.mode == TargetSpec::Mode::power_aligned ? target.psi : 0;
  e.d0.resize(lambda.size());
  if (target.mode == TargetSpec::Mode::isotropic) {
    std::fill(e.d0.begin(), e.d0.end(), 0.5 * target.norm_sq);
    return e;
  }
  if (!(target.psi < 1.0 - phi))
    throw config_error("mode_energies: require psi < 1 - phi");
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    if (!(lambda[i] > 0)) throw config_error("mode_energies: eigenvalues must be > 0");
    e.d0[i] = std::pow(lambda[i], -target.psi);
  }
  return e;
}

/// Initial excess risk R(0) = (1/d) sum_i lambda_i D_i(0).
inline double initial_risk(const std::vector<double>& lambda,
                           const std::vector<double>& d0) {
  if (lambda.size() != d0.size() || lambda.empty())
    throw config_error("initial_risk: mismatched spectra");
  double s = 0;
  for (std::size_t i = 0; i < lambda.size(); ++i) s += lambda[i] * d0[i];
  return s / static_cast<double>(lambda.size());
}

/// The kernel triple of the implicit risk equation:
///   F(x) = (1/d) sum D_i(0) lambda_i e^(-2 lambda_i x)
///   K(x) = (1/d) sum lambda_i^2    e^(-2 lambda_i x)
///   J(x) = (1/d) sum lambda_i      e^(-2 lambda_i x)
struct KernelValues {
  double f = 0;
  double k = 0;
  double j = 0;
};

inline KernelValues kernels(const std::vector<double>& lambda,
                            const std::vector<double>& d0, double x) {
  if (!(x >= 0)) throw config_error("kernels: require x >= 0");
  if (lambda.size() != d0.size() || lambda.empty())
    throw config_error("kernels: mismatched spectra");
  KernelValues out;
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    double w = std::exp(-2.0 * lambda[i] * x);
    out.f += d0[i] * lambda[i] * w;
    out.k += lambda[i] * lambda[i] * w;
    out.j += lambda[i] * w;
  }
  double d = static_cast<double>(lambda.size());
  out.f /= d;
  out.k /= d;
  out.j /= d;
  return out;
}

}  // namespace dpgd
