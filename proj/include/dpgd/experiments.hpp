#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "dpgd/common.hpp"
#include "dpgd/dataset.hpp"
#include "dpgd/io.hpp"
#include "dpgd/ode.hpp"
#include "dpgd/scaling.hpp"
#include "dpgd/schedule.hpp"
#include "dpgd/sim.hpp"
#include "dpgd/spectrum.hpp"

namespace dpgd {

// ---------------------------------------------------------------------------
// Config (de)serialization
// ---------------------------------------------------------------------------

/// Writes <base>.csv with columns t, R, Gamma and a <base>.json sidecar
/// carrying the private-output risk and the config hash.
inline void write_risk_curve(const std::filesystem::path& base, const RiskCurve& curve,
                             const std::string& config_hash) {
  std::vector<std::vector<double>> rows(curve.grid.size());
  for (std::size_t j = 0; j < curve.grid.size(); ++j)
    rows[j] = {curve.grid[j], curve.R[j], curve.Gamma[j]};
  write_csv(base.string() + ".csv", {"t", "R", "Gamma"}, rows);
  write_json(base.string() + ".json",
             json{{"final_private_risk", curve.final_private_risk},
                  {"config_hash", config_hash}});
}

inline json schedule_to_json(const Schedule& s) {
  switch (s.kind()) {
    case Schedule::Kind::constant:
      return {{"variant", "constant"}, {"eta0", s.eta0()}};
    case Schedule::Kind::polynomial:
      return {{"variant", "polynomial"}, {"alpha", s.alpha()}, {"eta0", s.eta0()}};
    case Schedule::Kind::harmonic:
      return {{"variant", "harmonic"}, {"beta", s.beta()}, {"tau", s.tau()}};
    case Schedule::Kind::table: {
      std::vector<double> values;
      for (double v : s.table_eta_sq()) values.push_back(std::sqrt(v));
      return {{"variant", "table"}, {"values", values}};
    }
  }
  throw config_error("schedule_to_json: unknown variant");
}

inline Schedule schedule_from_json(const json& j) {
  if (!j.is_object() || !j.contains("variant"))
    throw config_error("schedule config: missing 'variant'");
  std::string v = j.at("variant").get<std::string>();
  try {
    if (v == "constant") return Schedule::constant(j.at("eta0").get<double>());
    if (v == "polynomial")
      return Schedule::polynomial(j.at("alpha").get<double>(),
                                  j.at("eta0").get<double>());
    if (v == "harmonic")
      return Schedule::harmonic(j.at("beta").get<double>(), j.at("tau").get<double>());
    if (v == "table")
      return Schedule::table(j.at("values").get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw config_error(std::string("schedule config: ") + e.what());
  }
  throw config_error("schedule config: unknown variant '" + v + "'");
}

inline SpectrumModel spectrum_from_json(const json& j, std::size_t d) {
  std::string v = j.is_string() ? j.get<std::string>()
                                : j.at("variant").get<std::string>();
  if (v == "identity") return SpectrumModel::identity(d);
  if (v == "uniform_0_2") return SpectrumModel::uniform(d);
  if (v == "power_law") return SpectrumModel::power_law(d, j.at("phi").get<double>());
  if (v == "explicit")
    return SpectrumModel::explicit_list(read_eigenvalue_csv(
        j.at("file").get<std::string>()));
  throw config_error("spectrum config: unknown variant '" + v + "'");
}

inline TargetSpec target_from_json(const json& j) {
  if (j.is_null()) return TargetSpec::isotropic(1.0);
  std::string mode = j.at("mode").get<std::string>();
  if (mode == "isotropic") return TargetSpec::isotropic(j.value("norm_sq", 1.0));
  if (mode == "power_aligned") return TargetSpec::power_aligned(j.at("psi").get<double>());
  throw config_error("target config: unknown mode '" + mode + "'");
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

inline json preset_config(const std::string& name) {
  if (name == "fig1" || name == "fig1-smoke") {
    json cfg{{"experiment", "ode-vs-sim"},
             {"d_values", {10, 100, 1000}},
             {"gamma", 0.1},
             {"rho", 1.0},
             {"zeta", 0.3},
             {"c", 1.0},
             {"eta0", 3.0},
             {"alphas", {0.0, 0.5}},
             {"spectra", {"identity", "uniform_0_2"}},
             {"trials", 10},
             {"record_grid", 200},
             {"dt", 1e-3},
             {"seed", 1},
             {"budget", 1e11}};
    if (name == "fig1-smoke") {
      cfg["d_values"] = {10};
      cfg["trials"] = 2;
      cfg["alphas"] = {0.0};
      cfg["spectra"] = {"identity"};
    }
    return cfg;
  }
  if (name == "fig6" || name == "fig6-smoke") {
    json cfg{{"experiment", "heatmap"},
             {"d", 100},
             {"rho", 0.1},
             {"zeta", 0.3},
             {"gammas", {0.01, 0.001}},
             {"alphas", {0.0, 0.5}},
             {"c_grid", {{"lo", 1e-2}, {"hi", 10.0}, {"points", 15}}},
             {"eta0_grid", {{"lo", 0.1}, {"hi", 1000.0}, {"points", 15}}},
             {"trials", 10},
             {"cap", 1.0},
             {"target_norm_sq", 1.0},
             {"seed", 1},
             {"budget", 1e12}};
    if (name == "fig6-smoke") {
      cfg["d"] = 20;
      cfg["gammas"] = {0.05};
      cfg["alphas"] = {0.0};
      cfg["c_grid"] = {{"lo", 0.1}, {"hi", 1.0}, {"points", 2}};
      cfg["eta0_grid"] = {{"lo", 1.0}, {"hi", 10.0}, {"points", 2}};
      cfg["trials"] = 2;
    }
    return cfg;
  }
  if (name == "fig5" || name == "fig5-smoke") {
    json cfg{{"experiment", "schedules-compare"},
             {"d", 100},
             {"rho", 0.1},
             {"zeta", 0.3},
             {"c", 0.1},
             {"n_over_d", {1, 10, 100, 1000, 10000}},
             {"alphas", {0.0, 0.5, 1.0, 2.0}},
             {"spectrum", "identity"},
             {"target_norm_sq", 1.0},
             {"harmonic_points", 10},
             {"dt", 1e-3},
             {"seed", 1},
             {"budget", 1e11}};
    if (name == "fig5-smoke") {
      cfg["d"] = 20;
      cfg["n_over_d"] = {100};
      cfg["alphas"] = {0.0, 0.5};
      cfg["harmonic_points"] = 4;
      cfg["dt"] = 1e-2;
    }
    return cfg;
  }
  if (name == "fig3" || name == "fig3-smoke") {
    json cfg{{"experiment", "scaling-law"},
             {"d", 100000},
             {"c", 0.1},
             {"zeta", 0.3},
             {"cases",
              {{{"phi", 0.0}, {"psi", 0.0}, {"alpha", 0.0}, {"b", 0.0}},
               {{"phi", 0.0}, {"psi", 0.0}, {"alpha", 0.0}, {"b", 0.5}},
               {{"phi", 0.25}, {"psi", 0.5}, {"alpha", 0.0}, {"b", 0.0}},
               {{"phi", 0.25}, {"psi", 0.5}, {"alpha", 0.0}, {"b", 0.5}}}},
             {"gamma_grid",
              {{"lo", 3.1622776601683794e-4}, {"hi", 3.1622776601683794e-2}, {"points", 7}}},
             {"eta0_points", 40},
             {"dt", 1e-3},
             {"seed", 1},
             {"budget", 1e13}};
    if (name == "fig3-smoke") {
      cfg["d"] = 500;
      cfg["cases"] = {{{"phi", 0.0}, {"psi", 0.0}, {"alpha", 0.0}, {"b", 0.0}}};
      cfg["gamma_grid"] = {{"lo", 1e-3}, {"hi", 1e-1}, {"points", 4}};
      cfg["eta0_points"] = 12;
      cfg["dt"] = 1e-2;
    }
    return cfg;
  }
  if (name == "fig4") {
    return json{{"experiment", "scaling-law"},
                {"d", 10000},
                {"c", 0.1},
                {"zeta", 0.3},
                {"cases",
                 {{{"phi", 0.8}, {"psi", 0.0}, {"alpha", 1.0}, {"b", 0.5}, {"flag_only", true}},
                  {{"phi", 0.8}, {"psi", 0.0}, {"alpha", 2.0}, {"b", 0.5}, {"flag_only", true}},
                  {{"phi", 0.8}, {"psi", 0.0}, {"alpha", 10.0}, {"b", 0.5}}}},
                {"gamma_grid",
                 {{"lo", 3.1622776601683794e-4}, {"hi", 3.1622776601683794e-2}, {"points", 7}}},
                {"eta0_points", 40},
                {"dt", 1e-3},
                {"seed", 1},
                {"budget", 1e13}};
  }
  if (name == "privacy-default") {
    return json{{"experiment", "privacy-report"},
                {"schedule", {{"variant", "constant"}, {"eta0", 3.0}}},
                {"n", 100},
                {"rho", 1.0},
                {"deltas", {1e-5, 1e-6, 1e-8}},
                {"seed", 1},
                {"budget", 1e9}};
  }
  throw config_error("unknown preset '" + name + "'");
}

inline std::vector<std::string> preset_names() {
  return {"fig1", "fig1-smoke", "fig3",       "fig3-smoke",     "fig4",
          "fig5", "fig5-smoke", "fig6",       "fig6-smoke",     "privacy-default"};
}

// ---------------------------------------------------------------------------
// Budget guard
// ---------------------------------------------------------------------------

namespace detail {

inline double sim_cost(double trials, double n, double d) { return trials * n * d * 8; }
inline double ode_cost(double dt, double d) { return (1.0 / dt) * d * 20; }

inline double estimate_cost(const json& cfg) {
  std::string kind = cfg.at("experiment").get<std::string>();
  if (kind == "ode-vs-sim") {
    double cost = 0;
    double panels = cfg.at("alphas").size() * cfg.at("spectra").size();
    for (double d : cfg.at("d_values").get<std::vector<double>>()) {
      double n = d / cfg.at("gamma").get<double>();
      cost += panels * (sim_cost(cfg.at("trials").get<double>(), n, d) +
                        ode_cost(cfg.at("dt").get<double>(), d));
    }
    return cost;
  }
  if (kind == "heatmap") {
    double d = cfg.at("d").get<double>();
    double cells = cfg.at("c_grid").at("points").get<double>() *
                   cfg.at("eta0_grid").at("points").get<double>();
    double cost = 0;
    for (double g : cfg.at("gammas").get<std::vector<double>>())
      cost += cfg.at("alphas").size() * cells *
              sim_cost(cfg.at("trials").get<double>(), d / g, d);
    return cost;
  }
  if (kind == "schedules-compare") {
    double d = cfg.at("d").get<double>();
    double evals = cfg.at("alphas").size() * 70.0 +
                   2.2 * std::pow(cfg.at("harmonic_points").get<double>(), 2);
    return cfg.at("n_over_d").size() * evals * ode_cost(cfg.at("dt").get<double>(), d);
  }
  if (kind == "scaling-law") {
    double d = cfg.at("d").get<double>();
    double per_gamma = cfg.at("eta0_points").get<double>() + 30.0;
    return cfg.at("cases").size() * cfg.at("gamma_grid").at("points").get<double>() *
           per_gamma * ode_cost(cfg.at("dt").get<double>(), d);
  }
  if (kind == "privacy-report") return cfg.at("n").get<double>() * 8;
  if (kind == "real-data") return 1e6;  // bounded by the file itself
  throw config_error("unknown experiment kind '" + kind + "'");
}

inline void check_budget(const json& cfg, bool force) {
  if (force) return;
  double budget = cfg.value("budget", 1e9);
  double estimate = estimate_cost(cfg);
  if (estimate > budget)
    throw config_error(
        "estimated cost " + format_double(estimate) + " scalar ops exceeds the budget " +
        format_double(budget) + "; rerun with --force or raise 'budget'");
}

inline std::filesystem::path prepare_out_dir(const json& cfg) {
  std::string out = cfg.value("out", std::string("runs/") +
                                         cfg.at("experiment").get<std::string>());
  std::filesystem::path dir(out);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double interp_at(const std::vector<double>& xs, const std::vector<double>& ys,
                        double x) {
  auto it = std::lower_bound(xs.begin(), xs.end(), x);
  if (it == xs.begin()) return ys.front();
  if (it == xs.end()) return ys.back();
  std::size_t j = static_cast<std::size_t>(it - xs.begin());
  double f = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
  return ys[j - 1] + f * (ys[j] - ys[j - 1]);
}

inline std::string num_tag(double v) {
  std::string s = format_double(v);
  for (auto& ch : s)
    if (ch == '.' || ch == '-' || ch == '+') ch = '_';
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Runners
// ---------------------------------------------------------------------------

/// Figure-1 style overlay: simulated trajectories at several d against the
/// deterministic-equivalent curve, same gamma throughout.
inline json run_ode_vs_sim(const json& cfg, bool force = false) {
  detail::check_budget(cfg, force);
  auto dir = detail::prepare_out_dir(cfg);
  double gamma = cfg.at("gamma").get<double>();
  double rho = cfg.at("rho").get<double>();
  double zeta = cfg.at("zeta").get<double>();
  double c = cfg.at("c").get<double>();
  double eta0 = cfg.at("eta0").get<double>();
  double dt = cfg.value("dt", 1e-3);
  auto d_values = cfg.at("d_values").get<std::vector<std::size_t>>();
  auto trials = cfg.at("trials").get<std::size_t>();
  auto record_grid = cfg.value("record_grid", std::size_t{200});
  auto seed = cfg.value("seed", std::uint64_t{1});

  json cfg_out = cfg;
  cfg_out["hash"] = config_hash(cfg);
  write_json(dir / "config.json", cfg_out);

  json summary{{"hash", cfg_out["hash"]}, {"panels", json::array()}};
  for (const auto& spectrum_name : cfg.at("spectra")) {
    for (double alpha : cfg.at("alphas").get<std::vector<double>>()) {
      Schedule sched = alpha == 0 ? Schedule::constant(eta0)
                                  : Schedule::polynomial(alpha, eta0);
      json panel{{"spectrum", spectrum_name},
                 {"alpha", alpha},
                 {"sup_deviation", json::array()},
                 {"d_values", d_values}};

      std::vector<std::string> header{"t"};
      std::vector<std::vector<double>> columns;  // column-major collect
      std::vector<double> times;

      for (std::size_t di = 0; di < d_values.size(); ++di) {
        std::size_t d = d_values[di];
        auto model = spectrum_from_json(spectrum_name, d);
        auto lam = eigenvalues(model);
        auto energies = mode_energies(lam, TargetSpec::isotropic(1.0));

        OdeProblem prob;
        prob.lambda = lam;
        prob.d0 = energies.d0;
        prob.schedule = sched;
        prob.c = c;
        prob.rho = rho;
        prob.gamma = gamma;
        prob.zeta = zeta;
        auto curve = integrate(prob, dt);

        RunConfig rc;
        rc.n = static_cast<std::size_t>(std::llround(static_cast<double>(d) / gamma));
        rc.d = d;
        rc.lambda = lam;
        rc.d0 = energies.d0;
        rc.zeta = zeta;
        rc.c = c;
        rc.rho = rho;
        rc.schedule = sched;
        rc.seed = seed;
        rc.trials = trials;
        rc.record_grid = record_grid;
        auto stats = run_dpgd(rc);

        if (times.empty()) times = stats.record_times;
        std::vector<double> ode_at(times.size());
        for (std::size_t j = 0; j < times.size(); ++j)
          ode_at[j] = detail::interp_at(curve.grid, curve.R, times[j]);

        // Mean over trials of the per-trial sup deviation on t < 1.
        std::vector<double> sups(trials);
        for (std::size_t trial = 0; trial < trials; ++trial) {
          double s = 0;
          for (std::size_t j = 0; j < times.size(); ++j)
            if (times[j] < 1.0)
              s = std::fmax(s, std::fabs(stats.risks[trial][j] - ode_at[j]));
          sups[trial] = s;
        }
        panel["sup_deviation"].push_back(mean(sups));
        panel["final_private_risk_ode"] = curve.final_private_risk;

        std::string tag = std::to_string(d);
        header.push_back("R_ode_d" + tag);
        header.push_back("mean_sim_d" + tag);
        header.push_back("std_sim_d" + tag);
        header.push_back("dev_d" + tag);
        columns.push_back(ode_at);
        columns.push_back(stats.mean_risk);
        columns.push_back(stats.std_risk);
        std::vector<double> dev(times.size());
        for (std::size_t j = 0; j < times.size(); ++j)
          dev[j] = std::fabs(stats.mean_risk[j] - ode_at[j]);
        columns.push_back(dev);
      }

      std::vector<std::vector<double>> rows(times.size());
      for (std::size_t j = 0; j < times.size(); ++j) {
        rows[j].push_back(times[j]);
        for (const auto& col : columns) rows[j].push_back(col[j]);
      }
      std::string fname = "curve_" + spectrum_name.get<std::string>() + "_alpha" +
                          detail::num_tag(alpha) + ".csv";
      write_csv(dir / fname, header, rows);
      panel["file"] = fname;
      summary["panels"].push_back(panel);

      // raw deterministic-equivalent curve at the largest d
      {
        std::size_t d = d_values.back();
        auto model = spectrum_from_json(spectrum_name, d);
        OdeProblem prob;
        prob.lambda = eigenvalues(model);
        prob.d0 = mode_energies(prob.lambda, TargetSpec::isotropic(1.0)).d0;
        prob.schedule = sched;
        prob.c = c;
        prob.rho = rho;
        prob.gamma = gamma;
        prob.zeta = zeta;
        write_risk_curve(dir / ("ode_" + spectrum_name.get<std::string>() + "_alpha" +
                                detail::num_tag(alpha)),
                         integrate(prob, dt), cfg_out["hash"].get<std::string>());
      }
    }
  }
  write_json(dir / "summary.json", summary);
  return summary;
}

/// Final private risk over a (c, eta~(0)) grid, paper-style capped matrix
/// plus raw argmin metadata and the reference curves.
inline json run_heatmap(const json& cfg, bool force = false) {
  detail::check_budget(cfg, force);
  auto dir = detail::prepare_out_dir(cfg);
  auto d = cfg.at("d").get<std::size_t>();
  double rho = cfg.at("rho").get<double>();
  double zeta = cfg.at("zeta").get<double>();
  double cap = cfg.value("cap", 1.0);
  auto trials = cfg.at("trials").get<std::size_t>();
  auto seed = cfg.value("seed", std::uint64_t{1});
  auto c_grid = log_space(cfg.at("c_grid").at("lo").get<double>(),
                          cfg.at("c_grid").at("hi").get<double>(),
                          cfg.at("c_grid").at("points").get<std::size_t>());
  auto eta_grid = log_space(cfg.at("eta0_grid").at("lo").get<double>(),
                            cfg.at("eta0_grid").at("hi").get<double>(),
                            cfg.at("eta0_grid").at("points").get<std::size_t>());

  auto model = SpectrumModel::identity(d);
  auto lam = eigenvalues(model);
  auto energies =
      mode_energies(lam, TargetSpec::isotropic(cfg.value("target_norm_sq", 1.0)));

  json cfg_out = cfg;
  cfg_out["hash"] = config_hash(cfg);
  write_json(dir / "config.json", cfg_out);
  json summary{{"hash", cfg_out["hash"]}, {"grids", json::array()}};

  for (double gamma : cfg.at("gammas").get<std::vector<double>>()) {
    for (double alpha : cfg.at("alphas").get<std::vector<double>>()) {
      auto n = static_cast<std::size_t>(std::llround(static_cast<double>(d) / gamma));
      auto risk_at = [&](double c, double eta0) {
        RunConfig rc;
        rc.n = n;
        rc.d = d;
        rc.lambda = lam;
        rc.d0 = energies.d0;
        rc.zeta = zeta;
        rc.c = c;
        rc.rho = rho;
        rc.schedule = alpha == 0 ? Schedule::constant(eta0)
                                 : Schedule::polynomial(alpha, eta0);
        rc.seed = seed;
        rc.trials = trials;
        rc.record_grid = 2;
        rc.halt_on_divergence = false;
        auto stats = run_dpgd(rc);
        return mean(stats.final_risks);
      };

      std::vector<double> raw(c_grid.size() * eta_grid.size());
      parallel_for(raw.size(), [&](std::size_t idx) {
        raw[idx] = risk_at(c_grid[idx / eta_grid.size()],
                           eta_grid[idx % eta_grid.size()]);
      });

      std::size_t best = 0;
      for (std::size_t idx = 1; idx < raw.size(); ++idx)
        if (raw[idx] < raw[best]) best = idx;
      double c_star = c_grid[best / eta_grid.size()];
      double eta_star = eta_grid[best % eta_grid.size()];
      double aggressive = risk_at(10.0 * c_star, eta_star);

      std::vector<std::string> header{"c"};
      for (double e : eta_grid) header.push_back("eta0_" + detail::num_tag(e));
      std::vector<std::vector<double>> rows;
      for (std::size_t i = 0; i < c_grid.size(); ++i) {
        std::vector<double> row{c_grid[i]};
        for (std::size_t j = 0; j < eta_grid.size(); ++j)
          row.push_back(std::fmin(raw[i * eta_grid.size() + j], cap));
        rows.push_back(std::move(row));
      }
      std::string fname = "heatmap_alpha" + detail::num_tag(alpha) + "_gamma" +
                          detail::num_tag(gamma) + ".csv";
      write_csv(dir / fname, header, rows);

      summary["grids"].push_back(
          {{"file", fname},
           {"gamma", gamma},
           {"alpha", alpha},
           {"argmin", {{"c", c_star}, {"eta0", eta_star}, {"risk", raw[best]}}},
           {"risk_at_10c_star", aggressive},
           {"reference_curves",
            {{"c", 1.0},
             {"eta0_cap", 2.0 / gamma},
             {"c_eta0_product", std::log(1.0 / gamma)}}}});
    }
  }
  write_json(dir / "summary.json", summary);
  return summary;
}

/// Polynomial schedules with optimized eta~(0) against the tuned harmonic
/// schedule across an n grid, deterministic-equivalent risks.
inline json run_schedules_compare(const json& cfg, bool force = false) {
  detail::check_budget(cfg, force);
  auto dir = detail::prepare_out_dir(cfg);
  auto d = cfg.at("d").get<std::size_t>();
  double rho = cfg.at("rho").get<double>();
  double zeta = cfg.at("zeta").get<double>();
  double c = cfg.at("c").get<double>();
  double dt = cfg.value("dt", 1e-3);
  auto alphas = cfg.at("alphas").get<std::vector<double>>();
  auto n_over_d = cfg.at("n_over_d").get<std::vector<double>>();
  auto harmonic_points = cfg.value("harmonic_points", std::size_t{10});

  auto model = spectrum_from_json(cfg.value("spectrum", json("identity")), d);
  auto lam = eigenvalues(model);
  auto energies =
      mode_energies(lam, TargetSpec::isotropic(cfg.value("target_norm_sq", 1.0)));

  json cfg_out = cfg;
  cfg_out["hash"] = config_hash(cfg);
  write_json(dir / "config.json", cfg_out);

  std::vector<std::string> header{"n", "gamma"};
  for (double a : alphas) header.push_back("risk_alpha" + detail::num_tag(a));
  header.push_back("risk_harmonic");
  for (double a : alphas) header.push_back("eta0_star_alpha" + detail::num_tag(a));
  header.push_back("beta_star");
  header.push_back("tau_star");

  std::vector<std::vector<double>> rows;
  json table = json::array();
  for (double nod : n_over_d) {
    double n = nod * static_cast<double>(d);
    double gamma = static_cast<double>(d) / n;
    OdeSetup setup;
    setup.lambda = lam;
    setup.d0 = energies.d0;
    setup.c = c;
    setup.rho = rho;
    setup.gamma = gamma;
    setup.zeta = zeta;
    setup.dt = dt;

    std::vector<double> row{n, gamma};
    std::vector<double> stars;
    json entry{{"n", n}, {"gamma", gamma}};
    for (double a : alphas) {
      setup.alpha = a;
      auto opt = optimize_eta0(setup);
      row.push_back(opt.r_star);
      stars.push_back(opt.eta0_star);
      entry["risk_alpha" + detail::num_tag(a)] = opt.r_star;
    }
    auto grids = default_harmonic_grids(setup, harmonic_points);
    auto harm = tune_harmonic(setup, grids.first, grids.second);
    row.push_back(harm.r_star);
    entry["risk_harmonic"] = harm.r_star;
    for (double s : stars) row.push_back(s);
    row.push_back(harm.beta_star);
    row.push_back(harm.tau_star);
    rows.push_back(std::move(row));
    table.push_back(entry);
  }
  write_csv(dir / "schedules.csv", header, rows);

  // Risk normalized by the alpha = 0 column, as in the paper's right panels.
  std::size_t base_idx = 0;
  for (std::size_t i = 0; i < alphas.size(); ++i)
    if (alphas[i] == 0.0) base_idx = i;
  std::vector<std::string> nh{"n"};
  for (double a : alphas) nh.push_back("rel_alpha" + detail::num_tag(a));
  nh.push_back("rel_harmonic");
  std::vector<std::vector<double>> nrows;
  for (const auto& row : rows) {
    std::vector<double> nr{row[0]};
    double base = row[2 + base_idx];
    for (std::size_t i = 0; i < alphas.size() + 1; ++i) nr.push_back(row[2 + i] / base);
    nrows.push_back(std::move(nr));
  }
  write_csv(dir / "schedules_normalized.csv", nh, nrows);

  json summary{{"hash", cfg_out["hash"]}, {"rows", table}};
  write_json(dir / "summary.json", summary);
  return summary;
}

/// Gamma sweeps with optimized eta~(0) for each scaling case; log-log slope
/// against the predicted exponent.
inline json run_scaling_law(const json& cfg, bool force = false) {
  detail::check_budget(cfg, force);
  auto dir = detail::prepare_out_dir(cfg);
  auto d = cfg.at("d").get<std::size_t>();
  double c = cfg.at("c").get<double>();
  double zeta = cfg.at("zeta").get<double>();
  double dt = cfg.value("dt", 1e-3);
  auto eta0_points = cfg.value("eta0_points", std::size_t{40});
  auto grid = log_space(cfg.at("gamma_grid").at("lo").get<double>(),
                        cfg.at("gamma_grid").at("hi").get<double>(),
                        cfg.at("gamma_grid").at("points").get<std::size_t>());

  json cfg_out = cfg;
  cfg_out["hash"] = config_hash(cfg);
  write_json(dir / "config.json", cfg_out);

  json slopes = json::array();
  std::size_t case_index = 0;
  for (const auto& jc : cfg.at("cases")) {
    ScalingCase sc;
    sc.phi = jc.at("phi").get<double>();
    sc.psi = jc.at("psi").get<double>();
    sc.alpha = jc.at("alpha").get<double>();
    sc.b = jc.at("b").get<double>();
    auto result = gamma_sweep(sc, d, grid, c, zeta, dt, eta0_points);

    std::vector<std::vector<double>> rows;
    for (const auto& p : result.points)
      rows.push_back({p.gamma, p.rho, p.eta0_star, p.r_star});
    std::string fname = "sweep_case" + std::to_string(case_index) + ".csv";
    write_csv(dir / fname, {"gamma", "rho", "eta0_star", "r_star"}, rows);

    slopes.push_back({{"file", fname},
                      {"phi", sc.phi},
                      {"psi", sc.psi},
                      {"alpha", sc.alpha},
                      {"b", sc.b},
                      {"branch", result.branch},
                      {"fitted_slope", result.fitted_slope},
                      {"predicted_h", result.predicted_h},
                      {"predicted_slope", result.predicted_slope},
                      {"abs_error", std::fabs(result.fitted_slope - result.predicted_slope)},
                      {"flag_only", jc.value("flag_only", false)}});
    ++case_index;
  }
  json summary{{"hash", cfg_out["hash"]}, {"slopes", slopes}};
  write_json(dir / "summary.json", summary);
  return summary;
}

/// Noise-multiplier table, accountant verification and (eps, delta) report.
inline json run_privacy_report(const json& cfg, bool force = false) {
  detail::check_budget(cfg, force);
  auto dir = detail::prepare_out_dir(cfg);
  auto schedule = schedule_from_json(cfg.at("schedule"));
  auto n = cfg.at("n").get<std::size_t>();
  double rho = cfg.at("rho").get<double>();

  auto budget = discrete_noise_schedule(schedule, n, rho);
  double verified = accountant_rho(budget.eta, budget.sigma);

  std::vector<std::vector<double>> rows;
  for (std::size_t k = 0; k < n; ++k)
    rows.push_back({static_cast<double>(k + 1), budget.eta[k], budget.sigma[k]});
  json cfg_out = cfg;
  cfg_out["hash"] = config_hash(cfg);
  write_json(dir / "config.json", cfg_out);
  write_csv(dir / "sigma.csv", {"k", "eta_k", "sigma_k"}, rows);

  json eps = json::array();
  for (double delta : cfg.at("deltas").get<std::vector<double>>())
    eps.push_back({{"delta", delta}, {"epsilon", zcdp_to_approx_dp(rho, delta)}});

  json summary{{"hash", cfg_out["hash"]},
               {"rho_target", rho},
               {"rho_verified", verified},
               {"rho_rel_error", std::fabs(verified - rho) / rho},
               {"epsilon", eps}};
  write_json(dir / "report.json", summary);
  write_json(dir / "summary.json", summary);
  return summary;
}

/// One-pass private regression on an ingested CSV dataset.
inline json run_real_data(const json& cfg, bool force = false) {
  detail::check_budget(cfg, force);
  auto dir = detail::prepare_out_dir(cfg);
  auto table = read_csv(cfg.at("csv").get<std::string>());
  std::string label = cfg.at("label_column").get<std::string>();
  auto it = std::find(table.header.begin(), table.header.end(), label);
  if (it == table.header.end())
    throw config_error("label column '" + label + "' not found in CSV header");
  std::size_t label_idx = static_cast<std::size_t>(it - table.header.begin());

  Dataset data;
  for (const auto& row : table.rows) {
    std::vector<double> x;
    for (std::size_t i = 0; i < row.size(); ++i)
      if (i != label_idx) x.push_back(row[i]);
    data.x.push_back(std::move(x));
    data.y.push_back(row[label_idx]);
  }

  DatasetRunConfig rc;
  rc.schedule = schedule_from_json(cfg.at("schedule"));
  rc.c = cfg.at("c").get<double>();
  rc.rho = cfg.at("rho").get<double>();
  rc.seed = cfg.value("seed", std::uint64_t{1});
  rc.trials = cfg.value("trials", std::size_t{5});
  if (cfg.contains("split")) {
    auto split = cfg.at("split").get<std::vector<double>>();
    if (split.size() != 3) throw config_error("split must have three fractions");
    rc.train_frac = split[0];
    rc.norm_frac = split[1];
  }
  auto result = run_on_dataset(data, rc);

  json cfg_out = cfg;
  cfg_out["hash"] = config_hash(cfg);
  write_json(dir / "config.json", cfg_out);

  std::vector<std::vector<double>> rows;
  for (std::size_t t = 0; t < result.val_losses.size(); ++t)
    rows.push_back({static_cast<double>(t), result.val_losses[t],
                    static_cast<double>(result.diverged[t])});
  write_csv(dir / "trials.csv", {"trial", "val_loss", "diverged"}, rows);

  json summary{{"hash", cfg_out["hash"]},
               {"mean", result.mean_val_loss},
               {"std", result.std_val_loss},
               {"final_private_risk", result.mean_val_loss},
               {"baseline_loss", result.baseline_loss},
               {"gamma", result.gamma},
               {"n_train", result.n_train},
               {"d_used", result.d_used},
               {"warnings", result.warnings}};
  write_json(dir / "summary.json", summary);
  return summary;
}

/// Dispatch on cfg["experiment"].
inline json run_experiment(const json& cfg, bool force = false) {
  std::string kind = cfg.at("experiment").get<std::string>();
  if (kind == "ode-vs-sim") return run_ode_vs_sim(cfg, force);
  if (kind == "heatmap") return run_heatmap(cfg, force);
  if (kind == "schedules-compare") return run_schedules_compare(cfg, force);
  if (kind == "scaling-law") return run_scaling_law(cfg, force);
  if (kind == "privacy-report") return run_privacy_report(cfg, force);
  if (kind == "real-data") return run_real_data(cfg, force);
  throw config_error("unknown experiment kind '" + kind + "'");
}

}  // namespace dpgd
