#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dpgd/experiments.hpp"

namespace fs = std::filesystem;
using dpgd::json;

namespace {

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("dpgd_exp_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("schedule configs round-trip through JSON") {
  std::vector<dpgd::Schedule> battery{
      dpgd::Schedule::constant(3.0), dpgd::Schedule::polynomial(0.5, 2.0),
      dpgd::Schedule::harmonic(2.0, 0.5), dpgd::Schedule::table({2.0, 1.0, 0.25})};
  for (const auto& s : battery) {
    auto back = dpgd::schedule_from_json(dpgd::schedule_to_json(s));
    CHECK(back.kind() == s.kind());
    for (double t : {0.0, 0.33, 0.8, 1.0})
      CHECK(back.eta_tilde(t) == Catch::Approx(s.eta_tilde(t)).epsilon(1e-14));
  }
  CHECK_THROWS_AS(dpgd::schedule_from_json(dpgd::json{{"variant", "bogus"}}),
                  dpgd::config_error);
}

TEST_CASE("all presets named in the recipes parse") {
  for (const auto& name : dpgd::preset_names()) {
    auto cfg = dpgd::preset_config(name);
    CHECK(cfg.contains("experiment"));
    CHECK_NOTHROW(dpgd::detail::estimate_cost(cfg));
  }
  CHECK_THROWS_AS(dpgd::preset_config("nope"), dpgd::config_error);
}

TEST_CASE("ode-vs-sim smoke preset runs and reruns byte-identically") {
  auto dir = temp_dir("ovs");
  auto cfg = dpgd::preset_config("fig1-smoke");
  cfg["out"] = dir.string();
  auto summary = dpgd::run_experiment(cfg);

  REQUIRE(fs::exists(dir / "config.json"));
  REQUIRE(fs::exists(dir / "summary.json"));
  auto panel = summary.at("panels").at(0);
  std::string csv = slurp(dir / panel.at("file").get<std::string>());
  CHECK(csv.find("dev_d10") != std::string::npos);

  // deviation column is non-negative everywhere
  auto table = dpgd::read_csv(dir / panel.at("file").get<std::string>());
  std::size_t dev_col = table.header.size() - 1;
  for (const auto& row : table.rows) CHECK(row[dev_col] >= 0);

  // raw curve serialization: CSV plus sidecar with risk and config hash
  auto curve_csv = dpgd::read_csv(dir / "ode_identity_alpha0.csv");
  CHECK(curve_csv.header == std::vector<std::string>{"t", "R", "Gamma"});
  auto sidecar = dpgd::read_json(dir / "ode_identity_alpha0.json");
  CHECK(sidecar.at("config_hash").get<std::string>() ==
        summary.at("hash").get<std::string>());
  CHECK(sidecar.at("final_private_risk").get<double>() >= 0);

  // re-running the emitted config reproduces the bytes
  auto resolved = dpgd::read_json(dir / "config.json");
  auto dir2 = temp_dir("ovs2");
  resolved["out"] = dir2.string();
  dpgd::run_experiment(resolved);
  CHECK(slurp(dir / panel.at("file").get<std::string>()) ==
        slurp(dir2 / panel.at("file").get<std::string>()));
  CHECK(slurp(dir / "ode_identity_alpha0.csv") ==
        slurp(dir2 / "ode_identity_alpha0.csv"));
}

TEST_CASE("heatmap smoke grid") {
  auto dir = temp_dir("hm");
  auto cfg = dpgd::preset_config("fig6-smoke");
  cfg["out"] = dir.string();
  auto summary = dpgd::run_experiment(cfg);
  auto grid = summary.at("grids").at(0);
  auto table = dpgd::read_csv(dir / grid.at("file").get<std::string>());
  CHECK(table.rows.size() == 2);
  CHECK(table.rows[0].size() == 3);  // c column + 2 eta0 columns
  double cap = cfg.at("cap").get<double>();
  for (const auto& row : table.rows)
    for (std::size_t j = 1; j < row.size(); ++j) CHECK(row[j] <= cap);
  CHECK(grid.at("argmin").at("risk").get<double>() >= 0);
}

TEST_CASE("schedules-compare smoke emits normalized rows") {
  auto dir = temp_dir("sc");
  auto cfg = dpgd::preset_config("fig5-smoke");
  cfg["out"] = dir.string();
  auto summary = dpgd::run_experiment(cfg);
  CHECK(summary.at("rows").size() == 1);
  auto norm = dpgd::read_csv(dir / "schedules_normalized.csv");
  // alpha = 0 row normalizes to exactly 1
  CHECK(norm.rows[0][1] == 1.0);
  for (const auto& row : norm.rows)
    for (std::size_t j = 1; j < row.size(); ++j) CHECK(row[j] > 0);
}

TEST_CASE("scaling-law smoke wiring") {
  auto dir = temp_dir("sl");
  auto cfg = dpgd::preset_config("fig3-smoke");
  cfg["out"] = dir.string();
  auto summary = dpgd::run_experiment(cfg);
  auto slope = summary.at("slopes").at(0);
  CHECK(slope.at("predicted_h").get<double>() == Catch::Approx(2.0 / 3.0));
  CHECK(std::isfinite(slope.at("fitted_slope").get<double>()));
  auto table = dpgd::read_csv(dir / slope.at("file").get<std::string>());
  CHECK(table.rows.size() == 4);
  for (const auto& row : table.rows) {
    CHECK(row[3] > 0);                    // r_star
    CHECK(row[2] <= 2.0 / row[0] + 1e-9);  // eta0_star <= 2/gamma
  }
}

TEST_CASE("privacy report") {
  auto dir = temp_dir("pr");
  auto cfg = dpgd::preset_config("privacy-default");
  cfg["out"] = dir.string();
  auto summary = dpgd::run_experiment(cfg);
  CHECK(summary.at("rho_rel_error").get<double>() <= 1e-12);
  CHECK(summary.at("epsilon").at(0).at("delta").get<double>() == 1e-5);
  CHECK(summary.at("epsilon").at(0).at("epsilon").get<double>() ==
        Catch::Approx(5.2985).epsilon(1e-4));

  // constant schedule: single noise spike at the last step
  auto table = dpgd::read_csv(dir / "sigma.csv");
  for (std::size_t k = 0; k + 1 < table.rows.size(); ++k)
    CHECK(table.rows[k][2] == 0.0);
  CHECK(table.rows.back()[2] > 0.0);
}

TEST_CASE("real-data experiment on a constructed CSV") {
  auto dir = temp_dir("rd");
  auto csv_path = dir / "toy.csv";
  {
    std::ofstream out(csv_path);
    out << "x1,x2,target\n";
    dpgd::RngStream rng(3, 1, 1);
    for (int i = 0; i < 500; ++i) {
      double a = rng.normal(), b = rng.normal();
      out << a << "," << b << "," << (2.0 * a - b) << "\n";
    }
  }
  json cfg{{"experiment", "real-data"},
           {"csv", csv_path.string()},
           {"label_column", "target"},
           {"schedule", {{"variant", "polynomial"}, {"alpha", 0.5}, {"eta0", 1.0}}},
           {"c", 1.0},
           {"rho", 10.0},
           {"trials", 3},
           {"seed", 2},
           {"out", (dir / "out").string()}};
  auto summary = dpgd::run_experiment(cfg);
  CHECK(summary.at("mean").get<double>() < summary.at("baseline_loss").get<double>());
  CHECK(summary.at("n_train").get<std::size_t>() == 300);

  json bad = cfg;
  bad["label_column"] = "missing";
  CHECK_THROWS_AS(dpgd::run_experiment(bad), dpgd::config_error);
}

TEST_CASE("budget guard refuses oversized runs unless forced") {
  auto dir = temp_dir("bg");
  auto cfg = dpgd::preset_config("fig1-smoke");
  cfg["out"] = dir.string();
  cfg["budget"] = 10.0;  // absurdly small
  CHECK_THROWS_AS(dpgd::run_experiment(cfg, false), dpgd::config_error);
  CHECK_NOTHROW(dpgd::run_experiment(cfg, true));
}

TEST_CASE("CLI binary: exit codes and preset listing") {
  const char* cli = std::getenv("DPGD_CLI");
  REQUIRE(cli != nullptr);
  std::string base(cli);

  auto dir = temp_dir("cli");
  std::string cmd = base + " ode-vs-sim --preset fig1-smoke --out " +
                    (dir / "a").string() + " > /dev/null 2>&1";
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(dir / "a" / "summary.json"));

  // config error: unknown preset -> exit 2
  std::string bad = base + " ode-vs-sim --preset nope > /dev/null 2>&1";
  int rc = std::system(bad.c_str());
  CHECK(WEXITSTATUS(rc) == 2);

  // budget refusal -> exit 2; --force lets it run
  std::string big = base + " ode-vs-sim --preset fig1-smoke --override budget=10 --out " +
                    (dir / "b").string() + " > /dev/null 2>&1";
  rc = std::system(big.c_str());
  CHECK(WEXITSTATUS(rc) == 2);
  std::string forced = base +
                       " ode-vs-sim --preset fig1-smoke --override budget=10 --force --out " +
                       (dir / "c").string() + " > /dev/null 2>&1";
  CHECK(std::system(forced.c_str()) == 0);

  std::string list = base + " list-presets > /dev/null 2>&1";
  CHECK(std::system(list.c_str()) == 0);
}

TEST_CASE("CLI binary: real-data flags override the config") {
  const char* cli = std::getenv("DPGD_CLI");
  REQUIRE(cli != nullptr);
  auto dir = temp_dir("clird");
  auto csv_path = dir / "toy.csv";
  {
    std::ofstream out(csv_path);
    out << "a,b,y\n";
    dpgd::RngStream rng(4, 1, 1);
    for (int i = 0; i < 400; ++i) {
      double u = rng.normal(), v = rng.normal();
      out << u << "," << v << "," << (u + 3.0 * v) << "\n";
    }
  }
  dpgd::json cfg{{"experiment", "real-data"},
                 {"schedule", {{"variant", "polynomial"}, {"alpha", 0.5}, {"eta0", 1.0}}},
                 {"c", 1.0},
                 {"rho", 5.0},
                 {"trials", 2}};
  dpgd::write_json(dir / "cfg.json", cfg);
  std::string cmd = std::string(cli) + " real-data --config " +
                    (dir / "cfg.json").string() + " --csv " + csv_path.string() +
                    " --label-column y --split 0.5,0.25,0.25 --seed 3 --out " +
                    (dir / "out").string() + " > /dev/null 2>&1";
  REQUIRE(std::system(cmd.c_str()) == 0);
  auto summary = dpgd::read_json(dir / "out" / "summary.json");
  CHECK(summary.at("n_train").get<std::size_t>() == 200);
  CHECK(summary.at("mean").get<double>() <
        summary.at("baseline_loss").get<double>());
}
