#include <cstdio>
#include <exception>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dpgd/experiments.hpp"

namespace {

dpgd::json build_config(const std::string& kind, const std::string& preset,
                        const std::string& config_path, const std::string& out,
                        long long seed, const std::vector<std::string>& overrides) {
  dpgd::json cfg;
  if (!preset.empty()) cfg = dpgd::preset_config(preset);
  if (!config_path.empty()) {
    dpgd::json file_cfg = dpgd::read_json(config_path);
    if (cfg.is_null() || cfg.empty())
      cfg = file_cfg;
    else
      cfg.update(file_cfg);
  }
  if (cfg.is_null() || !cfg.is_object())
    throw dpgd::config_error("no configuration: pass --preset or --config");
  if (!cfg.contains("experiment")) cfg["experiment"] = kind;
  if (cfg.at("experiment").get<std::string>() != kind)
    throw dpgd::config_error("config is for experiment '" +
                             cfg.at("experiment").get<std::string>() +
                             "', not '" + kind + "'");
  if (!out.empty()) cfg["out"] = out;
  if (seed >= 0) cfg["seed"] = seed;
  for (const auto& kv : overrides) {
    auto pos = kv.find('=');
    if (pos == std::string::npos)
      throw dpgd::config_error("--override expects key=value, got '" + kv + "'");
    std::string key = kv.substr(0, pos);
    std::string value = kv.substr(pos + 1);
    try {
      cfg[key] = dpgd::json::parse(value);
    } catch (const dpgd::json::exception&) {
      cfg[key] = value;
    }
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Private one-pass gradient descent: simulator, deterministic "
               "equivalent and experiment recipes"};
  app.require_subcommand(1);

  const std::vector<std::string> kinds{"ode-vs-sim",   "heatmap",
                                       "schedules-compare", "scaling-law",
                                       "privacy-report",    "real-data"};
  struct Shared {
    std::string preset, config, out;
    long long seed = -1;
    bool force = false;
    std::vector<std::string> overrides;
    std::string csv, label_column, split;
  };
  std::vector<Shared> shared(kinds.size());

  for (std::size_t i = 0; i < kinds.size(); ++i) {
    auto* sub = app.add_subcommand(kinds[i]);
    sub->add_option("--preset", shared[i].preset, "named preset configuration");
    sub->add_option("--config", shared[i].config, "JSON config file");
    sub->add_option("--out", shared[i].out, "output directory");
    sub->add_option("--seed", shared[i].seed, "master seed");
    sub->add_flag("--force", shared[i].force, "bypass the compute budget guard");
    sub->add_option("--override", shared[i].overrides,
                    "key=value config override (value parsed as JSON)");
    if (kinds[i] == "real-data") {
      sub->add_option("--csv", shared[i].csv, "dataset CSV (header row required)");
      sub->add_option("--label-column", shared[i].label_column,
                      "name of the target column");
      sub->add_option("--split", shared[i].split,
                      "train,normalization,validation fractions, e.g. 0.6,0.2,0.2");
    }
  }
  auto* list = app.add_subcommand("list-presets", "print available preset names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (list->parsed()) {
      for (const auto& name : dpgd::preset_names()) std::printf("%s\n", name.c_str());
      return 0;
    }
    for (std::size_t i = 0; i < kinds.size(); ++i) {
      auto* sub = app.get_subcommand(kinds[i]);
      if (!sub->parsed()) continue;
      auto cfg = build_config(kinds[i], shared[i].preset, shared[i].config,
                              shared[i].out, shared[i].seed, shared[i].overrides);
      if (!shared[i].csv.empty()) cfg["csv"] = shared[i].csv;
      if (!shared[i].label_column.empty()) cfg["label_column"] = shared[i].label_column;
      if (!shared[i].split.empty()) {
        std::vector<double> fracs;
        std::stringstream ss(shared[i].split);
        std::string part;
        while (std::getline(ss, part, ',')) fracs.push_back(std::stod(part));
        cfg["split"] = fracs;
      }
      auto summary = dpgd::run_experiment(cfg, shared[i].force);
      std::printf("wrote %s\n",
                  (cfg.value("out", std::string("runs/") + kinds[i]) + "/summary.json")
                      .c_str());
      return 0;
    }
  } catch (const dpgd::config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const dpgd::numerical_error& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
