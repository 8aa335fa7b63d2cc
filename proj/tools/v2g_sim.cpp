// Scenario runner: v2g_sim --scenario run.yaml --out results/
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "v2g/scenario.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Run a V2G plug-and-charge scenario and write its reports"};
  std::string scenario_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  bool capture = false;
  bool quiet = false;
  app.add_option("--scenario", scenario_path, "Scenario YAML file")->required();
  app.add_option("--seed", seed, "Override the scenario seed");
  app.add_option("--out", out_dir, "Output directory for report.json, ledger.jsonl, capture.jsonl");
  app.add_flag("--capture", capture, "Write every channel frame to capture.jsonl");
  app.add_flag("--quiet", quiet, "Print nothing on success");
  CLI11_PARSE(app, argc, argv);

  using namespace v2g;
  sim::ScenarioConfig config;
  try {
    config = sim::load_scenario(scenario_path);
    if (seed) config.seed = *seed;
    if (capture) config.capture = true;
    config.validate();
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  }

  try {
    auto out = sim::run_scenario(config);
    sim::write_outputs(out, out_dir);
    if (!quiet || !out.expectations_met) {
      const auto& r = out.report;
      std::cout << "sessions: " << r["sessions"].size() << ", ledger blocks: " << r["ledger"]["blocks"]
                << ", transactions: " << r["ledger"]["transactions"]
                << ", disputes: " << r["ledger"]["disputes"] << '\n';
      for (const auto& a : r["attacks"]) {
        std::cout << (a["pass"].get<bool>() ? "pass  " : "FAIL  ") << a["scenario_kind"].get<std::string>()
                  << "/" << a["variant"].get<std::string>() << ": " << a["observed"].get<std::string>()
                  << '\n';
      }
      std::cout << (out.expectations_met ? "all expectations met" : "expectation failures") << " ("
                << r["wall_clock_ms"] << " ms)\n";
    }
    return out.expectations_met ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == Errc::ConfigInvalid || e.code() == Errc::IoFailure ? 1 : 2;
  }
}
