#include <algorithm>
#include <cctype>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "slicesim/errors.hpp"
#include "slicesim/report.hpp"
#include "slicesim/scenario.hpp"

using namespace slicesim;

namespace {

int print_diagnostics(const std::vector<Diagnostic>& diags) {
  for (const auto& d : diags) std::cerr << d.location << ": " << d.message << "\n";
  return 1;
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_') ? c : '_';
  return out;
}

int run_one(const nlohmann::json& doc, const std::string& out_dir, bool audit) {
  auto loaded = load_scenario(doc);
  if (!loaded.ok()) return print_diagnostics(loaded.diagnostics);
  auto result = execute(*loaded.scenario, audit);
  write_outputs(result, out_dir);
  std::cout << report_text(result.report);
  if (audit) {
    if (!result.audit.empty()) {
      for (const auto& a : result.audit) std::cerr << "audit: " << a << "\n";
      return 2;
    }
    std::cout << "audit: ok\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic discrete-event simulator for sliced 5G networks"};
  app.require_subcommand(1);

  std::string file;
  auto* validate = app.add_subcommand("validate", "Check a scenario file and report diagnostics");
  validate->add_option("file", file, "Scenario file")->required();

  std::optional<std::uint64_t> seed;
  std::optional<double> duration_ms;
  std::string out_dir = "out";
  bool audit = false;
  auto* run = app.add_subcommand("run", "Run a scenario and write metrics.csv, report.txt and report.json");
  run->add_option("file", file, "Scenario file")->required();
  run->add_option("--seed", seed, "Override the master seed");
  run->add_option("--duration", duration_ms, "Override the duration in ms")->check(CLI::NonNegativeNumber);
  run->add_option("--out", out_dir, "Output directory");
  run->add_flag("--audit", audit, "Recompute the report from the CSV and audit the run trace");

  std::string param;
  std::string values;
  auto* sweep = app.add_subcommand("sweep", "Run once per value of one scenario parameter");
  sweep->add_option("file", file, "Scenario file")->required();
  sweep->add_option("--param", param, "Dotted parameter path, e.g. slices.0.rach.preambles")->required();
  sweep->add_option("--values", values, "Comma-separated values")->required();
  sweep->add_option("--seed", seed, "Override the master seed");
  sweep->add_option("--out", out_dir, "Output directory (one subdirectory per value)");
  sweep->add_flag("--audit", audit, "Self-audit every run");

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) {
      auto loaded = load_scenario_file(file);
      if (!loaded.ok()) return print_diagnostics(loaded.diagnostics);
      std::cout << "ok\n";
      return 0;
    }

    auto loaded = load_scenario_file(file);
    if (!loaded.ok()) return print_diagnostics(loaded.diagnostics);
    auto doc = read_json_file(file);
    if (seed) doc["master_seed"] = *seed;

    if (run->parsed()) {
      if (duration_ms) doc["duration_ms"] = *duration_ms;
      return run_one(doc, out_dir, audit);
    }

    std::vector<std::string> list;
    std::stringstream ss(values);
    for (std::string v; std::getline(ss, v, ',');) {
      if (!v.empty()) list.push_back(v);
    }
    // Fail on a bad path before any run starts.
    {
      auto probe = doc;
      set_parameter(probe, param, nullptr);
    }
    int status = 0;
    for (const auto& v : list) {
      auto variant = doc;
      set_parameter(variant, param, parse_sweep_value(v));
      const std::string dir = out_dir + "/" + sanitize(param + "=" + v);
      std::cout << "== " << param << " = " << v << " -> " << dir << "\n";
      status = std::max(status, run_one(variant, dir, audit));
    }
    return status;
  } catch (const std::exception& e) {
    std::cerr << "error: " << describe_exception(e) << "\n";
    return 1;
  }
}
