#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "slicesim/scenario.hpp"
#include "slicesim/sim_core.hpp"
#include "slicesim/simulation.hpp"

namespace slicesim {

struct SliceSummary {
  SliceNetId slice;
  std::int64_t served_bytes = 0;
  double throughput_bps = 0.0;
  std::int64_t accesses = 0;
  double mean_access_delay_us = 0.0;
  double p95_access_delay_us = 0.0;
  std::int64_t blocked_accesses = 0;
  std::int64_t offload_sessions = 0;
  std::int64_t offload_applied = 0;
  double offload_success_rate = 0.0;
  double mean_offload_latency_us = 0.0;

  friend bool operator==(const SliceSummary&, const SliceSummary&) = default;
};

struct RunReport {
  std::string scenario;
  std::uint64_t seed = 0;
  double wall_time_s = 0.0;
  Micros duration = 0;
  std::size_t metric_records = 0;
  std::vector<SliceSummary> slices;
  std::int64_t core_traffic_bytes = 0;
  std::int64_t edge_traffic_bytes = 0;
  double core_edge_ratio = 0.0;
};

/// Every statistic is a function of the metric records alone, so the same
/// report can be rebuilt from the CSV file.
RunReport summarize(const std::string& scenario, std::uint64_t seed, Micros duration,
                    std::span<const SliceNetId> slices, std::span<const MetricRecord> records);

std::string report_text(const RunReport& r);
nlohmann::json report_json(const RunReport& r);

/// Differences between two reports, ignoring wall time.
std::vector<std::string> report_differences(const RunReport& a, const RunReport& b);

struct RunResult {
  RunReport report;
  std::string csv;
  std::vector<std::string> audit;  // empty when the self-audit passed or was not requested
};

/// Validated scenario in, report and CSV out. With `audit`, the report is
/// recomputed from the parsed CSV and compared, and the trace is audited.
RunResult execute(const Scenario& scenario, bool audit = false);

void write_outputs(const RunResult& result, const std::filesystem::path& dir);

}  // namespace slicesim
