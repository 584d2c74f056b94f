#include "slicesim/report.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "slicesim/errors.hpp"

namespace slicesim {

namespace {

struct Accumulator {
  std::int64_t served = 0;
  std::vector<double> delays;
  std::int64_t blocked = 0;
  std::int64_t sessions = 0;
  std::vector<double> offload_latency;
};

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Nearest-rank percentile.
double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

}  // namespace

RunReport summarize(const std::string& scenario, std::uint64_t seed, Micros duration,
                    std::span<const SliceNetId> slices, std::span<const MetricRecord> records) {
  RunReport r;
  r.scenario = scenario;
  r.seed = seed;
  r.duration = duration;
  r.metric_records = records.size();
  std::map<SliceNetId, Accumulator> acc;
  for (auto s : slices) acc[s];
  for (const auto& m : records) {
    if (m.metric == "core_bytes") r.core_traffic_bytes += std::llround(m.value);
    else if (m.metric == "edge_bytes") r.edge_traffic_bytes += std::llround(m.value);
    if (!m.slice) continue;
    auto it = acc.find(*m.slice);
    if (it == acc.end()) continue;
    auto& a = it->second;
    if (m.metric == "served_bytes") a.served += std::llround(m.value);
    else if (m.metric == "access_delay_us") a.delays.push_back(m.value);
    else if (m.metric == "access_blocked") ++a.blocked;
    else if (m.metric == "offload_estimate_us") ++a.sessions;
    else if (m.metric == "offload_total_latency_us") a.offload_latency.push_back(m.value);
  }
  const double seconds = static_cast<double>(duration) / kMicrosPerSecond;
  for (const auto& [slice, a] : acc) {
    SliceSummary s;
    s.slice = slice;
    s.served_bytes = a.served;
    s.throughput_bps = seconds > 0 ? static_cast<double>(a.served) * 8.0 / seconds : 0.0;
    s.accesses = static_cast<std::int64_t>(a.delays.size());
    s.mean_access_delay_us = mean(a.delays);
    s.p95_access_delay_us = percentile(a.delays, 95.0);
    s.blocked_accesses = a.blocked;
    s.offload_sessions = a.sessions;
    s.offload_applied = static_cast<std::int64_t>(a.offload_latency.size());
    s.offload_success_rate =
        a.sessions > 0 ? static_cast<double>(s.offload_applied) / static_cast<double>(a.sessions) : 0.0;
    s.mean_offload_latency_us = mean(a.offload_latency);
    r.slices.push_back(s);
  }
  r.core_edge_ratio = r.edge_traffic_bytes > 0
                          ? static_cast<double>(r.core_traffic_bytes) / static_cast<double>(r.edge_traffic_bytes)
                          : 0.0;
  return r;
}

std::string report_text(const RunReport& r) {
  std::ostringstream os;
  os << "scenario: " << r.scenario << "\n"
     << "seed: " << r.seed << "\n"
     << "duration_ms: " << format_value(static_cast<double>(r.duration) / kMicrosPerMs) << "\n"
     << "wall_time_s: " << format_value(r.wall_time_s) << "\n"
     << "metric_records: " << r.metric_records << "\n"
     << "core_traffic_bytes: " << r.core_traffic_bytes << "\n"
     << "edge_traffic_bytes: " << r.edge_traffic_bytes << "\n"
     << "core_edge_ratio: " << format_value(r.core_edge_ratio) << "\n";
  for (const auto& s : r.slices) {
    os << "\nslice " << s.slice << "\n"
       << "  throughput_bps: " << format_value(s.throughput_bps) << "\n"
       << "  served_bytes: " << s.served_bytes << "\n"
       << "  accesses: " << s.accesses << "\n"
       << "  mean_access_delay_us: " << format_value(s.mean_access_delay_us) << "\n"
       << "  p95_access_delay_us: " << format_value(s.p95_access_delay_us) << "\n"
       << "  blocked_accesses: " << s.blocked_accesses << "\n";
    if (s.offload_sessions > 0) {
      os << "  offload_sessions: " << s.offload_sessions << "\n"
         << "  offload_success_rate: " << format_value(s.offload_success_rate) << "\n"
         << "  mean_offload_latency_us: " << format_value(s.mean_offload_latency_us) << "\n";
    }
  }
  return os.str();
}

nlohmann::json report_json(const RunReport& r) {
  nlohmann::json j;
  j["scenario"] = r.scenario;
  j["seed"] = r.seed;
  j["duration_ms"] = static_cast<double>(r.duration) / kMicrosPerMs;
  j["wall_time_s"] = r.wall_time_s;
  j["metric_records"] = r.metric_records;
  j["core_traffic_bytes"] = r.core_traffic_bytes;
  j["edge_traffic_bytes"] = r.edge_traffic_bytes;
  j["core_edge_ratio"] = r.core_edge_ratio;
  j["slices"] = nlohmann::json::array();
  for (const auto& s : r.slices) {
    j["slices"].push_back({{"slice", s.slice.value},
                           {"served_bytes", s.served_bytes},
                           {"throughput_bps", s.throughput_bps},
                           {"accesses", s.accesses},
                           {"mean_access_delay_us", s.mean_access_delay_us},
                           {"p95_access_delay_us", s.p95_access_delay_us},
                           {"blocked_accesses", s.blocked_accesses},
                           {"offload_sessions", s.offload_sessions},
                           {"offload_applied", s.offload_applied},
                           {"offload_success_rate", s.offload_success_rate},
                           {"mean_offload_latency_us", s.mean_offload_latency_us}});
  }
  return j;
}

std::vector<std::string> report_differences(const RunReport& a, const RunReport& b) {
  std::vector<std::string> out;
  auto check = [&](bool same, const std::string& what) {
    if (!same) out.push_back(what + " differs");
  };
  check(a.scenario == b.scenario, "scenario");
  check(a.seed == b.seed, "seed");
  check(a.duration == b.duration, "duration");
  check(a.metric_records == b.metric_records, "metric_records");
  check(a.core_traffic_bytes == b.core_traffic_bytes, "core_traffic_bytes");
  check(a.edge_traffic_bytes == b.edge_traffic_bytes, "edge_traffic_bytes");
  check(a.core_edge_ratio == b.core_edge_ratio, "core_edge_ratio");
  check(a.slices.size() == b.slices.size(), "slice count");
  for (std::size_t i = 0; i < std::min(a.slices.size(), b.slices.size()); ++i) {
    check(a.slices[i] == b.slices[i], "summary of slice " + std::to_string(a.slices[i].slice.value));
  }
  return out;
}

RunResult execute(const Scenario& scenario, bool audit) {
  const auto started = std::chrono::steady_clock::now();
  Simulation sim(scenario, RunOptions{true, audit});
  const auto& metrics = sim.run();
  const auto wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  std::vector<SliceNetId> ids;
  for (const auto& s : scenario.slices) ids.push_back(s.id);
  RunResult out;
  out.report = summarize(scenario.name, scenario.master_seed, scenario.duration, ids, metrics.records());
  out.report.wall_time_s = wall;
  out.csv = metrics.to_csv();
  if (audit) {
    std::istringstream in(out.csv);
    const auto parsed = parse_metrics_csv(in);
    const auto again = summarize(scenario.name, scenario.master_seed, scenario.duration, ids, parsed);
    for (auto& d : report_differences(out.report, again)) out.audit.push_back("report/CSV mismatch: " + d);
    for (auto& d : audit_trace(sim)) out.audit.push_back(std::move(d));
  }
  return out;
}

void write_outputs(const RunResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const char* name, const std::string& content) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw SimError("cannot write " + (dir / name).string());
    f << content;
  };
  write("metrics.csv", result.csv);
  write("report.txt", report_text(result.report));
  write("report.json", report_json(result.report).dump(2) + "\n");
}

}  // namespace slicesim
