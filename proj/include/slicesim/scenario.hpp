#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "slicesim/cn_slice.hpp"
#include "slicesim/mac_sched.hpp"
#include "slicesim/offload.hpp"
#include "slicesim/phy_channels.hpp"
#include "slicesim/radio_grid.hpp"
#include "slicesim/ran_slice.hpp"
#include "slicesim/types.hpp"

namespace slicesim {

struct NodeSpec {
  NodeId id;
  std::string name;
  std::string node_class;  // macro, small, portable, wearable, device, infra
  bool access_point = false;
  std::optional<GridSpec> grid;  // overrides the scenario grid at this AP
  std::optional<ComputeProfile> compute;
};

struct SliceResources {
  std::vector<std::pair<std::string, std::size_t>> blocks;  // segment -> blocks on every active phase
  std::optional<std::string> pool;
  double weight = 1.0;
};

struct SliceSpec {
  SliceNetId id;
  std::string name;
  SliceKind kind = SliceKind::vertical;
  std::string service;
  SliceResources resources;
  SchedPolicy policy = SchedPolicy::round_robin;
  double pf_window = 100.0;
  std::optional<RachConfig> rach;
  CuOption cu_option = CuOption::option1;
  RanSliceConfig ran;
  std::set<NodeId> active_at;
};

struct LinkSpec {
  NodeId device;
  NodeId ap;
  double quality = 0.0;
};

enum class ArrivalKind { periodic, poisson };

struct TrafficSpec {
  FlowId id;
  NodeId device;
  SliceNetId slice;
  Direction direction = Direction::uplink;
  ArrivalKind kind = ArrivalKind::periodic;
  Micros period = kMicrosPerMs;
  double rate_per_s = 0.0;
  std::int64_t bytes = 100;
  Micros start = 0;
  std::optional<Micros> stop;
  std::string service;
  QosProfile qos;
};

struct AccessSpec {
  NodeId device;
  SliceNetId slice;
  Micros at = 0;
  bool via_rach = true;
  bool request_activation = true;
  std::optional<NodeId> ap;
};

struct HandoverSpec {
  NodeId device;
  SliceNetId slice;
  NodeId to_ap;
  Micros at = 0;
};

struct DetachSpec {
  NodeId device;
  SliceNetId slice;
  Micros at = 0;
};

struct RachBurstSpec {
  SliceNetId slice;
  NodeId ap;
  int contenders = 0;
  Micros at = 0;
  std::uint32_t first_device = 100000;
  bool common = false;
};

struct TaskSpec {
  NodeId client;
  Micros at = 0;
  int repeat = 1;
  Micros interval = kMicrosPerSecond;
  SliceableTask task;
};

struct LinkEventSpec {
  NodeId client;
  Micros at = 0;
  bool up = false;
};

struct OffloadSpec {
  NodeId host;
  SliceNetId slice;
  std::vector<NodeId> clients;
  OffloadConfig config;
  std::vector<TaskSpec> tasks;
  std::vector<LinkEventSpec> link_events;
  std::optional<Micros> host_failure;
};

struct EdgeSpec {
  NodeId node;
  double local_fraction = 0.0;
  SliceNetId forward_slice;
  FlowId forward_flow;
  std::string service;
};

struct Scenario {
  std::string name;
  Micros duration = 0;
  std::uint64_t master_seed = 1;
  Micros subframe_us = 1000;
  Micros control_period = 10 * kMicrosPerMs;
  Micros balance_period = 100 * kMicrosPerMs;
  std::vector<Numerology> numerologies;
  GridSpec grid;
  RachConfig common_rach;
  double cplane_function_cost = 1.0;
  CuOption default_cu_option = CuOption::option1;
  std::vector<NodeSpec> nodes;
  std::vector<LinkSpec> links;
  std::vector<SliceSpec> slices;
  std::vector<TrafficSpec> traffic;
  std::vector<AccessSpec> access;
  std::vector<HandoverSpec> handovers;
  std::vector<DetachSpec> detaches;
  std::vector<RachBurstSpec> rach_bursts;
  std::vector<VirtualFunction> cn_functions;
  std::vector<CnSlice> cn_slices;
  PairingMap pairing;
  std::optional<OffloadSpec> offload;
  std::vector<EdgeSpec> edge;

  const NodeSpec* node(NodeId id) const;
  const SliceSpec* slice(SliceNetId id) const;
  const GridSpec& grid_at(NodeId ap) const;
  std::set<std::string> radio_slices() const;
};

/// Cells a slice asks for at an AP: its per-segment blocks on every active
/// phase. Throws UnknownSliceError for a segment the AP lacks.
CarveRequest carve_request(const ResourceGrid& grid, const SliceSpec& slice);

struct Diagnostic {
  std::string location;  // "line:col" for syntax errors, JSON pointer otherwise
  std::string message;
};

struct LoadResult {
  std::optional<Scenario> scenario;
  std::vector<Diagnostic> diagnostics;
  bool ok() const { return scenario.has_value() && diagnostics.empty(); }
};

/// Parses and fully validates a scenario document. Nothing is thrown for
/// bad input; every problem is reported as a diagnostic.
LoadResult load_scenario(const nlohmann::json& doc);
LoadResult load_scenario_text(const std::string& text);
LoadResult load_scenario_file(const std::string& path);

/// Loads and throws ScenarioError listing the diagnostics on failure.
Scenario load_scenario_or_throw(const nlohmann::json& doc);

nlohmann::json read_json_file(const std::string& path);

/// "slices.0.rach.preambles" -> "/slices/0/rach/preambles".
std::string to_json_pointer(const std::string& dotted);

/// Replaces the value at a dotted parameter path. Throws ScenarioError
/// naming the path when it does not exist.
void set_parameter(nlohmann::json& doc, const std::string& dotted_path, const nlohmann::json& value);

/// Parses a sweep value: JSON literal when possible, otherwise a string.
nlohmann::json parse_sweep_value(const std::string& text);

}  // namespace slicesim
