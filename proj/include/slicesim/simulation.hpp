#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <vector>

#include "slicesim/cn_slice.hpp"
#include "slicesim/offload.hpp"
#include "slicesim/phy_channels.hpp"
#include "slicesim/radio_grid.hpp"
#include "slicesim/ran_slice.hpp"
#include "slicesim/scenario.hpp"
#include "slicesim/sim_core.hpp"

namespace slicesim {

struct ServiceRecord {
  Micros time;
  NodeId ap;
  SliceNetId slice;
  std::int64_t bytes;
  SliceState state;
};

struct ActivationRecord {
  Micros time;
  NodeId ap;
  SliceNetId slice;
  std::set<Trigger> triggers;      // network-initiated
  std::optional<NodeId> device;    // device-initiated (accept_with_activation)
};

struct AccessRecord {
  Micros time;
  NodeId device;
  SliceNetId slice;
  NodeId ap;
  std::optional<RachRoute> route;  // empty when access skipped random access
  bool rach_success = true;
  std::optional<AdmissionDecision> decision;
};

struct CnRecord {
  Micros time;
  E2EFlowPath path;
  SliceKind origin;
  std::int64_t bytes;
};

struct PoolGrantRecord {
  Micros time;
  NodeId ap;
  std::size_t pool;
  std::int64_t capacity;
  std::map<SliceNetId, std::int64_t> demand;
  std::map<SliceNetId, double> weight;
  std::map<SliceNetId, std::int64_t> granted;
};

struct RachRecord {
  NodeId ap;
  bool common = false;
  RachOutcome outcome;
};

struct Trace {
  std::vector<ServiceRecord> service;
  std::vector<ActivationRecord> activations;
  std::vector<AccessRecord> access;
  std::vector<CnRecord> cn;
  std::vector<PoolGrantRecord> pool_grants;
  std::vector<RachRecord> rach;
  std::uint64_t subframes_checked = 0;
  std::uint64_t cells_checked = 0;
};

struct RunOptions {
  /// Check grant/assignment containment every subframe; a breach throws
  /// InvariantViolation naming the check.
  bool check_invariants = true;
  bool keep_trace = true;
};

/// Wires every module into one run of a validated scenario.
class Simulation {
 public:
  explicit Simulation(const Scenario& scenario, RunOptions options = {});
  ~Simulation();
  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  /// Runs to the scenario duration. Callable once.
  const MetricsBus& run();

  Engine& engine();
  const Trace& trace() const;
  const Scenario& scenario() const;

  SliceState slice_state(NodeId ap, SliceNetId slice) const;
  const SliceLifecycle& lifecycle(NodeId ap, SliceNetId slice) const;
  std::vector<std::pair<NodeId, SliceNetId>> lifecycle_keys() const;
  const ResourceGrid& grid(NodeId ap) const;
  const CnFabric& cn() const;
  const OffloadManager* offload() const;
  OffloadManager* offload();
  std::optional<NodeId> serving_ap(NodeId device, SliceNetId slice) const;
  bool admitted(NodeId device, SliceNetId slice) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Violations found by replaying the trace: pairing triples outside the
/// map, CN arrivals of horizontal flows, service outside Active, and
/// activations without a recorded cause. Empty when sound.
std::vector<std::string> audit_trace(const Simulation& sim);

}  // namespace slicesim
