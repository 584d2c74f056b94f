#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "slicesim/radio_grid.hpp"
#include "slicesim/types.hpp"

namespace slicesim {

struct QosProfile {
  double latency_budget_ms = 100.0;
  double min_rate_kbps = 0.0;
  int priority = 0;
};

struct Packet {
  std::int64_t size = 0;
  std::int64_t remaining = 0;
  Micros arrival = 0;
  std::uint64_t tag = 0;
};

/// A byte-counted FIFO of packets owned by exactly one slice.
struct TrafficFlow {
  FlowId id;
  NodeId device;
  SliceNetId slice;
  QosProfile qos;
  std::deque<Packet> queue;
  std::int64_t backlog = 0;
  /// Exponentially averaged served rate used by proportional fair.
  double avg_rate_kbps = 1.0;

  void push(std::int64_t bytes, Micros arrival, std::uint64_t tag = 0);
  bool backlogged() const { return backlog > 0; }
  Micros head_delay(Micros now) const { return queue.empty() ? 0 : now - queue.front().arrival; }
};

/// Real-valued weighted max-min (water-filling) split of `capacity` among
/// demands. Every share is capped at its demand.
std::vector<double> weighted_max_min(std::span<const double> demands, std::span<const double> weights,
                                     double capacity);

/// Integer version: floors the real split, then hands the leftover cells
/// one at a time by largest fractional part (ties to the lower index).
/// Each share is within one cell of the real solution.
std::vector<std::int64_t> weighted_max_min_cells(std::span<const std::int64_t> demands,
                                                 std::span<const double> weights,
                                                 std::int64_t capacity);

struct Level2Input {
  std::map<SliceNetId, std::int64_t> demands;  // cells
  std::map<SliceNetId, double> weights;        // default 1
  /// Slices drawing from a shared-pool segment instead of a carved subset.
  std::map<SliceNetId, std::size_t> pool_of;
};

struct Level2Allocation {
  std::int64_t subframe = 0;
  std::map<SliceNetId, std::vector<Cell>> grants;
  std::map<SliceNetId, std::int64_t> unsatisfied;
};

/// Inter-slice allocation for one subframe. Carved slices get the lowest
/// cells of their own subset active in this phase, up to demand. Pool
/// slices split the pool's cells of this phase by weighted max-min; cells
/// are handed out in ascending slice order. Throws UnknownSliceError for a
/// demand from a slice with neither a subset nor a pool.
Level2Allocation l2_allocate(std::int64_t subframe, const ResourceGrid& grid, const Level2Input& input);

/// Cells `slice` may be granted in this subframe's phase.
std::vector<Cell> slice_cells_in_phase(const ResourceGrid& grid, SliceNetId slice,
                                       std::optional<std::size_t> pool, int phase);

/// Cells needed to drain `bytes` walking `cells` in order.
std::int64_t cells_needed(const ResourceGrid& grid, std::span<const Cell> cells, std::int64_t bytes);

enum class SchedPolicy { round_robin, proportional_fair };

struct Level1Schedule {
  SliceNetId slice;
  std::int64_t subframe = 0;
  std::map<FlowId, std::vector<Cell>> assignments;
  std::map<FlowId, NodeId> devices;
  std::int64_t idle_cells = 0;

  std::map<NodeId, std::vector<Cell>> by_device() const;
};

/// Intra-slice scheduler state for one slice at one access point.
class IntraSliceScheduler {
 public:
  explicit IntraSliceScheduler(SchedPolicy policy = SchedPolicy::round_robin,
                               double pf_window_subframes = 100.0, Micros subframe_us = 1000)
      : policy_(policy), pf_window_(pf_window_subframes), subframe_us_(subframe_us) {}

  SchedPolicy policy() const { return policy_; }

  /// Distributes `grant` cell by cell among backlogged flows. A flow stops
  /// receiving cells once the bytes assigned cover its backlog; a cell is
  /// left idle only when no flow still needs bytes.
  Level1Schedule schedule(SliceNetId slice, std::int64_t subframe, std::span<const Cell> grant,
                          std::span<TrafficFlow* const> flows, const ResourceGrid& grid);

  /// Folds this subframe's served bytes into every flow's averaged rate.
  void update_averages(std::span<TrafficFlow* const> flows,
                       const std::map<FlowId, std::int64_t>& served) const;

  std::size_t rr_cursor() const { return rr_cursor_; }

 private:
  SchedPolicy policy_;
  double pf_window_;
  Micros subframe_us_;
  std::size_t rr_cursor_ = 0;
};

struct Delivery {
  FlowId flow;
  NodeId device;
  SliceNetId slice;
  Packet packet;
  Micros latency = 0;
};

struct ServeResult {
  std::map<FlowId, std::int64_t> bytes;
  std::vector<Delivery> deliveries;
  std::int64_t total_bytes = 0;
};

/// Drains each assigned flow by its cells' capacity. A packet completes at
/// `subframe_end`; its latency is measured from arrival to then.
ServeResult serve(const Level1Schedule& schedule, std::span<TrafficFlow* const> flows,
                  const ResourceGrid& grid, Micros subframe_end);

}  // namespace slicesim
