#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "slicesim/radio_grid.hpp"
#include "slicesim/sim_core.hpp"
#include "slicesim/types.hpp"

namespace slicesim {

/// Random access configuration of one channel. `slice` is empty for the
/// common channel.
struct RachConfig {
  std::optional<SliceNetId> slice;
  int preamble_pool = 16;
  int opportunity_period = 10;  // subframes
  int max_attempts = 8;
  int backoff_window = 20;      // opportunities

  void validate() const;
};

struct RachOutcome {
  NodeId device;
  SliceNetId slice;  // slice the device asked for
  int attempts_used = 0;
  bool success = false;
  Micros access_delay = 0;

  friend bool operator==(const RachOutcome&, const RachOutcome&) = default;
};

/// Slotted preamble contention on one random access channel.
///
/// Opportunities occur every `opportunity_period` subframes; a request made
/// at time t first contends at the earliest opportunity strictly after t.
/// Each due contender draws a preamble uniformly from the pool; a preamble
/// picked by exactly one contender succeeds. Collided contenders back off a
/// uniform number of opportunities in [1, backoff_window] and retry until
/// max_attempts is spent. Draw order is ascending (device, slice), preambles
/// first, then backoffs.
class RachChannel {
 public:
  RachChannel(RachConfig config, Micros subframe_us);

  const RachConfig& config() const { return config_; }
  Micros opportunity_period_us() const { return period_us_; }

  void add(NodeId device, SliceNetId requested, Micros request_time);
  std::optional<Micros> next_opportunity() const;
  std::size_t pending() const { return contenders_.size(); }

  /// Resolves the opportunity at `time` and returns outcomes that became
  /// final (successes and devices out of attempts).
  std::vector<RachOutcome> resolve(Micros time, RngStream& rng);

 private:
  struct Contender {
    NodeId device;
    SliceNetId requested;
    Micros request_time;
    std::int64_t next_opportunity;
    int attempts = 0;
  };

  RachConfig config_;
  Micros period_us_;
  std::vector<Contender> contenders_;
};

/// Runs a batch of contenders that all request at time 0 until every one
/// has succeeded or exhausted its attempts. Outcomes are listed in the order
/// they became final.
std::vector<RachOutcome> rach_contend(const RachConfig& config, std::span<const NodeId> contenders,
                                      SliceNetId slice, RngStream& rng, Micros subframe_us = 1000);

/// Where an access request for a slice is sent.
enum class RachRoute { slice_specific, common };
RachRoute route_access(bool slice_active, bool slice_has_rach);

struct SliceAirState {
  SliceNetId slice;
  bool active = false;
  std::optional<RachConfig> rach;
};

struct SystemInfo {
  NodeId ap;
  std::vector<SliceNetId> active;  // ascending
  RachConfig common_rach;
  std::map<SliceNetId, RachConfig> slice_rach;
};

SystemInfo broadcast_system_info(NodeId ap, std::span<const SliceAirState> slices,
                                 const RachConfig& common_rach);

struct CommonDci {
  struct Entry {
    SliceNetId slice;
    std::vector<Cell> cells;
  };
  std::int64_t subframe = 0;
  std::vector<Entry> entries;  // ascending sNetID
};

CommonDci emit_common_dci(std::int64_t subframe, const std::map<SliceNetId, std::vector<Cell>>& grants);

/// Entries a device holding `memberships` is able to decode.
std::vector<const CommonDci::Entry*> decodable_entries(const CommonDci& dci,
                                                       std::span<const SliceNetId> memberships);

struct SliceDci {
  SliceNetId slice;
  std::int64_t subframe = 0;
  std::vector<std::pair<NodeId, std::vector<Cell>>> entries;  // ascending device
};

/// Throws InvariantViolation when a scheduled cell lies outside `allowed`.
SliceDci emit_slice_dci(SliceNetId slice, std::int64_t subframe,
                        const std::map<NodeId, std::vector<Cell>>& assignments,
                        std::span<const Cell> allowed);

struct UlReport {
  std::int64_t buffer_bytes = 0;
  double head_delay_ms = 0.0;

  friend bool operator==(const UlReport&, const UlReport&) = default;
};

struct UlControlMessage {
  NodeId device;
  std::vector<std::pair<SliceNetId, UlReport>> sections;
};

/// One message on the common uplink control channel carrying a section per
/// slice with a pending report; nothing when no report is pending.
std::optional<UlControlMessage> aggregate_ul_control(NodeId device,
                                                     const std::map<SliceNetId, UlReport>& reports);
std::map<SliceNetId, UlReport> demux_ul_control(const UlControlMessage& message);

}  // namespace slicesim
