#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "slicesim/sim_core.hpp"
#include "slicesim/types.hpp"

namespace slicesim {

struct VirtualFunction {
  std::string name;
  double processing_rate_per_ms = 1.0;  // packets per ms, > 0
  Micros per_packet_latency = 0;
  NodeId host;
};

struct CnSlice {
  std::string id;
  std::vector<std::string> chain;
  std::string service;
};

/// Composition of radio slices (one per numerology segment), RAN slices
/// (sNetIDs) and CN slices into end-to-end slices. 1:M at both layers.
struct PairingMap {
  std::map<std::string, std::set<SliceNetId>> radio_to_ran;
  std::map<SliceNetId, std::set<std::string>> ran_to_cn;
};

struct PairingViolation {
  std::string location;  // e.g. "pairing.ran_to_cn.3"
  std::string message;
};

/// Reports every dangling id, RAN slice with zero or several radio parents,
/// and CN slice with no RAN parent. Never throws.
std::vector<PairingViolation> validate_pairing(const PairingMap& map, const std::set<std::string>& radio_slices,
                                               const std::set<SliceNetId>& ran_slices,
                                               const std::set<std::string>& cn_slices);

enum class Direction { uplink, downlink };

struct E2EFlowPath {
  FlowId flow;
  std::string radio;
  SliceNetId ran;
  std::string cn;
  Direction direction = Direction::uplink;

  friend bool operator==(const E2EFlowPath&, const E2EFlowPath&) = default;
};

/// Picks the CN slice paired to `ran` whose service tag matches, lowest id
/// first. Throws NoPathError when none matches.
E2EFlowPath resolve_path(FlowId flow, SliceNetId ran, const std::string& service, Direction direction,
                         const PairingMap& map, const std::map<std::string, CnSlice>& cn_slices);

/// True exactly for flows of horizontal slices; those terminate locally and
/// never enter a CN chain.
bool horizontal_termination(SliceKind kind);

/// True iff the (radio, RAN, CN) triple is allowed by the map.
bool path_consistent(const E2EFlowPath& path, const PairingMap& map);

struct CnPacket {
  FlowId flow;
  SliceNetId ran;
  std::string cn_slice;
  SliceKind origin = SliceKind::vertical;
  std::int64_t bytes = 0;
};

/// Event-driven CN function chains on shared infrastructure. Each function
/// is a FIFO single server: a packet starts at max(arrival, server free),
/// holds the server for 1/processing_rate, and leaves after
/// per_packet_latency. Shared functions serve all using slices in arrival
/// order.
class CnFabric {
 public:
  struct Arrival {
    Micros time;
    std::string function;
    CnPacket packet;
  };

  CnFabric(Engine& engine, std::vector<VirtualFunction> functions, std::vector<CnSlice> slices);

  const std::map<std::string, CnSlice>& slices() const { return slices_; }
  const VirtualFunction& function(const std::string& name) const;

  /// Enters the chain now; `on_exit` runs at the departure from the last
  /// function.
  void submit(CnPacket packet, std::function<void(Micros)> on_exit = {});

  std::uint64_t served(const std::string& function) const;
  std::uint64_t served(const std::string& function, const std::string& cn_slice) const;
  const std::vector<Arrival>& arrivals() const { return arrivals_; }

 private:
  struct FunctionState {
    VirtualFunction spec;
    Micros busy_until = 0;
    std::uint64_t served = 0;
    std::map<std::string, std::uint64_t> served_by_slice;
  };

  void arrive(std::size_t hop, std::shared_ptr<const CnPacket> packet, std::function<void(Micros)> on_exit);

  Engine& engine_;
  std::map<std::string, FunctionState> functions_;
  std::map<std::string, CnSlice> slices_;
  std::vector<Arrival> arrivals_;
};

}  // namespace slicesim
