#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "slicesim/sim_core.hpp"
#include "slicesim/types.hpp"

namespace slicesim {

/// Computation capacity of a node in mega-operations per second.
struct ComputeProfile {
  NodeId node;
  double total_capacity = 0.0;
  double reserved_local = 0.0;  // fraction kept for the node's own applications

  double shareable() const { return total_capacity * (1.0 - reserved_local); }
  void validate() const;
};

struct SliceableTask {
  std::uint32_t id = 0;
  double total_ops = 0.0;          // mega-operations
  double sliceable_fraction = 0.0;  // [0, 1]
  std::int64_t ship_bytes = 0;      // executable + input
  std::int64_t result_bytes = 0;
  std::optional<double> deadline_ms;

  double offloadable_ops() const { return total_ops * sliceable_fraction; }
  double local_ops() const { return total_ops - offloadable_ops(); }
};

/// What a host M-plane periodically publishes on the horizontal slice.
struct HostAdvertisement {
  NodeId host;
  double shareable = 0.0;  // currently ungranted, M-ops/s
  Micros signaling_rtt = 0;
  Micros published = 0;
};

struct OffloadEstimate {
  double local_s = 0.0;
  double signaling_s = 0.0;
  double ship_s = 0.0;
  double remote_s = 0.0;
  double result_s = 0.0;
  double local_part_s = 0.0;
  double os_overhead_s = 0.0;
  double offload_s = 0.0;
};

/// Completion-time estimates. Local: total_ops / client capacity. Offload:
/// RTT + OS overhead + max(ship + remote + result, local part), where the
/// transfer terms are bytes over the link rate and the remote term uses
/// min(asked, advertised) capacity. `asked` <= 0 means ask for everything
/// advertised.
OffloadEstimate estimate_offload(const SliceableTask& task, double client_capacity,
                                 const HostAdvertisement& host, double link_rate_bps, double asked = 0.0,
                                 Micros os_overhead_per_stage = 0);

enum class OffloadChoice { local, request_offload };

/// request_offload iff the estimated offload time beats local execution.
OffloadChoice decide_offload(const SliceableTask& task, double client_capacity, const HostAdvertisement& host,
                             double link_rate_bps, double asked = 0.0, Micros os_overhead_per_stage = 0);

enum class SessionState { Idle, Requested, Accepted, Declined, Sliced, Shipped, Executing, Returned, Applied, Failed };
std::string_view to_string(SessionState s);
bool legal_transition(SessionState from, SessionState to);

struct HostGrant {
  bool granted = false;
  double capacity = 0.0;
  std::string reason;
};

/// Grants min(asked, remaining) when remaining reaches the admission floor.
HostGrant host_admit(double shareable, double already_granted, double asked, double floor);

struct TaskSplit {
  double local_ops = 0.0;
  double remote_ops = 0.0;
  std::int64_t ship_bytes = 0;
};

/// Split by the sliceable fraction; the granted capacity only changes speed.
TaskSplit slice_task(const SliceableTask& task, double granted_capacity);

/// Remote execution time of `ops` at `capacity`, rounded up to the microsecond.
Micros execution_time(double ops, double capacity);

struct CodeDescriptor {
  std::uint32_t task = 0;
  double remote_ops = 0.0;
  std::vector<std::uint8_t> body;

  friend bool operator==(const CodeDescriptor&, const CodeDescriptor&) = default;
};

struct ResultPayload {
  std::uint32_t task = 0;
  std::vector<std::uint8_t> body;

  friend bool operator==(const ResultPayload&, const ResultPayload&) = default;
};

enum class ContainerDirection { code_to_host, result_to_client };

struct Container {
  std::uint64_t session = 0;
  ContainerDirection direction = ContainerDirection::code_to_host;
  std::uint32_t task = 0;
  double remote_ops = 0.0;
  std::vector<std::uint8_t> payload;
  std::int64_t payload_bytes = 0;
  std::uint32_t payload_digest = 0;
};

/// CRC-32 over the container header fields and payload.
std::uint32_t container_digest(const Container& c);

Container pack_container(std::uint64_t session, const CodeDescriptor& code);
Container pack_container(std::uint64_t session, const ResultPayload& result);
/// Both throw DigestMismatchError when the digest does not verify, and
/// SessionError when the container carries the other direction.
CodeDescriptor unpack_code(const Container& c);
ResultPayload unpack_result(const Container& c);

/// Deterministic filler standing in for executable code or result bytes.
std::vector<std::uint8_t> make_payload(std::int64_t bytes, std::uint64_t salt);

struct L2LogicalChannel {
  std::uint32_t id = 0;
  std::int64_t pdu_size = 1000;
  SliceNetId slice;
  NodeId ap;
};

/// ceil(payload / pdu_size), and at least one PDU.
std::int64_t pdu_count(std::int64_t payload_bytes, std::int64_t pdu_size);
std::vector<std::int64_t> segment_pdus(std::int64_t payload_bytes, std::int64_t pdu_size);

struct OffloadSession {
  struct StateEntry {
    SessionState state;
    Micros time;
  };

  std::uint64_t id = 0;
  NodeId client;
  NodeId host;
  SliceableTask task;
  SessionState state = SessionState::Idle;
  double asked = 0.0;
  double granted = 0.0;
  OffloadEstimate estimate;
  std::vector<StateEntry> history;
  std::string failure;
  Micros local_part_done = 0;
  bool local_part_finished = false;

  /// Throws SessionError on an out-of-order transition.
  void advance(SessionState to, Micros now);
  std::optional<Micros> entered(SessionState s) const;
  bool terminal() const {
    return state == SessionState::Applied || state == SessionState::Failed || state == SessionState::Declined;
  }
};

struct OffloadConfig {
  Micros signaling_rtt = 10 * kMicrosPerMs;
  Micros os_overhead_per_stage = 0;  // 5 ms models slicing at the OS level
  Micros stage_timeout = 5 * kMicrosPerSecond;
  Micros advertisement_period = 100 * kMicrosPerMs;
  double admission_floor = 0.0;
  std::int64_t pdu_size = 1000;
  /// Slice id attached to emitted metrics (the horizontal slice).
  std::optional<SliceNetId> metric_slice;
};

/// Client and host M-plane state machines exchanging timed messages. Radio
/// transfer of containers is delegated to a transport supplied by the
/// caller (normally the horizontal slice's dedicated logical channel).
class OffloadManager {
 public:
  struct Transport {
    /// Bits per second the client expects on its link to the host.
    std::function<double(NodeId client, NodeId host)> link_rate_bps;
    /// Sends the container's PDUs; calls `delivered` when the last drains.
    std::function<void(NodeId client, NodeId host, const Container& c, std::int64_t pdu_size,
                       std::function<void()> delivered)>
        send;
  };

  OffloadManager(Engine& engine, OffloadConfig config, Transport transport);

  const OffloadConfig& config() const { return config_; }

  void add_host(const ComputeProfile& profile);
  void add_client(const ComputeProfile& profile, NodeId host);

  /// Task arrival at the client now.
  void submit(NodeId client, const SliceableTask& task);

  void set_link(NodeId client, NodeId host, bool up);
  void fail_host(NodeId host);
  /// Corrupts the next container delivered for the session (test hook).
  void corrupt_next(std::uint64_t session) { corrupt_.insert({session, true}); }

  const std::map<std::uint64_t, OffloadSession>& sessions() const { return sessions_; }
  double granted_total(NodeId host) const;
  double remaining_shareable(NodeId host) const;
  std::optional<HostAdvertisement> advertisement(NodeId client) const;

 private:
  struct Host {
    ComputeProfile profile;
    std::map<std::uint64_t, double> grants;
    bool failed = false;
  };
  struct Client {
    ComputeProfile profile;
    NodeId host;
    std::optional<HostAdvertisement> last_ad;
  };

  void advertise(NodeId host);
  void start_stage(OffloadSession& s, SessionState to, Micros allowance = 0);
  void fail(OffloadSession& s, const std::string& reason);
  void finish_local(NodeId client, const SliceableTask& task, Micros started);
  bool link_up(NodeId client, NodeId host) const;
  void on_request_at_host(std::uint64_t id);
  void on_response_at_client(std::uint64_t id, HostGrant grant);
  void on_code_delivered(std::uint64_t id, Container c);
  void on_execution_done(std::uint64_t id);
  void on_result_delivered(std::uint64_t id, Container c);
  void maybe_apply(std::uint64_t id);
  void refund(OffloadSession& s);

  Engine& engine_;
  OffloadConfig config_;
  Transport transport_;
  std::map<NodeId, Host> hosts_;
  std::map<NodeId, Client> clients_;
  std::map<std::pair<NodeId, NodeId>, bool> links_;
  std::map<std::uint64_t, OffloadSession> sessions_;
  std::map<std::pair<NodeId, std::uint32_t>, std::uint64_t> session_by_task_;
  std::map<std::uint64_t, bool> corrupt_;
  std::uint64_t next_session_ = 1;
};

}  // namespace slicesim
