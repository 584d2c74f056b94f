#include "slicesim/offload.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include <boost/crc.hpp>

#include "slicesim/errors.hpp"

namespace slicesim {

void ComputeProfile::validate() const {
  if (total_capacity < 0) throw SimError("compute capacity must be non-negative");
  if (reserved_local < 0 || reserved_local > 1) throw SimError("reserved_local must lie in [0, 1]");
}

OffloadEstimate estimate_offload(const SliceableTask& task, double client_capacity,
                                 const HostAdvertisement& host, double link_rate_bps, double asked,
                                 Micros os_overhead_per_stage) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  OffloadEstimate e;
  e.local_s = client_capacity > 0 ? task.total_ops / client_capacity : inf;
  e.signaling_s = static_cast<double>(host.signaling_rtt) / kMicrosPerSecond;
  const auto transfer = [&](std::int64_t bytes) {
    if (bytes == 0) return 0.0;
    return link_rate_bps > 0 ? static_cast<double>(bytes) * 8.0 / link_rate_bps : inf;
  };
  e.ship_s = transfer(task.ship_bytes);
  e.result_s = transfer(task.result_bytes);
  const double grant = asked > 0 ? std::min(asked, host.shareable) : host.shareable;
  const double remote_ops = task.offloadable_ops();
  e.remote_s = remote_ops == 0 ? 0.0 : (grant > 0 ? remote_ops / grant : inf);
  e.local_part_s = task.local_ops() == 0 ? 0.0 : (client_capacity > 0 ? task.local_ops() / client_capacity : inf);
  const double os = static_cast<double>(os_overhead_per_stage) / kMicrosPerSecond;
  e.os_overhead_s = 3 * os;
  e.offload_s = e.signaling_s + os + std::max(e.ship_s + os + e.remote_s + e.result_s, e.local_part_s) + os;
  return e;
}

OffloadChoice decide_offload(const SliceableTask& task, double client_capacity, const HostAdvertisement& host,
                             double link_rate_bps, double asked, Micros os_overhead_per_stage) {
  const auto e = estimate_offload(task, client_capacity, host, link_rate_bps, asked, os_overhead_per_stage);
  return e.offload_s < e.local_s ? OffloadChoice::request_offload : OffloadChoice::local;
}

std::string_view to_string(SessionState s) {
  switch (s) {
    case SessionState::Idle: return "Idle";
    case SessionState::Requested: return "Requested";
    case SessionState::Accepted: return "Accepted";
    case SessionState::Declined: return "Declined";
    case SessionState::Sliced: return "Sliced";
    case SessionState::Shipped: return "Shipped";
    case SessionState::Executing: return "Executing";
    case SessionState::Returned: return "Returned";
    case SessionState::Applied: return "Applied";
    case SessionState::Failed: return "Failed";
  }
  return "?";
}

bool legal_transition(SessionState from, SessionState to) {
  using S = SessionState;
  if (to == S::Failed) return from != S::Applied && from != S::Failed && from != S::Declined;
  switch (from) {
    case S::Idle: return to == S::Requested;
    case S::Requested: return to == S::Accepted || to == S::Declined;
    case S::Accepted: return to == S::Sliced;
    case S::Sliced: return to == S::Shipped;
    case S::Shipped: return to == S::Executing;
    case S::Executing: return to == S::Returned;
    case S::Returned: return to == S::Applied;
    default: return false;
  }
}

HostGrant host_admit(double shareable, double already_granted, double asked, double floor) {
  const double remaining = shareable - already_granted;
  if (remaining <= 0 || remaining < floor) {
    return HostGrant{false, 0.0, "insufficient"};
  }
  return HostGrant{true, std::min(asked, remaining), {}};
}

TaskSplit slice_task(const SliceableTask& task, double /*granted_capacity*/) {
  return TaskSplit{task.local_ops(), task.offloadable_ops(), task.ship_bytes};
}

Micros execution_time(double ops, double capacity) {
  if (ops <= 0) return 0;
  if (capacity <= 0) return std::numeric_limits<Micros>::max();
  return static_cast<Micros>(std::ceil(ops / capacity * kMicrosPerSecond - 1e-6));
}

namespace {

template <typename T>
void crc_field(boost::crc_32_type& crc, const T& v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  crc.process_bytes(buf, sizeof(T));
}

}  // namespace

std::uint32_t container_digest(const Container& c) {
  boost::crc_32_type crc;
  crc_field(crc, c.session);
  crc_field(crc, static_cast<std::uint8_t>(c.direction));
  crc_field(crc, c.task);
  crc_field(crc, c.remote_ops);
  crc_field(crc, c.payload_bytes);
  crc.process_bytes(c.payload.data(), c.payload.size());
  return crc.checksum();
}

Container pack_container(std::uint64_t session, const CodeDescriptor& code) {
  Container c{session, ContainerDirection::code_to_host, code.task, code.remote_ops, code.body,
              static_cast<std::int64_t>(code.body.size()), 0};
  c.payload_digest = container_digest(c);
  return c;
}

Container pack_container(std::uint64_t session, const ResultPayload& result) {
  Container c{session, ContainerDirection::result_to_client, result.task, 0.0, result.body,
              static_cast<std::int64_t>(result.body.size()), 0};
  c.payload_digest = container_digest(c);
  return c;
}

namespace {

void corrupt(Container& c) {
  if (c.payload.empty()) {
    c.payload_digest ^= 0xffffffffu;
  } else {
    c.payload[0] ^= 0xff;
  }
}

void verify(const Container& c, ContainerDirection expected) {
  if (c.direction != expected) throw SessionError("container carries the wrong direction");
  if (static_cast<std::int64_t>(c.payload.size()) != c.payload_bytes || container_digest(c) != c.payload_digest) {
    throw DigestMismatchError("container for session " + std::to_string(c.session) + " fails its digest");
  }
}

}  // namespace

CodeDescriptor unpack_code(const Container& c) {
  verify(c, ContainerDirection::code_to_host);
  return CodeDescriptor{c.task, c.remote_ops, c.payload};
}

ResultPayload unpack_result(const Container& c) {
  verify(c, ContainerDirection::result_to_client);
  return ResultPayload{c.task, c.payload};
}

std::vector<std::uint8_t> make_payload(std::int64_t bytes, std::uint64_t salt) {
  std::vector<std::uint8_t> v(static_cast<std::size_t>(std::max<std::int64_t>(bytes, 0)));
  std::uint64_t x = salt * 0x9e3779b97f4a7c15ULL + 1;
  for (auto& b : v) {
    x ^= x << 13;
    x ^= x >> 7;
    x ^= x << 17;
    b = static_cast<std::uint8_t>(x);
  }
  return v;
}

std::int64_t pdu_count(std::int64_t payload_bytes, std::int64_t pdu_size) {
  if (pdu_size <= 0) throw SimError("PDU size must be positive");
  return std::max<std::int64_t>(1, (payload_bytes + pdu_size - 1) / pdu_size);
}

std::vector<std::int64_t> segment_pdus(std::int64_t payload_bytes, std::int64_t pdu_size) {
  const auto n = pdu_count(payload_bytes, pdu_size);
  std::vector<std::int64_t> out(static_cast<std::size_t>(n), pdu_size);
  out.back() = payload_bytes - (n - 1) * pdu_size;
  return out;
}

void OffloadSession::advance(SessionState to, Micros now) {
  if (!legal_transition(state, to)) {
    throw SessionError("session " + std::to_string(id) + ": illegal transition " +
                       std::string(to_string(state)) + " -> " + std::string(to_string(to)));
  }
  state = to;
  history.push_back({to, now});
}

std::optional<Micros> OffloadSession::entered(SessionState s) const {
  for (const auto& h : history) {
    if (h.state == s) return h.time;
  }
  return std::nullopt;
}

OffloadManager::OffloadManager(Engine& engine, OffloadConfig config, Transport transport)
    : engine_(engine), config_(std::move(config)), transport_(std::move(transport)) {}

void OffloadManager::add_host(const ComputeProfile& profile) {
  profile.validate();
  hosts_[profile.node] = Host{profile, {}, false};
  const NodeId host = profile.node;
  engine_.schedule(engine_.now(), host, "mplane-advertise", [this, host] { advertise(host); });
}

void OffloadManager::add_client(const ComputeProfile& profile, NodeId host) {
  profile.validate();
  clients_[profile.node] = Client{profile, host, std::nullopt};
}

void OffloadManager::advertise(NodeId host) {
  auto& h = hosts_.at(host);
  if (h.failed) return;
  for (auto& [id, c] : clients_) {
    if (c.host == host) {
      c.last_ad = HostAdvertisement{host, remaining_shareable(host), config_.signaling_rtt, engine_.now()};
    }
  }
  engine_.schedule_in(config_.advertisement_period, host, "mplane-advertise", [this, host] { advertise(host); });
}

double OffloadManager::granted_total(NodeId host) const {
  double sum = 0.0;
  for (const auto& [id, g] : hosts_.at(host).grants) sum += g;
  return sum;
}

double OffloadManager::remaining_shareable(NodeId host) const {
  return hosts_.at(host).profile.shareable() - granted_total(host);
}

std::optional<HostAdvertisement> OffloadManager::advertisement(NodeId client) const {
  return clients_.at(client).last_ad;
}

bool OffloadManager::link_up(NodeId client, NodeId host) const {
  auto it = links_.find({client, host});
  return it == links_.end() || it->second;
}

void OffloadManager::set_link(NodeId client, NodeId host, bool up) {
  links_[{client, host}] = up;
  if (up) return;
  for (auto& [id, s] : sessions_) {
    if (!s.terminal() && s.client == client && s.host == host) fail(s, "link_loss");
  }
}

void OffloadManager::fail_host(NodeId host) {
  hosts_.at(host).failed = true;
  for (auto& [id, s] : sessions_) {
    if (!s.terminal() && s.host == host) fail(s, "host_failure");
  }
}

void OffloadManager::finish_local(NodeId client, const SliceableTask& task, Micros started) {
  const auto& c = clients_.at(client);
  const Micros done = started + execution_time(task.total_ops, c.profile.total_capacity);
  engine_.schedule(done, client, "task-local-done", [this, client, started] {
    engine_.emit(config_.metric_slice, client, "task_local_latency_us",
                 static_cast<double>(engine_.now() - started));
  });
}

void OffloadManager::submit(NodeId client, const SliceableTask& task) {
  auto& c = clients_.at(client);
  auto existing = session_by_task_.find({client, task.id});
  if (existing != session_by_task_.end() && !sessions_.at(existing->second).terminal()) {
    engine_.emit(config_.metric_slice, client, "offload_duplicate_request", 1);
    return;
  }
  if (task.deadline_ms && *task.deadline_ms > 0 &&
      task.total_ops / (*task.deadline_ms / 1000.0) > c.profile.total_capacity) {
    engine_.emit(config_.metric_slice, client, "offload_capacity_exceeded", 1);
  }

  const double rate = transport_.link_rate_bps ? transport_.link_rate_bps(client, c.host) : 0.0;
  const bool have_ad = c.last_ad.has_value() && !hosts_.at(c.host).failed;
  OffloadEstimate est;
  OffloadChoice choice = OffloadChoice::local;
  if (have_ad) {
    est = estimate_offload(task, c.profile.total_capacity, *c.last_ad, rate, 0.0, config_.os_overhead_per_stage);
    choice = est.offload_s < est.local_s ? OffloadChoice::request_offload : OffloadChoice::local;
  }
  engine_.emit(config_.metric_slice, client, "offload_decision", choice == OffloadChoice::request_offload ? 1 : 0);
  if (choice == OffloadChoice::local) {
    finish_local(client, task, engine_.now());
    return;
  }

  const auto id = next_session_++;
  OffloadSession s;
  s.id = id;
  s.client = client;
  s.host = c.host;
  s.task = task;
  s.asked = c.last_ad->shareable;
  s.estimate = est;
  s.history.push_back({SessionState::Idle, engine_.now()});
  auto& ref = sessions_.emplace(id, std::move(s)).first->second;
  session_by_task_[{client, task.id}] = id;
  engine_.emit(config_.metric_slice, client, "offload_estimate_us", std::round(est.offload_s * kMicrosPerSecond));

  start_stage(ref, SessionState::Requested);
  if (!link_up(client, ref.host)) {
    fail(ref, "link_loss");
    return;
  }
  engine_.schedule_in(config_.signaling_rtt / 2, ref.host, "mplane-request", [this, id] { on_request_at_host(id); });
}

void OffloadManager::start_stage(OffloadSession& s, SessionState to, Micros allowance) {
  s.advance(to, engine_.now());
  // Waiting on the local part is not a remote stage.
  if (to == SessionState::Returned) return;
  const auto entries = s.history.size();
  const auto id = s.id;
  engine_.schedule_in(config_.stage_timeout + allowance, s.client, "offload-timeout", [this, id, to, entries] {
    auto& cur = sessions_.at(id);
    if (cur.state == to && cur.history.size() == entries) fail(cur, "timeout");
  });
}

void OffloadManager::fail(OffloadSession& s, const std::string& reason) {
  s.advance(SessionState::Failed, engine_.now());
  s.failure = reason;
  refund(s);
  engine_.emit(config_.metric_slice, s.client, "offload_failed", 1);
}

void OffloadManager::refund(OffloadSession& s) {
  auto it = hosts_.find(s.host);
  if (it != hosts_.end()) it->second.grants.erase(s.id);
}

void OffloadManager::on_request_at_host(std::uint64_t id) {
  auto& s = sessions_.at(id);
  if (s.terminal()) return;
  if (!link_up(s.client, s.host)) {
    fail(s, "link_loss");
    return;
  }
  auto& h = hosts_.at(s.host);
  HostGrant grant{false, 0.0, "host_failure"};
  if (!h.failed) {
    grant = host_admit(h.profile.shareable(), granted_total(s.host), s.asked, config_.admission_floor);
  }
  if (grant.granted) h.grants[id] = grant.capacity;
  engine_.schedule_in(config_.signaling_rtt - config_.signaling_rtt / 2, s.client, "mplane-response",
                      [this, id, grant] { on_response_at_client(id, grant); });
}

void OffloadManager::on_response_at_client(std::uint64_t id, HostGrant grant) {
  auto& s = sessions_.at(id);
  if (s.terminal()) return;
  if (!link_up(s.client, s.host)) {
    fail(s, "link_loss");
    return;
  }
  if (!grant.granted) {
    s.advance(SessionState::Declined, engine_.now());
    engine_.emit(config_.metric_slice, s.client, "offload_declined", 1);
    finish_local(s.client, s.task, engine_.now());
    return;
  }
  start_stage(s, SessionState::Accepted);
  s.granted = grant.capacity;
  engine_.schedule_in(config_.os_overhead_per_stage, s.client, "offload-slice", [this, id] {
    auto& s = sessions_.at(id);
    if (s.terminal()) return;
    const auto split = slice_task(s.task, s.granted);
    start_stage(s, SessionState::Sliced);

    const Micros local_time = execution_time(split.local_ops, clients_.at(s.client).profile.total_capacity);
    s.local_part_done = engine_.now() + local_time;
    engine_.schedule(s.local_part_done, s.client, "offload-local-part", [this, id] {
      auto& s = sessions_.at(id);
      s.local_part_finished = true;
      maybe_apply(id);
    });

    const auto code = pack_container(
        id, CodeDescriptor{s.task.id, split.remote_ops, make_payload(split.ship_bytes, id * 2)});
    transport_.send(s.client, s.host, code, config_.pdu_size,
                    [this, id, code] { on_code_delivered(id, code); });
  });
}

void OffloadManager::on_code_delivered(std::uint64_t id, Container c) {
  auto& s = sessions_.at(id);
  if (s.terminal()) return;
  if (!link_up(s.client, s.host)) {
    fail(s, "link_loss");
    return;
  }
  if (corrupt_.erase(id)) corrupt(c);
  start_stage(s, SessionState::Shipped);
  CodeDescriptor code;
  try {
    code = unpack_code(c);
  } catch (const DigestMismatchError&) {
    fail(s, "digest_mismatch");
    return;
  }
  engine_.schedule_in(config_.os_overhead_per_stage, s.host, "offload-unpack", [this, id, code] {
    auto& s = sessions_.at(id);
    if (s.terminal()) return;
    const auto run = execution_time(code.remote_ops, s.granted);
    start_stage(s, SessionState::Executing, run);
    engine_.schedule_in(run, s.host, "offload-exec-done",
                        [this, id] { on_execution_done(id); });
  });
}

void OffloadManager::on_execution_done(std::uint64_t id) {
  auto& s = sessions_.at(id);
  if (s.terminal()) return;
  const auto result = pack_container(id, ResultPayload{s.task.id, make_payload(s.task.result_bytes, id * 2 + 1)});
  transport_.send(s.client, s.host, result, config_.pdu_size,
                  [this, id, result] { on_result_delivered(id, result); });
}

void OffloadManager::on_result_delivered(std::uint64_t id, Container c) {
  auto& s = sessions_.at(id);
  if (s.terminal()) return;
  if (!link_up(s.client, s.host)) {
    fail(s, "link_loss");
    return;
  }
  if (corrupt_.erase(id)) corrupt(c);
  try {
    unpack_result(c);
  } catch (const DigestMismatchError&) {
    fail(s, "digest_mismatch");
    return;
  }
  start_stage(s, SessionState::Returned);
  maybe_apply(id);
}

void OffloadManager::maybe_apply(std::uint64_t id) {
  auto& s = sessions_.at(id);
  if (s.state != SessionState::Returned || !s.local_part_finished) return;
  engine_.schedule_in(config_.os_overhead_per_stage, s.client, "offload-apply", [this, id] {
    auto& s = sessions_.at(id);
    if (s.terminal()) return;
    s.advance(SessionState::Applied, engine_.now());
    refund(s);
    const auto requested = *s.entered(SessionState::Requested);
    const auto baseline = execution_time(s.task.total_ops, clients_.at(s.client).profile.total_capacity);
    engine_.emit(config_.metric_slice, s.client, "offload_total_latency_us",
                 static_cast<double>(engine_.now() - requested));
    engine_.emit(config_.metric_slice, s.client, "offload_local_baseline_us", static_cast<double>(baseline));
  });
}

}  // namespace slicesim
