#include "slicesim/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "slicesim/errors.hpp"
#include "slicesim/mac_sched.hpp"

namespace slicesim {

namespace {

constexpr std::uint32_t kOffloadFlowBase = 0xF0000000u;

enum class FlowRole { source, edge_forward, offload_code, offload_result };

struct FlowRt {
  TrafficFlow flow;
  Direction direction = Direction::uplink;
  SliceKind kind = SliceKind::vertical;
  FlowRole role = FlowRole::source;
  std::optional<E2EFlowPath> path;
  std::int64_t window_bytes = 0;
  std::int64_t last_window_bytes = 0;
};

struct ApSliceRt {
  const SliceSpec* spec = nullptr;
  SliceLifecycle life;
  IntraSliceScheduler sched;
  std::unique_ptr<RachChannel> rach;
  std::set<Micros> rach_scheduled;
  std::optional<std::size_t> pool;
  double nominal_bytes = 0.0;  // per subframe
  std::int64_t window_bytes = 0;
  double load = 0.0;
  double latency_sum = 0.0;
  std::int64_t idle_cells = 0;
  std::int64_t latency_count = 0;
  std::optional<Micros> quiet_since;
  bool handover_pending = false;
  bool eligible = true;
};

struct ApRt {
  const NodeSpec* spec = nullptr;
  ResourceGrid grid;
  std::map<SliceNetId, ApSliceRt> slices;
  std::unique_ptr<RachChannel> common;
  std::set<Micros> common_scheduled;
};

struct Membership {
  NodeId ap;
  bool admitted = false;
};

struct PendingAccess {
  NodeId ap;
  RachRoute route;
  bool request_activation = true;
};

struct Transfer {
  std::int64_t remaining = 0;
  std::function<void()> done;
};

double nominal_bytes_per_subframe(const ResourceGrid& grid, const SliceSpec& s, std::optional<std::size_t> pool) {
  const auto per_block = [&](std::size_t seg) {
    const auto& g = grid.segment(seg);
    return static_cast<double>(g.numerology.bytes_per_cell) * static_cast<double>(g.active_phases) / grid.period();
  };
  if (pool) return per_block(*pool) * grid.segment(*pool).blocks();
  double total = 0.0;
  for (const auto& [name, blocks] : s.resources.blocks) {
    if (auto idx = grid.find_segment(name)) total += per_block(*idx) * static_cast<double>(blocks);
  }
  return total;
}

}  // namespace

struct Simulation::Impl {
  Scenario sc;
  RunOptions opt;
  Engine engine;
  Trace trace;
  std::map<NodeId, ApRt> aps;
  std::map<FlowId, FlowRt> flows;
  std::map<std::pair<NodeId, SliceNetId>, Membership> members;
  std::map<std::pair<NodeId, SliceNetId>, PendingAccess> pending_access;
  std::set<NodeId> synthetic;
  std::vector<AccessSpec> waiting;
  std::unique_ptr<CnFabric> cn;
  std::unique_ptr<OffloadManager> offload;
  std::map<std::pair<NodeId, ContainerDirection>, FlowId> offload_flows;
  std::map<std::uint64_t, Transfer> transfers;
  std::uint64_t next_transfer = 1;
  std::map<NodeId, const EdgeSpec*> edge_at;
  std::map<NodeId, double> edge_backlog;
  bool ran = false;

  Impl(const Scenario& scenario, RunOptions o) : sc(scenario), opt(o), engine(scenario.master_seed) {}

  Micros sf() const { return sc.subframe_us; }

  ApSliceRt* ap_slice(NodeId ap, SliceNetId slice) {
    auto a = aps.find(ap);
    if (a == aps.end()) return nullptr;
    auto s = a->second.slices.find(slice);
    return s == a->second.slices.end() ? nullptr : &s->second;
  }

  void emit_state(NodeId ap, SliceNetId slice, SliceState s) {
    engine.emit(slice, ap, "slice_state", static_cast<double>(static_cast<int>(s)));
  }

  // ---- setup -------------------------------------------------------------

  void build() {
    for (const auto& n : sc.nodes) {
      if (!n.access_point) continue;
      ApRt ap{&n, ResourceGrid::partition(sc.grid_at(n.id), sc.numerologies), {}, nullptr, {}};
      ap.common = std::make_unique<RachChannel>(sc.common_rach, sf());
      for (const auto& s : sc.slices) {
        bool resolvable = true;
        for (const auto& [seg, blocks] : s.resources.blocks) resolvable = resolvable && ap.grid.find_segment(seg);
        std::optional<std::size_t> pool;
        if (s.resources.pool) {
          pool = ap.grid.find_segment(*s.resources.pool);
          resolvable = resolvable && pool.has_value();
        }
        if (!resolvable) continue;
        const bool initially = s.active_at.count(n.id) > 0;
        ApSliceRt rt{.spec = &s,
                     .life = SliceLifecycle(s.id, n.id, initially ? SliceState::Active : SliceState::Inactive),
                     .sched = IntraSliceScheduler(s.policy, s.pf_window, sf()),
                     .rach = s.rach ? std::make_unique<RachChannel>(*s.rach, sf()) : nullptr,
                     .rach_scheduled = {},
                     .pool = pool,
                     .nominal_bytes = nominal_bytes_per_subframe(ap.grid, s, pool),
                     .quiet_since = {}};
        rt.eligible = s.ran.eligible_classes.empty() || s.ran.eligible_classes.count(n.node_class) > 0;
        if (initially && !s.resources.blocks.empty()) ap.grid.carve(s.id, carve_request(ap.grid, s));
        ap.slices.emplace(s.id, std::move(rt));
      }
      aps.emplace(n.id, std::move(ap));
    }

    cn = std::make_unique<CnFabric>(engine, sc.cn_functions, sc.cn_slices);

    for (const auto& t : sc.traffic) {
      const SliceSpec* s = sc.slice(t.slice);
      FlowRt f;
      f.flow.id = t.id;
      f.flow.device = t.device;
      f.flow.slice = t.slice;
      f.flow.qos = t.qos;
      f.direction = t.direction;
      f.kind = s->kind;
      if (s->kind == SliceKind::vertical) {
        f.path = resolve_path(t.id, t.slice, t.service, t.direction, sc.pairing, cn->slices());
      }
      flows.emplace(t.id, std::move(f));
    }

    for (const auto& e : sc.edge) {
      edge_at[e.node] = &e;
      FlowRt f;
      f.flow.id = e.forward_flow;
      f.flow.device = e.node;
      f.flow.slice = e.forward_slice;
      f.role = FlowRole::edge_forward;
      f.path = resolve_path(e.forward_flow, e.forward_slice, e.service, Direction::uplink, sc.pairing, cn->slices());
      flows.emplace(e.forward_flow, std::move(f));
    }

    if (sc.offload) build_offload(*sc.offload);

    // Every (device, slice) pair carrying traffic but never requesting
    // access explicitly attaches at time zero without random access.
    std::set<std::pair<NodeId, SliceNetId>> explicit_access;
    for (const auto& a : sc.access) explicit_access.insert({a.device, a.slice});
    std::set<std::pair<NodeId, SliceNetId>> implicit;
    for (const auto& [id, f] : flows) {
      auto key = std::make_pair(f.flow.device, f.flow.slice);
      if (!explicit_access.count(key)) implicit.insert(key);
    }
    for (const auto& [device, slice] : implicit) {
      AccessSpec a{device, slice, 0, false, true, std::nullopt};
      if (sc.offload && slice == sc.offload->slice) a.ap = sc.offload->host;
      engine.schedule(0, device, "attach", [this, a] { on_access(a); });
    }
    for (const auto& a : sc.access) engine.schedule(a.at, a.device, "access", [this, a] { on_access(a); });
    for (const auto& h : sc.handovers) {
      engine.schedule(h.at, h.device, "handover", [this, h] { handover(h.device, h.slice, h.to_ap); });
    }
    for (const auto& d : sc.detaches) engine.schedule(d.at, d.device, "detach", [this, d] { detach(d.device, d.slice); });
    for (const auto& b : sc.rach_bursts) engine.schedule(b.at, b.ap, "rach-burst", [this, b] { burst(b); });

    for (const auto& t : sc.traffic) {
      if (t.kind == ArrivalKind::periodic) {
        schedule_arrival(t, t.start + t.period);
      } else {
        schedule_arrival(t, t.start + poisson_gap(t));
      }
    }

    engine.schedule(0, NodeId(0), "mac-tick", [this] { mac_tick(0); });
    engine.schedule(sc.control_period, NodeId(0), "control", [this] { control_tick(); });
    if (sc.balance_period > 0) engine.schedule(sc.balance_period, NodeId(0), "balance", [this] { balance_tick(); });
  }

  void build_offload(const OffloadSpec& o) {
    OffloadManager::Transport transport;
    transport.link_rate_bps = [this, slice = o.slice](NodeId, NodeId host) {
      const ApSliceRt* as = ap_slice(host, slice);
      return as ? as->nominal_bytes * 8.0 * kMicrosPerSecond / static_cast<double>(sf()) : 0.0;
    };
    transport.send = [this](NodeId client, NodeId host, const Container& c, std::int64_t pdu,
                            std::function<void()> delivered) { send_container(client, host, c, pdu, std::move(delivered)); };
    offload = std::make_unique<OffloadManager>(engine, o.config, std::move(transport));
    offload->add_host(*sc.node(o.host)->compute);
    std::uint32_t next = kOffloadFlowBase;
    for (auto client : o.clients) {
      offload->add_client(*sc.node(client)->compute, o.host);
      for (auto dir : {ContainerDirection::code_to_host, ContainerDirection::result_to_client}) {
        FlowRt f;
        f.flow.id = FlowId(next++);
        f.flow.device = client;
        f.flow.slice = o.slice;
        f.kind = SliceKind::horizontal;
        f.direction = dir == ContainerDirection::code_to_host ? Direction::uplink : Direction::downlink;
        f.role = dir == ContainerDirection::code_to_host ? FlowRole::offload_code : FlowRole::offload_result;
        offload_flows[{client, dir}] = f.flow.id;
        flows.emplace(f.flow.id, std::move(f));
      }
    }
    for (const auto& t : o.tasks) {
      for (int k = 0; k < t.repeat; ++k) {
        SliceableTask task = t.task;
        task.id = t.task.id * 1000u + static_cast<std::uint32_t>(k);
        engine.schedule(t.at + k * t.interval, t.client, "task", [this, c = t.client, task] { offload->submit(c, task); });
      }
    }
    for (const auto& l : o.link_events) {
      engine.schedule(l.at, l.client, "link", [this, l, host = o.host] { offload->set_link(l.client, host, l.up); });
    }
    if (o.host_failure) {
      engine.schedule(*o.host_failure, o.host, "host-failure", [this, host = o.host] { offload->fail_host(host); });
    }
  }

  // ---- traffic -----------------------------------------------------------

  Micros poisson_gap(const TrafficSpec& t) {
    auto& rng = engine.rng_for({"traffic", t.slice.value, t.id.value});
    return std::max<Micros>(1, std::llround(rng.exponential(kMicrosPerSecond / t.rate_per_s)));
  }

  void schedule_arrival(const TrafficSpec& t, Micros at) {
    if (at > sc.duration) return;
    if (t.stop && at > *t.stop) return;
    engine.schedule(at, t.device, "traffic", [this, &t] { on_arrival(t); });
  }

  void attribute(FlowRt& f, std::int64_t bytes) {
    f.window_bytes += bytes;
    auto m = members.find({f.flow.device, f.flow.slice});
    if (m == members.end()) return;
    if (auto* as = ap_slice(m->second.ap, f.flow.slice)) as->window_bytes += bytes;
  }

  void enqueue(FlowRt& f, std::int64_t bytes, Micros arrival, std::uint64_t tag = 0) {
    f.flow.push(bytes, arrival, tag);
    attribute(f, bytes);
  }

  void submit_to_cn(FlowRt& f, std::int64_t bytes, std::function<void(Micros)> on_exit) {
    const auto& path = *f.path;
    if (opt.keep_trace) trace.cn.push_back({engine.now(), path, f.kind, bytes});
    engine.emit(path.ran, std::nullopt, "core_bytes", static_cast<double>(bytes));
    cn->submit(CnPacket{f.flow.id, path.ran, path.cn, f.kind, bytes}, std::move(on_exit));
  }

  void on_arrival(const TrafficSpec& t) {
    auto& f = flows.at(t.id);
    const Micros now = engine.now();
    engine.emit(t.slice, t.device, "arrival_bytes", static_cast<double>(t.bytes));
    if (t.direction == Direction::uplink) engine.emit(t.slice, t.device, "edge_bytes", static_cast<double>(t.bytes));
    if (t.direction == Direction::downlink && f.kind == SliceKind::vertical) {
      submit_to_cn(f, t.bytes, [this, id = t.id, bytes = t.bytes](Micros at) { enqueue(flows.at(id), bytes, at); });
    } else {
      enqueue(f, t.bytes, now);
    }
    schedule_arrival(t, now + (t.kind == ArrivalKind::periodic ? t.period : poisson_gap(t)));
  }

  void send_container(NodeId client, NodeId host, const Container& c, std::int64_t pdu,
                      std::function<void()> delivered) {
    auto& f = flows.at(offload_flows.at({client, c.direction}));
    if (c.payload_bytes == 0) {
      const Micros boundary = (engine.now() / sf() + 1) * sf();
      engine.schedule(boundary, host, "offload-empty", std::move(delivered));
      return;
    }
    const auto pdus = segment_pdus(c.payload_bytes, pdu);
    const auto id = next_transfer++;
    transfers[id] = Transfer{static_cast<std::int64_t>(pdus.size()), std::move(delivered)};
    for (auto bytes : pdus) enqueue(f, bytes, engine.now(), id);
  }

  void on_delivered(NodeId ap, const Delivery& d) {
    auto& f = flows.at(d.flow);
    switch (f.role) {
      case FlowRole::source:
        if (f.direction == Direction::downlink) return;
        if (f.kind == SliceKind::vertical) {
          submit_to_cn(f, d.packet.size, {});
        } else {
          engine.emit(d.slice, ap, "local_bytes", static_cast<double>(d.packet.size));
          edge_process(ap, d.packet.size);
        }
        return;
      case FlowRole::edge_forward:
        submit_to_cn(f, d.packet.size, {});
        return;
      case FlowRole::offload_code:
      case FlowRole::offload_result: {
        auto it = transfers.find(d.packet.tag);
        if (it == transfers.end()) return;
        if (--it->second.remaining == 0) {
          auto done = std::move(it->second.done);
          transfers.erase(it);
          done();
        }
        return;
      }
    }
  }

  void edge_process(NodeId ap, std::int64_t bytes) {
    auto it = edge_at.find(ap);
    if (it == edge_at.end()) return;
    const EdgeSpec& e = *it->second;
    auto& backlog = edge_backlog[ap];
    backlog += static_cast<double>(bytes) * (1.0 - e.local_fraction);
    const auto whole = static_cast<std::int64_t>(std::floor(backlog + 1e-9));
    if (whole <= 0) return;
    backlog -= static_cast<double>(whole);
    enqueue(flows.at(e.forward_flow), whole, engine.now());
  }

  // ---- MAC ---------------------------------------------------------------

  [[noreturn]] void breach(const std::string& what) { throw InvariantViolation("containment: " + what); }

  void check_grants(const ApRt& ap, const Level2Allocation& alloc, int phase) {
    std::set<Cell> seen;
    for (const auto& [slice, cells] : alloc.grants) {
      const auto& as = ap.slices.at(slice);
      const ResourceSubset* sub = ap.grid.subset(slice);
      for (const auto& c : cells) {
        ++trace.cells_checked;
        const std::string who = "slice " + std::to_string(slice.value) + " at node " + std::to_string(ap.spec->id.value);
        if (!ap.grid.contains(c)) breach("grant outside grid for " + who);
        if (c.phase != phase) breach("grant outside the subframe phase for " + who);
        if (as.pool) {
          if (c.segment != *as.pool || ap.grid.owner(c)) breach("pool grant outside its pool for " + who);
        } else if (!sub || !sub->contains(c) || ap.grid.owner(c) != slice) {
          breach("grant outside the carved subset for " + who);
        }
        if (!seen.insert(c).second) breach("overlapping grants at node " + std::to_string(ap.spec->id.value));
      }
    }
  }

  void check_assignments(const Level1Schedule& sched, const std::vector<Cell>& grant) {
    std::set<Cell> allowed(grant.begin(), grant.end());
    std::set<Cell> seen;
    for (const auto& [flow, cells] : sched.assignments) {
      for (const auto& c : cells) {
        if (!allowed.count(c)) breach("assignment outside grant for flow " + std::to_string(flow.value));
        if (!seen.insert(c).second) breach("overlapping assignments in slice " + std::to_string(sched.slice.value));
      }
    }
  }

  void mac_tick(std::int64_t k) {
    const Micros start = k * sf();
    const Micros end = start + sf();
    for (auto& [ap_id, ap] : aps) run_ap_subframe(ap_id, ap, k, end);
    if (end < sc.duration) engine.schedule(end, NodeId(0), "mac-tick", [this, k] { mac_tick(k + 1); });
  }

  void run_ap_subframe(NodeId ap_id, ApRt& ap, std::int64_t k, Micros end) {
    const int phase = ap.grid.phase_of(k);
    const Micros now = engine.now();
    if (opt.check_invariants) ++trace.subframes_checked;
    // Carved cells count as idle until the scheduler assigns them.
    for (auto& [slice, as] : ap.slices) {
      if (as.life.active() && !as.pool) {
        as.idle_cells += static_cast<std::int64_t>(slice_cells_in_phase(ap.grid, slice, as.pool, phase).size());
      }
    }
    std::map<SliceNetId, std::vector<TrafficFlow*>> active;
    std::map<NodeId, std::map<SliceNetId, UlReport>> reports;
    std::map<SliceNetId, std::int64_t> bytes;
    for (auto& [id, f] : flows) {
      if (!f.flow.backlogged()) continue;
      auto m = members.find({f.flow.device, f.flow.slice});
      if (m == members.end() || !m->second.admitted || m->second.ap != ap_id) continue;
      auto s = ap.slices.find(f.flow.slice);
      if (s == ap.slices.end() || !s->second.life.active()) continue;
      active[f.flow.slice].push_back(&f.flow);
      if (f.direction == Direction::uplink) {
        auto& r = reports[f.flow.device][f.flow.slice];
        r.buffer_bytes += f.flow.backlog;
        r.head_delay_ms = std::max(r.head_delay_ms, static_cast<double>(f.flow.head_delay(now)) / kMicrosPerMs);
      } else {
        bytes[f.flow.slice] += f.flow.backlog;
      }
    }
    if (active.empty()) return;
    // Uplink buffer status travels as one aggregated control message per device.
    for (const auto& [device, per_slice] : reports) {
      if (auto msg = aggregate_ul_control(device, per_slice)) {
        for (const auto& [slice, r] : demux_ul_control(*msg)) bytes[slice] += r.buffer_bytes;
      }
    }

    Level2Input in;
    for (const auto& [slice, b] : bytes) {
      const auto& as = ap.slices.at(slice);
      const auto cells = slice_cells_in_phase(ap.grid, slice, as.pool, phase);
      const auto demand = cells_needed(ap.grid, cells, b);
      if (demand <= 0) continue;
      in.demands[slice] = demand;
      in.weights[slice] = as.spec->resources.weight;
      if (as.pool) in.pool_of[slice] = *as.pool;
    }
    if (in.demands.empty()) return;
    const auto alloc = l2_allocate(k, ap.grid, in);
    if (opt.check_invariants) {
      check_grants(ap, alloc, phase);
    }
    if (opt.keep_trace && !in.pool_of.empty()) {
      std::map<std::size_t, PoolGrantRecord> pools;
      for (const auto& [slice, pool] : in.pool_of) {
        auto& rec = pools[pool];
        rec.time = now;
        rec.ap = ap_id;
        rec.pool = pool;
        rec.capacity = static_cast<std::int64_t>(ap.grid.segment_cells_in_phase(pool, phase).size());
        rec.demand[slice] = in.demands.at(slice);
        rec.weight[slice] = in.weights.at(slice);
        auto g = alloc.grants.find(slice);
        rec.granted[slice] = g == alloc.grants.end() ? 0 : static_cast<std::int64_t>(g->second.size());
      }
      for (auto& [pool, rec] : pools) trace.pool_grants.push_back(std::move(rec));
    }
    const auto dci = emit_common_dci(k, alloc.grants);

    for (const auto& entry : dci.entries) {
      auto& as = ap.slices.at(entry.slice);
      auto& slice_flows = active[entry.slice];
      const auto sched = as.sched.schedule(entry.slice, k, entry.cells, slice_flows, ap.grid);
      if (opt.check_invariants) check_assignments(sched, entry.cells);
      emit_slice_dci(entry.slice, k, sched.by_device(), entry.cells);
      if (as.pool) as.idle_cells += sched.idle_cells;
      else as.idle_cells -= static_cast<std::int64_t>(entry.cells.size()) - sched.idle_cells;
      auto result = serve(sched, slice_flows, ap.grid, end);
      as.sched.update_averages(slice_flows, result.bytes);
      if (result.total_bytes > 0) {
        if (opt.keep_trace) trace.service.push_back({now, ap_id, entry.slice, result.total_bytes, as.life.state()});
        engine.emit(entry.slice, ap_id, "served_bytes", static_cast<double>(result.total_bytes));
      }
      for (const auto& d : result.deliveries) {
        as.latency_sum += static_cast<double>(d.latency);
        ++as.latency_count;
      }
      if (!result.deliveries.empty()) {
        engine.schedule(end, ap_id, "mac-deliver", [this, ap_id, deliveries = std::move(result.deliveries)] {
          for (const auto& d : deliveries) on_delivered(ap_id, d);
        });
      }
    }
  }

  // ---- slice lifecycle and access ----------------------------------------

  int member_count(NodeId ap, SliceNetId slice, bool admitted_only) const {
    int n = 0;
    for (const auto& [key, m] : members) {
      if (key.second == slice && m.ap == ap && (!admitted_only || m.admitted)) ++n;
    }
    return n;
  }

  bool slice_on(NodeId ap_id, SliceNetId slice, std::set<Trigger> triggers, std::optional<NodeId> device) {
    auto& ap = aps.at(ap_id);
    auto& as = ap.slices.at(slice);
    if (as.life.state() != SliceState::Inactive) return as.life.state() != SliceState::Deactivating;
    if (!as.spec->resources.blocks.empty()) {
      try {
        ap.grid.carve(slice, carve_request(ap.grid, *as.spec));
      } catch (const CapacityError&) {
        engine.emit(slice, ap_id, "activation_failed", 1);
        return false;
      } catch (const ConflictError&) {
        engine.emit(slice, ap_id, "activation_failed", 1);
        return false;
      }
    }
    as.life.advance(SliceState::Activating, engine.now());
    emit_state(ap_id, slice, SliceState::Activating);
    if (opt.keep_trace) trace.activations.push_back({engine.now(), ap_id, slice, std::move(triggers), device});
    engine.schedule_in(as.spec->ran.activation_latency, ap_id, "slice-active", [this, ap_id, slice] {
      auto& s = aps.at(ap_id).slices.at(slice);
      s.life.advance(SliceState::Active, engine.now());
      s.quiet_since.reset();
      emit_state(ap_id, slice, SliceState::Active);
      for (auto& [key, m] : members) {
        if (key.second == slice && m.ap == ap_id) m.admitted = true;
      }
    });
    return true;
  }

  void slice_off(NodeId ap_id, SliceNetId slice) {
    auto& as = aps.at(ap_id).slices.at(slice);
    as.life.advance(SliceState::Deactivating, engine.now());
    emit_state(ap_id, slice, SliceState::Deactivating);
    for (auto& [key, m] : members) {
      if (key.second == slice && m.ap == ap_id) m.admitted = false;
    }
    engine.schedule_in(as.spec->ran.deactivation_latency, ap_id, "slice-inactive", [this, ap_id, slice] {
      auto& ap = aps.at(ap_id);
      auto& s = ap.slices.at(slice);
      if (ap.grid.subset(slice)) ap.grid.release(slice);
      s.life.advance(SliceState::Inactive, engine.now());
      s.quiet_since.reset();
      emit_state(ap_id, slice, SliceState::Inactive);
    });
  }

  std::optional<NodeId> choose_ap(NodeId device, SliceNetId slice) {
    std::vector<ApCandidate> cands;
    for (const auto& l : sc.links) {
      if (l.device != device) continue;
      const ApSliceRt* as = ap_slice(l.ap, slice);
      if (!as) continue;
      cands.push_back({l.ap, l.quality, as->life.active(), as->eligible});
    }
    return associate(cands, sc.slice(slice)->ran.fallback_link);
  }

  void on_access(const AccessSpec& a) {
    std::optional<NodeId> ap = a.ap ? a.ap : choose_ap(a.device, a.slice);
    if (!ap) {
      engine.emit(a.slice, a.device, "association_wait", 1);
      waiting.push_back(a);
      return;
    }
    ApSliceRt* as = ap_slice(*ap, a.slice);
    if (!as) {
      engine.emit(a.slice, *ap, "access_blocked", static_cast<double>(static_cast<int>(DeclineReason::not_eligible)));
      return;
    }
    if (!a.via_rach) {
      admission(a.device, a.slice, *ap, std::nullopt, a.request_activation);
      return;
    }
    auto& apr = aps.at(*ap);
    std::vector<SliceAirState> air;
    for (const auto& [id, s] : apr.slices) air.push_back({id, s.life.active(), s.spec->rach});
    const auto info = broadcast_system_info(*ap, air, sc.common_rach);
    const bool active = std::binary_search(info.active.begin(), info.active.end(), a.slice);
    const auto route = route_access(active, info.slice_rach.count(a.slice) > 0);
    pending_access[{a.device, a.slice}] = PendingAccess{*ap, route, a.request_activation};
    if (route == RachRoute::slice_specific) {
      as->rach->add(a.device, a.slice, engine.now());
      ensure_opportunity(*ap, a.slice);
    } else {
      apr.common->add(a.device, a.slice, engine.now());
      ensure_opportunity(*ap, std::nullopt);
    }
  }

  void burst(const RachBurstSpec& b) {
    auto& ap = aps.at(b.ap);
    RachChannel* ch = b.common ? ap.common.get() : ap.slices.at(b.slice).rach.get();
    for (int i = 0; i < b.contenders; ++i) {
      NodeId dev(b.first_device + static_cast<std::uint32_t>(i));
      synthetic.insert(dev);
      ch->add(dev, b.slice, engine.now());
    }
    if (b.contenders > 0) ensure_opportunity(b.ap, b.common ? std::nullopt : std::optional<SliceNetId>(b.slice));
  }

  void ensure_opportunity(NodeId ap_id, std::optional<SliceNetId> slice) {
    auto& ap = aps.at(ap_id);
    RachChannel& ch = slice ? *ap.slices.at(*slice).rach : *ap.common;
    auto& scheduled = slice ? ap.slices.at(*slice).rach_scheduled : ap.common_scheduled;
    auto t = ch.next_opportunity();
    if (!t || scheduled.count(*t)) return;
    scheduled.insert(*t);
    engine.schedule(*t, ap_id, "rach-opportunity", [this, ap_id, slice, at = *t] { on_opportunity(ap_id, slice, at); });
  }

  void on_opportunity(NodeId ap_id, std::optional<SliceNetId> slice, Micros at) {
    auto& ap = aps.at(ap_id);
    RachChannel& ch = slice ? *ap.slices.at(*slice).rach : *ap.common;
    (slice ? ap.slices.at(*slice).rach_scheduled : ap.common_scheduled).erase(at);
    RngKey key = slice ? RngKey{"rach", slice->value, ap_id.value} : RngKey{"rach-common", 0, ap_id.value};
    const auto outcomes = ch.resolve(at, engine.rng_for(key));
    for (const auto& o : outcomes) on_rach_outcome(ap_id, !slice, o);
    ensure_opportunity(ap_id, slice);
  }

  void on_rach_outcome(NodeId ap, bool common, const RachOutcome& o) {
    if (opt.keep_trace) trace.rach.push_back({ap, common, o});
    engine.emit(o.slice, ap, "rach_attempts", o.attempts_used);
    if (o.success) engine.emit(o.slice, ap, "access_delay_us", static_cast<double>(o.access_delay));
    else engine.emit(o.slice, ap, "access_blocked", 0);
    if (synthetic.count(o.device)) return;
    auto node = pending_access.extract({o.device, o.slice});
    if (node.empty()) return;
    const PendingAccess p = node.mapped();
    if (!o.success) {
      if (opt.keep_trace) trace.access.push_back({engine.now(), o.device, o.slice, ap, p.route, false, std::nullopt});
      return;
    }
    admission(o.device, o.slice, ap, p.route, p.request_activation);
  }

  void admission(NodeId device, SliceNetId slice, NodeId ap, std::optional<RachRoute> route, bool request_activation) {
    auto& as = aps.at(ap).slices.at(slice);
    AccessRecord rec{engine.now(), device, slice, ap, route, true, std::nullopt};
    if (as.life.state() == SliceState::Inactive && !request_activation) {
      // Waits for the network to bring the slice up.
      members[{device, slice}] = Membership{ap, false};
      if (opt.keep_trace) trace.access.push_back(rec);
      engine.emit(slice, device, "access_waiting", 1);
      return;
    }
    AdmissionContext ctx{as.life.state(), as.load, member_count(ap, slice, false) + 1, as.eligible};
    auto d = admit(device, slice, ap, ctx, as.spec->ran);
    if (d.verdict == Verdict::accept_with_activation && !slice_on(ap, slice, {}, device)) {
      d.verdict = Verdict::decline;
      d.reason = DeclineReason::capacity;
    }
    rec.decision = d;
    if (opt.keep_trace) trace.access.push_back(rec);
    engine.emit(slice, device, "admission_verdict", static_cast<double>(static_cast<int>(d.verdict)));
    if (d.verdict == Verdict::decline) {
      engine.emit(slice, ap, "access_blocked", static_cast<double>(static_cast<int>(d.reason)));
      return;
    }
    members[{device, slice}] = Membership{ap, as.life.active()};
  }

  void handover(NodeId device, SliceNetId slice, NodeId to) {
    ApSliceRt* target = ap_slice(to, slice);
    if (!target) {
      engine.emit(slice, device, "handover_failed", 1);
      return;
    }
    auto it = members.find({device, slice});
    if (it != members.end() && it->second.ap == to) return;
    members[{device, slice}] = Membership{to, target->life.active()};
    if (!target->life.active()) target->handover_pending = true;
    engine.emit(slice, device, "handover", static_cast<double>(to.value));
  }

  void detach(NodeId device, SliceNetId slice) {
    members.erase({device, slice});
    std::int64_t dropped = 0;
    for (auto& [id, f] : flows) {
      if (f.flow.device != device || f.flow.slice != slice) continue;
      dropped += f.flow.backlog;
      f.flow.queue.clear();
      f.flow.backlog = 0;
    }
    if (dropped > 0) engine.emit(slice, device, "dropped_bytes", static_cast<double>(dropped));
  }

  // ---- periodic control --------------------------------------------------

  void control_tick() {
    const Micros now = engine.now();
    const double subframes = static_cast<double>(sc.control_period) / static_cast<double>(sf());
    for (auto& [ap_id, ap] : aps) {
      double overhead = 0.0;
      int active_slices = 0;
      for (auto& [slice, as] : ap.slices) {
        const double capacity = as.nominal_bytes * subframes;
        as.load = capacity > 0 ? static_cast<double>(as.window_bytes) / capacity : 0.0;
        as.window_bytes = 0;
        const auto state = as.life.state();
        if (state == SliceState::Inactive) {
          if (!as.eligible) {
            as.handover_pending = false;
            continue;
          }
          TriggerObservations obs;
          obs.offered_load = as.load;
          obs.active_devices = member_count(ap_id, slice, false);
          obs.incoming_handover = as.handover_pending;
          for (const auto& [id, f] : flows) {
            auto m = members.find({f.flow.device, slice});
            if (f.flow.slice != slice || m == members.end() || m->second.ap != ap_id) continue;
            const double delay = static_cast<double>(f.flow.head_delay(now)) / kMicrosPerMs;
            if (delay > obs.worst_queue_delay_ms) {
              obs.worst_queue_delay_ms = delay;
              obs.latency_budget_ms = f.flow.qos.latency_budget_ms;
            }
          }
          as.handover_pending = false;
          auto fired = evaluate_on_triggers(obs, as.spec->ran);
          if (!fired.empty()) slice_on(ap_id, slice, std::move(fired), std::nullopt);
        } else if (state == SliceState::Active) {
          ++active_slices;
          overhead += control_plane_overhead(configure_cu_plane(as.spec->cu_option), sc.cplane_function_cost, 1);
          engine.emit(slice, ap_id, "slice_load", as.load);
          // Reserved cells nobody used over the control period.
          engine.emit(slice, ap_id, "idle_cells", static_cast<double>(as.idle_cells));
          if (as.latency_count > 0) {
            engine.emit(slice, ap_id, "mean_latency_us", as.latency_sum / static_cast<double>(as.latency_count));
          }
          if (as.load < as.spec->ran.off_load_threshold && member_count(ap_id, slice, false) == 0) {
            if (!as.quiet_since) as.quiet_since = now;
            if (now - *as.quiet_since >= as.spec->ran.off_hold) slice_off(ap_id, slice);
          } else {
            as.quiet_since.reset();
          }
        }
        as.latency_sum = 0;
        as.idle_cells = 0;
        as.latency_count = 0;
      }
      engine.emit(std::nullopt, ap_id, "active_slices", active_slices);
      engine.emit(std::nullopt, ap_id, "cplane_overhead", overhead);
    }
    for (auto& [id, f] : flows) {
      f.last_window_bytes = f.window_bytes;
      f.window_bytes = 0;
    }
    auto retry = std::move(waiting);
    waiting.clear();
    for (const auto& a : retry) on_access(a);
    if (now + sc.control_period <= sc.duration) {
      engine.schedule(now + sc.control_period, NodeId(0), "control", [this] { control_tick(); });
    }
  }

  void balance_tick() {
    const double subframes = static_cast<double>(sc.control_period) / static_cast<double>(sf());
    for (const auto& s : sc.slices) {
      std::vector<BalanceAp> bal_aps;
      for (auto& [ap_id, ap] : aps) {
        auto it = ap.slices.find(s.id);
        if (it != ap.slices.end()) bal_aps.push_back({ap_id, it->second.load, it->second.life.active()});
      }
      if (bal_aps.size() < 2) continue;
      std::map<NodeId, BalanceDevice> devices;
      for (const auto& [id, f] : flows) {
        if (f.flow.slice != s.id) continue;
        auto m = members.find({f.flow.device, s.id});
        if (m == members.end() || !m->second.admitted) continue;
        const ApSliceRt* as = ap_slice(m->second.ap, s.id);
        const double capacity = as->nominal_bytes * subframes;
        auto& d = devices[f.flow.device];
        d.device = f.flow.device;
        d.serving = m->second.ap;
        d.load += capacity > 0 ? static_cast<double>(f.last_window_bytes) / capacity : 0.0;
      }
      if (devices.empty()) continue;
      std::vector<BalanceDevice> list;
      for (auto& [id, d] : devices) {
        for (const auto& l : sc.links) {
          if (l.device == id) d.link[l.ap] = l.quality;
        }
        list.push_back(d);
      }
      for (const auto& r : load_balance(s.id, bal_aps, list, s.ran.balance_threshold, s.ran.fallback_link)) {
        handover(r.device, r.slice, r.to);
      }
    }
    const Micros next = engine.now() + sc.balance_period;
    if (next <= sc.duration) engine.schedule(next, NodeId(0), "balance", [this] { balance_tick(); });
  }
};

Simulation::Simulation(const Scenario& scenario, RunOptions options)
    : impl_(std::make_unique<Impl>(scenario, options)) {
  impl_->build();
}

Simulation::~Simulation() = default;

const MetricsBus& Simulation::run() {
  if (impl_->ran) throw SimError("simulation already ran");
  impl_->ran = true;
  // A zero-length run observes nothing, not even the setup events at t=0.
  if (impl_->sc.duration == 0) return impl_->engine.metrics();
  return impl_->engine.run_until(impl_->sc.duration);
}

Engine& Simulation::engine() { return impl_->engine; }
const Trace& Simulation::trace() const { return impl_->trace; }
const Scenario& Simulation::scenario() const { return impl_->sc; }

SliceState Simulation::slice_state(NodeId ap, SliceNetId slice) const { return lifecycle(ap, slice).state(); }

const SliceLifecycle& Simulation::lifecycle(NodeId ap, SliceNetId slice) const {
  auto* as = impl_->ap_slice(ap, slice);
  if (!as) {
    throw UnknownSliceError("slice " + std::to_string(slice.value) + " is not offered at node " +
                            std::to_string(ap.value));
  }
  return as->life;
}

std::vector<std::pair<NodeId, SliceNetId>> Simulation::lifecycle_keys() const {
  std::vector<std::pair<NodeId, SliceNetId>> out;
  for (const auto& [ap_id, ap] : impl_->aps) {
    for (const auto& [slice, as] : ap.slices) out.emplace_back(ap_id, slice);
  }
  return out;
}

const ResourceGrid& Simulation::grid(NodeId ap) const { return impl_->aps.at(ap).grid; }
const CnFabric& Simulation::cn() const { return *impl_->cn; }
const OffloadManager* Simulation::offload() const { return impl_->offload.get(); }
OffloadManager* Simulation::offload() { return impl_->offload.get(); }

std::optional<NodeId> Simulation::serving_ap(NodeId device, SliceNetId slice) const {
  auto it = impl_->members.find({device, slice});
  if (it == impl_->members.end()) return std::nullopt;
  return it->second.ap;
}

bool Simulation::admitted(NodeId device, SliceNetId slice) const {
  auto it = impl_->members.find({device, slice});
  return it != impl_->members.end() && it->second.admitted;
}

namespace {

// Closed intervals during which the lifecycle was Active.
std::vector<std::pair<Micros, Micros>> active_intervals(const SliceLifecycle& life) {
  std::vector<std::pair<Micros, Micros>> out;
  const auto& h = life.history();
  SliceState state = h.empty() ? life.state() : h.front().from;
  std::optional<Micros> since;
  if (state == SliceState::Active) since = std::numeric_limits<Micros>::min();
  for (const auto& t : h) {
    if (t.to == SliceState::Active) since = t.time;
    if (t.from == SliceState::Active && since) {
      out.emplace_back(*since, t.time);
      since.reset();
    }
  }
  if (since) out.emplace_back(*since, std::numeric_limits<Micros>::max());
  return out;
}

}  // namespace

std::vector<std::string> audit_trace(const Simulation& sim) {
  std::vector<std::string> out;
  const auto& sc = sim.scenario();
  const auto& tr = sim.trace();
  for (const auto& r : tr.cn) {
    if (!path_consistent(r.path, sc.pairing)) {
      out.push_back("pairing: flow " + std::to_string(r.path.flow.value) + " uses (" + r.path.radio + ", " +
                    std::to_string(r.path.ran.value) + ", " + r.path.cn + ") which the map does not allow");
    }
    if (r.origin == SliceKind::horizontal) {
      out.push_back("pairing: horizontal flow " + std::to_string(r.path.flow.value) + " entered the core");
    }
  }
  for (const auto& a : sim.cn().arrivals()) {
    if (a.packet.origin == SliceKind::horizontal) {
      out.push_back("pairing: CN function " + a.function + " received a horizontal-slice packet");
    }
  }
  std::map<std::pair<NodeId, SliceNetId>, std::vector<std::pair<Micros, Micros>>> intervals;
  for (const auto& key : sim.lifecycle_keys()) intervals[key] = active_intervals(sim.lifecycle(key.first, key.second));
  for (const auto& s : tr.service) {
    bool inside = false;
    for (const auto& [a, b] : intervals[{s.ap, s.slice}]) inside = inside || (s.time >= a && s.time <= b);
    if (s.state != SliceState::Active || !inside) {
      out.push_back("lifecycle: " + std::to_string(s.bytes) + " bytes served by slice " + std::to_string(s.slice.value) +
                    " at node " + std::to_string(s.ap.value) + " at " + std::to_string(s.time) + " us outside Active");
    }
  }
  for (const auto& key : sim.lifecycle_keys()) {
    for (const auto& t : sim.lifecycle(key.first, key.second).history()) {
      if (t.from != SliceState::Inactive || t.to != SliceState::Activating) continue;
      bool caused = false;
      for (const auto& a : tr.activations) {
        if (a.ap == key.first && a.slice == key.second && a.time == t.time && (!a.triggers.empty() || a.device)) {
          caused = true;
        }
      }
      if (!caused) {
        out.push_back("lifecycle: slice " + std::to_string(key.second.value) + " at node " +
                      std::to_string(key.first.value) + " activated at " + std::to_string(t.time) +
                      " us without a trigger or admission");
      }
    }
  }
  return out;
}

}  // namespace slicesim
