#include "slicesim/cn_slice.hpp"

#include <cmath>
#include <memory>

#include "slicesim/errors.hpp"

namespace slicesim {

std::vector<PairingViolation> validate_pairing(const PairingMap& map, const std::set<std::string>& radio_slices,
                                               const std::set<SliceNetId>& ran_slices,
                                               const std::set<std::string>& cn_slices) {
  std::vector<PairingViolation> out;
  std::map<SliceNetId, std::vector<std::string>> radio_parents;
  std::set<std::string> cn_with_parent;

  for (const auto& [radio, rans] : map.radio_to_ran) {
    const std::string loc = "pairing.radio_to_ran." + radio;
    if (!radio_slices.count(radio)) out.push_back({loc, "unknown radio slice '" + radio + "'"});
    for (auto r : rans) {
      if (!ran_slices.count(r)) {
        out.push_back({loc, "unknown RAN slice " + std::to_string(r.value)});
      }
      radio_parents[r].push_back(radio);
    }
  }
  for (const auto& [ran, cns] : map.ran_to_cn) {
    const std::string loc = "pairing.ran_to_cn." + std::to_string(ran.value);
    if (!ran_slices.count(ran)) out.push_back({loc, "unknown RAN slice " + std::to_string(ran.value)});
    for (const auto& cn : cns) {
      if (!cn_slices.count(cn)) out.push_back({loc, "unknown CN slice '" + cn + "'"});
      cn_with_parent.insert(cn);
    }
  }
  for (auto r : ran_slices) {
    auto it = radio_parents.find(r);
    if (it == radio_parents.end()) {
      out.push_back({"pairing.radio_to_ran", "RAN slice " + std::to_string(r.value) + " has no radio slice"});
    } else if (it->second.size() > 1) {
      out.push_back({"pairing.radio_to_ran", "RAN slice " + std::to_string(r.value) + " appears under " +
                                                 std::to_string(it->second.size()) + " radio slices"});
    }
  }
  for (const auto& cn : cn_slices) {
    if (!cn_with_parent.count(cn)) {
      out.push_back({"pairing.ran_to_cn", "CN slice '" + cn + "' is referenced by no RAN slice"});
    }
  }
  return out;
}

E2EFlowPath resolve_path(FlowId flow, SliceNetId ran, const std::string& service, Direction direction,
                         const PairingMap& map, const std::map<std::string, CnSlice>& cn_slices) {
  std::string radio;
  for (const auto& [r, rans] : map.radio_to_ran) {
    if (rans.count(ran)) {
      radio = r;
      break;
    }
  }
  auto it = map.ran_to_cn.find(ran);
  if (radio.empty() || it == map.ran_to_cn.end()) {
    throw NoPathError("RAN slice " + std::to_string(ran.value) + " is not paired");
  }
  for (const auto& cn : it->second) {  // std::set: ascending id
    auto c = cn_slices.find(cn);
    if (c != cn_slices.end() && c->second.service == service) {
      return E2EFlowPath{flow, radio, ran, cn, direction};
    }
  }
  throw NoPathError("no CN slice paired to RAN slice " + std::to_string(ran.value) +
                    " serves '" + service + "'");
}

bool horizontal_termination(SliceKind kind) { return kind == SliceKind::horizontal; }

bool path_consistent(const E2EFlowPath& path, const PairingMap& map) {
  auto r = map.radio_to_ran.find(path.radio);
  if (r == map.radio_to_ran.end() || !r->second.count(path.ran)) return false;
  auto c = map.ran_to_cn.find(path.ran);
  return c != map.ran_to_cn.end() && c->second.count(path.cn) > 0;
}

CnFabric::CnFabric(Engine& engine, std::vector<VirtualFunction> functions, std::vector<CnSlice> slices)
    : engine_(engine) {
  for (auto& f : functions) {
    if (!(f.processing_rate_per_ms > 0)) {
      throw SimError("virtual function '" + f.name + "' needs a positive processing rate");
    }
    auto name = f.name;
    if (!functions_.emplace(name, FunctionState{std::move(f), 0, 0, {}}).second) {
      throw SimError("duplicate virtual function '" + name + "'");
    }
  }
  for (auto& s : slices) {
    if (s.chain.empty()) throw SimError("CN slice '" + s.id + "' has an empty chain");
    for (const auto& fn : s.chain) {
      if (!functions_.count(fn)) {
        throw SimError("CN slice '" + s.id + "' uses unknown function '" + fn + "'");
      }
    }
    auto id = s.id;
    slices_.emplace(id, std::move(s));
  }
}

const VirtualFunction& CnFabric::function(const std::string& name) const {
  return functions_.at(name).spec;
}

void CnFabric::submit(CnPacket packet, std::function<void(Micros)> on_exit) {
  if (!slices_.count(packet.cn_slice)) {
    throw NoPathError("unknown CN slice '" + packet.cn_slice + "'");
  }
  arrive(0, std::make_shared<const CnPacket>(std::move(packet)), std::move(on_exit));
}

void CnFabric::arrive(std::size_t hop, std::shared_ptr<const CnPacket> packet,
                      std::function<void(Micros)> on_exit) {
  const auto& chain = slices_.at(packet->cn_slice).chain;
  auto& fn = functions_.at(chain[hop]);
  const Micros now = engine_.now();
  arrivals_.push_back(Arrival{now, fn.spec.name, *packet});

  const Micros start = std::max(now, fn.busy_until);
  const auto service = static_cast<Micros>(std::ceil(1000.0 / fn.spec.processing_rate_per_ms));
  fn.busy_until = start + service;
  ++fn.served;
  ++fn.served_by_slice[packet->cn_slice];
  const Micros departure = start + fn.spec.per_packet_latency;

  if (hop + 1 == chain.size()) {
    if (on_exit) {
      engine_.schedule(departure, fn.spec.host, "cn-exit",
                       [cb = std::move(on_exit), departure] { cb(departure); });
    }
    return;
  }
  const auto next_host = functions_.at(chain[hop + 1]).spec.host;
  engine_.schedule(departure, next_host, "cn-hop",
                   [this, hop, packet, cb = std::move(on_exit)]() mutable { arrive(hop + 1, packet, std::move(cb)); });
}

std::uint64_t CnFabric::served(const std::string& function) const {
  auto it = functions_.find(function);
  return it == functions_.end() ? 0 : it->second.served;
}

std::uint64_t CnFabric::served(const std::string& function, const std::string& cn_slice) const {
  auto it = functions_.find(function);
  if (it == functions_.end()) return 0;
  auto s = it->second.served_by_slice.find(cn_slice);
  return s == it->second.served_by_slice.end() ? 0 : s->second;
}

}  // namespace slicesim
