#include "slicesim/ran_slice.hpp"

#include <algorithm>

#include "slicesim/errors.hpp"

namespace slicesim {

std::string_view to_string(SliceState s) {
  switch (s) {
    case SliceState::Inactive: return "Inactive";
    case SliceState::Activating: return "Activating";
    case SliceState::Active: return "Active";
    case SliceState::Deactivating: return "Deactivating";
  }
  return "?";
}

std::string_view to_string(Trigger t) {
  switch (t) {
    case Trigger::load_threshold: return "load_threshold";
    case Trigger::active_device_threshold: return "active_device_threshold";
    case Trigger::service_continuity: return "service_continuity";
    case Trigger::qos_requirement: return "qos_requirement";
  }
  return "?";
}

std::set<Trigger> evaluate_on_triggers(const TriggerObservations& obs, const RanSliceConfig& cfg) {
  std::set<Trigger> fired;
  if (obs.offered_load > cfg.load_threshold) fired.insert(Trigger::load_threshold);
  if (cfg.device_threshold > 0 && obs.active_devices >= cfg.device_threshold) {
    fired.insert(Trigger::active_device_threshold);
  }
  if (obs.incoming_handover) fired.insert(Trigger::service_continuity);
  if (obs.worst_queue_delay_ms > obs.latency_budget_ms / 2.0) fired.insert(Trigger::qos_requirement);
  return fired;
}

SliceLifecycle::SliceLifecycle(SliceNetId slice, NodeId ap, SliceState initial)
    : slice_(slice), ap_(ap), state_(initial) {}

void SliceLifecycle::advance(SliceState to, Micros now) {
  const auto next = [](SliceState s) {
    switch (s) {
      case SliceState::Inactive: return SliceState::Activating;
      case SliceState::Activating: return SliceState::Active;
      case SliceState::Active: return SliceState::Deactivating;
      case SliceState::Deactivating: return SliceState::Inactive;
    }
    return SliceState::Inactive;
  };
  if (next(state_) != to) {
    throw InvariantViolation("illegal lifecycle transition " + std::string(to_string(state_)) + " -> " +
                             std::string(to_string(to)) + " for slice " + std::to_string(slice_.value) +
                             " at AP " + std::to_string(ap_.value));
  }
  history_.push_back({now, state_, to});
  state_ = to;
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::accept: return "accept";
    case Verdict::accept_with_activation: return "accept_with_activation";
    case Verdict::decline: return "decline";
  }
  return "?";
}

std::string_view to_string(DeclineReason r) {
  switch (r) {
    case DeclineReason::none: return "none";
    case DeclineReason::overload: return "overload";
    case DeclineReason::cost: return "cost";
    case DeclineReason::min_devices: return "min_devices";
    case DeclineReason::not_eligible: return "not_eligible";
    case DeclineReason::transitioning: return "transitioning";
    case DeclineReason::capacity: return "capacity";
  }
  return "?";
}

AdmissionDecision admit(NodeId device, SliceNetId slice, NodeId ap, const AdmissionContext& ctx,
                        const RanSliceConfig& cfg) {
  AdmissionDecision d{device, slice, ap, Verdict::decline, DeclineReason::none};
  if (!ctx.eligible) {
    d.reason = DeclineReason::not_eligible;
    return d;
  }
  switch (ctx.state) {
    case SliceState::Active:
    case SliceState::Activating:
      if (ctx.slice_load < cfg.admission_threshold) {
        d.verdict = Verdict::accept;
      } else {
        d.reason = DeclineReason::overload;
      }
      return d;
    case SliceState::Deactivating:
      d.reason = DeclineReason::transitioning;
      return d;
    case SliceState::Inactive:
      if (ctx.projected_devices < cfg.min_devices_to_activate) {
        d.reason = DeclineReason::min_devices;
      } else if (ctx.projected_devices * cfg.revenue_per_device < cfg.activation_cost) {
        d.reason = DeclineReason::cost;
      } else {
        d.verdict = Verdict::accept_with_activation;
      }
      return d;
  }
  return d;
}

std::optional<NodeId> associate(std::span<const ApCandidate> candidates, double fallback_threshold) {
  const ApCandidate* best_active = nullptr;
  const ApCandidate* best_any = nullptr;
  const auto better = [](const ApCandidate* cur, const ApCandidate& c) {
    return cur == nullptr || c.link_quality > cur->link_quality ||
           (c.link_quality == cur->link_quality && c.ap < cur->ap);
  };
  for (const auto& c : candidates) {
    if (!c.eligible) continue;
    if (c.slice_active && better(best_active, c)) best_active = &c;
    if (better(best_any, c)) best_any = &c;
  }
  if (best_active) return best_active->ap;
  if (best_any && best_any->link_quality >= fallback_threshold) return best_any->ap;
  return std::nullopt;
}

std::vector<Reassignment> load_balance(SliceNetId slice, std::vector<BalanceAp> aps,
                                       std::span<const BalanceDevice> devices, double threshold,
                                       double min_link) {
  std::sort(aps.begin(), aps.end(), [](const BalanceAp& a, const BalanceAp& b) { return a.ap < b.ap; });
  std::vector<const BalanceDevice*> order;
  for (const auto& d : devices) order.push_back(&d);
  std::sort(order.begin(), order.end(),
            [](const BalanceDevice* a, const BalanceDevice* b) { return a->device < b->device; });
  std::map<NodeId, NodeId> serving;
  for (const auto* d : order) serving[d->device] = d->serving;

  std::vector<Reassignment> moves;
  for (auto& src : aps) {
    if (!src.active || src.load <= threshold) continue;
    for (const auto* d : order) {
      if (src.load <= threshold) break;
      if (serving[d->device] != src.ap) continue;
      BalanceAp* target = nullptr;
      for (auto& dst : aps) {
        if (dst.ap == src.ap || !dst.active) continue;
        auto link = d->link.find(dst.ap);
        if (link == d->link.end() || link->second < min_link) continue;
        if (dst.load + d->load > threshold) continue;
        if (target == nullptr || dst.load < target->load) target = &dst;
      }
      if (target == nullptr) continue;
      src.load -= d->load;
      target->load += d->load;
      serving[d->device] = target->ap;
      moves.push_back(Reassignment{slice, d->device, src.ap, target->ap});
    }
  }
  return moves;
}

ControlMode mode_of(ControlFunction f) {
  switch (f) {
    case ControlFunction::paging:
    case ControlFunction::cell_reselection:
    case ControlFunction::tracking_area_update:
      return ControlMode::idle;
    case ControlFunction::handover:
    case ControlFunction::dedicated_bearer_setup:
      return ControlMode::connected;
  }
  return ControlMode::connected;
}

std::string_view to_string(ControlFunction f) {
  switch (f) {
    case ControlFunction::paging: return "paging";
    case ControlFunction::cell_reselection: return "cell_reselection";
    case ControlFunction::tracking_area_update: return "tracking_area_update";
    case ControlFunction::handover: return "handover";
    case ControlFunction::dedicated_bearer_setup: return "dedicated_bearer_setup";
  }
  return "?";
}

int CuPlaneConfig::slice_specific_count() const {
  return static_cast<int>(std::count_if(placement.begin(), placement.end(), [](const auto& kv) {
    return kv.second == Placement::slice_specific;
  }));
}

std::set<ControlFunction> CuPlaneConfig::common_functions() const {
  std::set<ControlFunction> out;
  for (const auto& [f, p] : placement) {
    if (p == Placement::common) out.insert(f);
  }
  return out;
}

CuPlaneConfig configure_cu_plane(CuOption option) {
  CuPlaneConfig cfg{option, {}};
  for (auto f : kControlFunctions) {
    Placement p = Placement::common;
    switch (option) {
      case CuOption::option1: p = Placement::common; break;
      case CuOption::option2: p = Placement::slice_specific; break;
      case CuOption::option3:
        p = mode_of(f) == ControlMode::idle ? Placement::common : Placement::slice_specific;
        break;
    }
    cfg.placement[f] = p;
  }
  return cfg;
}

double control_plane_overhead(const CuPlaneConfig& cfg, double per_function_cost, int active_slices) {
  return cfg.slice_specific_count() * per_function_cost * active_slices;
}

}  // namespace slicesim
