#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "slicesim/radio_grid.hpp"
#include "slicesim/sim_core.hpp"
#include "slicesim/types.hpp"

namespace slicesim {

enum class SliceState { Inactive, Activating, Active, Deactivating };
std::string_view to_string(SliceState s);

enum class Trigger { load_threshold, active_device_threshold, service_continuity, qos_requirement };
std::string_view to_string(Trigger t);

/// Per-slice RAN parameters. All thresholds are fractions of the slice's
/// nominal capacity at the access point unless stated otherwise.
struct RanSliceConfig {
  Micros activation_latency = 50 * kMicrosPerMs;
  Micros deactivation_latency = 0;
  Micros off_hold = kMicrosPerSecond;
  double load_threshold = 0.8;
  int device_threshold = 1;
  double off_load_threshold = 0.05;
  double admission_threshold = 0.95;
  double balance_threshold = 0.7;
  double fallback_link = -100.0;
  int min_devices_to_activate = 1;
  /// Benefit rule for device-initiated activation: decline when
  /// projected_devices * revenue_per_device < activation_cost.
  double revenue_per_device = 1.0;
  double activation_cost = 0.0;
  /// Access point classes the slice may run on (empty: any).
  std::set<std::string> eligible_classes;
};

struct TriggerObservations {
  double offered_load = 0.0;
  int active_devices = 0;
  bool incoming_handover = false;
  /// Worst head-of-line queueing delay among the slice's waiting flows, and
  /// that flow's latency budget.
  double worst_queue_delay_ms = 0.0;
  double latency_budget_ms = std::numeric_limits<double>::infinity();
};

/// Triggers firing for a slice at an access point: offered load above the
/// load threshold; device count at or above the device threshold; an
/// incoming handover of a device on the slice; or a queueing delay above
/// half the latency budget.
std::set<Trigger> evaluate_on_triggers(const TriggerObservations& obs, const RanSliceConfig& cfg);

/// Legal order: Inactive -> Activating -> Active -> Deactivating -> Inactive.
class SliceLifecycle {
 public:
  struct Transition {
    Micros time;
    SliceState from;
    SliceState to;
  };

  SliceLifecycle(SliceNetId slice, NodeId ap, SliceState initial = SliceState::Inactive);

  SliceNetId slice() const { return slice_; }
  NodeId ap() const { return ap_; }
  SliceState state() const { return state_; }
  bool active() const { return state_ == SliceState::Active; }
  const std::vector<Transition>& history() const { return history_; }

  /// Throws InvariantViolation on an illegal transition.
  void advance(SliceState to, Micros now);

 private:
  SliceNetId slice_;
  NodeId ap_;
  SliceState state_;
  std::vector<Transition> history_;
};

enum class Verdict { accept, accept_with_activation, decline };
enum class DeclineReason { none, overload, cost, min_devices, not_eligible, transitioning, capacity };
std::string_view to_string(Verdict v);
std::string_view to_string(DeclineReason r);

struct AdmissionDecision {
  NodeId device;
  SliceNetId slice;
  NodeId ap;
  Verdict verdict = Verdict::decline;
  DeclineReason reason = DeclineReason::none;
};

struct AdmissionContext {
  SliceState state = SliceState::Inactive;
  double slice_load = 0.0;
  int projected_devices = 1;
  bool eligible = true;
};

AdmissionDecision admit(NodeId device, SliceNetId slice, NodeId ap, const AdmissionContext& ctx,
                        const RanSliceConfig& cfg);

struct ApCandidate {
  NodeId ap;
  double link_quality = 0.0;
  bool slice_active = false;
  bool eligible = true;
};

/// Prefers eligible APs running the slice, best link first; otherwise the
/// best eligible AP whose link reaches the fallback threshold.
std::optional<NodeId> associate(std::span<const ApCandidate> candidates, double fallback_threshold);

struct BalanceAp {
  NodeId ap;
  double load = 0.0;
  bool active = false;
};

struct BalanceDevice {
  NodeId device;
  NodeId serving;
  double load = 0.0;
  std::map<NodeId, double> link;
};

struct Reassignment {
  SliceNetId slice;
  NodeId device;
  NodeId from;
  NodeId to;
};

/// Greedy per-slice balancing. Overloaded APs (load above threshold) are
/// visited in ascending id; their devices, in ascending id, move to the
/// least-loaded other Active AP whose link is at least `min_link` and whose
/// load stays within the threshold after the move. Stops per AP once it is
/// no longer overloaded.
std::vector<Reassignment> load_balance(SliceNetId slice, std::vector<BalanceAp> aps,
                                       std::span<const BalanceDevice> devices, double threshold,
                                       double min_link);

enum class CuOption { option1 = 1, option2 = 2, option3 = 3 };
enum class ControlFunction { paging, cell_reselection, tracking_area_update, handover, dedicated_bearer_setup };
enum class ControlMode { idle, connected };
enum class Placement { common, slice_specific };

inline constexpr ControlFunction kControlFunctions[] = {
    ControlFunction::paging, ControlFunction::cell_reselection, ControlFunction::tracking_area_update,
    ControlFunction::handover, ControlFunction::dedicated_bearer_setup};

ControlMode mode_of(ControlFunction f);
std::string_view to_string(ControlFunction f);

struct CuPlaneConfig {
  CuOption option = CuOption::option1;
  std::map<ControlFunction, Placement> placement;

  int slice_specific_count() const;
  std::set<ControlFunction> common_functions() const;
};

CuPlaneConfig configure_cu_plane(CuOption option);

/// Slice-specific control functions x per-function cost x active slices.
double control_plane_overhead(const CuPlaneConfig& cfg, double per_function_cost, int active_slices);

}  // namespace slicesim
