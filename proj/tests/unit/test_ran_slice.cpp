#include <set>
#include <vector>

#include "doctest.h"
#include "slicesim/errors.hpp"
#include "slicesim/ran_slice.hpp"

using namespace slicesim;

TEST_CASE("quiet observations fire no trigger") {
  CHECK(evaluate_on_triggers({}, RanSliceConfig{.device_threshold = 1}).empty());
}

TEST_CASE("each trigger fires on its own observation") {
  const RanSliceConfig cfg{.load_threshold = 0.5, .device_threshold = 3};
  CHECK(evaluate_on_triggers({.offered_load = 0.6}, cfg) == std::set{Trigger::load_threshold});
  CHECK(evaluate_on_triggers({.offered_load = 0.5}, cfg).empty());
  CHECK(evaluate_on_triggers({.active_devices = 3}, cfg) == std::set{Trigger::active_device_threshold});
  CHECK(evaluate_on_triggers({.active_devices = 2}, cfg).empty());
  CHECK(evaluate_on_triggers({.incoming_handover = true}, cfg) == std::set{Trigger::service_continuity});
  CHECK(evaluate_on_triggers({.worst_queue_delay_ms = 6, .latency_budget_ms = 10}, cfg) ==
        std::set{Trigger::qos_requirement});
  CHECK(evaluate_on_triggers({.worst_queue_delay_ms = 5, .latency_budget_ms = 10}, cfg).empty());
}

TEST_CASE("load 1.2 times the threshold fires the load trigger") {
  const RanSliceConfig cfg{};
  CHECK(evaluate_on_triggers({.offered_load = 1.2 * cfg.load_threshold}, cfg).count(Trigger::load_threshold) == 1);
}

TEST_CASE("lifecycle walks the legal cycle only") {
  SliceLifecycle lc(SliceNetId{3}, NodeId{1});
  CHECK(lc.state() == SliceState::Inactive);
  CHECK_THROWS_AS(lc.advance(SliceState::Active, 0), InvariantViolation);
  lc.advance(SliceState::Activating, 10);
  lc.advance(SliceState::Active, 60);
  CHECK(lc.active());
  CHECK_THROWS_AS(lc.advance(SliceState::Inactive, 70), InvariantViolation);
  lc.advance(SliceState::Deactivating, 80);
  lc.advance(SliceState::Inactive, 80);
  REQUIRE(lc.history().size() == 4);
  CHECK(lc.history()[1].time == 60);
  CHECK(lc.history()[1].to == SliceState::Active);
}

TEST_CASE("admission verdicts") {
  const RanSliceConfig cfg{};
  const NodeId dev{5}, ap{1};
  const SliceNetId s{2};
  CHECK(admit(dev, s, ap, {.state = SliceState::Active, .slice_load = 0.1}, cfg).verdict == Verdict::accept);

  const auto over = admit(dev, s, ap, {.state = SliceState::Active, .slice_load = cfg.admission_threshold}, cfg);
  CHECK(over.verdict == Verdict::decline);
  CHECK(over.reason == DeclineReason::overload);

  CHECK(admit(dev, s, ap, {.state = SliceState::Inactive, .projected_devices = 1}, cfg).verdict ==
        Verdict::accept_with_activation);
  const auto few = admit(dev, s, ap, {.state = SliceState::Inactive, .projected_devices = 1},
                         RanSliceConfig{.min_devices_to_activate = 2});
  CHECK(few.reason == DeclineReason::min_devices);

  const auto costly = admit(dev, s, ap, {.state = SliceState::Inactive, .projected_devices = 2},
                            RanSliceConfig{.revenue_per_device = 1.0, .activation_cost = 5.0});
  CHECK(costly.verdict == Verdict::decline);
  CHECK(costly.reason == DeclineReason::cost);

  CHECK(admit(dev, s, ap, {.state = SliceState::Active, .eligible = false}, cfg).reason == DeclineReason::not_eligible);
  CHECK(admit(dev, s, ap, {.state = SliceState::Deactivating}, cfg).reason == DeclineReason::transitioning);
}

TEST_CASE("accept_with_activation only for inactive slices") {
  for (auto st : {SliceState::Inactive, SliceState::Activating, SliceState::Active, SliceState::Deactivating}) {
    for (double load : {0.0, 0.5, 1.0}) {
      const auto d = admit(NodeId{1}, SliceNetId{1}, NodeId{1}, {.state = st, .slice_load = load}, {});
      if (d.verdict == Verdict::accept_with_activation) CHECK(st == SliceState::Inactive);
    }
  }
}

TEST_CASE("association prefers an AP running the slice") {
  const std::vector<ApCandidate> c{{NodeId{1}, -60, false}, {NodeId{2}, -90, true}};
  CHECK(associate(c, -100) == NodeId{2});
}

TEST_CASE("association falls back on link quality") {
  const std::vector<ApCandidate> weak{{NodeId{1}, -110, false}, {NodeId{2}, -120, false}};
  CHECK_FALSE(associate(weak, -100).has_value());
  const std::vector<ApCandidate> good{{NodeId{1}, -80, false}, {NodeId{2}, -95, false}};
  CHECK(associate(good, -100) == NodeId{1});
  const std::vector<ApCandidate> ineligible{{NodeId{1}, -50, true, false}, {NodeId{2}, -70, false}};
  CHECK(associate(ineligible, -100) == NodeId{2});
}

TEST_CASE("load balancing") {
  const SliceNetId s{4};
  SUBCASE("all under threshold") {
    const std::vector<BalanceDevice> devs{{NodeId{10}, NodeId{1}, 0.2, {{NodeId{2}, -70}}}};
    CHECK(load_balance(s, {{NodeId{1}, 0.5, true}, {NodeId{2}, 0.1, true}}, devs, 0.7, -100).empty());
  }
  SUBCASE("one move from the overloaded AP") {
    // AP1 at 0.9 sheds device 10 (0.3) to AP2 (0.1 -> 0.4); AP1 is then at
    // 0.6, under 0.7, so device 11 stays.
    const std::vector<BalanceDevice> devs{{NodeId{10}, NodeId{1}, 0.3, {{NodeId{2}, -70}}},
                                          {NodeId{11}, NodeId{1}, 0.3, {{NodeId{2}, -70}}}};
    const auto moves = load_balance(s, {{NodeId{1}, 0.9, true}, {NodeId{2}, 0.1, true}}, devs, 0.7, -100);
    REQUIRE(moves.size() == 1);
    CHECK(moves[0].device == NodeId{10});
    CHECK(moves[0].from == NodeId{1});
    CHECK(moves[0].to == NodeId{2});
    CHECK(moves[0].slice == s);
  }
  SUBCASE("no move to an inactive AP or over a bad link") {
    const std::vector<BalanceDevice> devs{{NodeId{10}, NodeId{1}, 0.3, {{NodeId{2}, -120}, {NodeId{3}, -60}}}};
    CHECK(load_balance(s, {{NodeId{1}, 0.9, true}, {NodeId{2}, 0.0, true}, {NodeId{3}, 0.0, false}}, devs, 0.7, -100)
              .empty());
  }
}

TEST_CASE("C/U-plane option placements") {
  const auto o1 = configure_cu_plane(CuOption::option1);
  const auto o2 = configure_cu_plane(CuOption::option2);
  const auto o3 = configure_cu_plane(CuOption::option3);
  CHECK(o1.common_functions().size() == 5);
  CHECK(o2.common_functions().empty());
  CHECK(o2.slice_specific_count() == 5);
  CHECK(o3.common_functions() ==
        std::set{ControlFunction::paging, ControlFunction::cell_reselection, ControlFunction::tracking_area_update});
  CHECK(o3.slice_specific_count() == 2);
  for (auto f : kControlFunctions) {
    const bool idle = f == ControlFunction::paging || f == ControlFunction::cell_reselection ||
                      f == ControlFunction::tracking_area_update;
    CHECK((mode_of(f) == ControlMode::idle) == idle);
  }
}

TEST_CASE("control-plane overhead ordering for any number of active slices") {
  for (int n = 1; n <= 8; ++n) {
    const double c1 = control_plane_overhead(configure_cu_plane(CuOption::option1), 1.5, n);
    const double c2 = control_plane_overhead(configure_cu_plane(CuOption::option2), 1.5, n);
    const double c3 = control_plane_overhead(configure_cu_plane(CuOption::option3), 1.5, n);
    CHECK(c1 <= c3);
    CHECK(c3 <= c2);
    CHECK(c2 == doctest::Approx(5 * 1.5 * n));
    CHECK(c3 == doctest::Approx(2 * 1.5 * n));
  }
}
