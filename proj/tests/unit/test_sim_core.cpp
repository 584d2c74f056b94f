#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "slicesim/errors.hpp"
#include "slicesim/sim_core.hpp"

using namespace slicesim;

TEST_CASE("events at equal time fire in scheduling order") {
  Engine e(1);
  std::string order;
  e.schedule(5, NodeId{0}, "a", [&] { order += 'A'; });
  e.schedule(5, NodeId{0}, "b", [&] { order += 'B'; });
  e.schedule(2, NodeId{0}, "c", [&] { order += 'C'; });
  e.run_until(10);
  CHECK(order == "CAB");
  CHECK(e.now() == 10);
}

TEST_CASE("event at the current clock fires on the next step") {
  Engine e(1);
  bool fired = false;
  e.schedule(0, NodeId{0}, "now", [&] { fired = true; });
  e.run_until(0);
  CHECK(fired);
}

TEST_CASE("scheduling into the past is rejected") {
  Engine e(1);
  e.run_until(7);
  CHECK_THROWS_AS(e.schedule(3, NodeId{0}, "late", [] {}), ScheduleError);
}

TEST_CASE("empty queue advances the clock with no records") {
  Engine e(1);
  const auto& m = e.run_until(1000);
  CHECK(e.now() == 1000);
  CHECK(m.size() == 0);
}

TEST_CASE("events past the horizon stay queued and later runs pick them up") {
  Engine e(1);
  int n = 0;
  for (Micros t = 0; t <= 20; t += 5) e.schedule(t, NodeId{0}, "tick", [&] { ++n; });
  e.run_until(10);
  CHECK(n == 3);
  CHECK(e.pending() == 2);
  e.run_until(20);
  CHECK(n == 5);
  CHECK(e.processed() == 5);
}

TEST_CASE("periodic source at 1 ms over 10 ms yields 10 arrivals") {
  Engine e(1);
  std::function<void()> arrive = [&] {
    e.emit(SliceNetId{1}, NodeId{1}, "arrival_bytes", 100);
    e.schedule_in(kMicrosPerMs, NodeId{1}, "arrival", arrive);
  };
  e.schedule(kMicrosPerMs, NodeId{1}, "arrival", arrive);
  const auto& m = e.run_until(10 * kMicrosPerMs);
  CHECK(m.size() == 10);
}

TEST_CASE("handler errors carry the event context") {
  Engine e(1);
  e.schedule(42, NodeId{9}, "boom", [] { throw std::logic_error("inner cause"); });
  try {
    e.run_until(100);
    FAIL("expected an error");
  } catch (const EventError& err) {
    const auto msg = describe_exception(err);
    CHECK(msg.find("boom") != std::string::npos);
    CHECK(msg.find("42") != std::string::npos);
    CHECK(msg.find("inner cause") != std::string::npos);
  }
}

TEST_CASE("rng_for returns the same stream object for a key") {
  Engine e(7);
  auto& a = e.rng_for({"rach", 1, 0});
  a.next();
  auto& b = e.rng_for({"rach", 1, 0});
  CHECK(&a == &b);
  CHECK(b.draws() == 1);
}

TEST_CASE("streams for different slices differ over the first 100 draws") {
  Engine e(7);
  auto& s1 = e.rng_for({"rach", 1, 0});
  auto& s2 = e.rng_for({"rach", 2, 0});
  int equal = 0;
  for (int i = 0; i < 100; ++i) equal += s1.next() == s2.next();
  CHECK(equal == 0);
}

TEST_CASE("master seed changes the first draw of a key") {
  Engine a(1), b(2);
  CHECK(a.rng_for({"traffic", 3, 4}).next() != b.rng_for({"traffic", 3, 4}).next());
}

TEST_CASE("same key and seed replay the same sequence") {
  RngStream a({"x", 1, 2}, derive_seed(99, {"x", 1, 2}));
  RngStream b({"x", 1, 2}, derive_seed(99, {"x", 1, 2}));
  for (int i = 0; i < 1000; ++i) REQUIRE(a.next() == b.next());
}

TEST_CASE("draws on one stream never perturb another") {
  Engine quiet(5), noisy(5);
  std::vector<std::uint64_t> ref, got;
  for (int i = 0; i < 50; ++i) ref.push_back(quiet.rng_for({"rach", 2, 1}).next());
  for (int i = 0; i < 50; ++i) {
    for (int k = 0; k < 37; ++k) noisy.rng_for({"rach", 1, 1}).next();
    got.push_back(noisy.rng_for({"rach", 2, 1}).next());
  }
  CHECK(ref == got);
}

TEST_CASE("derived seeds separate module, slice and node fields") {
  const auto s = derive_seed(1, {"rach", 1, 2});
  CHECK(s != derive_seed(1, {"rach", 2, 1}));
  CHECK(s != derive_seed(1, {"rach-common", 1, 2}));
  CHECK(s != derive_seed(2, {"rach", 1, 2}));
  CHECK(s == derive_seed(1, {"rach", 1, 2}));
}

TEST_CASE("uniform_int stays in range and hits both ends") {
  RngStream r({"t", 0, 0}, 123);
  bool lo = false, hi = false;
  for (int i = 0; i < 20000; ++i) {
    const auto v = r.uniform_int(3, 9);
    REQUIRE(v >= 3);
    REQUIRE(v <= 9);
    lo |= v == 3;
    hi |= v == 9;
  }
  CHECK(lo);
  CHECK(hi);
}

TEST_CASE("exponential draws have the requested mean") {
  RngStream r({"t", 0, 0}, 321);
  const int n = 200000;
  double sum = 0;
  for (int i = 0; i < n; ++i) sum += r.exponential(5.0);
  // standard error of the mean is 5/sqrt(n) ~ 0.011
  CHECK(sum / n == doctest::Approx(5.0).epsilon(0.01));
}

TEST_CASE("metric records must not go back in time") {
  MetricsBus bus;
  bus.emit({10, {}, {}, "a", 1});
  bus.emit({10, {}, {}, "b", 1});
  CHECK_THROWS_AS(bus.emit({9, {}, {}, "c", 1}), InvariantViolation);
}

TEST_CASE("metrics CSV round-trips") {
  MetricsBus bus;
  bus.emit({0, SliceNetId{1}, NodeId{2}, "served_bytes", 1500});
  bus.emit({5, {}, NodeId{3}, "cplane_overhead", 0.1 + 0.2});
  bus.emit({7, SliceNetId{65535}, {}, "ratio", -1e-300});
  bus.emit({9, {}, {}, "big", 123456789012345.0});
  const auto csv = bus.to_csv();
  CHECK(csv.rfind("time_us,slice_id,node_id,metric,value\n", 0) == 0);
  CHECK(csv.find("0,1,2,served_bytes,1500\n") != std::string::npos);
  CHECK(csv.find("5,,3,cplane_overhead,") != std::string::npos);
  std::istringstream in(csv);
  const auto back = parse_metrics_csv(in);
  REQUIRE(back.size() == bus.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    const auto& a = bus.records()[i];
    const auto& b = back[i];
    CHECK(a.time == b.time);
    CHECK(a.slice == b.slice);
    CHECK(a.node == b.node);
    CHECK(a.metric == b.metric);
    CHECK(a.value == b.value);
  }
}

TEST_CASE("format_value is shortest round-trip") {
  CHECK(format_value(3) == "3");
  CHECK(format_value(-0.5) == "-0.5");
  CHECK(format_value(0.1) == "0.1");
  RngStream r({"fmt", 0, 0}, 77);
  for (int i = 0; i < 2000; ++i) {
    const double v = (r.uniform01() - 0.5) * std::pow(10.0, static_cast<double>(r.uniform_int(0, 30)) - 15);
    REQUIRE(std::stod(format_value(v)) == v);
  }
}

TEST_CASE("a malformed CSV is reported with its line") {
  std::istringstream in("time_us,slice_id,node_id,metric,value\n1,2,3,m\n");
  CHECK_THROWS_WITH_AS(parse_metrics_csv(in), doctest::Contains("line 2"), SimError);
}
