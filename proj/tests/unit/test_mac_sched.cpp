#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "slicesim/errors.hpp"
#include "slicesim/mac_sched.hpp"
#include "slicesim/sim_core.hpp"

using namespace slicesim;

namespace {

// Water level by bisection: share_i = min(d_i, w_i * level), sum = capacity.
std::vector<double> bisection_oracle(const std::vector<double>& d, const std::vector<double>& w, double cap) {
  const double total = std::accumulate(d.begin(), d.end(), 0.0);
  auto at = [&](double level) {
    std::vector<double> s(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) s[i] = std::min(d[i], w[i] * level);
    return s;
  };
  if (total <= cap) return d;
  double lo = 0, hi = 1;
  auto sum = [&](double level) {
    const auto s = at(level);
    return std::accumulate(s.begin(), s.end(), 0.0);
  };
  while (sum(hi) < cap) hi *= 2;
  for (int it = 0; it < 200; ++it) {
    const double mid = (lo + hi) / 2;
    (sum(mid) < cap ? lo : hi) = mid;
  }
  return at(hi);
}

// Weighted max-min integer split by exhaustive search: among all integer
// splits that hand out min(cap, sum d), the one whose ascending vector of
// x_i / w_i is lexicographically largest.
std::vector<std::int64_t> brute_force_cells(const std::vector<std::int64_t>& d, const std::vector<double>& w,
                                            std::int64_t cap) {
  const std::int64_t target = std::min(cap, std::accumulate(d.begin(), d.end(), std::int64_t{0}));
  std::vector<std::int64_t> cur(d.size()), best;
  std::vector<double> best_key;
  std::function<void(std::size_t, std::int64_t)> rec = [&](std::size_t i, std::int64_t left) {
    if (i == d.size()) {
      if (left != 0) return;
      std::vector<double> key;
      for (std::size_t k = 0; k < d.size(); ++k) key.push_back(static_cast<double>(cur[k]) / w[k]);
      std::sort(key.begin(), key.end());
      if (best.empty() || key > best_key) {
        best = cur;
        best_key = key;
      }
      return;
    }
    for (std::int64_t x = 0; x <= std::min(d[i], left); ++x) {
      cur[i] = x;
      rec(i + 1, left - x);
    }
  };
  rec(0, target);
  return best;
}

ResourceGrid pool_grid(int blocks = 100) {
  const auto cat = default_numerologies();
  return ResourceGrid::partition({blocks, 1, {{"pool", 0, 0, blocks, {}, true}}}, cat);
}

ResourceGrid carved_grid() {
  const auto cat = default_numerologies();
  return ResourceGrid::partition({100, 1, {{"static", 0, 0, 100, {}, false}}}, cat);
}

std::vector<TrafficFlow*> ptrs(std::vector<TrafficFlow>& flows) {
  std::vector<TrafficFlow*> v;
  for (auto& f : flows) v.push_back(&f);
  return v;
}

TrafficFlow flow(std::uint32_t id, std::int64_t backlog, double avg = 1.0) {
  TrafficFlow f;
  f.id = FlowId{id};
  f.device = NodeId{id};
  f.slice = SliceNetId{1};
  if (backlog > 0) f.push(backlog, 0);
  f.avg_rate_kbps = avg;
  return f;
}

}  // namespace

TEST_CASE("shared-pool worked splits") {
  struct Case {
    std::vector<double> w;
    std::vector<std::int64_t> expect;
  };
  for (const auto& c : {Case{{1, 1}, {50, 50}}, Case{{3, 1}, {75, 25}}, Case{{2, 3}, {40, 60}}}) {
    const std::vector<std::int64_t> d{80, 80};
    CHECK(weighted_max_min_cells(d, c.w, 100) == c.expect);
    CHECK(brute_force_cells(d, c.w, 100) == c.expect);
  }
}

TEST_CASE("a slice demanding less than its share frees the rest") {
  const std::vector<std::int64_t> d{10, 100};
  const std::vector<double> w{1, 1};
  CHECK(weighted_max_min_cells(d, w, 100) == std::vector<std::int64_t>{10, 90});
}

TEST_CASE("real-valued split agrees with the bisection oracle") {
  RngStream rng({"wmm", 0, 0}, 5);
  for (int t = 0; t < 2000; ++t) {
    const auto n = rng.uniform_int(1, 6);
    std::vector<double> d, w;
    for (std::uint64_t i = 0; i < n; ++i) {
      d.push_back(static_cast<double>(rng.uniform_int(0, 100)));
      w.push_back(0.25 * static_cast<double>(rng.uniform_int(1, 16)));
    }
    const double cap = static_cast<double>(rng.uniform_int(0, 300));
    const auto got = weighted_max_min(d, w, cap);
    const auto want = bisection_oracle(d, w, cap);
    for (std::size_t i = 0; i < n; ++i) REQUIRE(got[i] == doctest::Approx(want[i]).epsilon(1e-6));
  }
}

TEST_CASE("integer split is feasible and within one cell of the oracles") {
  RngStream rng({"wmm-int", 0, 0}, 9);
  for (int t = 0; t < 600; ++t) {
    const auto n = rng.uniform_int(2, 3);
    std::vector<std::int64_t> d;
    std::vector<double> dr, w;
    for (std::uint64_t i = 0; i < n; ++i) {
      d.push_back(static_cast<std::int64_t>(rng.uniform_int(0, 14)));
      dr.push_back(static_cast<double>(d.back()));
      w.push_back(static_cast<double>(rng.uniform_int(1, 4)));
    }
    const auto cap = static_cast<std::int64_t>(rng.uniform_int(0, 20));
    const auto got = weighted_max_min_cells(d, w, cap);
    const auto real = bisection_oracle(dr, w, static_cast<double>(cap));
    const auto brute = brute_force_cells(d, w, cap);
    const auto sum = std::accumulate(got.begin(), got.end(), std::int64_t{0});
    REQUIRE(sum == std::min(cap, std::accumulate(d.begin(), d.end(), std::int64_t{0})));
    for (std::size_t i = 0; i < n; ++i) {
      REQUIRE(got[i] <= d[i]);
      REQUIRE(std::abs(static_cast<double>(got[i]) - real[i]) < 1.0 + 1e-9);
      REQUIRE(std::abs(got[i] - brute[i]) <= 1);
    }
  }
}

TEST_CASE("Level-2 grant for a carved slice") {
  auto g = carved_grid();
  g.carve(SliceNetId{1}, CarveRequest{{{0, 50}}, {}});
  Level2Input in;
  in.demands[SliceNetId{1}] = 50;
  auto a = l2_allocate(0, g, in);
  CHECK(a.grants.at(SliceNetId{1}) == g.subset(SliceNetId{1})->cells);
  CHECK(a.unsatisfied.empty());
  in.demands[SliceNetId{1}] = 70;
  a = l2_allocate(0, g, in);
  CHECK(a.grants.at(SliceNetId{1}).size() == 50);
  CHECK(a.unsatisfied.at(SliceNetId{1}) == 20);
}

TEST_CASE("Level-2 with no demand grants nothing") {
  auto g = carved_grid();
  g.carve(SliceNetId{1}, CarveRequest{{{0, 50}}, {}});
  CHECK(l2_allocate(0, g, {}).grants.empty());
  Level2Input in;
  in.demands[SliceNetId{1}] = 0;
  CHECK(l2_allocate(0, g, in).grants.empty());
}

TEST_CASE("Level-2 demand from a slice without resources is an error") {
  const auto g = carved_grid();
  Level2Input in;
  in.demands[SliceNetId{4}] = 3;
  CHECK_THROWS_AS(l2_allocate(0, g, in), UnknownSliceError);
}

TEST_CASE("Level-2 pool grants are disjoint and weighted") {
  const auto g = pool_grid();
  Level2Input in;
  in.demands = {{SliceNetId{1}, 80}, {SliceNetId{2}, 80}};
  in.weights = {{SliceNetId{1}, 3.0}, {SliceNetId{2}, 1.0}};
  in.pool_of = {{SliceNetId{1}, 0}, {SliceNetId{2}, 0}};
  const auto a = l2_allocate(0, g, in);
  const auto& g1 = a.grants.at(SliceNetId{1});
  const auto& g2 = a.grants.at(SliceNetId{2});
  CHECK(g1.size() == 75);
  CHECK(g2.size() == 25);
  for (const auto& c : g1) {
    CHECK(g.contains(c));
    CHECK(std::find(g2.begin(), g2.end(), c) == g2.end());
  }
  CHECK(a.unsatisfied.at(SliceNetId{1}) == 5);
  CHECK(a.unsatisfied.at(SliceNetId{2}) == 55);
}

TEST_CASE("cells needed to drain a backlog") {
  const auto g = carved_grid();
  const auto cells = g.segment_cells_in_phase(0, 0);
  CHECK(cells_needed(g, cells, 0) == 0);
  CHECK(cells_needed(g, cells, 1) == 1);
  CHECK(cells_needed(g, cells, 1000) == 10);
  CHECK(cells_needed(g, cells, 1001) == 11);
}

TEST_CASE("one backlogged flow takes the whole grant") {
  const auto g = carved_grid();
  const auto grant = g.segment_cells_in_phase(0, 0);
  std::vector<TrafficFlow> flows{flow(1, 1'000'000), flow(2, 0)};
  IntraSliceScheduler s(SchedPolicy::round_robin);
  const auto sched = s.schedule(SliceNetId{1}, 0, std::span(grant).first(10), ptrs(flows), g);
  CHECK(sched.assignments.size() == 1);
  CHECK(sched.assignments.at(FlowId{1}).size() == 10);
  CHECK(sched.idle_cells == 0);
}

TEST_CASE("round robin splits evenly between equal flows") {
  const auto g = carved_grid();
  const auto grant = g.segment_cells_in_phase(0, 0);
  std::vector<TrafficFlow> flows{flow(1, 100000), flow(2, 100000)};
  IntraSliceScheduler s(SchedPolicy::round_robin);
  const auto sched = s.schedule(SliceNetId{1}, 0, std::span(grant).first(10), ptrs(flows), g);
  CHECK(sched.assignments.at(FlowId{1}).size() == 5);
  CHECK(sched.assignments.at(FlowId{2}).size() == 5);
}

TEST_CASE("proportional fair follows the per-cell metric argmax") {
  const auto g = carved_grid();
  const auto grant = g.segment_cells_in_phase(0, 0);
  const double window = 100.0;
  std::vector<TrafficFlow> flows{flow(1, 100000, 100.0), flow(2, 100000, 50.0)};
  IntraSliceScheduler s(SchedPolicy::proportional_fair, window, 1000);
  const auto sched = s.schedule(SliceNetId{1}, 0, std::span(grant).first(10), ptrs(flows), g);

  // Hand trace: a cell of 100 B in a 1 ms subframe is 800 kbps; the averaged
  // rate after the cell would be 0.99*avg + served/100.
  double avg[2] = {100.0, 50.0};
  int got[2] = {0, 0};
  for (int cell = 0; cell < 10; ++cell) {
    double m[2];
    for (int i = 0; i < 2; ++i) m[i] = 800.0 / (0.99 * avg[i] + 8.0 * got[i]);
    const int pick = m[1] > m[0] ? 1 : 0;
    ++got[pick];
  }
  CHECK(got[0] == 2);
  CHECK(got[1] == 8);
  CHECK(sched.assignments.at(FlowId{1}).size() == static_cast<std::size_t>(got[0]));
  CHECK(sched.assignments.at(FlowId{2}).size() == static_cast<std::size_t>(got[1]));
}

TEST_CASE("averaged rate update") {
  std::vector<TrafficFlow> flows{flow(1, 0, 100.0), flow(2, 0, 100.0)};
  IntraSliceScheduler s(SchedPolicy::proportional_fair, 100.0, 1000);
  s.update_averages(ptrs(flows), {{FlowId{1}, 1000}});
  CHECK(flows[0].avg_rate_kbps == doctest::Approx(0.99 * 100 + 8000.0 / 100));
  CHECK(flows[1].avg_rate_kbps == doctest::Approx(99.0));
}

TEST_CASE("work conservation and containment under random load") {
  const auto g = carved_grid();
  const auto all = g.segment_cells_in_phase(0, 0);
  RngStream rng({"l1", 0, 0}, 3);
  for (auto policy : {SchedPolicy::round_robin, SchedPolicy::proportional_fair}) {
    IntraSliceScheduler s(policy);
    for (int t = 0; t < 500; ++t) {
      std::vector<TrafficFlow> flows;
      const auto n = rng.uniform_int(1, 5);
      std::int64_t backlog = 0;
      for (std::uint32_t i = 0; i < n; ++i) {
        flows.push_back(flow(i + 1, static_cast<std::int64_t>(rng.uniform_int(0, 3000)),
                             1.0 + static_cast<double>(rng.uniform_int(0, 500))));
        backlog += flows.back().backlog;
      }
      const auto k = static_cast<std::size_t>(rng.uniform_int(0, 40));
      const std::span<const Cell> grant(all.data(), k);
      const auto sched = s.schedule(SliceNetId{1}, t, grant, ptrs(flows), g);
      std::vector<Cell> used;
      for (const auto& [f, cells] : sched.assignments) used.insert(used.end(), cells.begin(), cells.end());
      std::sort(used.begin(), used.end());
      REQUIRE(std::adjacent_find(used.begin(), used.end()) == used.end());
      for (const auto& c : used) REQUIRE(std::find(grant.begin(), grant.end(), c) != grant.end());
      REQUIRE(used.size() + static_cast<std::size_t>(sched.idle_cells) == k);
      // idle cells only when every backlog is covered
      if (sched.idle_cells > 0) REQUIRE(static_cast<std::int64_t>(used.size()) * 100 >= backlog);
    }
  }
}

TEST_CASE("a slice's schedule does not depend on other slices") {
  const auto g = carved_grid();
  const auto all = g.segment_cells_in_phase(0, 0);
  auto run = [&](bool disturb) {
    IntraSliceScheduler mine(SchedPolicy::proportional_fair), other(SchedPolicy::round_robin);
    std::vector<TrafficFlow> flows{flow(1, 5000, 30), flow(2, 5000, 60)};
    std::vector<TrafficFlow> noise{flow(9, 90000)};
    std::vector<std::map<FlowId, std::vector<Cell>>> out;
    for (int t = 0; t < 20; ++t) {
      if (disturb) other.schedule(SliceNetId{2}, t, std::span(all).subspan(50, 30), ptrs(noise), g);
      const auto sch = mine.schedule(SliceNetId{1}, t, std::span(all).first(12), ptrs(flows), g);
      const auto served = serve(sch, ptrs(flows), g, (t + 1) * 1000);
      mine.update_averages(ptrs(flows), served.bytes);
      out.push_back(sch.assignments);
    }
    return out;
  };
  CHECK(run(false) == run(true));
}

TEST_CASE("serving an empty queue yields nothing") {
  const auto g = carved_grid();
  const auto all = g.segment_cells_in_phase(0, 0);
  std::vector<TrafficFlow> flows{flow(1, 0)};
  Level1Schedule sch;
  sch.assignments[FlowId{1}] = {all.begin(), all.begin() + 5};
  sch.devices[FlowId{1}] = NodeId{1};
  const auto r = serve(sch, ptrs(flows), g, 1000);
  CHECK(r.total_bytes == 0);
  CHECK(r.deliveries.empty());
}

TEST_CASE("a 1000 B queue drains through 10 cells with one latency record") {
  const auto g = carved_grid();
  const auto all = g.segment_cells_in_phase(0, 0);
  std::vector<TrafficFlow> flows{flow(1, 1000)};
  IntraSliceScheduler s;
  const auto sch = s.schedule(SliceNetId{1}, 0, std::span(all).first(10), ptrs(flows), g);
  const auto r = serve(sch, ptrs(flows), g, 1000);
  CHECK(r.total_bytes == 1000);
  CHECK(flows[0].queue.empty());
  CHECK(r.deliveries.size() == 1);
}

TEST_CASE("two 500 B packets over 5 cells per subframe take 1 and 2 subframes") {
  const auto g = carved_grid();
  const auto all = g.segment_cells_in_phase(0, 0);
  std::vector<TrafficFlow> flows(1, flow(1, 0));
  flows[0].push(500, 0);
  flows[0].push(500, 0);
  IntraSliceScheduler s;
  std::vector<Micros> latencies;
  for (int sf = 0; sf < 3; ++sf) {
    const auto sch = s.schedule(SliceNetId{1}, sf, std::span(all).first(5), ptrs(flows), g);
    for (const auto& d : serve(sch, ptrs(flows), g, (sf + 1) * 1000).deliveries) latencies.push_back(d.latency);
  }
  CHECK(latencies == std::vector<Micros>{1000, 2000});
}
