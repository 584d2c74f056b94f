#include "slicesim/mac_sched.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "slicesim/errors.hpp"

namespace slicesim {

void TrafficFlow::push(std::int64_t bytes, Micros arrival, std::uint64_t tag) {
  queue.push_back(Packet{bytes, bytes, arrival, tag});
  backlog += bytes;
}

std::vector<double> weighted_max_min(std::span<const double> demands, std::span<const double> weights,
                                     double capacity) {
  std::vector<double> share(demands.size(), 0.0);
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < demands.size(); ++i) {
    if (demands[i] > 0 && weights[i] > 0) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return demands[a] / weights[a] < demands[b] / weights[b];
  });
  double remaining = std::max(capacity, 0.0);
  double weight_left = 0.0;
  for (auto i : order) weight_left += weights[i];

  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto i = order[k];
    const double fair = remaining * weights[i] / weight_left;
    if (demands[i] <= fair) {
      share[i] = demands[i];
      remaining -= demands[i];
      weight_left -= weights[i];
      continue;
    }
    for (std::size_t m = k; m < order.size(); ++m) {
      share[order[m]] = remaining * weights[order[m]] / weight_left;
    }
    break;
  }
  return share;
}

std::vector<std::int64_t> weighted_max_min_cells(std::span<const std::int64_t> demands,
                                                 std::span<const double> weights,
                                                 std::int64_t capacity) {
  std::vector<double> d(demands.begin(), demands.end());
  const auto real = weighted_max_min(d, weights, static_cast<double>(capacity));

  std::vector<std::int64_t> cells(demands.size(), 0);
  std::int64_t total_demand = 0;
  std::int64_t given = 0;
  for (std::size_t i = 0; i < demands.size(); ++i) {
    if (weights[i] <= 0) continue;
    total_demand += std::max<std::int64_t>(demands[i], 0);
    cells[i] = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(real[i] + 1e-9)), demands[i]);
    given += cells[i];
  }
  std::int64_t leftover = std::min(capacity, total_demand) - given;

  std::vector<std::size_t> order(demands.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return real[a] - std::floor(real[a] + 1e-9) > real[b] - std::floor(real[b] + 1e-9) + 1e-12;
  });
  while (leftover > 0) {
    bool progressed = false;
    for (auto i : order) {
      if (leftover == 0) break;
      if (weights[i] > 0 && cells[i] < demands[i]) {
        ++cells[i];
        --leftover;
        progressed = true;
      }
    }
    if (!progressed) break;
  }
  return cells;
}

std::vector<Cell> slice_cells_in_phase(const ResourceGrid& grid, SliceNetId slice,
                                       std::optional<std::size_t> pool, int phase) {
  if (pool) return grid.segment_cells_in_phase(*pool, phase);
  if (const auto* sub = grid.subset(slice)) return sub->cells_in_phase(phase);
  return {};
}

std::int64_t cells_needed(const ResourceGrid& grid, std::span<const Cell> cells, std::int64_t bytes) {
  std::int64_t n = 0;
  for (const auto& c : cells) {
    if (bytes <= 0) break;
    bytes -= grid.cell_capacity(c);
    ++n;
  }
  return n;
}

Level2Allocation l2_allocate(std::int64_t subframe, const ResourceGrid& grid, const Level2Input& input) {
  Level2Allocation alloc;
  alloc.subframe = subframe;
  const int phase = grid.phase_of(subframe);

  std::map<std::size_t, std::vector<SliceNetId>> pools;
  for (const auto& [slice, demand] : input.demands) {
    if (demand <= 0) continue;
    if (auto p = input.pool_of.find(slice); p != input.pool_of.end()) {
      pools[p->second].push_back(slice);
      continue;
    }
    const auto* sub = grid.subset(slice);
    if (sub == nullptr) {
      throw UnknownSliceError("Level-2 demand from slice " + std::to_string(slice.value) +
                              " which owns no resources");
    }
    auto cells = sub->cells_in_phase(phase);
    const auto take = std::min<std::size_t>(cells.size(), static_cast<std::size_t>(demand));
    cells.resize(take);
    alloc.grants[slice] = std::move(cells);
    const auto missing = demand - static_cast<std::int64_t>(take);
    if (missing > 0) alloc.unsatisfied[slice] = missing;
  }

  for (const auto& [pool, slices] : pools) {
    const auto cells = grid.segment_cells_in_phase(pool, phase);
    std::vector<std::int64_t> demands;
    std::vector<double> weights;
    for (auto s : slices) {
      demands.push_back(input.demands.at(s));
      auto w = input.weights.find(s);
      weights.push_back(w == input.weights.end() ? 1.0 : w->second);
    }
    const auto split = weighted_max_min_cells(demands, weights, static_cast<std::int64_t>(cells.size()));
    std::size_t next = 0;
    for (std::size_t k = 0; k < slices.size(); ++k) {
      auto& g = alloc.grants[slices[k]];
      for (std::int64_t n = 0; n < split[k]; ++n) g.push_back(cells[next++]);
      if (demands[k] > split[k]) alloc.unsatisfied[slices[k]] = demands[k] - split[k];
    }
  }
  return alloc;
}

std::map<NodeId, std::vector<Cell>> Level1Schedule::by_device() const {
  std::map<NodeId, std::vector<Cell>> out;
  for (const auto& [flow, cells] : assignments) {
    auto& v = out[devices.at(flow)];
    v.insert(v.end(), cells.begin(), cells.end());
  }
  return out;
}

namespace {

double rate_kbps(std::int64_t bytes, Micros subframe_us) {
  return static_cast<double>(bytes) * 8.0 * 1000.0 / static_cast<double>(subframe_us);
}

std::vector<TrafficFlow*> sorted_flows(std::span<TrafficFlow* const> flows) {
  std::vector<TrafficFlow*> v(flows.begin(), flows.end());
  std::sort(v.begin(), v.end(), [](const TrafficFlow* a, const TrafficFlow* b) { return a->id < b->id; });
  return v;
}

}  // namespace

Level1Schedule IntraSliceScheduler::schedule(SliceNetId slice, std::int64_t subframe,
                                             std::span<const Cell> grant,
                                             std::span<TrafficFlow* const> flows,
                                             const ResourceGrid& grid) {
  Level1Schedule out;
  out.slice = slice;
  out.subframe = subframe;
  const auto ordered = sorted_flows(flows);
  const std::size_t n = ordered.size();
  std::vector<std::int64_t> assigned(n, 0);

  auto need = [&](std::size_t i) { return ordered[i]->backlog - assigned[i]; };

  for (const auto& cell : grant) {
    const auto cap = grid.cell_capacity(cell);
    std::optional<std::size_t> pick;
    if (policy_ == SchedPolicy::round_robin) {
      for (std::size_t k = 0; k < n; ++k) {
        const auto i = (rr_cursor_ + k) % n;
        if (need(i) > 0) {
          pick = i;
          break;
        }
      }
      if (pick) rr_cursor_ = (*pick + 1) % n;
    } else {
      double best = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (need(i) <= 0) continue;
        const double tentative = (1.0 - 1.0 / pf_window_) * ordered[i]->avg_rate_kbps +
                                 rate_kbps(assigned[i], subframe_us_) / pf_window_;
        const double metric = rate_kbps(cap, subframe_us_) / std::max(tentative, 1e-9);
        if (metric > best) {
          best = metric;
          pick = i;
        }
      }
    }
    if (!pick) {
      ++out.idle_cells;
      continue;
    }
    assigned[*pick] += cap;
    out.assignments[ordered[*pick]->id].push_back(cell);
    out.devices[ordered[*pick]->id] = ordered[*pick]->device;
  }
  return out;
}

void IntraSliceScheduler::update_averages(std::span<TrafficFlow* const> flows,
                                          const std::map<FlowId, std::int64_t>& served) const {
  for (auto* f : flows) {
    auto it = served.find(f->id);
    const std::int64_t bytes = it == served.end() ? 0 : it->second;
    f->avg_rate_kbps = (1.0 - 1.0 / pf_window_) * f->avg_rate_kbps + rate_kbps(bytes, subframe_us_) / pf_window_;
  }
}

ServeResult serve(const Level1Schedule& schedule, std::span<TrafficFlow* const> flows,
                  const ResourceGrid& grid, Micros subframe_end) {
  ServeResult result;
  for (const auto& [flow_id, cells] : schedule.assignments) {
    auto it = std::find_if(flows.begin(), flows.end(), [&](const TrafficFlow* f) { return f->id == flow_id; });
    if (it == flows.end()) continue;
    TrafficFlow& flow = **it;
    std::int64_t budget = 0;
    for (const auto& c : cells) budget += grid.cell_capacity(c);

    std::int64_t drained = 0;
    while (budget > 0 && !flow.queue.empty()) {
      auto& head = flow.queue.front();
      const auto take = std::min(budget, head.remaining);
      head.remaining -= take;
      budget -= take;
      drained += take;
      if (head.remaining == 0) {
        result.deliveries.push_back(
            Delivery{flow.id, flow.device, flow.slice, head, subframe_end - head.arrival});
        flow.queue.pop_front();
      }
    }
    flow.backlog -= drained;
    if (drained > 0) {
      result.bytes[flow.id] += drained;
      result.total_bytes += drained;
    }
  }
  return result;
}

}  // namespace slicesim
