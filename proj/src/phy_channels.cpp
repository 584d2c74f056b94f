#include "slicesim/phy_channels.hpp"

#include <algorithm>
#include <tuple>

#include "slicesim/errors.hpp"

namespace slicesim {

void RachConfig::validate() const {
  if (preamble_pool < 1) throw SimError("RACH preamble_pool must be >= 1");
  if (max_attempts < 1) throw SimError("RACH max_attempts must be >= 1");
  if (opportunity_period < 1) throw SimError("RACH opportunity_period must be >= 1");
  if (backoff_window < 1) throw SimError("RACH backoff_window must be >= 1");
}

RachChannel::RachChannel(RachConfig config, Micros subframe_us)
    : config_(std::move(config)), period_us_(config_.opportunity_period * subframe_us) {
  config_.validate();
}

void RachChannel::add(NodeId device, SliceNetId requested, Micros request_time) {
  contenders_.push_back(Contender{device, requested, request_time, request_time / period_us_ + 1, 0});
}

std::optional<Micros> RachChannel::next_opportunity() const {
  if (contenders_.empty()) return std::nullopt;
  auto it = std::min_element(contenders_.begin(), contenders_.end(),
                             [](const Contender& a, const Contender& b) {
                               return a.next_opportunity < b.next_opportunity;
                             });
  return it->next_opportunity * period_us_;
}

std::vector<RachOutcome> RachChannel::resolve(Micros time, RngStream& rng) {
  std::vector<RachOutcome> done;
  if (time % period_us_ != 0) return done;
  const std::int64_t opportunity = time / period_us_;

  std::vector<std::size_t> due;
  for (std::size_t i = 0; i < contenders_.size(); ++i) {
    if (contenders_[i].next_opportunity == opportunity) due.push_back(i);
  }
  std::sort(due.begin(), due.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(contenders_[a].device, contenders_[a].requested) <
           std::tie(contenders_[b].device, contenders_[b].requested);
  });

  std::vector<std::uint64_t> picks(due.size());
  std::map<std::uint64_t, int> counts;
  for (std::size_t k = 0; k < due.size(); ++k) {
    picks[k] = rng.uniform_int(0, static_cast<std::uint64_t>(config_.preamble_pool - 1));
    ++counts[picks[k]];
  }

  std::vector<bool> finished(contenders_.size(), false);
  for (std::size_t k = 0; k < due.size(); ++k) {
    auto& c = contenders_[due[k]];
    ++c.attempts;
    const bool won = counts[picks[k]] == 1;
    if (won || c.attempts >= config_.max_attempts) {
      done.push_back(RachOutcome{c.device, c.requested, c.attempts, won, time - c.request_time});
      finished[due[k]] = true;
    }
  }
  for (std::size_t k = 0; k < due.size(); ++k) {
    if (finished[due[k]]) continue;
    auto& c = contenders_[due[k]];
    c.next_opportunity =
        opportunity + static_cast<std::int64_t>(
                          rng.uniform_int(1, static_cast<std::uint64_t>(config_.backoff_window)));
  }

  std::size_t w = 0;
  for (std::size_t i = 0; i < contenders_.size(); ++i) {
    if (!finished[i]) contenders_[w++] = contenders_[i];
  }
  contenders_.resize(w);
  return done;
}

std::vector<RachOutcome> rach_contend(const RachConfig& config, std::span<const NodeId> contenders,
                                      SliceNetId slice, RngStream& rng, Micros subframe_us) {
  RachChannel channel(config, subframe_us);
  for (NodeId d : contenders) channel.add(d, slice, 0);
  std::vector<RachOutcome> out;
  while (auto t = channel.next_opportunity()) {
    auto batch = channel.resolve(*t, rng);
    out.insert(out.end(), batch.begin(), batch.end());
  }
  return out;
}

RachRoute route_access(bool slice_active, bool slice_has_rach) {
  return slice_active && slice_has_rach ? RachRoute::slice_specific : RachRoute::common;
}

SystemInfo broadcast_system_info(NodeId ap, std::span<const SliceAirState> slices,
                                 const RachConfig& common_rach) {
  SystemInfo info{ap, {}, common_rach, {}};
  for (const auto& s : slices) {
    if (!s.active) continue;
    info.active.push_back(s.slice);
    if (s.rach) info.slice_rach.emplace(s.slice, *s.rach);
  }
  std::sort(info.active.begin(), info.active.end());
  return info;
}

CommonDci emit_common_dci(std::int64_t subframe, const std::map<SliceNetId, std::vector<Cell>>& grants) {
  CommonDci dci{subframe, {}};
  for (const auto& [slice, cells] : grants) {
    if (!cells.empty()) dci.entries.push_back({slice, cells});
  }
  return dci;
}

std::vector<const CommonDci::Entry*> decodable_entries(const CommonDci& dci,
                                                       std::span<const SliceNetId> memberships) {
  std::vector<const CommonDci::Entry*> out;
  for (const auto& e : dci.entries) {
    if (std::find(memberships.begin(), memberships.end(), e.slice) != memberships.end()) {
      out.push_back(&e);
    }
  }
  return out;
}

SliceDci emit_slice_dci(SliceNetId slice, std::int64_t subframe,
                        const std::map<NodeId, std::vector<Cell>>& assignments,
                        std::span<const Cell> allowed) {
  SliceDci dci{slice, subframe, {}};
  for (const auto& [device, cells] : assignments) {
    for (const auto& c : cells) {
      if (std::find(allowed.begin(), allowed.end(), c) == allowed.end()) {
        throw InvariantViolation("SliceDci containment: slice " + std::to_string(slice.value) +
                                 " schedules a cell outside its resources in subframe " +
                                 std::to_string(subframe));
      }
    }
    dci.entries.emplace_back(device, cells);
  }
  return dci;
}

std::optional<UlControlMessage> aggregate_ul_control(NodeId device,
                                                     const std::map<SliceNetId, UlReport>& reports) {
  if (reports.empty()) return std::nullopt;
  UlControlMessage msg{device, {}};
  for (const auto& [slice, report] : reports) msg.sections.emplace_back(slice, report);
  return msg;
}

std::map<SliceNetId, UlReport> demux_ul_control(const UlControlMessage& message) {
  std::map<SliceNetId, UlReport> out;
  for (const auto& [slice, report] : message.sections) out.emplace(slice, report);
  return out;
}

}  // namespace slicesim
