#include "slicesim/radio_grid.hpp"

#include <algorithm>
#include <cmath>

#include "slicesim/errors.hpp"

namespace slicesim {

std::vector<Numerology> default_numerologies() {
  return {
      {0, 15.0, 66.7, 15, 1000, Requirement::wide_coverage, 100},
      {1, 30.0, 33.3, 15, 500, Requirement::high_throughput, 200},
      {2, 60.0, 16.7, 15, 250, Requirement::low_latency, 400},
  };
}

bool subframe_consistent(const Numerology& n) {
  const double product = n.symbol_duration_us * n.symbols_per_subframe;
  return std::fabs(product - static_cast<double>(n.subframe_length_us)) <= 1.0;
}

bool scaling_consistent(const Numerology& a, const Numerology& b) {
  const auto& narrow = a.subcarrier_spacing_khz <= b.subcarrier_spacing_khz ? a : b;
  const auto& wide = a.subcarrier_spacing_khz <= b.subcarrier_spacing_khz ? b : a;
  const double ratio = wide.subcarrier_spacing_khz / narrow.subcarrier_spacing_khz;
  return std::fabs(wide.symbol_duration_us * ratio - narrow.symbol_duration_us) <= 1.0;
}

void validate_numerologies(std::span<const Numerology> catalog) {
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    const auto& n = catalog[i];
    if (n.subcarrier_spacing_khz <= 0 || n.symbol_duration_us <= 0 || n.symbols_per_subframe <= 0 ||
        n.subframe_length_us <= 0 || n.bytes_per_cell < 0) {
      throw BoundsError("numerology " + std::to_string(n.id) + ": parameters must be positive");
    }
    if (!subframe_consistent(n)) {
      throw BoundsError("numerology " + std::to_string(n.id) +
                        ": symbol_duration * symbols_per_subframe != subframe_length");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (catalog[j].id == n.id) {
        throw BoundsError("duplicate numerology id " + std::to_string(n.id));
      }
      if (!scaling_consistent(catalog[j], n)) {
        throw BoundsError("numerologies " + std::to_string(catalog[j].id) + " and " +
                          std::to_string(n.id) + " violate inverse spacing/duration scaling");
      }
    }
  }
}

bool ResourceSubset::contains(const Cell& c) const {
  return std::binary_search(cells.begin(), cells.end(), c);
}

std::vector<Cell> ResourceSubset::cells_in_phase(int phase) const {
  std::vector<Cell> out;
  for (const auto& c : cells) {
    if (c.phase == phase) out.push_back(c);
  }
  return out;
}

ResourceGrid ResourceGrid::partition(const GridSpec& spec, std::span<const Numerology> catalog) {
  if (spec.total_blocks <= 0 || spec.period <= 0) {
    throw BoundsError("grid needs positive total_blocks and period");
  }
  if (spec.total_blocks > 0xffff || spec.period > 0xffff) {
    throw BoundsError("grid dimensions exceed 65535");
  }
  ResourceGrid grid;
  grid.total_blocks_ = spec.total_blocks;
  grid.period_ = spec.period;

  for (const auto& s : spec.segments) {
    if (s.block_begin < 0 || s.block_end > spec.total_blocks || s.block_begin >= s.block_end) {
      throw BoundsError("segment '" + s.name + "': blocks [" + std::to_string(s.block_begin) + ", " +
                        std::to_string(s.block_end) + ") outside [0, " +
                        std::to_string(spec.total_blocks) + ") or empty");
    }
    auto num = std::find_if(catalog.begin(), catalog.end(),
                            [&](const Numerology& n) { return n.id == s.numerology; });
    if (num == catalog.end()) {
      throw BoundsError("segment '" + s.name + "': unknown numerology " +
                        std::to_string(s.numerology));
    }
    Segment seg{s, *num, std::vector<bool>(static_cast<std::size_t>(spec.period), s.phases.empty()), 0};
    for (int p : s.phases) {
      if (p < 0 || p >= spec.period) {
        throw BoundsError("segment '" + s.name + "': phase " + std::to_string(p) +
                          " outside period " + std::to_string(spec.period));
      }
      seg.active[static_cast<std::size_t>(p)] = true;
    }
    seg.active_phases = static_cast<std::size_t>(std::count(seg.active.begin(), seg.active.end(), true));

    for (const auto& other : grid.segments_) {
      const bool blocks_meet = s.block_begin < other.spec.block_end && other.spec.block_begin < s.block_end;
      if (!blocks_meet) continue;
      for (int p = 0; p < spec.period; ++p) {
        if (seg.active[static_cast<std::size_t>(p)] && other.active[static_cast<std::size_t>(p)]) {
          throw OverlapError("segments '" + other.spec.name + "' and '" + s.name +
                             "' both claim block " +
                             std::to_string(std::max(s.block_begin, other.spec.block_begin)) +
                             " at subframe phase " + std::to_string(p));
        }
      }
    }
    grid.free_cells_ += seg.cell_count();
    grid.owners_.emplace_back(static_cast<std::size_t>(seg.blocks()) * static_cast<std::size_t>(spec.period));
    grid.segments_.push_back(std::move(seg));
  }
  return grid;
}

std::optional<std::size_t> ResourceGrid::find_segment(const std::string& name) const {
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (segments_[i].spec.name == name) return i;
  }
  return std::nullopt;
}

std::size_t ResourceGrid::total_cells() const {
  std::size_t n = 0;
  for (const auto& s : segments_) n += s.cell_count();
  return n;
}

bool ResourceGrid::contains(const Cell& c) const {
  if (c.segment >= segments_.size()) return false;
  const auto& s = segments_[c.segment];
  return c.block >= s.spec.block_begin && c.block < s.spec.block_end && c.phase < period_ &&
         s.active[c.phase];
}

std::size_t ResourceGrid::index(const Cell& c) const {
  const auto& s = segments_[c.segment];
  return static_cast<std::size_t>(c.block - s.spec.block_begin) * static_cast<std::size_t>(period_) +
         c.phase;
}

std::optional<SliceNetId> ResourceGrid::owner(const Cell& c) const {
  if (!contains(c)) return std::nullopt;
  return owners_[c.segment][index(c)];
}

std::int64_t ResourceGrid::cell_capacity(const Cell& c) const {
  return segments_.at(c.segment).numerology.bytes_per_cell;
}

std::vector<Cell> ResourceGrid::segment_cells_in_phase(std::size_t segment, int phase) const {
  std::vector<Cell> out;
  const auto& s = segments_.at(segment);
  if (phase < 0 || phase >= period_ || !s.active[static_cast<std::size_t>(phase)]) return out;
  out.reserve(static_cast<std::size_t>(s.blocks()));
  for (int b = s.spec.block_begin; b < s.spec.block_end; ++b) {
    out.push_back(Cell{static_cast<std::uint16_t>(segment), static_cast<std::uint16_t>(b),
                       static_cast<std::uint16_t>(phase)});
  }
  return out;
}

std::size_t ResourceGrid::cells_for_blocks(std::size_t segment, std::size_t blocks) const {
  return blocks * segments_.at(segment).active_phases;
}

const ResourceSubset& ResourceGrid::carve(SliceNetId slice, const CarveRequest& request) {
  std::vector<Cell> picked;

  for (const auto& c : request.cells) {
    if (!contains(c)) {
      throw BoundsError("requested cell outside every declared segment");
    }
    if (segments_[c.segment].spec.shared) {
      throw ConflictError("segment '" + segments_[c.segment].spec.name + "' is a shared pool");
    }
    if (auto o = owners_[c.segment][index(c)]) {
      throw ConflictError("cell (segment '" + segments_[c.segment].spec.name + "', block " +
                          std::to_string(c.block) + ", phase " + std::to_string(c.phase) +
                          ") already owned by slice " + std::to_string(o->value));
    }
    picked.push_back(c);
  }

  std::map<std::size_t, std::size_t> wanted;
  for (const auto& [seg, count] : request.counts) {
    if (seg >= segments_.size()) throw BoundsError("carve request names an unknown segment");
    wanted[seg] += count;
  }
  for (const auto& [seg, count] : wanted) {
    const auto& s = segments_[seg];
    if (s.spec.shared) throw ConflictError("segment '" + s.spec.name + "' is a shared pool");
    std::size_t got = 0;
    for (int b = s.spec.block_begin; b < s.spec.block_end && got < count; ++b) {
      for (int p = 0; p < period_ && got < count; ++p) {
        if (!s.active[static_cast<std::size_t>(p)]) continue;
        Cell c{static_cast<std::uint16_t>(seg), static_cast<std::uint16_t>(b), static_cast<std::uint16_t>(p)};
        if (owners_[seg][index(c)]) continue;
        if (std::find(picked.begin(), picked.end(), c) != picked.end()) continue;
        picked.push_back(c);
        ++got;
      }
    }
    if (got < count) {
      throw CapacityError("segment '" + s.spec.name + "': requested " + std::to_string(count) +
                          " cells for slice " + std::to_string(slice.value) + ", only " +
                          std::to_string(got) + " free");
    }
  }

  std::sort(picked.begin(), picked.end());
  if (std::adjacent_find(picked.begin(), picked.end()) != picked.end()) {
    throw ConflictError("carve request lists a cell twice");
  }
  for (const auto& c : picked) owners_[c.segment][index(c)] = slice;
  free_cells_ -= picked.size();

  auto& sub = subsets_[slice];
  sub.slice = slice;
  sub.cells.insert(sub.cells.end(), picked.begin(), picked.end());
  std::sort(sub.cells.begin(), sub.cells.end());
  return sub;
}

void ResourceGrid::release(SliceNetId slice) {
  auto it = subsets_.find(slice);
  if (it == subsets_.end()) {
    throw UnknownSliceError("slice " + std::to_string(slice.value) + " owns no subset");
  }
  for (const auto& c : it->second.cells) owners_[c.segment][index(c)].reset();
  free_cells_ += it->second.cells.size();
  subsets_.erase(it);
}

const ResourceSubset* ResourceGrid::subset(SliceNetId slice) const {
  auto it = subsets_.find(slice);
  return it == subsets_.end() ? nullptr : &it->second;
}

}  // namespace slicesim
