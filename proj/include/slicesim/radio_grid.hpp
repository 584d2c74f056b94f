#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slicesim/types.hpp"

namespace slicesim {

enum class Requirement { low_latency, wide_coverage, high_throughput, massive_connections };

/// Basic PHY transmission parameters of one radio segment. These are
/// parameter records; no waveform is generated from them.
struct Numerology {
  int id = 0;
  double subcarrier_spacing_khz = 15.0;
  double symbol_duration_us = 66.7;
  int symbols_per_subframe = 15;
  Micros subframe_length_us = 1000;
  Requirement intended = Requirement::wide_coverage;
  /// Bytes carried by one resource cell per grid subframe.
  std::int64_t bytes_per_cell = 100;
};

/// 15/30/60 kHz with 100 B cells at 15 kHz, scaled by spacing.
std::vector<Numerology> default_numerologies();

/// symbol_duration * symbols == subframe_length within 1 us.
bool subframe_consistent(const Numerology& n);

/// scs_a/scs_b == symdur_b/symdur_a within one microsecond of symbol
/// duration, comparing after rescaling the shorter symbol to the wider one.
bool scaling_consistent(const Numerology& a, const Numerology& b);

/// Throws BoundsError naming the first offending numerology (or pair).
void validate_numerologies(std::span<const Numerology> catalog);

struct SegmentSpec {
  std::string name;
  int numerology = 0;
  int block_begin = 0;  // inclusive
  int block_end = 0;    // exclusive
  /// Active subframe phases modulo the grid period; empty means every phase.
  std::vector<int> phases;
  /// Shared pools are not carved; slices split them per subframe.
  bool shared = false;
};

struct GridSpec {
  int total_blocks = 100;
  int period = 10;
  std::vector<SegmentSpec> segments;
};

struct Cell {
  std::uint16_t segment = 0;
  std::uint16_t block = 0;
  std::uint16_t phase = 0;

  friend auto operator<=>(const Cell&, const Cell&) = default;
};

struct ResourceSubset {
  SliceNetId slice;
  std::vector<Cell> cells;  // sorted

  bool contains(const Cell& c) const;
  std::vector<Cell> cells_in_phase(int phase) const;
};

/// Request for carve_subset: either explicit cells or counts per segment.
struct CarveRequest {
  std::vector<std::pair<std::size_t, std::size_t>> counts;  // (segment index, cells)
  std::vector<Cell> cells;
};

class ResourceGrid {
 public:
  struct Segment {
    SegmentSpec spec;
    Numerology numerology;
    std::vector<bool> active;  // per phase
    std::size_t active_phases = 0;

    int blocks() const { return spec.block_end - spec.block_begin; }
    std::size_t cell_count() const { return static_cast<std::size_t>(blocks()) * active_phases; }
  };

  /// Validates bounds and pairwise disjointness. Throws BoundsError or
  /// OverlapError (naming both segments).
  static ResourceGrid partition(const GridSpec& spec, std::span<const Numerology> catalog);

  int total_blocks() const { return total_blocks_; }
  int period() const { return period_; }
  const std::vector<Segment>& segments() const { return segments_; }
  const Segment& segment(std::size_t i) const { return segments_.at(i); }
  std::optional<std::size_t> find_segment(const std::string& name) const;

  std::size_t total_cells() const;
  std::size_t free_cells() const { return free_cells_; }
  std::size_t owned_cells() const { return total_cells() - free_cells_; }

  bool contains(const Cell& c) const;
  std::optional<SliceNetId> owner(const Cell& c) const;
  std::int64_t cell_capacity(const Cell& c) const;
  int phase_of(std::int64_t subframe) const { return static_cast<int>(subframe % period_); }

  /// Cells of a segment active in a phase, lowest block first.
  std::vector<Cell> segment_cells_in_phase(std::size_t segment, int phase) const;
  /// Cell count equivalent to `blocks` blocks held on every active phase.
  std::size_t cells_for_blocks(std::size_t segment, std::size_t blocks) const;

  /// Assigns cells lowest-index-first (block, then phase) within each
  /// segment. All-or-nothing. A slice that already owns cells is extended.
  const ResourceSubset& carve(SliceNetId slice, const CarveRequest& request);
  void release(SliceNetId slice);

  const ResourceSubset* subset(SliceNetId slice) const;
  const std::map<SliceNetId, ResourceSubset>& subsets() const { return subsets_; }

 private:
  std::size_t index(const Cell& c) const;

  int total_blocks_ = 0;
  int period_ = 1;
  std::vector<Segment> segments_;
  std::vector<std::vector<std::optional<SliceNetId>>> owners_;  // per segment, [block*period+phase]
  std::map<SliceNetId, ResourceSubset> subsets_;
  std::size_t free_cells_ = 0;
};

}  // namespace slicesim
