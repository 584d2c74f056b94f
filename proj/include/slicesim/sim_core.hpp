#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "slicesim/types.hpp"

namespace slicesim {

/// Identifies an independent random stream: (module, slice, node).
struct RngKey {
  std::string module;
  std::uint32_t slice = 0;
  std::uint32_t node = 0;

  friend auto operator<=>(const RngKey&, const RngKey&) = default;
};

/// Derives a stream seed from the master seed and a key. Stable across
/// platforms (FNV-1a over the key bytes, finished with a 64-bit mixer).
std::uint64_t derive_seed(std::uint64_t master_seed, const RngKey& key);

/// A per-key random stream. Draws on one stream never perturb another.
class RngStream {
 public:
  RngStream(RngKey key, std::uint64_t seed);

  const RngKey& key() const { return key_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t draws() const { return draws_; }

  std::uint64_t next();
  /// Uniform integer in [lo, hi], both inclusive.
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi);
  /// Uniform real in [0, 1).
  double uniform01();
  double exponential(double mean);

 private:
  RngKey key_;
  std::uint64_t seed_;
  std::uint64_t draws_ = 0;
  std::mt19937_64 engine_;
};

struct MetricRecord {
  Micros time = 0;
  std::optional<SliceNetId> slice;
  std::optional<NodeId> node;
  std::string metric;
  double value = 0.0;
};

/// Collects metric records in emission order.
class MetricsBus {
 public:
  void emit(MetricRecord record);

  const std::vector<MetricRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

  static constexpr std::string_view kCsvHeader = "time_us,slice_id,node_id,metric,value";

  void write_csv(std::ostream& os) const;
  std::string to_csv() const;

 private:
  std::vector<MetricRecord> records_;
};

/// Shortest round-trip decimal form of a double; integers print without a
/// fractional part.
std::string format_value(double value);

std::vector<MetricRecord> parse_metrics_csv(std::istream& is);

/// Single-threaded discrete-event engine. Dequeue order is (time, seq).
class Engine {
 public:
  using Handler = std::function<void()>;

  struct Event {
    Micros time = 0;
    std::uint64_t seq = 0;
    NodeId target;
    std::string kind;
    Handler handler;
  };

  explicit Engine(std::uint64_t master_seed);

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  Micros now() const { return now_; }
  std::uint64_t master_seed() const { return master_seed_; }

  /// Throws ScheduleError when time lies before the current clock.
  void schedule(Micros time, NodeId target, std::string kind, Handler handler);
  void schedule_in(Micros delay, NodeId target, std::string kind, Handler handler) {
    schedule(now_ + delay, target, std::move(kind), std::move(handler));
  }

  /// Processes every event with time <= t_end, then sets the clock to t_end.
  /// Handler exceptions are rethrown nested inside an EventError that names
  /// the event.
  const MetricsBus& run_until(Micros t_end);

  /// Returns the unique stream for the key, creating it on first use.
  RngStream& rng_for(const RngKey& key);

  MetricsBus& metrics() { return metrics_; }
  const MetricsBus& metrics() const { return metrics_; }

  void emit(std::optional<SliceNetId> slice, std::optional<NodeId> node, std::string metric,
            double value);

  std::size_t pending() const { return queue_.size(); }
  std::uint64_t processed() const { return processed_; }

 private:
  std::uint64_t master_seed_;
  Micros now_ = 0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t processed_ = 0;
  std::vector<Event> queue_;
  std::map<RngKey, std::unique_ptr<RngStream>> streams_;
  MetricsBus metrics_;
};

/// Flattens a (possibly nested) exception chain into one message.
std::string describe_exception(const std::exception& e);

}  // namespace slicesim
