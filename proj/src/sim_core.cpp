#include "slicesim/sim_core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <tuple>

#include "slicesim/errors.hpp"

namespace slicesim {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= kFnvPrime;
  }
  return h;
}

std::uint64_t fnv1a_u64(std::uint64_t h, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  return fnv1a(h, buf, sizeof buf);
}

// splitmix64 finalizer
std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

bool event_after(const Engine::Event& a, const Engine::Event& b) {
  return std::tie(a.time, a.seq) > std::tie(b.time, b.seq);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master_seed, const RngKey& key) {
  std::uint64_t h = fnv1a(kFnvOffset, key.module.data(), key.module.size());
  h = fnv1a_u64(h, key.slice);
  h = fnv1a_u64(h, key.node);
  return mix64(h ^ mix64(master_seed));
}

RngStream::RngStream(RngKey key, std::uint64_t seed)
    : key_(std::move(key)), seed_(seed), engine_(seed) {}

std::uint64_t RngStream::next() {
  ++draws_;
  return engine_();
}

std::uint64_t RngStream::uniform_int(std::uint64_t lo, std::uint64_t hi) {
  ++draws_;
  return std::uniform_int_distribution<std::uint64_t>(lo, hi)(engine_);
}

double RngStream::uniform01() {
  ++draws_;
  return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
}

double RngStream::exponential(double mean) {
  ++draws_;
  return std::exponential_distribution<double>(1.0 / mean)(engine_);
}

std::string format_value(double value) {
  char buf[64];
  if (std::isfinite(value) && value == std::trunc(value) && std::fabs(value) < 1e15) {
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, static_cast<long long>(value));
    return std::string(buf, end);
  }
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, end);
}

void MetricsBus::emit(MetricRecord record) {
  if (!records_.empty() && record.time < records_.back().time) {
    throw InvariantViolation("metric records out of time order: " + record.metric);
  }
  records_.push_back(std::move(record));
}

void MetricsBus::write_csv(std::ostream& os) const {
  os << kCsvHeader << '\n';
  for (const auto& r : records_) {
    os << r.time << ',';
    if (r.slice) os << r.slice->value;
    os << ',';
    if (r.node) os << r.node->value;
    os << ',' << r.metric << ',' << format_value(r.value) << '\n';
  }
}

std::string MetricsBus::to_csv() const {
  std::ostringstream os;
  write_csv(os);
  return os.str();
}

std::vector<MetricRecord> parse_metrics_csv(std::istream& is) {
  std::vector<MetricRecord> out;
  std::string line;
  if (!std::getline(is, line) || line != MetricsBus::kCsvHeader) {
    throw SimError("metrics CSV: missing or unexpected header");
  }
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (line.back() == ',') fields.emplace_back();
    if (fields.size() != 5) {
      throw SimError("metrics CSV line " + std::to_string(lineno) + ": expected 5 fields");
    }
    MetricRecord r;
    r.time = std::stoll(fields[0]);
    if (!fields[1].empty()) r.slice = SliceNetId(static_cast<std::uint16_t>(std::stoul(fields[1])));
    if (!fields[2].empty()) r.node = NodeId(static_cast<std::uint32_t>(std::stoul(fields[2])));
    r.metric = fields[3];
    const auto& v = fields[4];
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), r.value);
    if (ec != std::errc{}) {
      throw SimError("metrics CSV line " + std::to_string(lineno) + ": bad value '" + v + "'");
    }
    out.push_back(std::move(r));
  }
  return out;
}

Engine::Engine(std::uint64_t master_seed) : master_seed_(master_seed) {}

void Engine::schedule(Micros time, NodeId target, std::string kind, Handler handler) {
  if (time < now_) {
    throw ScheduleError("cannot schedule '" + kind + "' at " + std::to_string(time) +
                        " us: clock is already at " + std::to_string(now_) + " us");
  }
  queue_.push_back(Event{time, next_seq_++, target, std::move(kind), std::move(handler)});
  std::push_heap(queue_.begin(), queue_.end(), event_after);
}

const MetricsBus& Engine::run_until(Micros t_end) {
  if (t_end < now_) {
    throw ScheduleError("run_until(" + std::to_string(t_end) + ") is before the clock");
  }
  while (!queue_.empty() && queue_.front().time <= t_end) {
    std::pop_heap(queue_.begin(), queue_.end(), event_after);
    Event ev = std::move(queue_.back());
    queue_.pop_back();
    now_ = ev.time;
    ++processed_;
    try {
      ev.handler();
    } catch (const std::exception&) {
      std::throw_with_nested(EventError("event '" + ev.kind + "' at " + std::to_string(ev.time) +
                                        " us on node " + std::to_string(ev.target.value)));
    }
  }
  now_ = t_end;
  return metrics_;
}

RngStream& Engine::rng_for(const RngKey& key) {
  auto it = streams_.find(key);
  if (it == streams_.end()) {
    it = streams_.emplace(key, std::make_unique<RngStream>(key, derive_seed(master_seed_, key)))
             .first;
  }
  return *it->second;
}

void Engine::emit(std::optional<SliceNetId> slice, std::optional<NodeId> node, std::string metric,
                  double value) {
  metrics_.emit(MetricRecord{now_, slice, node, std::move(metric), value});
}

std::string describe_exception(const std::exception& e) {
  std::string msg = e.what();
  try {
    std::rethrow_if_nested(e);
  } catch (const std::exception& inner) {
    msg += ": " + describe_exception(inner);
  } catch (...) {
    msg += ": unknown error";
  }
  return msg;
}

}  // namespace slicesim
