#include "slicesim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "slicesim/errors.hpp"

namespace slicesim {

using nlohmann::json;

const NodeSpec* Scenario::node(NodeId id) const {
  for (const auto& n : nodes) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

const SliceSpec* Scenario::slice(SliceNetId id) const {
  for (const auto& s : slices) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

const GridSpec& Scenario::grid_at(NodeId ap) const {
  const NodeSpec* n = node(ap);
  if (n && n->grid) return *n->grid;
  return grid;
}

std::set<std::string> Scenario::radio_slices() const {
  std::set<std::string> out;
  for (const auto& s : grid.segments) out.insert(s.name);
  for (const auto& n : nodes) {
    if (!n.grid) continue;
    for (const auto& s : n.grid->segments) out.insert(s.name);
  }
  return out;
}

namespace {

// Maps JSON pointers to "line:col" of the value they address. A tiny
// scanner is enough since the text already parsed successfully.
class PositionIndex {
 public:
  explicit PositionIndex(const std::string& text) : text_(text) {
    skip_ws();
    value("");
  }

  std::string locate(const std::string& pointer) const {
    std::string p = pointer;
    while (true) {
      auto it = positions_.find(p);
      if (it != positions_.end()) return it->second;
      auto slash = p.rfind('/');
      if (slash == std::string::npos || p.empty()) break;
      p = p.substr(0, slash);
    }
    return {};
  }

 private:
  void skip_ws() {
    while (i_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[i_]))) advance();
  }
  void advance() {
    if (text_[i_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++i_;
  }
  std::string read_string() {
    std::string out;
    advance();  // opening quote
    while (i_ < text_.size() && text_[i_] != '"') {
      if (text_[i_] == '\\') {
        advance();
        if (i_ < text_.size() && text_[i_] == 'u') {
          for (int k = 0; k < 4; ++k) advance();
          out += '?';
          advance();
          continue;
        }
      }
      out += text_[i_];
      advance();
    }
    if (i_ < text_.size()) advance();
    return out;
  }
  static std::string escape(const std::string& key) {
    std::string out;
    for (char c : key) {
      if (c == '~') out += "~0";
      else if (c == '/') out += "~1";
      else out += c;
    }
    return out;
  }
  void value(const std::string& pointer) {
    if (i_ >= text_.size()) return;
    positions_[pointer] = std::to_string(line_) + ":" + std::to_string(col_);
    char c = text_[i_];
    if (c == '{') {
      advance();
      skip_ws();
      while (i_ < text_.size() && text_[i_] != '}') {
        std::string key = read_string();
        skip_ws();
        advance();  // ':'
        skip_ws();
        value(pointer + "/" + escape(key));
        skip_ws();
        if (i_ < text_.size() && text_[i_] == ',') {
          advance();
          skip_ws();
        }
      }
      if (i_ < text_.size()) advance();
    } else if (c == '[') {
      advance();
      skip_ws();
      std::size_t idx = 0;
      while (i_ < text_.size() && text_[i_] != ']') {
        value(pointer + "/" + std::to_string(idx++));
        skip_ws();
        if (i_ < text_.size() && text_[i_] == ',') {
          advance();
          skip_ws();
        }
      }
      if (i_ < text_.size()) advance();
    } else if (c == '"') {
      read_string();
    } else {
      while (i_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[i_])) && text_[i_] != ',' &&
             text_[i_] != ']' && text_[i_] != '}')
        advance();
    }
  }

  const std::string& text_;
  std::size_t i_ = 0;
  int line_ = 1;
  int col_ = 1;
  std::map<std::string, std::string> positions_;
};

std::string dotted_to_pointer(const std::string& dotted) {
  if (dotted.empty()) return "";
  std::string out = "/";
  for (char c : dotted) out += (c == '.') ? '/' : c;
  return out;
}

class Parser {
 public:
  explicit Parser(std::vector<Diagnostic>& diags) : diags_(diags) {}

  void error(const std::string& where, const std::string& msg) { diags_.push_back({where, msg}); }

  const json* member(const json& obj, const std::string& where, const char* key, bool required) {
    if (!obj.is_object()) {
      error(where, "expected an object");
      return nullptr;
    }
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
      if (required) error(where + "/" + key, std::string("missing required field '") + key + "'");
      return nullptr;
    }
    return &*it;
  }

  double number(const json& obj, const std::string& where, const char* key, double fallback, bool required = false) {
    const json* v = member(obj, where, key, required);
    if (!v) return fallback;
    if (!v->is_number()) {
      error(where + "/" + key, std::string("'") + key + "' must be a number");
      return fallback;
    }
    return v->get<double>();
  }

  std::int64_t integer(const json& obj, const std::string& where, const char* key, std::int64_t fallback,
                       bool required = false) {
    const json* v = member(obj, where, key, required);
    if (!v) return fallback;
    if (!v->is_number_integer()) {
      error(where + "/" + key, std::string("'") + key + "' must be an integer");
      return fallback;
    }
    return v->get<std::int64_t>();
  }

  bool boolean(const json& obj, const std::string& where, const char* key, bool fallback) {
    const json* v = member(obj, where, key, false);
    if (!v) return fallback;
    if (!v->is_boolean()) {
      error(where + "/" + key, std::string("'") + key + "' must be true or false");
      return fallback;
    }
    return v->get<bool>();
  }

  std::string string(const json& obj, const std::string& where, const char* key, std::string fallback,
                     bool required = false) {
    const json* v = member(obj, where, key, required);
    if (!v) return fallback;
    if (!v->is_string()) {
      error(where + "/" + key, std::string("'") + key + "' must be a string");
      return fallback;
    }
    return v->get<std::string>();
  }

  Micros ms(const json& obj, const std::string& where, const char* key, Micros fallback, bool required = false) {
    double v = number(obj, where, key, static_cast<double>(fallback) / kMicrosPerMs, required);
    if (v < 0) error(where + "/" + key, std::string("'") + key + "' must be non-negative");
    return static_cast<Micros>(std::llround(v * kMicrosPerMs));
  }

  const json& array(const json& obj, const std::string& where, const char* key) {
    static const json empty = json::array();
    const json* v = member(obj, where, key, false);
    if (!v) return empty;
    if (!v->is_array()) {
      error(where + "/" + key, std::string("'") + key + "' must be an array");
      return empty;
    }
    return *v;
  }

  template <typename Id>
  Id id(const json& obj, const std::string& where, const char* key) {
    auto v = integer(obj, where, key, 0, true);
    using Rep = decltype(Id::value);
    if (v < 0 || static_cast<std::uint64_t>(v) > std::numeric_limits<Rep>::max()) {
      error(where + "/" + key, "id " + std::to_string(v) + " out of range");
      v = 0;
    }
    return Id(static_cast<Rep>(v));
  }

 private:
  std::vector<Diagnostic>& diags_;
};

std::optional<Requirement> parse_requirement(const std::string& s) {
  if (s == "low_latency") return Requirement::low_latency;
  if (s == "wide_coverage") return Requirement::wide_coverage;
  if (s == "high_throughput") return Requirement::high_throughput;
  if (s == "massive_connections") return Requirement::massive_connections;
  return std::nullopt;
}

std::vector<Numerology> parse_numerologies(Parser& p, const json& arr, const std::string& where) {
  std::vector<Numerology> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const json& n = arr[i];
    const std::string w = where + "/" + std::to_string(i);
    Numerology num;
    num.id = static_cast<int>(p.integer(n, w, "id", 0, true));
    num.subcarrier_spacing_khz = p.number(n, w, "scs_khz", 15.0, true);
    num.symbol_duration_us = p.number(n, w, "symbol_duration_us", 66.7, true);
    num.symbols_per_subframe = static_cast<int>(p.integer(n, w, "symbols_per_subframe", 15));
    num.subframe_length_us = p.integer(n, w, "subframe_us", 1000, true);
    num.bytes_per_cell = p.integer(n, w, "bytes_per_cell", 100);
    auto req = p.string(n, w, "requirement", "wide_coverage");
    if (auto r = parse_requirement(req)) num.intended = *r;
    else p.error(w + "/requirement", "unknown requirement '" + req + "'");
    out.push_back(num);
  }
  return out;
}

GridSpec parse_grid(Parser& p, const json& g, const std::string& where) {
  GridSpec spec;
  spec.total_blocks = static_cast<int>(p.integer(g, where, "total_blocks", 100));
  spec.period = static_cast<int>(p.integer(g, where, "period", 10));
  const json& segs = p.array(g, where, "segments");
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const json& s = segs[i];
    const std::string w = where + "/segments/" + std::to_string(i);
    SegmentSpec seg;
    seg.name = p.string(s, w, "name", "", true);
    seg.numerology = static_cast<int>(p.integer(s, w, "numerology", 0));
    seg.shared = p.boolean(s, w, "shared", false);
    if (const json* b = p.member(s, w, "blocks", true)) {
      if (b->is_array() && b->size() == 2 && (*b)[0].is_number_integer() && (*b)[1].is_number_integer()) {
        seg.block_begin = (*b)[0].get<int>();
        seg.block_end = (*b)[1].get<int>();
      } else {
        p.error(w + "/blocks", "'blocks' must be [begin, end) as two integers");
      }
    }
    if (const json* ph = p.member(s, w, "phases", false)) {
      if (ph->is_string()) {
        const auto mode = ph->get<std::string>();
        if (mode == "odd" || mode == "even") {
          for (int k = (mode == "odd") ? 1 : 0; k < spec.period; k += 2) seg.phases.push_back(k);
        } else if (mode != "all") {
          p.error(w + "/phases", "'phases' must be \"all\", \"odd\", \"even\" or a list");
        }
      } else if (ph->is_array()) {
        for (const auto& k : *ph) {
          if (!k.is_number_integer()) {
            p.error(w + "/phases", "phase entries must be integers");
            break;
          }
          seg.phases.push_back(k.get<int>());
        }
      } else {
        p.error(w + "/phases", "'phases' must be a string or a list");
      }
    }
    spec.segments.push_back(seg);
  }
  return spec;
}

RachConfig parse_rach(Parser& p, const json& r, const std::string& where, RachConfig cfg) {
  cfg.preamble_pool = static_cast<int>(p.integer(r, where, "preambles", cfg.preamble_pool));
  cfg.opportunity_period = static_cast<int>(p.integer(r, where, "period_subframes", cfg.opportunity_period));
  cfg.max_attempts = static_cast<int>(p.integer(r, where, "max_attempts", cfg.max_attempts));
  cfg.backoff_window = static_cast<int>(p.integer(r, where, "backoff_window", cfg.backoff_window));
  try {
    cfg.validate();
  } catch (const SimError& e) {
    p.error(where, e.what());
  }
  return cfg;
}

RanSliceConfig parse_lifecycle(Parser& p, const json& l, const std::string& w) {
  RanSliceConfig c;
  c.activation_latency = p.ms(l, w, "activation_latency_ms", c.activation_latency);
  c.deactivation_latency = p.ms(l, w, "deactivation_latency_ms", c.deactivation_latency);
  c.off_hold = p.ms(l, w, "off_hold_ms", c.off_hold);
  c.load_threshold = p.number(l, w, "load_threshold", c.load_threshold);
  c.device_threshold = static_cast<int>(p.integer(l, w, "device_threshold", c.device_threshold));
  c.off_load_threshold = p.number(l, w, "off_load_threshold", c.off_load_threshold);
  c.admission_threshold = p.number(l, w, "admission_threshold", c.admission_threshold);
  c.balance_threshold = p.number(l, w, "balance_threshold", c.balance_threshold);
  c.fallback_link = p.number(l, w, "fallback_link", c.fallback_link);
  c.min_devices_to_activate = static_cast<int>(p.integer(l, w, "min_devices_to_activate", c.min_devices_to_activate));
  c.revenue_per_device = p.number(l, w, "revenue_per_device", c.revenue_per_device);
  c.activation_cost = p.number(l, w, "activation_cost", c.activation_cost);
  return c;
}

std::optional<ComputeProfile> parse_compute(Parser& p, const json& n, const std::string& w, NodeId id) {
  const json* c = p.member(n, w, "compute", false);
  if (!c) return std::nullopt;
  ComputeProfile prof;
  prof.node = id;
  prof.total_capacity = p.number(*c, w + "/compute", "capacity", 0.0, true);
  prof.reserved_local = p.number(*c, w + "/compute", "reserved_local", 0.0);
  try {
    prof.validate();
  } catch (const SimError& e) {
    p.error(w + "/compute", e.what());
  }
  return prof;
}

void parse_document(Parser& p, const json& doc, Scenario& sc) {
  if (!doc.is_object()) {
    p.error("", "scenario must be a JSON object");
    return;
  }
  sc.name = p.string(doc, "", "name", "", true);
  sc.duration = p.ms(doc, "", "duration_ms", 0, true);
  const auto seed = p.integer(doc, "", "master_seed", 1);
  if (seed < 0) p.error("/master_seed", "master_seed must be non-negative");
  sc.master_seed = static_cast<std::uint64_t>(seed);
  sc.subframe_us = p.integer(doc, "", "subframe_us", 1000);
  if (sc.subframe_us <= 0) p.error("/subframe_us", "subframe_us must be positive");
  sc.control_period = p.ms(doc, "", "control_period_ms", sc.control_period);
  if (sc.control_period <= 0) p.error("/control_period_ms", "control_period_ms must be positive");
  sc.balance_period = p.ms(doc, "", "balance_period_ms", sc.balance_period);

  if (const json* n = p.member(doc, "", "numerologies", false)) {
    sc.numerologies = parse_numerologies(p, *n, "/numerologies");
  } else {
    sc.numerologies = default_numerologies();
  }
  if (const json* g = p.member(doc, "", "grid", true)) sc.grid = parse_grid(p, *g, "/grid");
  if (const json* r = p.member(doc, "", "common_rach", false)) sc.common_rach = parse_rach(p, *r, "/common_rach", {});
  if (const json* c = p.member(doc, "", "cplane", false)) {
    sc.cplane_function_cost = p.number(*c, "/cplane", "function_cost", 1.0);
    auto opt = p.integer(*c, "/cplane", "option", 1);
    if (opt < 1 || opt > 3) p.error("/cplane/option", "option must be 1, 2 or 3");
    else sc.default_cu_option = static_cast<CuOption>(opt);
  }

  const json& nodes = p.array(doc, "", "nodes");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string w = "/nodes/" + std::to_string(i);
    const json& n = nodes[i];
    NodeSpec spec;
    spec.id = p.id<NodeId>(n, w, "id");
    spec.name = p.string(n, w, "name", "node" + std::to_string(spec.id.value));
    spec.node_class = p.string(n, w, "class", "device");
    spec.access_point = p.boolean(n, w, "access_point", false);
    if (const json* g = p.member(n, w, "grid", false)) spec.grid = parse_grid(p, *g, w + "/grid");
    spec.compute = parse_compute(p, n, w, spec.id);
    sc.nodes.push_back(spec);
  }

  const json& links = p.array(doc, "", "links");
  for (std::size_t i = 0; i < links.size(); ++i) {
    const std::string w = "/links/" + std::to_string(i);
    sc.links.push_back(LinkSpec{p.id<NodeId>(links[i], w, "device"), p.id<NodeId>(links[i], w, "ap"),
                                p.number(links[i], w, "quality", 0.0)});
  }

  const json& slices = p.array(doc, "", "slices");
  for (std::size_t i = 0; i < slices.size(); ++i) {
    const std::string w = "/slices/" + std::to_string(i);
    const json& s = slices[i];
    SliceSpec spec;
    spec.id = p.id<SliceNetId>(s, w, "id");
    spec.name = p.string(s, w, "name", "slice" + std::to_string(spec.id.value));
    auto kind = p.string(s, w, "kind", "vertical");
    if (kind == "horizontal") spec.kind = SliceKind::horizontal;
    else if (kind != "vertical") p.error(w + "/kind", "kind must be 'vertical' or 'horizontal'");
    spec.service = p.string(s, w, "service", "");
    if (const json* r = p.member(s, w, "resources", true)) {
      const std::string rw = w + "/resources";
      if (const json* b = p.member(*r, rw, "blocks", false)) {
        if (!b->is_object()) p.error(rw + "/blocks", "'blocks' must map segment names to block counts");
        else {
          for (auto it = b->begin(); it != b->end(); ++it) {
            if (!it.value().is_number_integer() || it.value().get<std::int64_t>() < 0) {
              p.error(rw + "/blocks/" + it.key(), "block count must be a non-negative integer");
              continue;
            }
            spec.resources.blocks.emplace_back(it.key(), it.value().get<std::size_t>());
          }
        }
      }
      if (const json* pool = p.member(*r, rw, "pool", false)) {
        if (pool->is_string()) spec.resources.pool = pool->get<std::string>();
        else p.error(rw + "/pool", "'pool' must be a segment name");
      }
      spec.resources.weight = p.number(*r, rw, "weight", 1.0);
      if (spec.resources.weight <= 0) p.error(rw + "/weight", "weight must be positive");
      if (spec.resources.blocks.empty() && !spec.resources.pool) {
        p.error(rw, "slice needs carved blocks or a shared pool");
      }
      if (!spec.resources.blocks.empty() && spec.resources.pool) {
        p.error(rw, "slice cannot mix carved blocks and a shared pool");
      }
    }
    if (const json* sch = p.member(s, w, "scheduler", false)) {
      auto pol = p.string(*sch, w + "/scheduler", "policy", "round_robin");
      if (pol == "proportional_fair") spec.policy = SchedPolicy::proportional_fair;
      else if (pol != "round_robin") p.error(w + "/scheduler/policy", "unknown policy '" + pol + "'");
      spec.pf_window = p.number(*sch, w + "/scheduler", "pf_window", 100.0);
      if (spec.pf_window < 1) p.error(w + "/scheduler/pf_window", "pf_window must be >= 1");
    }
    if (const json* r = p.member(s, w, "rach", false)) {
      spec.rach = parse_rach(p, *r, w + "/rach", {});
      spec.rach->slice = spec.id;
    }
    auto opt = p.integer(s, w, "cu_option", static_cast<int>(sc.default_cu_option));
    if (opt < 1 || opt > 3) p.error(w + "/cu_option", "cu_option must be 1, 2 or 3");
    else spec.cu_option = static_cast<CuOption>(opt);
    if (const json* l = p.member(s, w, "lifecycle", false)) spec.ran = parse_lifecycle(p, *l, w + "/lifecycle");
    const json& ec = p.array(s, w, "eligible_classes");
    for (const auto& c : ec) {
      if (c.is_string()) spec.ran.eligible_classes.insert(c.get<std::string>());
      else p.error(w + "/eligible_classes", "classes must be strings");
    }
    const json& aa = p.array(s, w, "active_at");
    for (const auto& a : aa) {
      if (a.is_number_integer()) spec.active_at.insert(NodeId(a.get<std::uint32_t>()));
      else p.error(w + "/active_at", "active_at entries must be node ids");
    }
    sc.slices.push_back(spec);
  }

  const json& traffic = p.array(doc, "", "traffic");
  for (std::size_t i = 0; i < traffic.size(); ++i) {
    const std::string w = "/traffic/" + std::to_string(i);
    const json& t = traffic[i];
    TrafficSpec spec;
    spec.id = p.id<FlowId>(t, w, "id");
    spec.device = p.id<NodeId>(t, w, "device");
    spec.slice = p.id<SliceNetId>(t, w, "slice");
    auto dir = p.string(t, w, "direction", "uplink");
    if (dir == "downlink") spec.direction = Direction::downlink;
    else if (dir != "uplink") p.error(w + "/direction", "direction must be 'uplink' or 'downlink'");
    auto kind = p.string(t, w, "kind", "periodic");
    if (kind == "poisson") {
      spec.kind = ArrivalKind::poisson;
      spec.rate_per_s = p.number(t, w, "rate_per_s", 0.0, true);
      if (spec.rate_per_s <= 0) p.error(w + "/rate_per_s", "rate_per_s must be positive");
    } else if (kind == "periodic") {
      spec.period = p.ms(t, w, "period_ms", spec.period, true);
      if (spec.period <= 0) p.error(w + "/period_ms", "period_ms must be positive");
    } else {
      p.error(w + "/kind", "kind must be 'periodic' or 'poisson'");
    }
    spec.bytes = p.integer(t, w, "bytes", 100);
    if (spec.bytes <= 0) p.error(w + "/bytes", "bytes must be positive");
    spec.start = p.ms(t, w, "start_ms", 0);
    if (p.member(t, w, "stop_ms", false)) spec.stop = p.ms(t, w, "stop_ms", 0);
    spec.service = p.string(t, w, "service", "");
    spec.qos.latency_budget_ms = p.number(t, w, "latency_budget_ms", spec.qos.latency_budget_ms);
    spec.qos.min_rate_kbps = p.number(t, w, "min_rate_kbps", 0.0);
    spec.qos.priority = static_cast<int>(p.integer(t, w, "priority", 0));
    sc.traffic.push_back(spec);
  }

  const json& access = p.array(doc, "", "access");
  for (std::size_t i = 0; i < access.size(); ++i) {
    const std::string w = "/access/" + std::to_string(i);
    const json& a = access[i];
    AccessSpec spec;
    spec.device = p.id<NodeId>(a, w, "device");
    spec.slice = p.id<SliceNetId>(a, w, "slice");
    spec.at = p.ms(a, w, "at_ms", 0);
    spec.via_rach = p.boolean(a, w, "via_rach", true);
    spec.request_activation = p.boolean(a, w, "request_activation", true);
    if (p.member(a, w, "ap", false)) spec.ap = p.id<NodeId>(a, w, "ap");
    sc.access.push_back(spec);
  }

  const json& hos = p.array(doc, "", "handovers");
  for (std::size_t i = 0; i < hos.size(); ++i) {
    const std::string w = "/handovers/" + std::to_string(i);
    sc.handovers.push_back(HandoverSpec{p.id<NodeId>(hos[i], w, "device"), p.id<SliceNetId>(hos[i], w, "slice"),
                                        p.id<NodeId>(hos[i], w, "to_ap"), p.ms(hos[i], w, "at_ms", 0)});
  }

  const json& det = p.array(doc, "", "detach");
  for (std::size_t i = 0; i < det.size(); ++i) {
    const std::string w = "/detach/" + std::to_string(i);
    sc.detaches.push_back(DetachSpec{p.id<NodeId>(det[i], w, "device"), p.id<SliceNetId>(det[i], w, "slice"),
                                     p.ms(det[i], w, "at_ms", 0)});
  }

  const json& bursts = p.array(doc, "", "rach_bursts");
  for (std::size_t i = 0; i < bursts.size(); ++i) {
    const std::string w = "/rach_bursts/" + std::to_string(i);
    const json& b = bursts[i];
    RachBurstSpec spec;
    spec.slice = p.id<SliceNetId>(b, w, "slice");
    spec.ap = p.id<NodeId>(b, w, "ap");
    spec.contenders = static_cast<int>(p.integer(b, w, "contenders", 0, true));
    if (spec.contenders < 0) p.error(w + "/contenders", "contenders must be non-negative");
    spec.at = p.ms(b, w, "at_ms", 0);
    spec.first_device = static_cast<std::uint32_t>(p.integer(b, w, "first_device", 100000));
    spec.common = p.boolean(b, w, "common", false);
    sc.rach_bursts.push_back(spec);
  }

  if (const json* cn = p.member(doc, "", "cn", false)) {
    const json& fns = p.array(*cn, "/cn", "functions");
    for (std::size_t i = 0; i < fns.size(); ++i) {
      const std::string w = "/cn/functions/" + std::to_string(i);
      VirtualFunction f;
      f.name = p.string(fns[i], w, "name", "", true);
      f.processing_rate_per_ms = p.number(fns[i], w, "rate_per_ms", 1.0);
      if (f.processing_rate_per_ms <= 0) p.error(w + "/rate_per_ms", "rate_per_ms must be positive");
      f.per_packet_latency = p.integer(fns[i], w, "latency_us", 0);
      if (p.member(fns[i], w, "host", false)) f.host = p.id<NodeId>(fns[i], w, "host");
      sc.cn_functions.push_back(f);
    }
    const json& cs = p.array(*cn, "/cn", "slices");
    for (std::size_t i = 0; i < cs.size(); ++i) {
      const std::string w = "/cn/slices/" + std::to_string(i);
      CnSlice s;
      s.id = p.string(cs[i], w, "id", "", true);
      s.service = p.string(cs[i], w, "service", "");
      const json& chain = p.array(cs[i], w, "chain");
      for (const auto& f : chain) {
        if (f.is_string()) s.chain.push_back(f.get<std::string>());
        else p.error(w + "/chain", "chain entries must be function names");
      }
      sc.cn_slices.push_back(s);
    }
  }

  if (const json* pm = p.member(doc, "", "pairing", false)) {
    if (const json* r2r = p.member(*pm, "/pairing", "radio_to_ran", false)) {
      if (!r2r->is_object()) p.error("/pairing/radio_to_ran", "must map radio slices to RAN slice ids");
      else {
        for (auto it = r2r->begin(); it != r2r->end(); ++it) {
          auto& set = sc.pairing.radio_to_ran[it.key()];
          if (!it.value().is_array()) {
            p.error("/pairing/radio_to_ran/" + it.key(), "must be a list of RAN slice ids");
            continue;
          }
          for (const auto& v : it.value()) {
            if (v.is_number_integer()) set.insert(SliceNetId(v.get<std::uint16_t>()));
            else p.error("/pairing/radio_to_ran/" + it.key(), "RAN slice ids must be integers");
          }
        }
      }
    }
    if (const json* r2c = p.member(*pm, "/pairing", "ran_to_cn", false)) {
      if (!r2c->is_object()) p.error("/pairing/ran_to_cn", "must map RAN slice ids to CN slice ids");
      else {
        for (auto it = r2c->begin(); it != r2c->end(); ++it) {
          const std::string w = "/pairing/ran_to_cn/" + it.key();
          std::uint16_t ran = 0;
          try {
            std::size_t used = 0;
            auto v = std::stoul(it.key(), &used);
            if (used != it.key().size() || v > 0xFFFF) throw std::invalid_argument("range");
            ran = static_cast<std::uint16_t>(v);
          } catch (const std::exception&) {
            p.error(w, "key '" + it.key() + "' is not a RAN slice id");
            continue;
          }
          auto& set = sc.pairing.ran_to_cn[SliceNetId(ran)];
          if (!it.value().is_array()) {
            p.error(w, "must be a list of CN slice ids");
            continue;
          }
          for (const auto& v : it.value()) {
            if (v.is_string()) set.insert(v.get<std::string>());
            else p.error(w, "CN slice ids must be strings");
          }
        }
      }
    }
  }

  if (const json* o = p.member(doc, "", "offload", false)) {
    const std::string w = "/offload";
    OffloadSpec spec;
    spec.host = p.id<NodeId>(*o, w, "host");
    spec.slice = p.id<SliceNetId>(*o, w, "slice");
    for (const auto& c : p.array(*o, w, "clients")) {
      if (c.is_number_integer()) spec.clients.push_back(NodeId(c.get<std::uint32_t>()));
      else p.error(w + "/clients", "client entries must be node ids");
    }
    auto& cfg = spec.config;
    cfg.signaling_rtt = p.ms(*o, w, "signaling_rtt_ms", cfg.signaling_rtt);
    auto placement = p.string(*o, w, "placement", "below_os");
    if (placement == "at_os") cfg.os_overhead_per_stage = 5 * kMicrosPerMs;
    else if (placement != "below_os") p.error(w + "/placement", "placement must be 'below_os' or 'at_os'");
    cfg.os_overhead_per_stage = p.ms(*o, w, "os_overhead_ms", cfg.os_overhead_per_stage);
    cfg.stage_timeout = p.ms(*o, w, "stage_timeout_ms", cfg.stage_timeout);
    cfg.advertisement_period = p.ms(*o, w, "advertisement_period_ms", cfg.advertisement_period);
    if (cfg.advertisement_period <= 0) p.error(w + "/advertisement_period_ms", "must be positive");
    cfg.admission_floor = p.number(*o, w, "admission_floor", 0.0);
    cfg.pdu_size = p.integer(*o, w, "pdu_size", cfg.pdu_size);
    if (cfg.pdu_size <= 0) p.error(w + "/pdu_size", "pdu_size must be positive");
    cfg.metric_slice = spec.slice;

    const json& tasks = p.array(*o, w, "tasks");
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      const std::string tw = w + "/tasks/" + std::to_string(i);
      const json& t = tasks[i];
      TaskSpec ts;
      ts.client = p.id<NodeId>(t, tw, "client");
      ts.at = p.ms(t, tw, "at_ms", 0);
      ts.repeat = static_cast<int>(p.integer(t, tw, "repeat", 1));
      if (ts.repeat < 0) p.error(tw + "/repeat", "repeat must be non-negative");
      ts.interval = p.ms(t, tw, "interval_ms", ts.interval);
      ts.task.id = static_cast<std::uint32_t>(p.integer(t, tw, "id", static_cast<std::int64_t>(i + 1)));
      ts.task.total_ops = p.number(t, tw, "ops", 0.0, true);
      ts.task.sliceable_fraction = p.number(t, tw, "sliceable_fraction", 1.0);
      if (ts.task.sliceable_fraction < 0 || ts.task.sliceable_fraction > 1) {
        p.error(tw + "/sliceable_fraction", "sliceable_fraction must lie in [0, 1]");
      }
      ts.task.ship_bytes = p.integer(t, tw, "ship_bytes", 0);
      ts.task.result_bytes = p.integer(t, tw, "result_bytes", 0);
      if (p.member(t, tw, "deadline_ms", false)) ts.task.deadline_ms = p.number(t, tw, "deadline_ms", 0.0);
      spec.tasks.push_back(ts);
    }
    const json& le = p.array(*o, w, "link_events");
    for (std::size_t i = 0; i < le.size(); ++i) {
      const std::string lw = w + "/link_events/" + std::to_string(i);
      spec.link_events.push_back(
          LinkEventSpec{p.id<NodeId>(le[i], lw, "client"), p.ms(le[i], lw, "at_ms", 0), p.boolean(le[i], lw, "up", false)});
    }
    if (p.member(*o, w, "host_failure_ms", false)) spec.host_failure = p.ms(*o, w, "host_failure_ms", 0);
    sc.offload = spec;
  }

  const json& edge = p.array(doc, "", "edge");
  for (std::size_t i = 0; i < edge.size(); ++i) {
    const std::string w = "/edge/" + std::to_string(i);
    const json& e = edge[i];
    EdgeSpec spec;
    spec.node = p.id<NodeId>(e, w, "node");
    spec.local_fraction = p.number(e, w, "local_fraction", 0.0, true);
    if (spec.local_fraction < 0 || spec.local_fraction > 1) {
      p.error(w + "/local_fraction", "local_fraction must lie in [0, 1]");
    }
    spec.forward_slice = p.id<SliceNetId>(e, w, "forward_slice");
    spec.forward_flow = p.id<FlowId>(e, w, "forward_flow");
    spec.service = p.string(e, w, "service", "");
    sc.edge.push_back(spec);
  }
}

}  // namespace

CarveRequest carve_request(const ResourceGrid& grid, const SliceSpec& s) {
  CarveRequest req;
  for (const auto& [name, blocks] : s.resources.blocks) {
    auto idx = grid.find_segment(name);
    if (!idx) throw UnknownSliceError("segment '" + name + "' does not exist at this access point");
    req.counts.emplace_back(*idx, grid.cells_for_blocks(*idx, blocks));
  }
  return req;
}

namespace {

void check_semantics(Parser& p, const Scenario& sc) {
  try {
    validate_numerologies(sc.numerologies);
  } catch (const SimError& e) {
    p.error("/numerologies", e.what());
  }
  if (sc.grid.period <= 0) p.error("/grid/period", "period must be positive");

  std::set<NodeId> node_ids;
  for (std::size_t i = 0; i < sc.nodes.size(); ++i) {
    if (!node_ids.insert(sc.nodes[i].id).second) {
      p.error("/nodes/" + std::to_string(i) + "/id", "duplicate node id " + std::to_string(sc.nodes[i].id.value));
    }
  }
  std::map<NodeId, ResourceGrid> grids;
  auto try_grid = [&](const GridSpec& g, const std::string& where) -> std::optional<ResourceGrid> {
    try {
      return ResourceGrid::partition(g, sc.numerologies);
    } catch (const SimError& e) {
      p.error(where, e.what());
      return std::nullopt;
    }
  };
  auto scenario_grid = try_grid(sc.grid, "/grid");
  for (std::size_t i = 0; i < sc.nodes.size(); ++i) {
    const auto& n = sc.nodes[i];
    if (!n.access_point) continue;
    if (n.grid) {
      if (auto g = try_grid(*n.grid, "/nodes/" + std::to_string(i) + "/grid")) grids.emplace(n.id, std::move(*g));
    } else if (scenario_grid) {
      grids.emplace(n.id, *scenario_grid);
    }
  }

  auto node_ref = [&](NodeId id, const std::string& where, bool must_be_ap) {
    const NodeSpec* n = sc.node(id);
    if (!n) p.error(where, "unknown node " + std::to_string(id.value));
    else if (must_be_ap && !n->access_point) p.error(where, "node " + std::to_string(id.value) + " is not an access point");
    return n;
  };
  auto slice_ref = [&](SliceNetId id, const std::string& where) {
    const SliceSpec* s = sc.slice(id);
    if (!s) p.error(where, "unknown slice " + std::to_string(id.value));
    return s;
  };

  for (std::size_t i = 0; i < sc.links.size(); ++i) {
    const std::string w = "/links/" + std::to_string(i);
    node_ref(sc.links[i].device, w + "/device", false);
    node_ref(sc.links[i].ap, w + "/ap", true);
  }

  std::set<SliceNetId> slice_ids;
  for (std::size_t i = 0; i < sc.slices.size(); ++i) {
    const auto& s = sc.slices[i];
    const std::string w = "/slices/" + std::to_string(i);
    if (!slice_ids.insert(s.id).second) p.error(w + "/id", "duplicate slice id " + std::to_string(s.id.value));
    for (auto ap : s.active_at) node_ref(ap, w + "/active_at", true);
    for (const auto& [seg, blocks] : s.resources.blocks) {
      bool known = false;
      for (auto& [ap, grid] : grids) known = known || grid.find_segment(seg).has_value();
      if (!known && !grids.empty()) p.error(w + "/resources/blocks/" + seg, "unknown segment '" + seg + "'");
    }
    if (s.resources.pool) {
      bool known = false, shared = true;
      for (auto& [ap, grid] : grids) {
        if (auto idx = grid.find_segment(*s.resources.pool)) {
          known = true;
          shared = shared && grid.segment(*idx).spec.shared;
        }
      }
      if (!known && !grids.empty()) p.error(w + "/resources/pool", "unknown segment '" + *s.resources.pool + "'");
      if (known && !shared) p.error(w + "/resources/pool", "segment '" + *s.resources.pool + "' is not a shared pool");
    }
  }

  // Initially active slices must fit on their APs, in declaration order.
  for (auto& [ap, grid] : grids) {
    for (std::size_t i = 0; i < sc.slices.size(); ++i) {
      const auto& s = sc.slices[i];
      if (!s.active_at.count(ap) || s.resources.blocks.empty()) continue;
      try {
        grid.carve(s.id, carve_request(grid, s));
      } catch (const SimError& e) {
        p.error("/slices/" + std::to_string(i) + "/resources",
                "cannot carve at node " + std::to_string(ap.value) + ": " + e.what());
      }
    }
  }

  std::set<FlowId> flow_ids;
  for (std::size_t i = 0; i < sc.traffic.size(); ++i) {
    const auto& t = sc.traffic[i];
    const std::string w = "/traffic/" + std::to_string(i);
    if (!flow_ids.insert(t.id).second) p.error(w + "/id", "duplicate flow id " + std::to_string(t.id.value));
    node_ref(t.device, w + "/device", false);
    const SliceSpec* s = slice_ref(t.slice, w + "/slice");
    if (t.stop && *t.stop < t.start) p.error(w + "/stop_ms", "stop_ms precedes start_ms");
    if (s && s->kind == SliceKind::horizontal && t.direction == Direction::downlink) {
      p.error(w + "/direction", "horizontal slice flows terminate locally and are uplink only");
    }
  }
  for (std::size_t i = 0; i < sc.access.size(); ++i) {
    const auto& a = sc.access[i];
    const std::string w = "/access/" + std::to_string(i);
    node_ref(a.device, w + "/device", false);
    slice_ref(a.slice, w + "/slice");
    if (a.ap) node_ref(*a.ap, w + "/ap", true);
  }
  for (std::size_t i = 0; i < sc.handovers.size(); ++i) {
    const std::string w = "/handovers/" + std::to_string(i);
    node_ref(sc.handovers[i].device, w + "/device", false);
    slice_ref(sc.handovers[i].slice, w + "/slice");
    node_ref(sc.handovers[i].to_ap, w + "/to_ap", true);
  }
  for (std::size_t i = 0; i < sc.detaches.size(); ++i) {
    const std::string w = "/detach/" + std::to_string(i);
    node_ref(sc.detaches[i].device, w + "/device", false);
    slice_ref(sc.detaches[i].slice, w + "/slice");
  }
  for (std::size_t i = 0; i < sc.rach_bursts.size(); ++i) {
    const auto& b = sc.rach_bursts[i];
    const std::string w = "/rach_bursts/" + std::to_string(i);
    node_ref(b.ap, w + "/ap", true);
    const SliceSpec* s = slice_ref(b.slice, w + "/slice");
    if (s && !b.common && !s->rach) p.error(w + "/slice", "slice " + std::to_string(b.slice.value) + " has no RACH of its own");
    if (s && !b.common && !s->active_at.count(b.ap)) {
      p.error(w + "/ap", "slice " + std::to_string(b.slice.value) + " is not active at node " + std::to_string(b.ap.value));
    }
  }

  std::set<std::string> fn_names;
  for (std::size_t i = 0; i < sc.cn_functions.size(); ++i) {
    if (!fn_names.insert(sc.cn_functions[i].name).second) {
      p.error("/cn/functions/" + std::to_string(i) + "/name", "duplicate function '" + sc.cn_functions[i].name + "'");
    }
  }
  std::set<std::string> cn_ids;
  std::map<std::string, CnSlice> cn_map;
  for (std::size_t i = 0; i < sc.cn_slices.size(); ++i) {
    const auto& c = sc.cn_slices[i];
    const std::string w = "/cn/slices/" + std::to_string(i);
    if (!cn_ids.insert(c.id).second) p.error(w + "/id", "duplicate CN slice '" + c.id + "'");
    if (c.chain.empty()) p.error(w + "/chain", "CN slice '" + c.id + "' has an empty chain");
    for (std::size_t k = 0; k < c.chain.size(); ++k) {
      if (!fn_names.count(c.chain[k])) {
        p.error(w + "/chain/" + std::to_string(k), "unknown function '" + c.chain[k] + "'");
      }
    }
    cn_map[c.id] = c;
  }

  // Pairing covers vertical RAN slices; horizontal ones never reach a CN.
  std::set<SliceNetId> vertical;
  for (const auto& s : sc.slices) {
    if (s.kind == SliceKind::vertical) vertical.insert(s.id);
  }
  PairingMap pairing = sc.pairing;
  for (const auto& s : sc.slices) {
    if (s.kind != SliceKind::horizontal) continue;
    for (auto& [radio, rans] : pairing.radio_to_ran) rans.erase(s.id);
    if (sc.pairing.ran_to_cn.count(s.id)) {
      p.error("/pairing/ran_to_cn/" + std::to_string(s.id.value),
              "horizontal slice " + std::to_string(s.id.value) + " cannot be paired to a CN slice");
    }
  }
  if (!sc.cn_slices.empty() || !sc.pairing.radio_to_ran.empty() || !sc.pairing.ran_to_cn.empty()) {
    for (const auto& v : validate_pairing(pairing, sc.radio_slices(), vertical, cn_ids)) {
      p.error(dotted_to_pointer(v.location), v.message);
    }
  }

  for (std::size_t i = 0; i < sc.traffic.size(); ++i) {
    const auto& t = sc.traffic[i];
    const SliceSpec* s = sc.slice(t.slice);
    if (!s || s->kind != SliceKind::vertical) continue;
    try {
      resolve_path(t.id, t.slice, t.service, t.direction, sc.pairing, cn_map);
    } catch (const SimError& e) {
      p.error("/traffic/" + std::to_string(i) + "/service", e.what());
    }
  }

  if (sc.offload) {
    const auto& o = *sc.offload;
    const NodeSpec* host = node_ref(o.host, "/offload/host", true);
    if (host && !host->compute) p.error("/offload/host", "host node has no compute profile");
    const SliceSpec* s = slice_ref(o.slice, "/offload/slice");
    if (s && s->kind != SliceKind::horizontal) p.error("/offload/slice", "offload runs over a horizontal slice");
    if (s && !s->active_at.count(o.host)) p.error("/offload/slice", "offload slice must be active at the host");
    std::set<NodeId> clients(o.clients.begin(), o.clients.end());
    for (std::size_t i = 0; i < o.clients.size(); ++i) {
      const NodeSpec* c = node_ref(o.clients[i], "/offload/clients/" + std::to_string(i), false);
      if (c && !c->compute) p.error("/offload/clients/" + std::to_string(i), "client node has no compute profile");
    }
    for (std::size_t i = 0; i < o.tasks.size(); ++i) {
      if (!clients.count(o.tasks[i].client)) {
        p.error("/offload/tasks/" + std::to_string(i) + "/client", "task client is not an offload client");
      }
    }
    for (std::size_t i = 0; i < o.link_events.size(); ++i) {
      if (!clients.count(o.link_events[i].client)) {
        p.error("/offload/link_events/" + std::to_string(i) + "/client", "not an offload client");
      }
    }
  }

  for (std::size_t i = 0; i < sc.edge.size(); ++i) {
    const auto& e = sc.edge[i];
    const std::string w = "/edge/" + std::to_string(i);
    node_ref(e.node, w + "/node", true);
    const SliceSpec* s = slice_ref(e.forward_slice, w + "/forward_slice");
    if (s && s->kind != SliceKind::vertical) p.error(w + "/forward_slice", "edge output is forwarded over a vertical slice");
    if (flow_ids.count(e.forward_flow)) p.error(w + "/forward_flow", "flow id already used by a traffic source");
    if (s) {
      try {
        resolve_path(e.forward_flow, e.forward_slice, e.service, Direction::uplink, sc.pairing, cn_map);
      } catch (const SimError& ex) {
        p.error(w + "/service", ex.what());
      }
    }
  }
}

std::string line_col(const std::string& text, std::size_t offset) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return std::to_string(line) + ":" + std::to_string(col);
}

}  // namespace

LoadResult load_scenario(const json& doc) {
  LoadResult out;
  Parser p(out.diagnostics);
  Scenario sc;
  parse_document(p, doc, sc);
  if (out.diagnostics.empty()) check_semantics(p, sc);
  if (out.diagnostics.empty()) out.scenario = std::move(sc);
  return out;
}

LoadResult load_scenario_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    LoadResult out;
    out.diagnostics.push_back({line_col(text, e.byte > 0 ? e.byte - 1 : 0), e.what()});
    return out;
  }
  LoadResult out = load_scenario(doc);
  PositionIndex index(text);
  for (auto& d : out.diagnostics) {
    auto pos = index.locate(d.location);
    d.location = pos.empty() ? (d.location.empty() ? "/" : d.location) : pos + " " + (d.location.empty() ? "/" : d.location);
  }
  return out;
}

LoadResult load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    LoadResult out;
    out.diagnostics.push_back({path, "cannot read file"});
    return out;
  }
  std::stringstream ss;
  ss << in.rdbuf();
  auto out = load_scenario_text(ss.str());
  for (auto& d : out.diagnostics) d.location = path + ":" + d.location;
  return out;
}

Scenario load_scenario_or_throw(const json& doc) {
  auto r = load_scenario(doc);
  if (!r.ok()) {
    std::string msg = "invalid scenario:";
    for (const auto& d : r.diagnostics) msg += "\n  " + (d.location.empty() ? "/" : d.location) + ": " + d.message;
    throw ScenarioError(msg);
  }
  return std::move(*r.scenario);
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ScenarioError(path + ": " + e.what());
  }
}

std::string to_json_pointer(const std::string& dotted) { return dotted_to_pointer(dotted); }

void set_parameter(json& doc, const std::string& dotted_path, const json& value) {
  json::json_pointer ptr;
  try {
    ptr = json::json_pointer(to_json_pointer(dotted_path));
  } catch (const json::exception&) {
    throw ScenarioError("unknown parameter path '" + dotted_path + "'");
  }
  if (dotted_path.empty() || !doc.contains(ptr)) throw ScenarioError("unknown parameter path '" + dotted_path + "'");
  doc[ptr] = value;
}

json parse_sweep_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return json(text);
  }
}

}  // namespace slicesim
