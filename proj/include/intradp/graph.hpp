#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "units.hpp"

namespace intradp {

using json = nlohmann::json;
using NodeId = std::int64_t;

enum class OperatorKind { ElementWise, BlockWise, RowWise, Global };

constexpr std::string_view to_string(OperatorKind k) {
  switch (k) {
    case OperatorKind::ElementWise: return "ElementWise";
    case OperatorKind::BlockWise: return "BlockWise";
    case OperatorKind::RowWise: return "RowWise";
    case OperatorKind::Global: return "Global";
  }
  return "?";
}

inline std::optional<OperatorKind> parse_kind(std::string_view s) {
  if (s == "ElementWise") return OperatorKind::ElementWise;
  if (s == "BlockWise") return OperatorKind::BlockWise;
  if (s == "RowWise") return OperatorKind::RowWise;
  if (s == "Global") return OperatorKind::Global;
  return std::nullopt;
}

struct BlockParams {
  Units kernel = 1;
  Units stride = 1;
  Units padding = 0;
  Units dilation = 1;

  Units extent() const { return dilation * (kernel - 1) + 1; }
  friend bool operator==(const BlockParams&, const BlockParams&) = default;
};

struct OperatorNode {
  NodeId id = 0;
  std::string name;
  std::string op;  // operator family, e.g. "conv1d"; may be empty when only `kind` is declared
  OperatorKind kind = OperatorKind::ElementWise;
  Units in_units = 1;
  Units out_units = 1;
  double out_bytes_per_unit = 0.0;
  std::optional<BlockParams> block;
  // Matmul parameter matrix shape (rows x cols); zero when not a matmul.
  Units param_rows = 0;
  Units param_cols = 0;
  // Floats carried per input / output unit by the reference kernels.
  Units in_width = 1;
  Units unit_width = 1;
  bool is_virtual = false;

  double out_bytes() const { return static_cast<double>(out_units) * out_bytes_per_unit; }
  UnitRange full_out() const { return {0, out_units}; }
  UnitRange full_in() const { return {0, in_units}; }
};

namespace detail {

inline Units floor_div(Units a, Units b) {
  Units q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

inline Units ceil_div(Units a, Units b) { return -floor_div(-a, b); }

}  // namespace detail

/// Classifies an operator description. An explicit "kind" wins; otherwise the
/// "op" family decides. A matmul whose parameter matrix has a single row is
/// treated as Global.
inline OperatorKind classify_operator(const json& op_spec) {
  if (op_spec.contains("kind") && !op_spec["kind"].is_null()) {
    const auto s = op_spec["kind"].get<std::string>();
    if (auto k = parse_kind(s)) return *k;
    throw Error(Errc::UnknownOperator, "unknown kind '" + s + "'");
  }
  const std::string op = op_spec.value("op", std::string{});
  static const std::vector<std::string_view> element_wise = {
      "relu", "sigmoid", "silu", "gelu", "tanh", "add", "mul", "bias_add",
      "batchnorm", "identity", "dropout"};
  static const std::vector<std::string_view> block_wise = {
      "conv", "conv1d", "conv2d", "maxpool", "maxpool1d", "avgpool", "avgpool1d"};
  static const std::vector<std::string_view> global = {
      "softmax", "layernorm", "flatten", "global_avgpool", "argmax", "reduce_mean"};
  auto in = [&](const auto& set) { return std::find(set.begin(), set.end(), op) != set.end(); };
  if (in(element_wise)) return OperatorKind::ElementWise;
  if (in(block_wise)) return OperatorKind::BlockWise;
  if (in(global)) return OperatorKind::Global;
  if (op == "matmul" || op == "linear" || op == "gemm") {
    Units rows = 0;
    if (op_spec.contains("params")) rows = op_spec["params"].value("rows", Units{0});
    return rows == 1 ? OperatorKind::Global : OperatorKind::RowWise;
  }
  throw Error(Errc::UnknownOperator,
              "operator family '" + op + "' is not recognized and no kind is declared");
}

/// Input units of `v` that the output units `out` depend on.
inline UnitRange required_input_range(const OperatorNode& v, const UnitRange& out) {
  if (out.lo < 0 || out.hi > v.out_units || out.lo > out.hi) {
    throw Error(Errc::RangeOutOfBounds, "output range outside operator '" + v.name + "'");
  }
  if (out.empty()) return {};
  switch (v.kind) {
    case OperatorKind::ElementWise:
    case OperatorKind::RowWise:
      return out;
    case OperatorKind::Global:
      return v.full_in();
    case OperatorKind::BlockWise: {
      const BlockParams& b = *v.block;
      const Units lo = std::clamp<Units>(out.lo * b.stride - b.padding, 0, v.in_units);
      const Units hi = std::clamp<Units>((out.hi - 1) * b.stride - b.padding + b.extent(), lo,
                                         v.in_units);
      return {lo, hi};
    }
  }
  return {};
}

/// Largest output range of `v` computable from the input units `available`.
inline UnitRange child_cover(const OperatorNode& v, const UnitRange& available) {
  const UnitRange avail = intersect(available, v.full_in());
  if (avail.empty()) return {};
  switch (v.kind) {
    case OperatorKind::ElementWise:
    case OperatorKind::RowWise:
      return avail;
    case OperatorKind::Global:
      return avail == v.full_in() ? UnitRange{0, 1} : UnitRange{};
    case OperatorKind::BlockWise: {
      const BlockParams& b = *v.block;
      Units jlo = 0;
      if (avail.lo > 0) jlo = detail::ceil_div(avail.lo + b.padding, b.stride);
      Units jhi = v.out_units;  // exclusive
      if (avail.hi < v.in_units) {
        jhi = detail::floor_div(avail.hi + b.padding - b.extent(), b.stride) + 1;
      }
      jlo = std::max<Units>(jlo, 0);
      jhi = std::min<Units>(jhi, v.out_units);
      if (jhi <= jlo) return {};
      return {jlo, jhi};
    }
  }
  return {};
}

class ModelGraph;
ModelGraph build_graph(const json& doc);

/// Validated DAG with virtual `input` and `output` vertices. Nodes are stored
/// densely; `input` is index 0 and `output` is the last index.
class ModelGraph {
 public:
  std::size_t size() const { return nodes_.size(); }
  const OperatorNode& node(std::size_t i) const { return nodes_[i]; }
  const std::vector<OperatorNode>& nodes() const { return nodes_; }
  const std::vector<std::pair<std::size_t, std::size_t>>& edges() const { return edges_; }
  const std::vector<std::size_t>& parents(std::size_t i) const { return parents_[i]; }
  const std::vector<std::size_t>& children(std::size_t i) const { return children_[i]; }
  const std::vector<std::size_t>& topo_order() const { return topo_; }
  std::size_t topo_position(std::size_t i) const { return topo_pos_[i]; }
  std::size_t input_index() const { return 0; }
  std::size_t output_index() const { return nodes_.size() - 1; }
  double raw_input_bytes() const { return raw_input_bytes_; }
  const json& document() const { return doc_; }

  std::size_t index_of(NodeId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw Error(Errc::UnknownNode, "node id " + std::to_string(id));
    return it->second;
  }
  bool has_node(NodeId id) const { return index_.count(id) != 0; }

  /// Non-virtual nodes in topological order.
  std::vector<std::size_t> operator_order() const {
    std::vector<std::size_t> out;
    for (auto i : topo_) {
      if (!nodes_[i].is_virtual) out.push_back(i);
    }
    return out;
  }

  /// Maps input units of `child` to the output units of `parent` that hold them.
  UnitRange to_parent_units(std::size_t parent, std::size_t child, const UnitRange& r) const {
    if (r.empty()) return {};
    const Units wp = nodes_[parent].unit_width;
    const Units wc = nodes_[child].in_width;
    if (wp == wc) return r;
    return {detail::floor_div(r.lo * wc, wp), detail::ceil_div(r.hi * wc, wp)};
  }

  /// Maps output units of `parent` to the input units of `child` they fully provide.
  UnitRange to_child_units(std::size_t parent, std::size_t child, const UnitRange& r) const {
    if (r.empty()) return {};
    const Units wp = nodes_[parent].unit_width;
    const Units wc = nodes_[child].in_width;
    if (wp == wc) return r;
    const Units lo = detail::ceil_div(r.lo * wp, wc);
    const Units hi = detail::floor_div(r.hi * wp, wc);
    if (hi <= lo) return {};
    return {lo, hi};
  }

  /// Output units of `parent` needed to compute `out` of `child`.
  UnitRange needed_from_parent(std::size_t parent, std::size_t child, const UnitRange& out) const {
    return to_parent_units(parent, child, required_input_range(nodes_[child], out));
  }

 private:
  friend ModelGraph build_graph(const json& doc);

  std::vector<OperatorNode> nodes_;
  std::vector<std::pair<std::size_t, std::size_t>> edges_;
  std::vector<std::vector<std::size_t>> parents_;
  std::vector<std::vector<std::size_t>> children_;
  std::vector<std::size_t> topo_;
  std::vector<std::size_t> topo_pos_;
  std::map<NodeId, std::size_t> index_;
  double raw_input_bytes_ = 0.0;
  json doc_;
};

namespace detail {

inline Units require_units(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_number_integer()) {
    throw Error(Errc::SchemaViolation, where + ": missing integer field '" + key + "'");
  }
  return j[key].get<Units>();
}

inline OperatorNode parse_node(const json& j) {
  if (!j.is_object()) throw Error(Errc::SchemaViolation, "node entry is not an object");
  OperatorNode n;
  n.id = require_units(j, "id", "node");
  const std::string where = "node " + std::to_string(n.id);
  n.name = j.value("name", "n" + std::to_string(n.id));
  n.op = j.value("op", std::string{});
  n.kind = classify_operator(j);
  n.in_units = require_units(j, "in_units", where);
  n.out_units = require_units(j, "out_units", where);
  if (!j.contains("out_bytes_per_unit") || !j["out_bytes_per_unit"].is_number()) {
    throw Error(Errc::SchemaViolation, where + ": missing 'out_bytes_per_unit'");
  }
  n.out_bytes_per_unit = j["out_bytes_per_unit"].get<double>();
  if (n.in_units < 1 || n.out_units < 1) {
    throw Error(Errc::InconsistentUnits, where + ": unit counts must be >= 1");
  }
  if (n.out_bytes_per_unit < 0) {
    throw Error(Errc::SchemaViolation, where + ": negative out_bytes_per_unit");
  }
  if (j.contains("params")) {
    n.param_rows = j["params"].value("rows", Units{0});
    n.param_cols = j["params"].value("cols", Units{0});
  }
  if (n.kind == OperatorKind::BlockWise) {
    if (!j.contains("block") || !j["block"].is_object()) {
      throw Error(Errc::MissingBlockParams, where + " is BlockWise without block parameters");
    }
    const json& b = j["block"];
    for (const char* key : {"kernel", "stride", "padding", "dilation"}) {
      if (!b.contains(key) || !b[key].is_number_integer()) {
        throw Error(Errc::MissingBlockParams, where + ": block parameter '" + key + "' missing");
      }
    }
    BlockParams p{b["kernel"].get<Units>(), b["stride"].get<Units>(), b["padding"].get<Units>(),
                  b["dilation"].get<Units>()};
    if (p.kernel < 1 || p.stride < 1 || p.padding < 0 || p.dilation < 1) {
      throw Error(Errc::MissingBlockParams, where + ": block parameters out of range");
    }
    if (p.padding > p.dilation * (p.kernel - 1)) {
      throw Error(Errc::InconsistentUnits, where + ": padding exceeds the kernel extent");
    }
    n.block = p;
    const Units expect =
        floor_div(n.in_units + 2 * p.padding - p.extent(), p.stride) + 1;
    if (n.out_units != expect) {
      throw Error(Errc::InconsistentUnits, where + ": out_units " + std::to_string(n.out_units) +
                                               " but block arithmetic gives " +
                                               std::to_string(expect));
    }
  } else if (n.kind == OperatorKind::Global) {
    if (n.out_units != 1) {
      throw Error(Errc::InconsistentUnits, where + ": Global operators have exactly one unit");
    }
  } else if (n.out_units != n.in_units) {
    throw Error(Errc::InconsistentUnits, where + ": ElementWise/RowWise keep the unit count");
  }
  if (j.contains("unit_width")) n.unit_width = j["unit_width"].get<Units>();
  else n.unit_width = 0;  // derived once the input width is known
  return n;
}

}  // namespace detail

/// Parses and validates a model-profile document.
inline ModelGraph build_graph(const json& doc) {
  using detail::require_units;
  if (!doc.is_object()) throw Error(Errc::SchemaViolation, "model document is not an object");
  if (!doc.contains("raw_input_bytes") || !doc["raw_input_bytes"].is_number()) {
    throw Error(Errc::SchemaViolation, "missing 'raw_input_bytes'");
  }
  if (!doc.contains("nodes") || !doc["nodes"].is_array() || doc["nodes"].empty()) {
    throw Error(Errc::SchemaViolation, "missing or empty 'nodes'");
  }
  ModelGraph g;
  g.doc_ = doc;
  g.raw_input_bytes_ = doc["raw_input_bytes"].get<double>();
  if (g.raw_input_bytes_ <= 0) throw Error(Errc::SchemaViolation, "raw_input_bytes must be > 0");

  std::vector<OperatorNode> user;
  for (const auto& jn : doc["nodes"]) user.push_back(detail::parse_node(jn));

  NodeId max_id = 0;
  std::map<NodeId, std::size_t> idx;
  for (std::size_t i = 0; i < user.size(); ++i) {
    if (!idx.emplace(user[i].id, i + 1).second) {
      throw Error(Errc::DuplicateId, "node id " + std::to_string(user[i].id));
    }
    max_id = std::max(max_id, user[i].id);
  }

  const std::size_t n = user.size() + 2;
  const std::size_t in_i = 0, out_i = n - 1;
  g.nodes_.resize(n);
  for (std::size_t i = 0; i < user.size(); ++i) g.nodes_[i + 1] = user[i];
  g.parents_.assign(n, {});
  g.children_.assign(n, {});

  if (doc.contains("edges")) {
    if (!doc["edges"].is_array()) throw Error(Errc::SchemaViolation, "'edges' is not an array");
    for (const auto& e : doc["edges"]) {
      if (!e.is_array() || e.size() != 2) {
        throw Error(Errc::SchemaViolation, "edge must be a [u, v] pair");
      }
      const NodeId u = e[0].get<NodeId>(), v = e[1].get<NodeId>();
      auto iu = idx.find(u), iv = idx.find(v);
      if (iu == idx.end() || iv == idx.end()) {
        throw Error(Errc::DanglingEdge,
                    "edge (" + std::to_string(u) + "," + std::to_string(v) + ")");
      }
      if (u == v) throw Error(Errc::CycleDetected, "self loop on node " + std::to_string(u));
      auto& ch = g.children_[iu->second];
      if (std::find(ch.begin(), ch.end(), iv->second) != ch.end()) continue;
      ch.push_back(iv->second);
      g.parents_[iv->second].push_back(iu->second);
    }
  }

  // Virtual endpoints.
  std::vector<std::size_t> sources, sinks;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (g.parents_[i].empty()) sources.push_back(i);
    if (g.children_[i].empty()) sinks.push_back(i);
  }
  if (sources.empty()) throw Error(Errc::CycleDetected, "no source operator");
  if (sinks.empty()) throw Error(Errc::CycleDetected, "no sink operator");
  if (sinks.size() > 1) {
    throw Error(Errc::UnreachableNode,
                "model has " + std::to_string(sinks.size()) + " sinks; exactly one is required");
  }
  const Units input_width = doc.value("input_width", Units{1});
  OperatorNode& vin = g.nodes_[in_i];
  vin.id = max_id + 1;
  vin.name = "input";
  vin.kind = OperatorKind::ElementWise;
  vin.is_virtual = true;
  vin.in_units = vin.out_units = g.nodes_[sources.front()].in_units;
  vin.in_width = vin.unit_width = input_width;
  vin.out_bytes_per_unit = g.raw_input_bytes_ / static_cast<double>(vin.out_units);
  for (auto s : sources) {
    g.children_[in_i].push_back(s);
    g.parents_[s].push_back(in_i);
  }
  OperatorNode& vout = g.nodes_[out_i];
  vout.id = max_id + 2;
  vout.name = "output";
  vout.kind = OperatorKind::ElementWise;
  vout.is_virtual = true;
  vout.in_units = vout.out_units = g.nodes_[sinks.front()].out_units;
  vout.unit_width = 0;  // inherits the sink's width below
  vout.out_bytes_per_unit = g.raw_input_bytes_ / static_cast<double>(vout.out_units);
  g.children_[sinks.front()].push_back(out_i);
  g.parents_[out_i].push_back(sinks.front());

  g.index_ = idx;
  g.index_[vin.id] = in_i;
  g.index_[vout.id] = out_i;

  // Kahn's algorithm; lowest dense index first keeps the order deterministic.
  std::vector<std::size_t> indeg(n);
  for (std::size_t i = 0; i < n; ++i) indeg[i] = g.parents_[i].size();
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t i = 0; i < n; ++i) {
    if (indeg[i] == 0) ready.push(i);
  }
  while (!ready.empty()) {
    const auto i = ready.top();
    ready.pop();
    g.topo_.push_back(i);
    for (auto c : g.children_[i]) {
      if (--indeg[c] == 0) ready.push(c);
    }
  }
  if (g.topo_.size() != n) throw Error(Errc::CycleDetected, "model graph contains a cycle");
  g.topo_pos_.assign(n, 0);
  for (std::size_t p = 0; p < n; ++p) g.topo_pos_[g.topo_[p]] = p;

  auto by_topo = [&](std::size_t a, std::size_t b) { return g.topo_pos_[a] < g.topo_pos_[b]; };
  for (std::size_t i = 0; i < n; ++i) {
    std::sort(g.parents_[i].begin(), g.parents_[i].end(), by_topo);
    std::sort(g.children_[i].begin(), g.children_[i].end(), by_topo);
    for (auto c : g.children_[i]) g.edges_.emplace_back(i, c);
  }
  std::sort(g.edges_.begin(), g.edges_.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return by_topo(a.first, b.first);
    return by_topo(a.second, b.second);
  });

  // Reachability: every operator must lie on an input -> output path.
  std::vector<char> fwd(n, 0), bwd(n, 0);
  fwd[in_i] = 1;
  for (auto i : g.topo_) {
    if (!fwd[i]) continue;
    for (auto c : g.children_[i]) fwd[c] = 1;
  }
  bwd[out_i] = 1;
  for (auto it = g.topo_.rbegin(); it != g.topo_.rend(); ++it) {
    if (!bwd[*it]) continue;
    for (auto p : g.parents_[*it]) bwd[p] = 1;
  }
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!fwd[i] || !bwd[i]) {
      throw Error(Errc::UnreachableNode, "node '" + g.nodes_[i].name + "'");
    }
  }

  // Widths flow along the topological order; every edge must carry a whole
  // number of the child's input units.
  for (auto i : g.topo_) {
    if (i == in_i) continue;
    OperatorNode& v = g.nodes_[i];
    Units floats = -1;
    for (auto p : g.parents_[i]) {
      const Units f = g.nodes_[p].out_units * g.nodes_[p].unit_width;
      if (floats >= 0 && f != floats) {
        throw Error(Errc::InconsistentUnits,
                    "parents of '" + v.name + "' produce tensors of different sizes");
      }
      floats = f;
    }
    if (floats % v.in_units != 0) {
      throw Error(Errc::InconsistentUnits, "edge into '" + v.name + "' carries " +
                                               std::to_string(floats) + " values for " +
                                               std::to_string(v.in_units) + " input units");
    }
    v.in_width = floats / v.in_units;
    if (v.unit_width == 0) {
      switch (v.kind) {
        case OperatorKind::ElementWise:
        case OperatorKind::BlockWise:
          v.unit_width = v.in_width;
          break;
        case OperatorKind::RowWise:
          v.unit_width = v.param_cols > 0 ? v.param_cols : v.in_width;
          break;
        case OperatorKind::Global:
          v.unit_width = v.param_cols > 0 ? v.in_units * v.param_cols : floats;
          break;
      }
    }
    if (v.unit_width < 1) throw Error(Errc::InconsistentUnits, "'" + v.name + "': unit_width < 1");
    for (auto p : g.parents_[i]) {
      const OperatorNode& u = g.nodes_[p];
      if (u.out_units != v.in_units && u.out_units != 1 && v.in_units != 1 &&
          u.unit_width % v.in_width != 0 && v.in_width % u.unit_width != 0) {
        throw Error(Errc::InconsistentUnits,
                    "edge " + u.name + " -> " + v.name + " mixes incompatible unit widths");
      }
    }
  }
  return g;
}

/// Π: operators whose whole output is strictly larger than the raw input.
inline std::vector<std::size_t> oversize_set(const ModelGraph& g) {
  std::vector<std::size_t> out;
  for (auto i : g.topo_order()) {
    if (g.node(i).out_bytes() > g.raw_input_bytes()) out.push_back(i);
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<char> oversize_mask(const ModelGraph& g) {
  std::vector<char> mask(g.size(), 0);
  for (auto i : oversize_set(g)) mask[i] = 1;
  return mask;
}

}  // namespace intradp
