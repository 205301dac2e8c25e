#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "graph.hpp"

namespace intradp {

/// Dense tensor along the partition axis: `width` floats per unit.
struct Tensor {
  std::vector<float> values;
  Units width = 1;

  Units units() const { return static_cast<Units>(values.size()) / width; }
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// A contiguous slice of a tensor, addressed in the owner's unit indices.
struct TensorPart {
  UnitRange range;
  Units width = 1;
  std::vector<float> values;

  bool covers(const UnitRange& r) const { return r.subset_of(range); }
  const float* unit(Units i) const { return values.data() + (i - range.lo) * width; }
};

using Weights = std::map<NodeId, std::vector<float>>;

namespace detail {

inline bool same_bits(float a, float b) {
  return std::bit_cast<std::uint32_t>(a) == std::bit_cast<std::uint32_t>(b);
}

// Flat element access into a parent's part, by element index of the child's input.
struct InputView {
  const TensorPart* part;
  Units base;  // first element index held by `part`

  explicit InputView(const TensorPart& p) : part(&p), base(p.range.lo * p.width) {}
  float at(Units e) const { return part->values[static_cast<std::size_t>(e - base)]; }
};

inline const std::vector<float>& weights_of(const Weights& w, const OperatorNode& v, std::size_t n) {
  auto it = w.find(v.id);
  if (it == w.end() || it->second.size() != n) {
    throw Error(Errc::ShapeMismatch, "weights for '" + v.name + "' missing or mis-sized");
  }
  return it->second;
}

}  // namespace detail

/// Number of weights a node's kernel expects.
inline std::size_t weight_count(const OperatorNode& v) {
  if (v.op == "conv1d" || v.op == "conv") return static_cast<std::size_t>(v.block->kernel);
  if (v.op == "matmul" || v.op == "linear") return static_cast<std::size_t>(v.param_rows * v.param_cols);
  return 0;
}

inline Weights synth_weights(const ModelGraph& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  Weights w;
  for (auto i : g.topo_order()) {
    const auto& v = g.node(i);
    if (v.is_virtual) continue;
    std::vector<float> ws(weight_count(v));
    for (auto& x : ws) x = dist(rng);
    w[v.id] = std::move(ws);
  }
  return w;
}

/// Uniform [-1, 1) model input matching the input vertex's shape.
inline Tensor random_input(const ModelGraph& g, std::uint64_t seed) {
  const auto& in = g.node(g.input_index());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  Tensor t{std::vector<float>(static_cast<std::size_t>(in.out_units * in.unit_width)), in.unit_width};
  for (auto& x : t.values) x = dist(rng);
  return t;
}

/// Computes output units `out` of `v` from one input part per parent (parent
/// order). Summation always runs in ascending input index, so any split of
/// the output range reproduces the full-tensor result bit for bit.
inline TensorPart apply_range(const ModelGraph& g, std::size_t vi, const Weights& weights,
                              std::span<const TensorPart> inputs, const UnitRange& out) {
  const OperatorNode& v = g.node(vi);
  const auto& parents = g.parents(vi);
  if (inputs.size() != parents.size()) {
    throw Error(Errc::ShapeMismatch, "'" + v.name + "' expects " + std::to_string(parents.size()) +
                                         " input parts");
  }
  const UnitRange need = required_input_range(v, out);
  for (std::size_t k = 0; k < parents.size(); ++k) {
    if (inputs[k].width != g.node(parents[k]).unit_width) {
      throw Error(Errc::ShapeMismatch, "input part width mismatch for '" + v.name + "'");
    }
    if (!inputs[k].covers(g.to_parent_units(parents[k], vi, need))) {
      throw Error(Errc::InsufficientHalo, "input to '" + v.name + "' lacks the required halo");
    }
  }
  TensorPart res{out, v.unit_width, std::vector<float>(static_cast<std::size_t>(out.size() * v.unit_width))};
  if (out.empty()) return res;

  std::vector<detail::InputView> in;
  for (const auto& p : inputs) in.emplace_back(p);
  const Units iw = v.in_width;
  const Units ow = v.unit_width;
  auto put = [&](Units j, Units f, float y) { res.values[static_cast<std::size_t>((j - out.lo) * ow + f)] = y; };

  const std::string& op = v.op;
  if (v.is_virtual || op == "identity" || op == "flatten" || op == "dropout") {
    if (in.size() != 1 || iw * v.in_units != ow * v.out_units) {
      throw Error(Errc::UnknownOperator, "copy kernel needs one input of equal size ('" + v.name + "')");
    }
    for (Units e = out.lo * ow; e < out.hi * ow; ++e) {
      res.values[static_cast<std::size_t>(e - out.lo * ow)] = in[0].at(e);
    }
  } else if (op == "relu") {
    for (Units j = out.lo; j < out.hi; ++j) {
      for (Units f = 0; f < ow; ++f) {
        const float x = in[0].at(j * iw + f);
        put(j, f, x > 0.0f ? x : 0.0f);
      }
    }
  } else if (op == "add") {
    for (Units j = out.lo; j < out.hi; ++j) {
      for (Units f = 0; f < ow; ++f) {
        float acc = in[0].at(j * iw + f);
        for (std::size_t k = 1; k < in.size(); ++k) acc += in[k].at(j * iw + f);
        put(j, f, acc);
      }
    }
  } else if (op == "conv1d" || op == "conv" || op == "maxpool1d" || op == "maxpool") {
    if (iw != 1 || ow != 1) throw Error(Errc::ShapeMismatch, "1-D block kernels are single-channel");
    const BlockParams& b = *v.block;
    const bool is_conv = (op == "conv1d" || op == "conv");
    const std::vector<float>* w = is_conv ? &detail::weights_of(weights, v, weight_count(v)) : nullptr;
    for (Units j = out.lo; j < out.hi; ++j) {
      float acc = is_conv ? 0.0f : -std::numeric_limits<float>::infinity();
      for (Units t = 0; t < b.kernel; ++t) {
        const Units x = j * b.stride - b.padding + b.dilation * t;
        if (x < 0 || x >= v.in_units) continue;
        const float val = in[0].at(x);
        if (is_conv) acc += (*w)[static_cast<std::size_t>(t)] * val;
        else acc = std::max(acc, val);
      }
      put(j, 0, acc);
    }
  } else if (op == "matmul" || op == "linear") {
    const Units rows = v.param_rows, cols = v.param_cols;
    const auto& w = detail::weights_of(weights, v, weight_count(v));
    if (v.kind == OperatorKind::RowWise) {
      if (iw != rows || ow != cols) throw Error(Errc::ShapeMismatch, "matmul shape mismatch at '" + v.name + "'");
      for (Units j = out.lo; j < out.hi; ++j) {
        for (Units c = 0; c < cols; ++c) {
          float acc = 0.0f;
          for (Units k = 0; k < rows; ++k) acc += in[0].at(j * iw + k) * w[static_cast<std::size_t>(k * cols + c)];
          put(j, c, acc);
        }
      }
    } else {
      // Column vector times a single-row parameter matrix: an outer product
      // producing the whole output as one unit.
      if (rows != 1 || iw != 1 || ow != v.in_units * cols) {
        throw Error(Errc::ShapeMismatch, "global matmul shape mismatch at '" + v.name + "'");
      }
      for (Units i = 0; i < v.in_units; ++i) {
        for (Units c = 0; c < cols; ++c) put(0, i * cols + c, in[0].at(i) * w[static_cast<std::size_t>(c)]);
      }
    }
  } else if (op == "softmax") {
    const Units n = v.in_units * iw;
    if (ow != n) throw Error(Errc::ShapeMismatch, "softmax output width mismatch at '" + v.name + "'");
    float mx = -std::numeric_limits<float>::infinity();
    for (Units e = 0; e < n; ++e) mx = std::max(mx, in[0].at(e));
    float sum = 0.0f;
    for (Units e = 0; e < n; ++e) {
      const float ex = std::exp(in[0].at(e) - mx);
      put(0, e, ex);
      sum += ex;
    }
    for (auto& y : res.values) y /= sum;
  } else {
    throw Error(Errc::UnknownOperator, "no reference kernel for '" + op + "' ('" + v.name + "')");
  }
  return res;
}

inline TensorPart whole(const Tensor& t) {
  return {{0, t.units()}, t.width, t.values};
}

inline std::vector<TensorPart> split(const Tensor& t, std::span<const UnitRange> ranges) {
  std::vector<TensorPart> parts;
  parts.reserve(ranges.size());
  const Units n = t.units();
  for (const auto& r : ranges) {
    if (r.lo < 0 || r.hi > n || r.lo > r.hi) {
      throw Error(Errc::RangeOutOfBounds, "split range outside tensor of " + std::to_string(n) + " units");
    }
    parts.push_back({r, t.width,
                     std::vector<float>(t.values.begin() + r.lo * t.width, t.values.begin() + r.hi * t.width)});
  }
  return parts;
}

/// Builds the slice `want` from possibly overlapping parts; overlapping
/// copies must agree bit for bit.
inline TensorPart assemble(std::span<const TensorPart> parts, const UnitRange& want, Units width) {
  TensorPart out{want, width, std::vector<float>(static_cast<std::size_t>(want.size() * width))};
  std::vector<char> have(static_cast<std::size_t>(want.size()), 0);
  for (const auto& p : parts) {
    if (p.width != width) throw Error(Errc::ShapeMismatch, "part width differs from tensor width");
    const UnitRange r = intersect(p.range, want);
    for (Units i = r.lo; i < r.hi; ++i) {
      const float* src = p.unit(i);
      float* dst = out.values.data() + (i - want.lo) * width;
      auto& flag = have[static_cast<std::size_t>(i - want.lo)];
      if (flag) {
        for (Units f = 0; f < width; ++f) {
          if (!detail::same_bits(dst[f], src[f])) {
            throw Error(Errc::ReplicaMismatch, "replicated unit " + std::to_string(i) + " differs");
          }
        }
      } else {
        std::copy(src, src + width, dst);
        flag = 1;
      }
    }
  }
  for (std::size_t k = 0; k < have.size(); ++k) {
    if (!have[k]) {
      throw Error(Errc::CoverageGap, "unit " + std::to_string(want.lo + static_cast<Units>(k)) + " missing");
    }
  }
  return out;
}

inline Tensor combine(std::span<const TensorPart> parts, Units total) {
  const Units width = parts.empty() ? 1 : parts.front().width;
  TensorPart all = assemble(parts, {0, total}, width);
  return {std::move(all.values), width};
}

/// Single-process execution of the whole model; returns every node's output.
inline std::vector<Tensor> reference_forward(const ModelGraph& g, const Weights& w, const Tensor& input) {
  const auto& in_node = g.node(g.input_index());
  if (input.width != in_node.unit_width || input.units() != in_node.out_units) {
    throw Error(Errc::ShapeMismatch, "input tensor does not match the model input");
  }
  std::vector<Tensor> outs(g.size());
  outs[g.input_index()] = input;
  for (auto i : g.topo_order()) {
    if (i == g.input_index()) continue;
    std::vector<TensorPart> ins;
    for (auto p : g.parents(i)) ins.push_back(whole(outs[p]));
    TensorPart r = apply_range(g, i, w, ins, g.node(i).full_out());
    outs[i] = {std::move(r.values), r.width};
  }
  return outs;
}

}  // namespace intradp
