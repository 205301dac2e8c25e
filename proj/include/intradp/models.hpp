#pragma once

#include <random>
#include <string>
#include <vector>

#include "profile.hpp"

namespace intradp {

/// VGG-16 shaped model over image rows. Convolutions and pools are block-wise
/// along the row axis; the classifier is flatten, three row-wise linear layers
/// and a softmax. Each node carries its FLOPs per output row.
inline json vgg_like_model(Units image = 224) {
  const std::vector<int> cfg = {64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512, 0, 512, 512, 512, 0};
  json nodes = json::array();
  json edges = json::array();
  NodeId next = 1;
  NodeId prev = 0;
  Units rows = image, cols = image, ch = 3;
  auto add = [&](json n) {
    n["id"] = next;
    if (prev != 0) edges.push_back({prev, next});
    prev = next++;
    nodes.push_back(std::move(n));
  };
  int conv_i = 0, pool_i = 0;
  for (int c : cfg) {
    if (c > 0) {
      ++conv_i;
      add({{"name", "conv" + std::to_string(conv_i)},
           {"op", "conv"},
           {"in_units", rows},
           {"out_units", rows},
           {"unit_width", c * cols},
           {"out_bytes_per_unit", 4.0 * static_cast<double>(c * cols)},
           {"block", {{"kernel", 3}, {"stride", 1}, {"padding", 1}, {"dilation", 1}}},
           {"work_per_unit", 2.0 * 9.0 * static_cast<double>(ch * c * cols)}});
      ch = c;
      add({{"name", "relu" + std::to_string(conv_i)},
           {"op", "relu"},
           {"in_units", rows},
           {"out_units", rows},
           {"unit_width", ch * cols},
           {"out_bytes_per_unit", 4.0 * static_cast<double>(ch * cols)},
           {"work_per_unit", static_cast<double>(ch * cols)}});
    } else {
      ++pool_i;
      const Units out = rows / 2;
      cols /= 2;
      add({{"name", "pool" + std::to_string(pool_i)},
           {"op", "maxpool"},
           {"in_units", rows},
           {"out_units", out},
           {"unit_width", ch * cols},
           {"out_bytes_per_unit", 4.0 * static_cast<double>(ch * cols)},
           {"block", {{"kernel", 2}, {"stride", 2}, {"padding", 0}, {"dilation", 1}}},
           {"work_per_unit", 4.0 * static_cast<double>(ch * cols)}});
      rows = out;
    }
  }
  const Units flat = rows * cols * ch;
  add({{"name", "flatten"},
       {"op", "flatten"},
       {"in_units", rows},
       {"out_units", 1},
       {"unit_width", flat},
       {"out_bytes_per_unit", 4.0 * static_cast<double>(flat)},
       {"work_per_unit", static_cast<double>(flat)}});
  const std::vector<std::pair<Units, Units>> fcs = {{flat, 4096}, {4096, 4096}, {4096, 1000}};
  for (std::size_t k = 0; k < fcs.size(); ++k) {
    const auto [in, out] = fcs[k];
    add({{"name", "fc" + std::to_string(k + 1)},
         {"op", "linear"},
         {"in_units", 1},
         {"out_units", 1},
         {"params", {{"rows", in}, {"cols", out}}},
         {"out_bytes_per_unit", 4.0 * static_cast<double>(out)},
         {"work_per_unit", 2.0 * static_cast<double>(in * out)}});
    if (k + 1 < fcs.size()) {
      add({{"name", "fc_relu" + std::to_string(k + 1)},
           {"op", "relu"},
           {"in_units", 1},
           {"out_units", 1},
           {"out_bytes_per_unit", 4.0 * static_cast<double>(out)},
           {"work_per_unit", static_cast<double>(out)}});
    }
  }
  add({{"name", "softmax"},
       {"op", "softmax"},
       {"in_units", 1},
       {"out_units", 1},
       {"out_bytes_per_unit", 4000.0},
       {"work_per_unit", 5000.0}});
  // 8-bit RGB frame.
  return {{"raw_input_bytes", static_cast<double>(3 * image * image)},
          {"input_width", 3 * image},
          {"nodes", nodes},
          {"edges", edges}};
}

/// Synthetic profile settings paired with the VGG-like model: about 0.3 s
/// device-only, a server twenty times faster.
inline SynthParams vgg_profile_params() {
  SynthParams p;
  p.speed_ratio = 20.0;
  p.device_work_per_s = 1.0e11;
  return p;
}

inline constexpr double kVggLinkLatency = 1.0e-3;

struct ChainOptions {
  int min_ops = 2;
  int max_ops = 5;
  Units min_units = 4;
  Units max_units = 8;
  bool require_blockwise = true;
};

/// Random operator chain. Tensors start single-channel so block kernels apply;
/// matmul widens rows and softmax collapses to one unit.
inline json random_chain(std::uint64_t seed, const ChainOptions& opt = {}) {
  std::mt19937_64 rng(seed);
  auto uni = [&](Units lo, Units hi) { return std::uniform_int_distribution<Units>(lo, hi)(rng); };
  for (;;) {
    const int n_ops = static_cast<int>(uni(opt.min_ops, opt.max_ops));
    const Units units0 = uni(opt.min_units, opt.max_units);
    Units units = units0, width = 1;
    json nodes = json::array(), edges = json::array();
    bool has_block = false;
    for (int k = 0; k < n_ops; ++k) {
      const NodeId id = k + 1;
      json n = {{"id", id}};
      const int choice = static_cast<int>(uni(0, 9));
      if (width == 1 && choice <= 3) {
        const Units kern = uni(1, 3);
        const Units pad = uni(0, kern - 1);
        const Units stride = uni(1, 2);
        const Units out = detail::floor_div(units + 2 * pad - kern, stride) + 1;
        if (out < 1) {
          --k;
          continue;
        }
        const bool pool = choice == 3;
        n.update({{"name", (pool ? "pool" : "conv") + std::to_string(id)},
                  {"op", pool ? "maxpool" : "conv1d"},
                  {"in_units", units},
                  {"out_units", out},
                  {"block", {{"kernel", kern}, {"stride", stride}, {"padding", pad}, {"dilation", 1}}}});
        units = out;
        has_block = true;
      } else if (choice <= 6) {
        n.update({{"name", "relu" + std::to_string(id)}, {"op", "relu"}, {"in_units", units}, {"out_units", units}});
      } else if (choice <= 8) {
        const Units cols = uni(1, 3);
        n.update({{"name", "mm" + std::to_string(id)},
                  {"op", "matmul"},
                  {"in_units", units},
                  {"params", {{"rows", width}, {"cols", cols}}}});
        if (width == 1) {
          n["out_units"] = 1;
          width = units * cols;
          units = 1;
        } else {
          n["out_units"] = units;
          width = cols;
        }
      } else {
        n.update({{"name", "softmax" + std::to_string(id)},
                  {"op", "softmax"},
                  {"in_units", units},
                  {"out_units", 1}});
        width *= units;
        units = 1;
      }
      n["out_bytes_per_unit"] = 4.0 * static_cast<double>(width);
      if (k > 0) edges.push_back({k, id});
      nodes.push_back(std::move(n));
    }
    if (opt.require_blockwise && !has_block) continue;
    return {{"raw_input_bytes", 4.0 * static_cast<double>(units0)},
            {"input_width", 1},
            {"nodes", nodes},
            {"edges", edges}};
  }
}

/// Random DAG of single-channel operators with fork/join diamonds closed by
/// element-wise adds.
inline json random_dag(std::uint64_t seed, int max_ops = 8, Units max_units = 8) {
  std::mt19937_64 rng(seed);
  auto uni = [&](Units lo, Units hi) { return std::uniform_int_distribution<Units>(lo, hi)(rng); };
  const Units units0 = uni(3, max_units);
  Units units = units0;
  json nodes = json::array(), edges = json::array();
  NodeId next = 1;
  NodeId tail = 0;
  auto same_size_op = [&](NodeId parent) {
    const NodeId id = next++;
    json n = {{"id", id}, {"in_units", units}, {"out_units", units}, {"out_bytes_per_unit", 4.0}};
    if (uni(0, 1) == 0) {
      n.update({{"name", "relu" + std::to_string(id)}, {"op", "relu"}});
    } else {
      const Units half = uni(0, 1);
      n.update({{"name", "conv" + std::to_string(id)},
                {"op", "conv1d"},
                {"block", {{"kernel", 2 * half + 1}, {"stride", 1}, {"padding", half}, {"dilation", 1}}}});
    }
    if (parent != 0) edges.push_back({parent, id});
    nodes.push_back(std::move(n));
    return id;
  };
  const int target = static_cast<int>(uni(2, max_ops));
  while (static_cast<int>(nodes.size()) < target) {
    const Units pick = uni(0, 3);
    if (pick == 0 && tail != 0 && static_cast<int>(nodes.size()) + 3 <= max_ops) {
      const NodeId a = same_size_op(tail);
      const NodeId b = same_size_op(tail);
      const NodeId id = next++;
      nodes.push_back({{"id", id},
                       {"name", "add" + std::to_string(id)},
                       {"op", "add"},
                       {"in_units", units},
                       {"out_units", units},
                       {"out_bytes_per_unit", 4.0}});
      edges.push_back({a, id});
      edges.push_back({b, id});
      tail = id;
    } else if (pick == 1 && units > 2) {
      const NodeId id = next++;
      const Units out = detail::floor_div(units - 2, 2) + 1;
      nodes.push_back({{"id", id},
                       {"name", "pool" + std::to_string(id)},
                       {"op", "maxpool"},
                       {"in_units", units},
                       {"out_units", out},
                       {"out_bytes_per_unit", 4.0},
                       {"block", {{"kernel", 2}, {"stride", 2}, {"padding", 0}, {"dilation", 1}}}});
      if (tail != 0) edges.push_back({tail, id});
      tail = id;
      units = out;
    } else {
      tail = same_size_op(tail);
    }
  }
  return {{"raw_input_bytes", 4.0 * static_cast<double>(units0)},
          {"input_width", 1},
          {"nodes", nodes},
          {"edges", edges}};
}

/// Random affine costs for both devices, either side possibly faster.
inline ProfileTable random_profile(const ModelGraph& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> overhead(0.0, 2.0e-3);
  std::uniform_real_distribution<double> per_unit(1.0e-4, 3.0e-3);
  std::uniform_real_distribution<double> ratio(0.5, 8.0);
  ProfileTable p;
  p.costs.assign(g.size(), {});
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g.node(i).is_virtual) continue;
    const double r = ratio(rng);
    DeviceCost m{overhead(rng), per_unit(rng)};
    DeviceCost s{overhead(rng) / r, m.per_unit_s / r};
    p.costs[i] = {m, s};
  }
  default_edge_bytes(g, p);
  return p;
}

}  // namespace intradp
