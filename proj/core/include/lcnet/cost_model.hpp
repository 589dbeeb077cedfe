#pragma once

// FLOPs accounting over execution traces.
//
// Conventions: one multiply-accumulate is flops_per_mac FLOPs (2 by default); inference batch
// norm is 2 FLOPs per element; ReLU, ReLU-1 and pooling are 1 per element; a linear layer is
// 2 * in * out + out; the residual addition is 1 per element. Salience scaling is not charged:
// saliences are non-negative, so the factor folds into the preceding batch-norm affine map.
//
// Per block:
//   dense       ungated block at nominal widths, no gates
//   parallel    gates + first conv at nominal width; when S_L = 0 nothing else but the
//               projection; otherwise bn/relu of the first layer on active channels only and
//               the next conv reading only active channels
//   sequential  gates first; when S_L = 0 only the projection; otherwise the first conv
//               computes only active channels and the next conv reads only those
// The residual addition is not paid when S_L = 0.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lcnet/network.hpp"

namespace lcnet {

enum class Placement { dense, parallel, sequential };

const char* to_string(Placement p);
Placement placement_from_string(const std::string& name);

struct CostConfig {
  Placement placement = Placement::sequential;
  std::uint64_t flops_per_mac = 2;
  bool count_gate_flops = true;
};

struct ConvShape {
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  std::int64_t kernel_h = 1;
  std::int64_t kernel_w = 1;
  std::int64_t out_h = 1;
  std::int64_t out_w = 1;
  bool bias = false;

  std::int64_t out_pixels() const { return out_h * out_w; }
};

// flops_per_mac * active_in * kh * kw * active_out * oh * ow, plus active_out * oh * ow for bias.
std::uint64_t conv_flops(const ConvShape& shape, std::int64_t active_in, std::int64_t active_out,
                         std::uint64_t flops_per_mac = 2);

std::uint64_t linear_flops(std::int64_t in, std::int64_t out, std::uint64_t flops_per_mac = 2);

struct BlockGeometry {
  BlockKind kind = BlockKind::basic;
  std::int64_t in_channels = 0;
  std::int64_t in_h = 0;
  std::int64_t in_w = 0;
  std::int64_t mid_channels = 0;
  std::int64_t out_channels = 0;
  std::vector<ConvShape> convs;
  std::optional<ConvShape> projection;

  std::int64_t out_pixels() const { return convs.back().out_pixels(); }
};

struct NetworkGeometry {
  std::int64_t in_h = 0;
  std::int64_t in_w = 0;
  ConvShape stem;
  std::vector<BlockGeometry> blocks;
  std::int64_t head_channels = 0;
  std::int64_t head_pixels = 0;
  std::int64_t classes = 0;
};

template <typename T>
BlockGeometry block_geometry(const BlockSpec<T>& block, std::int64_t in_h, std::int64_t in_w);

template <typename T>
NetworkGeometry network_geometry(const NetworkSpec<T>& net, std::int64_t in_h, std::int64_t in_w);

// Shared pooling, both gate FCs and their ReLU-1.
std::uint64_t gate_flops(const BlockGeometry& g, std::uint64_t flops_per_mac = 2);

// Throws ShapeError when the entry does not fit the block or is internally inconsistent.
std::uint64_t block_flops(const BlockTraceEntry& entry, const BlockGeometry& g, const CostConfig& cfg);

// Stem conv + bn + relu.
std::uint64_t stem_flops(const NetworkGeometry& g, std::uint64_t flops_per_mac = 2);
// Final relu, pooling and classifier.
std::uint64_t head_flops(const NetworkGeometry& g, std::uint64_t flops_per_mac = 2);

// Cost of one instance with every gate fully on (S_L = 1, all S_C nonzero).
BlockTraceEntry all_on_entry(std::size_t block_index, const BlockGeometry& g);

struct InstanceCost {
  std::size_t id = 0;
  int label = -1;
  int predicted = -1;
  std::uint64_t total = 0;
  std::vector<std::uint64_t> per_block;  // each includes that block's gates
};

std::uint64_t instance_flops(const InstanceTrace& trace, const NetworkGeometry& g,
                             const CostConfig& cfg, std::vector<std::uint64_t>* per_block = nullptr);

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges
  std::vector<std::size_t> counts;
};

struct FlopsReport {
  CostConfig config;
  std::uint64_t stem = 0;
  std::uint64_t head = 0;
  std::vector<InstanceCost> instances;
  double mean = 0.0;
  std::uint64_t min = 0;
  std::uint64_t max = 0;
  Histogram histogram;
};

// labels / predicted may be empty (stored as -1). Throws DataError on an empty trace set.
FlopsReport dataset_flops_report(std::span<const InstanceTrace> traces, const NetworkGeometry& g,
                                 const CostConfig& cfg, std::span<const int> labels = {},
                                 std::span<const int> predicted = {}, std::size_t bins = 10);

// One row per instance: id,label,predicted,total_flops,block_0,...
void write_flops_csv(const FlopsReport& report, const std::filesystem::path& file);
std::vector<InstanceCost> read_flops_csv(const std::filesystem::path& file);

// bin,lower,upper,count
void write_histogram_csv(const Histogram& h, const std::filesystem::path& file);

}  // namespace lcnet
