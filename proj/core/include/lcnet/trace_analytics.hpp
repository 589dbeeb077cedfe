#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lcnet/cost_model.hpp"
#include "lcnet/network.hpp"

namespace lcnet {

// A salience counts as zero when it is <= 0, which for inference traces is exactly the skip
// predicate and for leaky training traces is the value the inference clamp would produce.
struct GateStats {
  double mean_block_salience = 0.0;  // of clamp(S_L, 0, 1)
  double block_skip_rate = 0.0;      // zero S_L / all S_L
  double channel_sparsity = 0.0;     // zero S_C / all S_C
  double gate_sparsity = 0.0;        // zero entries / all S_L and S_C entries
};

GateStats gate_stats(std::span<const InstanceTrace> traces);

struct ActivationMatrix {
  std::size_t block_index = 0;
  // Which channel set the columns index: outputs of the block's first conv, i.e. the input
  // channels of its second conv.
  std::string layer;
  std::vector<std::string> class_names;
  std::vector<std::size_t> class_counts;
  std::size_t channels = 0;
  std::vector<double> percent;  // rows = classes, row-major

  double at(std::size_t cls, std::size_t channel) const { return percent[cls * channels + channel]; }
};

// Entry (i, j): 100 * #{class-i instances with S_C^j > 0} / #{class-i instances}. Columns are
// truncated to the first max_channels when given.
ActivationMatrix channel_activation_matrix(std::span<const InstanceTrace> traces,
                                           std::span<const int> labels, std::size_t block_index,
                                           std::span<const std::string> class_names,
                                           std::optional<std::size_t> max_channels = std::nullopt);

// Fraction of instances executing each block.
std::vector<double> block_execution_rates(std::span<const InstanceTrace> traces);

struct RankedInstance {
  std::size_t rank = 0;  // 1-based
  std::size_t id = 0;
  int label = 0;
  std::uint64_t flops = 0;
};

struct Extremes {
  std::vector<RankedInstance> lowest;   // ascending FLOPs
  std::vector<RankedInstance> highest;  // descending FLOPs
};

// Ties are broken by instance id ascending in both lists.
Extremes extreme_instances(const FlopsReport& report, std::size_t k);

// CSV: header "class,0,1,...", one row per class name.
void write_activation_matrix_csv(const ActivationMatrix& m, const std::filesystem::path& file);
ActivationMatrix read_activation_matrix_csv(const std::filesystem::path& file);

// CSV: header "rank,id,label,flops".
void write_extremes_csv(std::span<const RankedInstance> rows, const std::filesystem::path& file);
std::vector<RankedInstance> read_extremes_csv(const std::filesystem::path& file);

}  // namespace lcnet
