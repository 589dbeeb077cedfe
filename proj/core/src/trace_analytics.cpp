#include "lcnet/trace_analytics.hpp"

#include <algorithm>

#include "lcnet/csv.hpp"
#include "lcnet/error.hpp"

namespace lcnet {

GateStats gate_stats(std::span<const InstanceTrace> traces) {
  GateStats s;
  std::size_t blocks = 0;
  std::size_t block_zero = 0;
  std::size_t channels = 0;
  std::size_t channel_zero = 0;
  double salience_sum = 0.0;
  for (const auto& trace : traces) {
    for (const auto& e : trace) {
      const double sl = e.salience.block_salience;
      salience_sum += std::clamp(sl, 0.0, 1.0);
      ++blocks;
      block_zero += sl <= 0.0 ? 1 : 0;
      for (double c : e.salience.channel_salience) {
        ++channels;
        channel_zero += c <= 0.0 ? 1 : 0;
      }
    }
  }
  if (blocks == 0) return s;
  s.mean_block_salience = salience_sum / static_cast<double>(blocks);
  s.block_skip_rate = static_cast<double>(block_zero) / static_cast<double>(blocks);
  if (channels > 0) s.channel_sparsity = static_cast<double>(channel_zero) / static_cast<double>(channels);
  s.gate_sparsity = static_cast<double>(block_zero + channel_zero) / static_cast<double>(blocks + channels);
  return s;
}

ActivationMatrix channel_activation_matrix(std::span<const InstanceTrace> traces,
                                           std::span<const int> labels, std::size_t block_index,
                                           std::span<const std::string> class_names,
                                           std::optional<std::size_t> max_channels) {
  if (traces.size() != labels.size()) throw DataError("traces and labels are not aligned");
  if (traces.empty()) throw DataError("activation matrix over an empty instance set");
  if (block_index >= traces.front().size()) {
    throw ConfigError("block", "block index " + std::to_string(block_index) + " out of range [0, " +
                                   std::to_string(traces.front().size()) + ")");
  }
  ActivationMatrix m;
  m.block_index = block_index;
  m.layer = "blocks." + std::to_string(block_index) + ".conv0 output channels (conv1 input)";
  m.class_names.assign(class_names.begin(), class_names.end());
  const std::size_t nominal = traces.front()[block_index].salience.channel_salience.size();
  m.channels = max_channels ? std::min(*max_channels, nominal) : nominal;
  const std::size_t classes = class_names.size();
  m.class_counts.assign(classes, 0);
  std::vector<std::size_t> active(classes * m.channels, 0);
  for (std::size_t i = 0; i < traces.size(); ++i) {
    if (block_index >= traces[i].size()) throw ShapeError("trace of instance " + std::to_string(i) + " is short");
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw DataError("label " + std::to_string(label) + " of instance " + std::to_string(i) +
                      " has no class name");
    }
    const auto& sc = traces[i][block_index].salience.channel_salience;
    if (sc.size() != nominal) throw ShapeError("channel salience widths differ across instances");
    const auto cls = static_cast<std::size_t>(label);
    ++m.class_counts[cls];
    for (std::size_t j = 0; j < m.channels; ++j) active[cls * m.channels + j] += sc[j] > 0.0 ? 1 : 0;
  }
  m.percent.resize(active.size());
  for (std::size_t c = 0; c < classes; ++c) {
    if (m.class_counts[c] == 0) {
      throw DataError("class '" + m.class_names[c] + "' has no instances; its row is undefined");
    }
    for (std::size_t j = 0; j < m.channels; ++j) {
      m.percent[c * m.channels + j] = 100.0 * static_cast<double>(active[c * m.channels + j]) /
                                      static_cast<double>(m.class_counts[c]);
    }
  }
  return m;
}

std::vector<double> block_execution_rates(std::span<const InstanceTrace> traces) {
  if (traces.empty()) return {};
  const std::size_t blocks = traces.front().size();
  std::vector<std::size_t> executed(blocks, 0);
  for (const auto& t : traces) {
    if (t.size() != blocks) throw ShapeError("traces have differing block counts");
    for (std::size_t b = 0; b < blocks; ++b) executed[b] += t[b].executed ? 1 : 0;
  }
  std::vector<double> rates(blocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    rates[b] = static_cast<double>(executed[b]) / static_cast<double>(traces.size());
  }
  return rates;
}

Extremes extreme_instances(const FlopsReport& report, std::size_t k) {
  const auto& inst = report.instances;
  if (k > inst.size()) {
    throw ConfigError("extremes_k", "k = " + std::to_string(k) + " exceeds the " +
                                        std::to_string(inst.size()) + " instances");
  }
  std::vector<std::size_t> order(inst.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto by = [&inst](bool ascending) {
    return [&inst, ascending](std::size_t a, std::size_t b) {
      if (inst[a].total != inst[b].total) {
        return ascending ? inst[a].total < inst[b].total : inst[a].total > inst[b].total;
      }
      return inst[a].id < inst[b].id;
    };
  };
  auto take = [&](bool ascending) {
    auto o = order;
    std::sort(o.begin(), o.end(), by(ascending));
    std::vector<RankedInstance> out;
    for (std::size_t r = 0; r < k; ++r) {
      const auto& c = inst[o[r]];
      out.push_back({r + 1, c.id, c.label, c.total});
    }
    return out;
  };
  return {take(true), take(false)};
}

void write_activation_matrix_csv(const ActivationMatrix& m, const std::filesystem::path& file) {
  csv::Table t;
  t.header.push_back("class");
  for (std::size_t j = 0; j < m.channels; ++j) t.header.push_back(std::to_string(j));
  for (std::size_t c = 0; c < m.class_names.size(); ++c) {
    std::vector<std::string> row{m.class_names[c]};
    for (std::size_t j = 0; j < m.channels; ++j) row.push_back(csv::format_double(m.at(c, j)));
    t.rows.push_back(std::move(row));
  }
  csv::write(file, t);
}

ActivationMatrix read_activation_matrix_csv(const std::filesystem::path& file) {
  const auto t = csv::read(file);
  if (t.header.empty() || t.header[0] != "class") {
    throw DataError(file.string() + " is not an activation matrix");
  }
  ActivationMatrix m;
  m.channels = t.header.size() - 1;
  for (std::size_t j = 0; j < m.channels; ++j) {
    if (csv::parse_uint(t.header[j + 1]) != j) throw DataError("activation matrix columns out of order");
  }
  for (const auto& row : t.rows) {
    m.class_names.push_back(row[0]);
    for (std::size_t j = 0; j < m.channels; ++j) m.percent.push_back(csv::parse_double(row[j + 1]));
  }
  return m;
}

void write_extremes_csv(std::span<const RankedInstance> rows, const std::filesystem::path& file) {
  csv::Table t;
  t.header = {"rank", "id", "label", "flops"};
  for (const auto& r : rows) {
    t.rows.push_back({std::to_string(r.rank), std::to_string(r.id), std::to_string(r.label),
                      std::to_string(r.flops)});
  }
  csv::write(file, t);
}

std::vector<RankedInstance> read_extremes_csv(const std::filesystem::path& file) {
  const auto t = csv::read(file);
  if (t.header != std::vector<std::string>{"rank", "id", "label", "flops"}) {
    throw DataError(file.string() + " is not an extremes listing");
  }
  std::vector<RankedInstance> out;
  for (const auto& row : t.rows) {
    out.push_back({static_cast<std::size_t>(csv::parse_uint(row[0])),
                   static_cast<std::size_t>(csv::parse_uint(row[1])),
                   static_cast<int>(csv::parse_int(row[2])), csv::parse_uint(row[3])});
  }
  return out;
}

}  // namespace lcnet
