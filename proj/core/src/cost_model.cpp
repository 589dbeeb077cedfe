#include "lcnet/cost_model.hpp"

#include <algorithm>
#include <cmath>

#include "lcnet/csv.hpp"
#include "lcnet/error.hpp"

namespace lcnet {

const char* to_string(Placement p) {
  switch (p) {
    case Placement::dense:
      return "dense";
    case Placement::parallel:
      return "parallel";
    case Placement::sequential:
      return "sequential";
  }
  return "?";
}

Placement placement_from_string(const std::string& name) {
  if (name == "dense") return Placement::dense;
  if (name == "parallel") return Placement::parallel;
  if (name == "sequential") return Placement::sequential;
  throw ConfigError("placement", "unknown placement '" + name + "'");
}

namespace {

std::uint64_t u(std::int64_t v) { return static_cast<std::uint64_t>(v); }

ConvShape conv_shape(std::int64_t in, std::int64_t out, std::int64_t kh, std::int64_t kw,
                     std::int64_t stride, std::int64_t pad, bool bias, std::int64_t in_h,
                     std::int64_t in_w) {
  return {in,
          out,
          kh,
          kw,
          conv_output_extent(in_h, kh, stride, pad),
          conv_output_extent(in_w, kw, stride, pad),
          bias};
}

template <typename T>
ConvShape conv_shape(const Conv2dParams<T>& c, std::int64_t in_h, std::int64_t in_w) {
  return conv_shape(c.in_channels(), c.out_channels(), c.kernel_h(), c.kernel_w(), c.stride,
                    c.padding, c.has_bias(), in_h, in_w);
}

}  // namespace

std::uint64_t conv_flops(const ConvShape& s, std::int64_t active_in, std::int64_t active_out,
                         std::uint64_t flops_per_mac) {
  if (active_in < 0 || active_in > s.in_channels || active_out < 0 || active_out > s.out_channels) {
    throw ShapeError("active channel counts exceed the conv's nominal widths");
  }
  const std::uint64_t outputs = u(active_out) * u(s.out_pixels());
  std::uint64_t f = flops_per_mac * u(active_in) * u(s.kernel_h) * u(s.kernel_w) * outputs;
  if (s.bias) f += outputs;
  return f;
}

std::uint64_t linear_flops(std::int64_t in, std::int64_t out, std::uint64_t flops_per_mac) {
  return flops_per_mac * u(in) * u(out) + u(out);
}

template <typename T>
BlockGeometry block_geometry(const BlockSpec<T>& block, std::int64_t in_h, std::int64_t in_w) {
  BlockGeometry g;
  g.kind = block.kind;
  g.in_channels = block.in_channels;
  g.in_h = in_h;
  g.in_w = in_w;
  g.mid_channels = block.mid_channels;
  g.out_channels = block.out_channels;
  std::int64_t h = in_h;
  std::int64_t w = in_w;
  for (const auto& c : block.convs) {
    g.convs.push_back(conv_shape(c, h, w));
    h = g.convs.back().out_h;
    w = g.convs.back().out_w;
  }
  if (block.has_projection()) g.projection = conv_shape(*block.projection, in_h, in_w);
  return g;
}

template <typename T>
NetworkGeometry network_geometry(const NetworkSpec<T>& net, std::int64_t in_h, std::int64_t in_w) {
  NetworkGeometry g;
  g.in_h = in_h;
  g.in_w = in_w;
  g.stem = conv_shape(net.stem, in_h, in_w);
  std::int64_t h = g.stem.out_h;
  std::int64_t w = g.stem.out_w;
  for (const auto& b : net.blocks) {
    g.blocks.push_back(block_geometry(b, h, w));
    h = g.blocks.back().convs.back().out_h;
    w = g.blocks.back().convs.back().out_w;
  }
  g.head_channels = net.classifier.in_features();
  g.head_pixels = h * w;
  g.classes = net.classes();
  return g;
}

std::uint64_t gate_flops(const BlockGeometry& g, std::uint64_t fpm) {
  const std::uint64_t pool = u(g.in_channels) * u(g.in_h) * u(g.in_w);
  return pool + linear_flops(g.in_channels, 1, fpm) + 1 +
         linear_flops(g.in_channels, g.mid_channels, fpm) + u(g.mid_channels);
}

namespace {

// Everything after the first layer's activation, reading `active` first-layer channels.
std::uint64_t branch_tail(const BlockGeometry& g, std::int64_t active, std::uint64_t fpm) {
  const auto& c1 = g.convs[1];
  std::uint64_t f = conv_flops(c1, active, c1.out_channels, fpm) + 2 * u(c1.out_channels) * u(c1.out_pixels());
  if (g.kind == BlockKind::bottleneck) {
    const auto& c2 = g.convs[2];
    f += u(c1.out_channels) * u(c1.out_pixels());
    f += conv_flops(c2, c2.in_channels, c2.out_channels, fpm) + 2 * u(c2.out_channels) * u(c2.out_pixels());
  }
  return f;
}

}  // namespace

std::uint64_t block_flops(const BlockTraceEntry& entry, const BlockGeometry& g, const CostConfig& cfg) {
  if (static_cast<std::int64_t>(entry.salience.channel_salience.size()) != g.mid_channels) {
    throw ShapeError("trace entry of block " + std::to_string(entry.block_index) + " has " +
                     std::to_string(entry.salience.channel_salience.size()) +
                     " channel saliences, block has " + std::to_string(g.mid_channels));
  }
  if (!entry.consistent()) {
    throw ShapeError("trace entry of block " + std::to_string(entry.block_index) +
                     " disagrees with its saliences");
  }
  const std::size_t expected = g.kind == BlockKind::basic ? 2 : 3;
  if (g.convs.size() != expected) throw ShapeError("block geometry has the wrong number of convs");

  const std::uint64_t fpm = cfg.flops_per_mac;
  const auto& c0 = g.convs[0];
  const std::uint64_t p1 = u(c0.out_pixels());
  const std::uint64_t add = u(g.out_channels) * u(g.out_pixels());
  std::uint64_t proj = 0;
  if (g.projection) {
    proj = conv_flops(*g.projection, g.in_channels, g.out_channels, fpm) +
           2 * u(g.out_channels) * u(g.projection->out_pixels());
  }
  if (cfg.placement == Placement::dense) {
    const std::int64_t m = g.mid_channels;
    return conv_flops(c0, g.in_channels, m, fpm) + 3 * u(m) * p1 + branch_tail(g, m, fpm) + proj + add;
  }

  const std::uint64_t gates = cfg.count_gate_flops ? gate_flops(g, fpm) : 0;
  const std::int64_t k = entry.active_channels;
  std::uint64_t f = gates + proj;
  if (cfg.placement == Placement::parallel) f += conv_flops(c0, g.in_channels, g.mid_channels, fpm);
  if (!entry.executed) return f;
  if (cfg.placement == Placement::sequential) f += conv_flops(c0, g.in_channels, k, fpm);
  return f + 3 * u(k) * p1 + branch_tail(g, k, fpm) + add;
}

std::uint64_t stem_flops(const NetworkGeometry& g, std::uint64_t fpm) {
  return conv_flops(g.stem, g.stem.in_channels, g.stem.out_channels, fpm) +
         3 * u(g.stem.out_channels) * u(g.stem.out_pixels());
}

std::uint64_t head_flops(const NetworkGeometry& g, std::uint64_t fpm) {
  return 2 * u(g.head_channels) * u(g.head_pixels) + linear_flops(g.head_channels, g.classes, fpm);
}

BlockTraceEntry all_on_entry(std::size_t block_index, const BlockGeometry& g) {
  SalienceRecord r;
  r.block_salience = 1.0;
  r.channel_salience.assign(static_cast<std::size_t>(g.mid_channels), 1.0);
  return BlockTraceEntry::from_record(block_index, std::move(r));
}

std::uint64_t instance_flops(const InstanceTrace& trace, const NetworkGeometry& g,
                             const CostConfig& cfg, std::vector<std::uint64_t>* per_block) {
  if (trace.size() != g.blocks.size()) {
    throw ShapeError("trace has " + std::to_string(trace.size()) + " block entries, network has " +
                     std::to_string(g.blocks.size()));
  }
  std::uint64_t total = stem_flops(g, cfg.flops_per_mac) + head_flops(g, cfg.flops_per_mac);
  if (per_block) per_block->clear();
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (trace[i].block_index != i) throw ShapeError("trace entries out of block order");
    const auto f = block_flops(trace[i], g.blocks[i], cfg);
    if (per_block) per_block->push_back(f);
    total += f;
  }
  return total;
}

FlopsReport dataset_flops_report(std::span<const InstanceTrace> traces, const NetworkGeometry& g,
                                 const CostConfig& cfg, std::span<const int> labels,
                                 std::span<const int> predicted, std::size_t bins) {
  if (traces.empty()) throw DataError("FLOPs report over an empty trace set");
  if (!labels.empty() && labels.size() != traces.size()) throw DataError("labels and traces disagree");
  if (!predicted.empty() && predicted.size() != traces.size()) {
    throw DataError("predictions and traces disagree");
  }
  if (bins == 0) throw ConfigError("histogram_bins", "must be positive");
  FlopsReport r;
  r.config = cfg;
  r.stem = stem_flops(g, cfg.flops_per_mac);
  r.head = head_flops(g, cfg.flops_per_mac);
  r.min = UINT64_MAX;
  long double sum = 0;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    InstanceCost c;
    c.id = i;
    c.label = labels.empty() ? -1 : labels[i];
    c.predicted = predicted.empty() ? -1 : predicted[i];
    c.total = instance_flops(traces[i], g, cfg, &c.per_block);
    sum += static_cast<long double>(c.total);
    r.min = std::min(r.min, c.total);
    r.max = std::max(r.max, c.total);
    r.instances.push_back(std::move(c));
  }
  r.mean = static_cast<double>(sum / static_cast<long double>(traces.size()));

  auto& h = r.histogram;
  const double lo = static_cast<double>(r.min);
  const double hi = static_cast<double>(r.max);
  const std::size_t nb = r.min == r.max ? 1 : bins;
  const double width = (hi - lo) / static_cast<double>(nb);
  for (std::size_t b = 0; b <= nb; ++b) h.edges.push_back(b == nb ? hi : lo + width * static_cast<double>(b));
  h.counts.assign(nb, 0);
  for (const auto& c : r.instances) {
    std::size_t b = 0;
    if (nb > 1) {
      b = static_cast<std::size_t>((static_cast<double>(c.total) - lo) / width);
      b = std::min(b, nb - 1);
    }
    ++h.counts[b];
  }
  return r;
}

void write_flops_csv(const FlopsReport& report, const std::filesystem::path& file) {
  csv::Table t;
  t.header = {"id", "label", "predicted", "total_flops"};
  const std::size_t blocks = report.instances.empty() ? 0 : report.instances.front().per_block.size();
  for (std::size_t b = 0; b < blocks; ++b) t.header.push_back("block_" + std::to_string(b));
  for (const auto& c : report.instances) {
    std::vector<std::string> row{std::to_string(c.id), std::to_string(c.label),
                                 std::to_string(c.predicted), std::to_string(c.total)};
    for (auto f : c.per_block) row.push_back(std::to_string(f));
    t.rows.push_back(std::move(row));
  }
  csv::write(file, t);
}

std::vector<InstanceCost> read_flops_csv(const std::filesystem::path& file) {
  const auto t = csv::read(file);
  if (t.header.size() < 4 || t.header[0] != "id" || t.header[3] != "total_flops") {
    throw DataError(file.string() + " is not a FLOPs report");
  }
  std::vector<InstanceCost> out;
  for (const auto& row : t.rows) {
    InstanceCost c;
    c.id = static_cast<std::size_t>(csv::parse_uint(row[0]));
    c.label = static_cast<int>(csv::parse_int(row[1]));
    c.predicted = static_cast<int>(csv::parse_int(row[2]));
    c.total = csv::parse_uint(row[3]);
    for (std::size_t i = 4; i < row.size(); ++i) c.per_block.push_back(csv::parse_uint(row[i]));
    out.push_back(std::move(c));
  }
  return out;
}

void write_histogram_csv(const Histogram& h, const std::filesystem::path& file) {
  csv::Table t;
  t.header = {"bin", "lower", "upper", "count"};
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    t.rows.push_back({std::to_string(b), csv::format_double(h.edges[b]),
                      csv::format_double(h.edges[b + 1]), std::to_string(h.counts[b])});
  }
  csv::write(file, t);
}

#define LCNET_INSTANTIATE_COST(T)                                                               \
  template BlockGeometry block_geometry(const BlockSpec<T>&, std::int64_t, std::int64_t);      \
  template NetworkGeometry network_geometry(const NetworkSpec<T>&, std::int64_t, std::int64_t);

LCNET_INSTANTIATE_COST(float)
LCNET_INSTANTIATE_COST(double)

}  // namespace lcnet
