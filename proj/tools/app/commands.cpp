#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "lcnet/checkpoint.hpp"
#include "lcnet/cost_model.hpp"
#include "lcnet/csv.hpp"
#include "lcnet/dataset.hpp"
#include "lcnet/error.hpp"
#include "lcnet/trace_analytics.hpp"
#include "lcnet/trainer.hpp"

namespace lcnet::app {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"train", "finetune",          "eval",        "trace",
                                              "flops-report", "activation-matrix", "print-config"};
  return names;
}

namespace {

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

struct Data {
  Dataset train;
  Dataset test;
};

std::optional<std::size_t> limit_of(std::int64_t v) {
  if (v == 0) return std::nullopt;
  return static_cast<std::size_t>(v);
}

Data load_data(const DataConfig& d, const std::optional<Normalization>& norm, bool need_train) {
  Data out;
  if (d.source == "cifar10") {
    if (d.path.empty()) throw ConfigError("data.path", "required for the cifar10 source");
    std::optional<Normalization> n = norm;
    if (need_train) {
      out.train = load_cifar10(d.path, Split::train, {limit_of(d.train_limit), n});
      if (!n) n = out.train.normalization;
    }
    out.test = load_cifar10(d.path, Split::test, {limit_of(d.test_limit), n});
    return out;
  }
  const auto n_train = static_cast<std::size_t>(d.synthetic_train);
  const auto n_test = static_cast<std::size_t>(d.synthetic_test);
  if (need_train || !norm) {
    out.train = make_synthetic(d.classes, n_train, d.seed, norm);
    out.test = make_synthetic(d.classes, n_test, d.seed + 1, out.train.normalization);
  } else {
    out.test = make_synthetic(d.classes, n_test, d.seed + 1, norm);
  }
  return out;
}

void check_classes(const NetworkSpec<float>& net, const Dataset& data) {
  if (net.classes() != static_cast<std::int64_t>(data.class_names.size())) {
    throw ConfigError("data", "network has " + std::to_string(net.classes()) + " classes, data has " +
                                  std::to_string(data.class_names.size()));
  }
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream f(file, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + file.string());
  f << text;
}

Checkpoint require_checkpoint(const RunConfig& cfg) {
  if (cfg.checkpoint.empty()) throw ConfigError("checkpoint", "this command needs a checkpoint");
  return load_checkpoint(cfg.checkpoint);
}

fs::path prepare_output(const RunConfig& cfg) {
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  return dir;
}

void write_metrics_csv(const std::vector<EpochMetrics>& history, const fs::path& file) {
  csv::Table t;
  t.header = {"epoch",         "loss",          "accuracy",    "mean_block_salience",
              "channel_sparsity", "gate_sparsity", "backbone_lr", "gate_lr", "test_accuracy"};
  for (const auto& m : history) {
    t.rows.push_back({std::to_string(m.epoch), csv::format_double(m.loss), csv::format_double(m.accuracy),
                      csv::format_double(m.mean_block_salience), csv::format_double(m.channel_sparsity),
                      csv::format_double(m.gate_sparsity), csv::format_double(m.backbone_lr),
                      csv::format_double(m.gate_lr),
                      m.test_accuracy ? csv::format_double(*m.test_accuracy) : std::string()});
  }
  csv::write(file, t);
}

void run_training(NetworkSpec<float>& net, const Data& data, TrainConfig tcfg, const RunConfig& cfg,
                  std::ostream& out) {
  check_classes(net, data.train);
  const auto dir = prepare_output(cfg);
  write_text(dir / "resolved_config.json", to_json(cfg).dump(2) + "\n");
  const Dataset* test = data.test.size() > 0 ? &data.test : nullptr;
  const Normalization norm = data.train.normalization;
  auto on_epoch = [&](const EpochMetrics& m, const NetworkSpec<float>& current, bool improved) {
    out << "epoch " << m.epoch << " loss " << fixed(m.loss) << " acc " << fixed(m.accuracy)
        << " mean_S_L " << fixed(m.mean_block_salience) << " channel_sparsity "
        << fixed(m.channel_sparsity) << " lr " << m.backbone_lr;
    if (m.test_accuracy) out << " test_acc " << fixed(*m.test_accuracy);
    out << "\n";
    if (improved) save_checkpoint(current, norm, dir / "best");
  };
  const auto result = train(net, data.train, test, tcfg, on_epoch);
  save_checkpoint(net, norm, dir / "final");
  write_metrics_csv(result.history, dir / "metrics.csv");
  const auto& last = result.history.back();
  out << "final train accuracy " << fixed(last.accuracy);
  if (last.test_accuracy) {
    out << " test accuracy " << fixed(*last.test_accuracy) << " best " << fixed(result.best_test_accuracy)
        << " (epoch " << result.best_epoch << ")";
  }
  out << "\n";
}

void cmd_train(const RunConfig& cfg, std::ostream& out) {
  const auto data = load_data(cfg.data, std::nullopt, true);
  auto net = build_network<float>(cfg.model, cfg.train.seed);
  auto tcfg = cfg.train;
  tcfg.mode = TrainMode::from_scratch;
  run_training(net, data, tcfg, cfg, out);
}

void cmd_finetune(const RunConfig& cfg, std::ostream& out) {
  auto ck = require_checkpoint(cfg);
  const auto data = load_data(cfg.data, ck.normalization, true);
  auto tcfg = cfg.train;
  tcfg.mode = TrainMode::fine_tune;
  run_training(ck.net, data, tcfg, cfg, out);
}

struct Evaluated {
  Checkpoint ck;
  Dataset test;
  EvalResult result;
  NetworkGeometry geometry;
};

Evaluated evaluate_checkpoint(const RunConfig& cfg) {
  Evaluated e{require_checkpoint(cfg), {}, {}, {}};
  e.test = load_data(cfg.data, e.ck.normalization, false).test;
  check_classes(e.ck.net, e.test);
  if (e.test.size() == 0) throw DataError("evaluation set is empty");
  e.result = evaluate(e.ck.net, e.test, static_cast<std::size_t>(cfg.eval.batch_size), true);
  e.geometry = network_geometry(e.ck.net, e.test.height, e.test.width);
  return e;
}

FlopsReport report_for(const Evaluated& e, const RunConfig& cfg, Placement p) {
  CostConfig cc;
  cc.placement = p;
  cc.count_gate_flops = cfg.eval.count_gate_flops;
  return dataset_flops_report(e.result.traces, e.geometry, cc, e.test.labels, e.result.predictions,
                              static_cast<std::size_t>(cfg.eval.histogram_bins));
}

void cmd_eval(const RunConfig& cfg, std::ostream& out) {
  const auto e = evaluate_checkpoint(cfg);
  const auto dir = prepare_output(cfg);
  const auto stats = gate_stats(e.result.traces);
  json summary = {{"instances", e.test.size()},
                  {"accuracy", e.result.accuracy},
                  {"gate_sparsity", stats.gate_sparsity},
                  {"channel_sparsity", stats.channel_sparsity},
                  {"block_skip_rate", stats.block_skip_rate},
                  {"count_gate_flops", cfg.eval.count_gate_flops}};
  out << "accuracy " << fixed(e.result.accuracy) << " over " << e.test.size() << " instances\n";
  for (auto p : {Placement::dense, Placement::parallel, Placement::sequential}) {
    const auto r = report_for(e, cfg, p);
    write_flops_csv(r, dir / (std::string("flops_") + to_string(p) + ".csv"));
    summary[to_string(p)] = {{"mean_flops", r.mean}, {"min_flops", r.min}, {"max_flops", r.max}};
    out << to_string(p) << " flops mean " << fixed(r.mean, 1) << " min " << r.min << " max " << r.max << "\n";
  }
  out << "gate sparsity " << fixed(stats.gate_sparsity) << " block skip rate " << fixed(stats.block_skip_rate)
      << "\n";
  write_text(dir / "eval_summary.json", summary.dump(2) + "\n");
}

void cmd_trace(const RunConfig& cfg, std::ostream& out) {
  const auto e = evaluate_checkpoint(cfg);
  const auto dir = prepare_output(cfg);
  csv::Table t;
  t.header = {"id", "label", "predicted", "block", "executed", "block_salience", "active_channels",
              "channel_mask"};
  for (std::size_t i = 0; i < e.result.traces.size(); ++i) {
    for (const auto& entry : e.result.traces[i]) {
      std::string mask;
      for (double s : entry.salience.channel_salience) mask += s > 0.0 ? '1' : '0';
      t.rows.push_back({std::to_string(i), std::to_string(e.test.labels[i]),
                        std::to_string(e.result.predictions[i]), std::to_string(entry.block_index),
                        entry.executed ? "1" : "0", csv::format_double(entry.salience.block_salience),
                        std::to_string(entry.active_channels), mask});
    }
  }
  csv::write(dir / "traces.csv", t);
  const auto rates = block_execution_rates(e.result.traces);
  csv::Table r;
  r.header = {"block", "execution_rate", "mean_active_channels"};
  for (std::size_t b = 0; b < rates.size(); ++b) {
    double active = 0.0;
    for (const auto& tr : e.result.traces) active += static_cast<double>(tr[b].active_channels);
    active /= static_cast<double>(e.result.traces.size());
    r.rows.push_back({std::to_string(b), csv::format_double(rates[b]), csv::format_double(active)});
    out << "block " << b << " execution rate " << fixed(rates[b]) << " mean active channels "
        << fixed(active, 2) << "\n";
  }
  csv::write(dir / "block_rates.csv", r);
}

void cmd_flops_report(const RunConfig& cfg, std::ostream& out) {
  const auto e = evaluate_checkpoint(cfg);
  const auto dir = prepare_output(cfg);
  const auto p = cfg.eval.placement;
  const auto r = report_for(e, cfg, p);
  const std::string name = to_string(p);
  write_flops_csv(r, dir / ("flops_" + name + ".csv"));
  write_histogram_csv(r.histogram, dir / ("histogram_" + name + ".csv"));
  const auto k = std::min(static_cast<std::size_t>(cfg.eval.extremes_k), r.instances.size());
  const auto ex = extreme_instances(r, k);
  write_extremes_csv(ex.lowest, dir / "extremes_low.csv");
  write_extremes_csv(ex.highest, dir / "extremes_high.csv");
  out << name << " flops mean " << fixed(r.mean, 1) << " min " << r.min << " max " << r.max << "\n";
  for (const auto& x : ex.lowest) out << "low " << x.rank << " id " << x.id << " label " << x.label << " flops " << x.flops << "\n";
  for (const auto& x : ex.highest) out << "high " << x.rank << " id " << x.id << " label " << x.label << " flops " << x.flops << "\n";
}

void cmd_activation_matrix(const RunConfig& cfg, std::ostream& out) {
  const auto e = evaluate_checkpoint(cfg);
  const auto block = static_cast<std::size_t>(cfg.eval.activation_block);
  if (block >= e.ck.net.blocks.size()) {
    throw ConfigError("eval.activation_block", "block index " + std::to_string(block) +
                                                   " out of range [0, " +
                                                   std::to_string(e.ck.net.blocks.size()) + ")");
  }
  const auto dir = prepare_output(cfg);
  const auto m = channel_activation_matrix(e.result.traces, e.test.labels, block, e.test.class_names,
                                           static_cast<std::size_t>(cfg.eval.max_channels));
  const auto file = dir / ("activation_matrix_block" + std::to_string(block) + ".csv");
  write_activation_matrix_csv(m, file);
  out << "activation matrix " << m.class_names.size() << " x " << m.channels << " for " << m.layer
      << " written to " << file.string() << "\n";
}

}  // namespace

void run_command(const std::string& command, const RunConfig& cfg, std::ostream& out) {
  if (command == "train") return cmd_train(cfg, out);
  if (command == "finetune") return cmd_finetune(cfg, out);
  if (command == "eval") return cmd_eval(cfg, out);
  if (command == "trace") return cmd_trace(cfg, out);
  if (command == "flops-report") return cmd_flops_report(cfg, out);
  if (command == "activation-matrix") return cmd_activation_matrix(cfg, out);
  if (command == "print-config") {
    out << to_json(cfg).dump(2) << "\n";
    return;
  }
  throw ConfigError("command", "unknown command '" + command + "'");
}

namespace {

json read_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config", "cannot open " + path);
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gated residual networks with structural skipping and FLOPs accounting", "lcnet"};
  std::string command;
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::string> output_dir, checkpoint, data_path, data_source;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<double> lambda;
  app.add_option("command", command, "train | finetune | eval | trace | flops-report | activation-matrix | print-config")
      ->required()
      ->check(CLI::IsMember(command_names()));
  app.add_option("-c,--config", config_file, "JSON configuration file");
  app.add_option("-s,--set", overrides, "Override, e.g. train.lambda=0.001 (repeatable)");
  app.add_option("-o,--output-dir", output_dir, "Artifact directory");
  app.add_option("--checkpoint", checkpoint, "Input checkpoint directory");
  app.add_option("--data-path", data_path, "CIFAR-10 binary directory");
  app.add_option("--data-source", data_source, "synthetic | cifar10");
  app.add_option("--seed", seed, "Training seed");
  app.add_option("--epochs", epochs, "Training epochs");
  app.add_option("--lambda", lambda, "L1 gate penalty");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_ok : exit_config;
  }

  try {
    json j = to_json(RunConfig{});
    j["model"].erase("classes");
    if (!config_file.empty()) j.merge_patch(read_config_file(config_file));
    if (output_dir) j["output_dir"] = *output_dir;
    if (checkpoint) j["checkpoint"] = *checkpoint;
    if (data_path) j["data"]["path"] = *data_path;
    if (data_source) j["data"]["source"] = *data_source;
    if (seed) j["train"]["seed"] = *seed;
    if (epochs) j["train"]["epochs"] = *epochs;
    if (lambda) j["train"]["lambda"] = *lambda;
    for (const auto& o : overrides) apply_override(j, o);
    const auto cfg = config_from_json(j);
    run_command(command, cfg, out);
    return exit_ok;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return exit_numeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return exit_data;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_other;
  }
}

}  // namespace lcnet::app
