#include "config.hpp"

#include <set>

#include "lcnet/error.hpp"

namespace lcnet::app {

using nlohmann::json;

json to_json(const RunConfig& c) {
  const auto& d = c.data;
  const auto& t = c.train;
  const auto& e = c.eval;
  return {
      {"data",
       {{"source", d.source},
        {"path", d.path},
        {"train_limit", d.train_limit},
        {"test_limit", d.test_limit},
        {"classes", d.classes},
        {"synthetic_train", d.synthetic_train},
        {"synthetic_test", d.synthetic_test},
        {"seed", d.seed}}},
      {"model", lcnet::to_json(c.model)},
      {"train",
       {{"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"momentum", t.momentum},
        {"weight_decay", t.weight_decay},
        {"backbone_lr", t.backbone_lr},
        {"gate_lr", t.gate_lr},
        {"decay_factor", t.decay_factor},
        {"decay_period", t.decay_period},
        {"lambda", t.lambda},
        {"leak", t.leak},
        {"seed", t.seed},
        {"augment", t.augment},
        {"freeze_gates", t.freeze_gates}}},
      {"eval",
       {{"placement", to_string(e.placement)},
        {"count_gate_flops", e.count_gate_flops},
        {"batch_size", e.batch_size},
        {"extremes_k", e.extremes_k},
        {"activation_block", e.activation_block},
        {"max_channels", e.max_channels},
        {"histogram_bins", e.histogram_bins}}},
      {"checkpoint", c.checkpoint},
      {"output_dir", c.output_dir},
  };
}

namespace {

// Walks one JSON object, handing each known key to a typed reader.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError(name_, "expected an object");
  }
  ~Section() = default;

  std::string field(const std::string& key) const { return name_ + "." + key; }

  template <typename Fn>
  void read(const std::string& key, Fn&& fn) {
    known_.insert(key);
    if (j_.contains(key)) fn(j_.at(key), field(key));
  }

  void integer(const std::string& key, std::int64_t& out, std::int64_t min) {
    read(key, [&](const json& v, const std::string& f) {
      if (!v.is_number_integer()) throw ConfigError(f, "expected an integer");
      out = v.get<std::int64_t>();
      if (out < min) throw ConfigError(f, "must be >= " + std::to_string(min));
    });
  }

  void integer(const std::string& key, int& out, std::int64_t min) {
    std::int64_t v = out;
    integer(key, v, min);
    out = static_cast<int>(v);
  }

  void unsigned_integer(const std::string& key, std::uint64_t& out) {
    read(key, [&](const json& v, const std::string& f) {
      if (!v.is_number_unsigned()) throw ConfigError(f, "expected a non-negative integer");
      out = v.get<std::uint64_t>();
    });
  }

  void number(const std::string& key, double& out) {
    read(key, [&](const json& v, const std::string& f) {
      if (!v.is_number()) throw ConfigError(f, "expected a number");
      out = v.get<double>();
    });
  }

  void boolean(const std::string& key, bool& out) {
    read(key, [&](const json& v, const std::string& f) {
      if (!v.is_boolean()) throw ConfigError(f, "expected true or false");
      out = v.get<bool>();
    });
  }

  void string(const std::string& key, std::string& out) {
    read(key, [&](const json& v, const std::string& f) {
      if (!v.is_string()) throw ConfigError(f, "expected a string");
      out = v.get<std::string>();
    });
  }

  void finish() const {
    for (const auto& [key, v] : j_.items()) {
      if (!known_.count(key)) throw ConfigError(field(key), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> known_;
};

DataConfig read_data(const json& j) {
  DataConfig d;
  Section s(j, "data");
  s.string("source", d.source);
  s.string("path", d.path);
  s.integer("train_limit", d.train_limit, 0);
  s.integer("test_limit", d.test_limit, 0);
  s.integer("classes", d.classes, 2);
  s.integer("synthetic_train", d.synthetic_train, 0);
  s.integer("synthetic_test", d.synthetic_test, 0);
  s.unsigned_integer("seed", d.seed);
  s.finish();
  if (d.source != "synthetic" && d.source != "cifar10") {
    throw ConfigError("data.source", "expected \"synthetic\" or \"cifar10\"");
  }
  if (d.source == "synthetic" && d.classes > 10) throw ConfigError("data.classes", "at most 10 classes");
  return d;
}

TrainConfig read_train(const json& j) {
  TrainConfig t;
  Section s(j, "train");
  s.integer("epochs", t.epochs, 1);
  s.integer("batch_size", t.batch_size, 1);
  s.number("momentum", t.momentum);
  s.number("weight_decay", t.weight_decay);
  s.number("backbone_lr", t.backbone_lr);
  s.number("gate_lr", t.gate_lr);
  s.number("decay_factor", t.decay_factor);
  s.integer("decay_period", t.decay_period, 1);
  s.number("lambda", t.lambda);
  s.number("leak", t.leak);
  s.unsigned_integer("seed", t.seed);
  s.boolean("augment", t.augment);
  s.boolean("freeze_gates", t.freeze_gates);
  s.finish();
  t.validate();
  return t;
}

EvalConfig read_eval(const json& j) {
  EvalConfig e;
  Section s(j, "eval");
  std::string placement = to_string(e.placement);
  s.string("placement", placement);
  try {
    e.placement = placement_from_string(placement);
  } catch (const ConfigError&) {
    throw ConfigError("eval.placement", "expected \"dense\", \"parallel\" or \"sequential\"");
  }
  s.boolean("count_gate_flops", e.count_gate_flops);
  s.integer("batch_size", e.batch_size, 1);
  s.integer("extremes_k", e.extremes_k, 0);
  s.integer("activation_block", e.activation_block, 0);
  s.integer("max_channels", e.max_channels, 1);
  s.integer("histogram_bins", e.histogram_bins, 1);
  s.finish();
  return e;
}

}  // namespace

RunConfig config_from_json(const json& j) {
  RunConfig c;
  Section root(j, "config");
  root.read("data", [&](const json& v, const std::string&) { c.data = read_data(v); });
  bool classes_given = false;
  root.read("model", [&](const json& v, const std::string&) {
    c.model = architecture_from_json(v, "model");
    classes_given = v.contains("classes");
  });
  if (classes_given) {
    if (c.model.classes != c.data.class_count()) {
      throw ConfigError("model.classes", "disagrees with the " + std::to_string(c.data.class_count()) +
                                             " classes of the data");
    }
  } else {
    c.model.classes = c.data.class_count();
  }
  if (c.model.in_channels != 3) throw ConfigError("model.in_channels", "images have 3 channels");
  root.read("train", [&](const json& v, const std::string&) { c.train = read_train(v); });
  root.read("eval", [&](const json& v, const std::string&) { c.eval = read_eval(v); });
  root.read("checkpoint", [&](const json& v, const std::string& f) {
    if (!v.is_string()) throw ConfigError(f.substr(f.find('.') + 1), "expected a string");
    c.checkpoint = v.get<std::string>();
  });
  root.read("output_dir", [&](const json& v, const std::string& f) {
    if (!v.is_string()) throw ConfigError(f.substr(f.find('.') + 1), "expected a string");
    c.output_dir = v.get<std::string>();
  });
  for (const auto& [key, v] : j.items()) {
    if (key != "data" && key != "model" && key != "train" && key != "eval" && key != "checkpoint" &&
        key != "output_dir") {
      throw ConfigError(key, "unknown key");
    }
  }
  return c;
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError(assignment, "override must look like section.key=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError(path, "empty key in override");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    if (!node->contains(key)) (*node)[key] = json::object();
    node = &(*node)[key];
    if (!node->is_object()) throw ConfigError(path.substr(0, dot), "is not a section");
    start = dot + 1;
  }
}

}  // namespace lcnet::app
