#include "lcnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "lcnet/error.hpp"

namespace lcnet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Entry {
  std::string name;
  Shape shape;
  std::span<float> values;
};

std::vector<Entry> entries(NetworkSpec<float>& net) {
  std::vector<Entry> out;
  for (auto& p : parameters(net)) out.push_back({p.name, p.tensor.shape(), p.tensor.mutable_data()});
  for (auto& b : buffers(net)) {
    out.push_back({b.name, Shape{static_cast<std::int64_t>(b.values->size())}, *b.values});
  }
  return out;
}

void put_f32(std::string& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

float get_f32(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

void write_file(const fs::path& file, const std::string& bytes) {
  std::ofstream f(file, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot write " + file.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("failed writing " + file.string());
}

std::string read_file(const fs::path& file) {
  std::ifstream f(file, std::ios::binary);
  if (!f) throw CheckpointError("missing checkpoint file: " + file.string());
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

void save_checkpoint(const NetworkSpec<float>& net, const Normalization& normalization,
                     const fs::path& dir) {
  net.validate();
  normalization.validate(static_cast<std::size_t>(net.arch.in_channels));
  NetworkSpec<float> view = net;  // tensor handles alias the originals
  std::string payload;
  json tensors = json::array();
  for (const auto& e : entries(view)) {
    tensors.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", payload.size()}});
    for (float v : e.values) put_f32(payload, v);
  }
  json manifest = {{"format_version", kCheckpointFormatVersion},
                   {"architecture", to_json(net.arch)},
                   {"normalization", {{"mean", normalization.mean}, {"std", normalization.stddev}}},
                   {"payload", "params.bin"},
                   {"payload_bytes", payload.size()},
                   {"tensors", tensors}};
  fs::create_directories(dir);
  write_file(dir / "params.bin", payload);
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw CheckpointError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  try {
    const int version = manifest.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw CheckpointError("checkpoint format version " + std::to_string(version) +
                            " is not supported (expected " +
                            std::to_string(kCheckpointFormatVersion) + ")");
    }
    Checkpoint ck;
    ArchitectureSpec arch;
    try {
      arch = architecture_from_json(manifest.at("architecture"), "architecture");
    } catch (const ConfigError& e) {
      throw CheckpointError(std::string("bad architecture in manifest: ") + e.what());
    }
    ck.net = build_network<float>(arch, 0);
    const auto& norm = manifest.at("normalization");
    ck.normalization.mean = norm.at("mean").get<std::vector<float>>();
    ck.normalization.stddev = norm.at("std").get<std::vector<float>>();
    try {
      ck.normalization.validate(static_cast<std::size_t>(arch.in_channels));
    } catch (const DataError& e) {
      throw CheckpointError(std::string("bad normalization in manifest: ") + e.what());
    }

    const std::string payload = read_file(dir / manifest.value("payload", std::string("params.bin")));
    std::map<std::string, Entry> wanted;
    for (auto& e : entries(ck.net)) wanted.emplace(e.name, e);
    std::size_t expected_bytes = 0;
    std::set<std::string> seen;
    for (const auto& t : manifest.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      const auto it = wanted.find(name);
      if (it == wanted.end()) throw CheckpointError("unknown tensor '" + name + "' in manifest");
      if (!seen.insert(name).second) throw CheckpointError("tensor '" + name + "' listed twice in manifest");
      const auto shape = t.at("shape").get<Shape>();
      if (shape != it->second.shape) {
        throw CheckpointError("tensor '" + name + "' has shape " + shape_to_string(shape) +
                              " in manifest, network expects " + shape_to_string(it->second.shape));
      }
      const auto offset = t.at("offset").get<std::size_t>();
      const std::size_t bytes = it->second.values.size() * 4;
      if (offset + bytes > payload.size()) {
        throw CheckpointError("payload too short for tensor '" + name + "'");
      }
      const auto* p = reinterpret_cast<const unsigned char*>(payload.data()) + offset;
      for (std::size_t i = 0; i < it->second.values.size(); ++i) it->second.values[i] = get_f32(p + 4 * i);
      expected_bytes += bytes;
    }
    for (const auto& [name, e] : wanted) {
      if (!seen.count(name)) throw CheckpointError("tensor '" + name + "' missing from manifest");
    }
    if (payload.size() != expected_bytes) {
      throw CheckpointError("payload has " + std::to_string(payload.size()) + " bytes, manifest needs " +
                            std::to_string(expected_bytes));
    }
    ck.net.validate();
    return ck;
  } catch (const json::exception& e) {
    throw CheckpointError("malformed manifest in " + dir.string() + ": " + e.what());
  } catch (const ShapeError& e) {
    throw CheckpointError(std::string("inconsistent checkpoint: ") + e.what());
  }
}

}  // namespace lcnet
