#pragma once

// Checkpoint container:
//
//   line 1        "complexndm-checkpoint"
//   manifest      "key=value" lines; tensors are declared as
//                 "tensor=<name> <count>" in payload order
//   "end_manifest"
//   payload       little-endian IEEE-754 float64 values of every declared
//                 tensor, concatenated
//
// Required manifest keys: schema_version, payload_values, payload_fnv1a,
// shape.* (targets, controls, history, state, hidden, layers), config_hash,
// seed, epoch. Optional: config.<key> for the resolved run configuration and
// metric.<name> for a metric snapshot. Normalization statistics are stored as
// the tensors norm.temperature_divisor and norm.control_divisors.

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cndm/common.hpp"
#include "cndm/config.hpp"
#include "cndm/data.hpp"
#include "cndm/model.hpp"

namespace cndm {

inline constexpr int kCheckpointSchemaVersion = 1;
inline constexpr const char* kCheckpointMagic = "complexndm-checkpoint";

struct Checkpoint {
  ModelParams params;
  std::vector<std::pair<std::string, std::string>> config;  // resolved key-values
  std::string config_hash;
  NormStats norm;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  std::vector<std::pair<std::string, double>> metrics;
};

namespace detail {

inline void append_le(std::string& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>(bits & 0xff));
    bits >>= 8;
  }
}

inline double read_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(p[i]);
  return std::bit_cast<double>(bits);
}

template <class F>
void visit_checkpoint_tensors(Checkpoint& ck, F&& f) {
  visit_tensors(ck.params, f);
  f(std::string("norm.temperature_divisor"), std::span<double>(&ck.norm.temperature_divisor, 1));
  f(std::string("norm.control_divisors"), std::span<double>(ck.norm.control_divisors));
}

inline Error corrupt(const std::string& what) {
  return Error(ErrorCategory::checkpoint, "corrupt checkpoint: " + what);
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck_in) {
  Checkpoint ck = ck_in;
  std::string payload;
  std::ostringstream tensors;
  std::size_t values = 0;
  detail::visit_checkpoint_tensors(ck, [&](const std::string& name, std::span<double> data) {
    tensors << "tensor=" << name << ' ' << data.size() << '\n';
    for (double v : data) detail::append_le(payload, v);
    values += data.size();
  });

  const ModelShape& s = ck.params.shape;
  std::ostringstream os;
  os << kCheckpointMagic << '\n';
  os << "schema_version=" << kCheckpointSchemaVersion << '\n';
  os << "shape.targets=" << s.targets << '\n';
  os << "shape.controls=" << s.controls << '\n';
  os << "shape.history=" << s.history << '\n';
  os << "shape.state=" << s.state << '\n';
  os << "shape.hidden=" << s.hidden << '\n';
  os << "shape.layers=" << s.layers << '\n';
  os << "config_hash=" << ck.config_hash << '\n';
  os << "seed=" << ck.seed << '\n';
  os << "epoch=" << ck.epoch << '\n';
  for (const auto& [k, v] : ck.config) os << "config." << k << '=' << v << '\n';
  for (const auto& [k, v] : ck.metrics) os << "metric." << k << '=' << format_double(v) << '\n';
  os << tensors.str();
  os << "payload_values=" << values << '\n';
  os << "payload_fnv1a=" << hex64(fnv1a(payload)) << '\n';
  os << "end_manifest\n";
  return os.str() + payload;
}

/// Parses a checkpoint. When `expected` is given, every shape field must match
/// it.
inline Checkpoint deserialize_checkpoint(const std::string& bytes, const ModelShape* expected = nullptr) {
  const std::string end_marker = "\nend_manifest\n";
  const auto end = bytes.find(end_marker);
  if (end == std::string::npos) throw detail::corrupt("manifest terminator not found (truncated file?)");
  std::istringstream manifest(bytes.substr(0, end + 1));
  const std::string payload = bytes.substr(end + end_marker.size());

  std::string line;
  if (!std::getline(manifest, line) || line != kCheckpointMagic) throw detail::corrupt("bad magic line");
  std::map<std::string, std::string> keys;
  std::vector<std::pair<std::string, std::size_t>> tensors;
  Checkpoint ck;
  while (std::getline(manifest, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw detail::corrupt("malformed manifest line '" + line + "'");
    const std::string k = line.substr(0, eq);
    const std::string v = line.substr(eq + 1);
    if (k == "tensor") {
      const auto sp = v.rfind(' ');
      if (sp == std::string::npos) throw detail::corrupt("malformed tensor line '" + line + "'");
      const std::string count = v.substr(sp + 1);
      std::size_t n = 0;
      const auto res = std::from_chars(count.data(), count.data() + count.size(), n);
      if (res.ec != std::errc() || res.ptr != count.data() + count.size())
        throw detail::corrupt("malformed tensor line '" + line + "'");
      tensors.emplace_back(v.substr(0, sp), n);
    } else if (k.rfind("config.", 0) == 0) {
      ck.config.emplace_back(k.substr(7), v);
    } else if (k.rfind("metric.", 0) == 0) {
      double d;
      if (!parse_double(v, d)) throw detail::corrupt("bad metric value '" + v + "'");
      ck.metrics.emplace_back(k.substr(7), d);
    } else {
      keys[k] = v;
    }
  }
  const auto need = [&](const std::string& k) -> const std::string& {
    const auto it = keys.find(k);
    if (it == keys.end()) throw detail::corrupt("manifest key '" + k + "' missing");
    return it->second;
  };
  const auto need_uint = [&](const std::string& k) -> std::uint64_t {
    const std::string& v = need(k);
    std::uint64_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
      throw detail::corrupt("manifest key '" + k + "' is not an unsigned integer");
    return out;
  };

  const std::uint64_t version = need_uint("schema_version");
  if (version != static_cast<std::uint64_t>(kCheckpointSchemaVersion))
    throw Error(ErrorCategory::checkpoint, "checkpoint schema version " + std::to_string(version) +
                                               " is not supported (expected " +
                                               std::to_string(kCheckpointSchemaVersion) + ")");
  ModelShape s;
  s.targets = need_uint("shape.targets");
  s.controls = need_uint("shape.controls");
  s.history = need_uint("shape.history");
  s.state = need_uint("shape.state");
  s.hidden = need_uint("shape.hidden");
  s.layers = need_uint("shape.layers");
  if (expected) {
    const std::pair<const char*, std::pair<std::size_t, std::size_t>> fields[] = {
        {"targets", {s.targets, expected->targets}}, {"controls", {s.controls, expected->controls}},
        {"history", {s.history, expected->history}}, {"state", {s.state, expected->state}},
        {"hidden", {s.hidden, expected->hidden}},    {"layers", {s.layers, expected->layers}}};
    for (const auto& [name, vals] : fields)
      if (vals.first != vals.second)
        throw Error(ErrorCategory::shape, std::string("checkpoint shape mismatch: shape.") + name + " is " +
                                              std::to_string(vals.first) + ", expected " +
                                              std::to_string(vals.second));
  }
  ck.config_hash = need("config_hash");
  ck.seed = need_uint("seed");
  ck.epoch = need_uint("epoch");
  const std::uint64_t values = need_uint("payload_values");
  if (payload.size() != values * 8)
    throw detail::corrupt("payload has " + std::to_string(payload.size()) + " bytes, expected " +
                          std::to_string(values * 8));
  if (hex64(fnv1a(payload)) != need("payload_fnv1a")) throw detail::corrupt("payload checksum mismatch");

  ck.params = zero_model(s);
  std::size_t index = 0;
  std::size_t offset = 0;
  detail::visit_checkpoint_tensors(ck, [&](const std::string& name, std::span<double> data) {
    if (index >= tensors.size()) throw detail::corrupt("tensor '" + name + "' missing");
    const auto& [declared, count] = tensors[index++];
    if (declared != name) throw detail::corrupt("expected tensor '" + name + "', found '" + declared + "'");
    if (count != data.size())
      throw Error(ErrorCategory::shape, "checkpoint tensor '" + name + "' has " + std::to_string(count) +
                                            " values, shape implies " + std::to_string(data.size()));
    for (double& v : data) {
      v = detail::read_le(payload.data() + offset);
      offset += 8;
    }
  });
  if (index != tensors.size()) throw detail::corrupt("unexpected extra tensors");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  const std::string bytes = serialize_checkpoint(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCategory::io, "cannot write checkpoint '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCategory::io, "short write to checkpoint '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path, const ModelShape* expected = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCategory::io, "cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str(), expected);
}

/// Rebuilds the run configuration stored in a checkpoint.
inline TrainConfig checkpoint_config(const Checkpoint& ck) {
  TrainConfig cfg;
  for (const auto& [k, v] : ck.config) set_config_value(cfg, k, v);
  return cfg;
}

}  // namespace cndm
