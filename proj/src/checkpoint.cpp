#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hamopt/error.hpp"
#include "hamopt/io.hpp"
#include "json.hpp"

namespace hamopt {

namespace {

constexpr std::array<std::string_view, 6> kKeys{"version", "env", "phase", "seed", "config", "networks"};

[[noreturn]] void corrupt(const std::string& why) { throw Error(ErrorKind::CorruptCheckpoint, why); }

std::string json_string(std::string_view s) { return nlohmann::json(std::string(s)).dump(); }

}  // namespace

bool Checkpoint::has_network(std::string_view name) const {
  for (const auto& [key, net] : networks) {
    if (key == name) return true;
  }
  return false;
}

const Mlp& Checkpoint::network(std::string_view name) const {
  for (const auto& [key, net] : networks) {
    if (key == name) return net;
  }
  corrupt("checkpoint has no network named '" + std::string(name) + "'");
}

void Checkpoint::set_network(const std::string& name, Mlp net) {
  for (auto& [key, existing] : networks) {
    if (key == name) {
      existing = std::move(net);
      return;
    }
  }
  networks.emplace_back(name, std::move(net));
}

std::string format_config_value(const ConfigValue& value) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, bool>) return v ? "true" : "false";
        else if constexpr (std::is_same_v<T, std::int64_t>) return std::to_string(v);
        else if constexpr (std::is_same_v<T, double>) {
          std::string text = format_double(v);
          if (std::isfinite(v) && text.find_first_of(".eE") == std::string::npos) text += ".0";
          return text;
        }
        else return json_string(v);
      },
      value);
}

std::string checkpoint_to_json(const Checkpoint& ckpt) {
  std::string out = "{\n";
  out += "  \"version\": " + std::to_string(ckpt.version) + ",\n";
  out += "  \"env\": " + json_string(ckpt.env) + ",\n";
  out += "  \"phase\": " + std::to_string(ckpt.phase) + ",\n";
  out += "  \"seed\": " + std::to_string(ckpt.seed) + ",\n";
  out += "  \"config\": {";
  for (std::size_t i = 0; i < ckpt.config.size(); ++i) {
    out += i ? ",\n    " : "\n    ";
    out += json_string(ckpt.config[i].first) + ": " + format_config_value(ckpt.config[i].second);
  }
  out += ckpt.config.empty() ? "},\n" : "\n  },\n";
  out += "  \"networks\": {";
  for (std::size_t i = 0; i < ckpt.networks.size(); ++i) {
    out += i ? ",\n    " : "\n    ";
    out += json_string(ckpt.networks[i].first) + ": " + serialize(ckpt.networks[i].second);
  }
  out += ckpt.networks.empty() ? "}\n" : "\n  }\n";
  out += "}\n";
  return out;
}

Checkpoint checkpoint_from_json(std::string_view text) {
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    corrupt(std::string("not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) corrupt("top level must be an object");
  if (doc.contains("version")) {
    const auto& v = doc["version"];
    if (!v.is_number_integer()) corrupt("version must be an integer");
    if (v.get<std::int64_t>() != kCheckpointVersion) {
      throw Error(ErrorKind::UnsupportedVersion, "checkpoint version " + std::to_string(v.get<std::int64_t>()) +
                                                     " (supported: " + std::to_string(kCheckpointVersion) + ")");
    }
  }
  for (auto key : kKeys) {
    if (!doc.contains(std::string(key))) corrupt("missing key '" + std::string(key) + "'");
  }
  if (doc.size() != kKeys.size()) {
    for (const auto& item : doc.items()) {
      bool known = false;
      for (auto key : kKeys) known = known || item.key() == key;
      if (!known) corrupt("unexpected key '" + item.key() + "'");
    }
  }

  Checkpoint ckpt;
  ckpt.version = kCheckpointVersion;
  if (!doc["env"].is_string()) corrupt("env must be a string");
  ckpt.env = doc["env"].get<std::string>();
  if (!doc["phase"].is_number_integer()) corrupt("phase must be an integer");
  ckpt.phase = doc["phase"].get<int>();
  if (ckpt.phase != 1 && ckpt.phase != 2) corrupt("phase must be 1 or 2");
  if (!doc["seed"].is_number_unsigned() && !(doc["seed"].is_number_integer() && doc["seed"].get<std::int64_t>() >= 0)) {
    corrupt("seed must be a non-negative integer");
  }
  ckpt.seed = doc["seed"].get<std::uint64_t>();

  if (!doc["config"].is_object()) corrupt("config must be an object");
  for (const auto& item : doc["config"].items()) {
    const auto& v = item.value();
    if (v.is_boolean()) ckpt.config.emplace_back(item.key(), v.get<bool>());
    else if (v.is_number_integer()) ckpt.config.emplace_back(item.key(), v.get<std::int64_t>());
    else if (v.is_number_float()) ckpt.config.emplace_back(item.key(), v.get<double>());
    else if (v.is_string()) ckpt.config.emplace_back(item.key(), v.get<std::string>());
    else corrupt("config value '" + item.key() + "' must be a scalar");
  }

  if (!doc["networks"].is_object()) corrupt("networks must be an object");
  for (const auto& item : doc["networks"].items()) {
    const auto& block = item.value();
    if (!block.is_object() || block.size() != 2 || !block.contains("dims") || !block.contains("data")) {
      corrupt("network '" + item.key() + "' must have exactly 'dims' and 'data'");
    }
    try {
      ckpt.networks.emplace_back(item.key(), deserialize(block.dump()));
    } catch (const Error& e) {
      corrupt("network '" + item.key() + "': " + e.what());
    }
  }
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_text_file(path, checkpoint_to_json(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) { return checkpoint_from_json(read_text_file(path)); }

}  // namespace hamopt
