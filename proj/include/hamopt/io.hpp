#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "hamopt/environments.hpp"
#include "hamopt/nets.hpp"

namespace hamopt {

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr int kCheckpointVersion = 1;

// Flat, ordered key/value echo of the resolved configuration.
using ConfigValue = std::variant<bool, std::int64_t, double, std::string>;
using ConfigEcho = std::vector<std::pair<std::string, ConfigValue>>;

struct Checkpoint {
  int version = kCheckpointVersion;
  std::string env;
  int phase = 1;
  std::uint64_t seed = 0;
  ConfigEcho config;
  std::vector<std::pair<std::string, Mlp>> networks;

  bool has_network(std::string_view name) const;
  // Throws CorruptCheckpoint when absent.
  const Mlp& network(std::string_view name) const;
  void set_network(const std::string& name, Mlp net);
};

// Key order: version, env, phase, seed, config, networks. Floats use 17
// significant digits, so write -> read -> write is byte-identical.
std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(std::string_view text);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Configuration files: the subset of TOML used by run configs (tables, bare
// keys, strings, integers, floats, booleans, comments). Keys are flattened as
// "table.key".

using ConfigMap = std::map<std::string, ConfigValue>;

ConfigMap parse_config(std::string_view text);
ConfigMap read_config(const std::filesystem::path& path);
std::string format_config_value(const ConfigValue& value);

// ---------------------------------------------------------------------------
// CSV

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::vector<std::string> header);
  // Throws SchemaError when the row width differs from the header.
  void write_row(const std::vector<double>& row);
  void write_row(const std::vector<std::string>& cells);
  void close();

 private:
  std::filesystem::path path_;
  std::size_t width_;
  std::string buffer_;
};

void write_metrics(const std::filesystem::path& path, const std::vector<std::string>& header,
                   const std::vector<std::vector<double>>& rows);

std::string format_double(double v);

// Writes `contents` to `path`, creating parent directories. Throws IoError with the path.
void write_text_file(const std::filesystem::path& path, std::string_view contents);
std::string read_text_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Frames

struct Frame {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;

  Frame() = default;
  Frame(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), rgb(3 * w * h, fill) {}

  void set(long x, long y, std::uint8_t r, std::uint8_t g, std::uint8_t b);
  const std::uint8_t* pixel(std::size_t x, std::size_t y) const { return rgb.data() + 3 * (y * width + x); }
};

Frame render_frame(const Environment& env, std::span<const double> q);
std::string encode_ppm(const Frame& frame);
void write_ppm(const std::filesystem::path& path, const Frame& frame);
// frame_0000.ppm, frame_0001.ppm, ...
std::string frame_name(std::size_t index);

}  // namespace hamopt
