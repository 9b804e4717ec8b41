#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "hamopt/environments.hpp"
#include "hamopt/error.hpp"
#include "hamopt/io.hpp"
#include "hamopt/random.hpp"
#include "hamopt/training.hpp"
#include "json.hpp"

using namespace hamopt;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::IoError;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "hamopt_test_io";
  fs::create_directories(dir);
  return dir / name;
}

Checkpoint sample_checkpoint() {
  const auto env = make_cartpole();
  TrainConfig cfg;
  cfg.seed = 12;
  return make_phase1_checkpoint(*env, cfg, init_phase1(*env, 12));
}

std::string mutate(const std::string& text, const std::function<void(nlohmann::ordered_json&)>& edit) {
  auto doc = nlohmann::ordered_json::parse(text);
  edit(doc);
  return doc.dump();
}

}  // namespace

TEST_CASE("checkpoint roundtrip") {
  const Checkpoint ckpt = sample_checkpoint();
  const fs::path path = scratch("ckpt.json");
  write_checkpoint(path, ckpt);
  const Checkpoint back = read_checkpoint(path);
  CHECK(back.env == "cartpole");
  CHECK(back.seed == 12);
  CHECK(back.config == ckpt.config);
  const Mlp& h0 = ckpt.network(kNetHamiltonian);
  const Mlp& h1 = back.network(kNetHamiltonian);
  Rng rng(0);
  for (int k = 0; k < 100; ++k) {
    Vec x(8);
    for (double& v : x) v = rng.uniform(-1.0, 1.0);
    CHECK(h0.forward(x) == h1.forward(x));
  }
  CHECK(checkpoint_to_json(back) == read_text_file(path));

  const std::string text = checkpoint_to_json(ckpt);
  const auto doc = nlohmann::ordered_json::parse(text);
  std::vector<std::string> keys;
  for (const auto& [k, v] : doc.items()) keys.push_back(k);
  CHECK(keys == std::vector<std::string>{"version", "env", "phase", "seed", "config", "networks"});
}

TEST_CASE("checkpoint guards") {
  const std::string text = checkpoint_to_json(sample_checkpoint());
  CHECK(kind_of([&] { checkpoint_from_json(mutate(text, [](auto& d) { d["version"] = 999; })); }) ==
        ErrorKind::UnsupportedVersion);
  CHECK(kind_of([&] { checkpoint_from_json(mutate(text, [](auto& d) { d.erase("seed"); })); }) ==
        ErrorKind::CorruptCheckpoint);
  CHECK(kind_of([&] { checkpoint_from_json(mutate(text, [](auto& d) { d["extra"] = 1; })); }) ==
        ErrorKind::CorruptCheckpoint);
  CHECK(kind_of([&] {
          checkpoint_from_json(mutate(text, [](auto& d) { d["networks"]["costate"]["data"].erase(0); }));
        }) == ErrorKind::CorruptCheckpoint);
  CHECK(kind_of([&] { checkpoint_from_json(mutate(text, [](auto& d) { d["phase"] = 3; })); }) ==
        ErrorKind::CorruptCheckpoint);
  CHECK(kind_of([&] { checkpoint_from_json(text.substr(0, 100)); }) == ErrorKind::CorruptCheckpoint);
  CHECK(kind_of([] { read_checkpoint("/nonexistent/ckpt.json"); }) == ErrorKind::IoError);
  CHECK(kind_of([] { sample_checkpoint().network("nosuch"); }) == ErrorKind::CorruptCheckpoint);
}

TEST_CASE("frames") {
  const auto shape = make_shape();
  const Frame white = render_frame(*shape, Vec(16, 1.0));
  CHECK(white.width == 64);
  CHECK(white.height == 64);
  CHECK(white.rgb.size() == 3 * 64 * 64);
  CHECK(std::all_of(white.rgb.begin(), white.rgb.end(), [](std::uint8_t v) { return v == 255; }));
  const Frame black = render_frame(*shape, Vec(16, -1.0));
  CHECK(std::all_of(black.rgb.begin(), black.rgb.end(), [](std::uint8_t v) { return v == 0; }));

  // Upright pole: pole-coloured pixels above the cart sit on the centre column.
  const auto cp = make_cartpole();
  const Frame upright = render_frame(*cp, Vec{0.0, 0.0, 0.0, 0.0});
  CHECK(upright.width == 320);
  CHECK(upright.height == 240);
  std::size_t min_x = 999, max_x = 0, count = 0;
  for (std::size_t y = 0; y < upright.height; ++y) {
    for (std::size_t x = 0; x < upright.width; ++x) {
      const std::uint8_t* px = upright.pixel(x, y);
      if (px[0] == 200 && px[1] == 90 && px[2] == 40) {
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
        ++count;
      }
    }
  }
  CHECK(count > 20);
  CHECK(min_x >= 159);
  CHECK(max_x <= 161);
  CHECK((min_x + max_x) / 2 == 160);

  // Far beyond the track the car marker clamps to the image edge.
  const auto mc = make_mountain_car();
  const Frame clamped = render_frame(*mc, Vec{5.0, 0.0});
  bool edge = false;
  for (std::size_t y = 0; y < clamped.height; ++y) {
    const std::uint8_t* px = clamped.pixel(clamped.width - 1, y);
    edge = edge || (px[0] == 200 && px[1] == 30 && px[2] == 30);
  }
  CHECK(edge);

  CHECK(kind_of([&] { render_frame(*cp, Vec{0.0, 0.0, std::nan(""), 0.0}); }) == ErrorKind::NonFiniteValue);
  CHECK(encode_ppm(render_frame(*cp, Vec{0.1, 0.0, 0.2, 0.0})) == encode_ppm(render_frame(*cp, Vec{0.1, 0.0, 0.2, 0.0})));

  const std::string ppm = encode_ppm(upright);
  CHECK(ppm.rfind("P6\n320 240\n255\n", 0) == 0);
  CHECK(ppm.size() == std::string("P6\n320 240\n255\n").size() + 3 * 320 * 240);
  CHECK(frame_name(0) == "frame_0000.ppm");
  CHECK(frame_name(123) == "frame_0123.ppm");
}

TEST_CASE("metrics CSV") {
  const fs::path empty = scratch("empty.csv");
  write_metrics(empty, phase1_metrics_header(), {});
  CHECK(read_text_file(empty) == "step,loss,term1,term2,term3\n");

  const fs::path three = scratch("three.csv");
  write_metrics(three, phase2_metrics_header(), {{1, 0.5, 0.1, 0.2, 0.3}, {2, 0.4, 0.1, 0.1, 0.2}, {3, 0.3, 0.1, 0.1, 0.1}});
  const std::string body = read_text_file(three);
  CHECK(std::count(body.begin(), body.end(), '\n') == 4);
  CHECK(body.find('\r') == std::string::npos);

  CHECK(kind_of([&] { write_metrics(three, phase1_metrics_header(), {{1.0, 2.0}}); }) == ErrorKind::SchemaError);
  CHECK(kind_of([] { write_text_file("/proc/hamopt/nope.csv", "x"); }) == ErrorKind::IoError);
}

TEST_CASE("config files") {
  const ConfigMap map = parse_config(R"(# phase-1 run
seed = 7
[train]
alpha1 = 0.5      # weight
iterations = 1_000
fhat = "dhdp"
[vae]
kl_weight = 1e-3
name = 'literal'
)");
  CHECK(std::get<std::int64_t>(map.at("seed")) == 7);
  CHECK(std::get<double>(map.at("train.alpha1")) == 0.5);
  CHECK(std::get<std::int64_t>(map.at("train.iterations")) == 1000);
  CHECK(std::get<std::string>(map.at("train.fhat")) == "dhdp");
  CHECK(std::get<double>(map.at("vae.kl_weight")) == 1e-3);
  CHECK(std::get<std::string>(map.at("vae.name")) == "literal");

  CHECK(kind_of([] { parse_config("a = 1\na = 2\n"); }) == ErrorKind::InvalidConfig);
  CHECK(kind_of([] { parse_config("a = [1, 2]\n"); }) == ErrorKind::InvalidConfig);
  CHECK(kind_of([] { parse_config("just words\n"); }) == ErrorKind::InvalidConfig);

  const ConfigMap json = parse_config(R"({"env": "lq", "train": {"steps": 20, "beta": 1.5}, "deterministic": true})");
  CHECK(std::get<std::string>(json.at("env")) == "lq");
  CHECK(std::get<std::int64_t>(json.at("train.steps")) == 20);
  CHECK(std::get<double>(json.at("train.beta")) == 1.5);
  CHECK(std::get<bool>(json.at("deterministic")));
}
