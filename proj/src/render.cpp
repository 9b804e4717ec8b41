#include <algorithm>
#include <cmath>
#include <cstdio>

#include "hamopt/error.hpp"
#include "hamopt/io.hpp"

namespace hamopt {

void Frame::set(long x, long y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  if (x < 0 || y < 0 || x >= static_cast<long>(width) || y >= static_cast<long>(height)) return;
  std::uint8_t* px = rgb.data() + 3 * (static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x));
  px[0] = r;
  px[1] = g;
  px[2] = b;
}

namespace {

struct Color {
  std::uint8_t r, g, b;
};

constexpr Color kBlack{0, 0, 0};
constexpr Color kCart{40, 70, 160};
constexpr Color kPole{200, 90, 40};
constexpr Color kHill{60, 120, 60};
constexpr Color kCar{200, 30, 30};
constexpr Color kFlag{230, 190, 0};

constexpr std::size_t kViewWidth = 320;
constexpr std::size_t kViewHeight = 240;

void line(Frame& f, double x0, double y0, double x1, double y1, Color c, int thickness = 1) {
  const double len = std::max(std::abs(x1 - x0), std::abs(y1 - y0));
  const int steps = std::max(1, static_cast<int>(std::ceil(len)));
  const int half = thickness / 2;
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    const long x = std::lround(x0 + t * (x1 - x0));
    const long y = std::lround(y0 + t * (y1 - y0));
    for (int dx = -half; dx <= half; ++dx) f.set(x + dx, y, c.r, c.g, c.b);
  }
}

void rect(Frame& f, long x0, long y0, long x1, long y1, Color c) {
  for (long y = y0; y <= y1; ++y) {
    for (long x = x0; x <= x1; ++x) f.set(x, y, c.r, c.g, c.b);
  }
}

void disc(Frame& f, double cx, double cy, double radius, Color c) {
  const long r = static_cast<long>(std::ceil(radius));
  for (long dy = -r; dy <= r; ++dy) {
    for (long dx = -r; dx <= r; ++dx) {
      if (dx * dx + dy * dy <= radius * radius) f.set(std::lround(cx) + dx, std::lround(cy) + dy, c.r, c.g, c.b);
    }
  }
}

Frame render_shape(const Environment& env, std::span<const double> q) {
  const DenseField field = interpolate_lattice(q, shape_resolution(env));
  const std::size_t m = field.resolution;
  Frame f(m, m, 0);
  for (std::size_t row = 0; row < m; ++row) {
    for (std::size_t col = 0; col < m; ++col) {
      const std::uint8_t v = field.at(row, col) > 0.0 ? 255 : 0;
      // Image rows run top to bottom; field rows run up the y axis.
      f.set(static_cast<long>(col), static_cast<long>(m - 1 - row), v, v, v);
    }
  }
  return f;
}

Frame render_cartpole(const Environment& env, std::span<const double> q) {
  const CartPoleParams& p = cartpole_params(env);
  constexpr double kWorldHalfWidth = 2.4;
  constexpr double kTrackY = 180.0;
  const double scale = static_cast<double>(kViewWidth) / (2.0 * kWorldHalfWidth);
  Frame f(kViewWidth, kViewHeight, 255);
  line(f, 0, kTrackY, kViewWidth - 1, kTrackY, kBlack);

  const double cx = std::clamp(kViewWidth / 2.0 + q[0] * scale, 0.0, kViewWidth - 1.0);
  const long cart_x = std::lround(cx);
  constexpr long kCartHalfWidth = 20;
  constexpr long kCartHeight = 20;
  const long top = static_cast<long>(kTrackY) - kCartHeight;
  rect(f, cart_x - kCartHalfWidth, top, cart_x + kCartHalfWidth, static_cast<long>(kTrackY) - 1, kCart);

  const double pole_len = 2.0 * p.half_length * scale;
  const double tip_x = cart_x + pole_len * std::sin(q[2]);
  const double tip_y = top - pole_len * std::cos(q[2]);
  line(f, static_cast<double>(cart_x), static_cast<double>(top - 1), tip_x, tip_y, kPole, 3);
  return f;
}

Frame render_mountain_car(const Environment& env, std::span<const double> q) {
  const MountainCarParams& p = mountain_car_params(env);
  constexpr double kMargin = 20.0;
  const double sx = (kViewWidth - 1.0) / (p.max_position - p.min_position);
  const double sy = (kViewHeight - 2.0 * kMargin) / 2.0;
  auto px = [&](double x) { return (x - p.min_position) * sx; };
  auto py = [&](double y) { return kViewHeight / 2.0 - y * sy; };

  Frame f(kViewWidth, kViewHeight, 255);
  for (std::size_t i = 0; i + 1 < kViewWidth; ++i) {
    const double x0 = p.min_position + static_cast<double>(i) / sx;
    const double x1 = p.min_position + static_cast<double>(i + 1) / sx;
    line(f, px(x0), py(std::sin(3.0 * x0)), px(x1), py(std::sin(3.0 * x1)), kHill);
  }
  const double goal_y = py(std::sin(3.0 * p.goal_position));
  line(f, px(p.goal_position), goal_y, px(p.goal_position), goal_y - 20.0, kFlag, 3);

  const double x = std::clamp(q[0], p.min_position, p.max_position);
  disc(f, px(x), py(std::sin(3.0 * x)) - 6.0, 6.0, kCar);
  return f;
}

}  // namespace

Frame render_frame(const Environment& env, std::span<const double> q) {
  if (q.size() != env.state_dim()) throw Error(ErrorKind::ShapeError, "state has the wrong dimension");
  for (double v : q) {
    if (!std::isfinite(v)) throw Error(ErrorKind::NonFiniteValue, "cannot render a non-finite state");
  }
  switch (env.kind()) {
    case EnvKind::Shape: return render_shape(env, q);
    case EnvKind::CartPole: return render_cartpole(env, q);
    case EnvKind::MountainCar: return render_mountain_car(env, q);
    case EnvKind::Lq: break;
  }
  // LQ: the state as a dot in the square [-1, 1]^2 (first two coordinates).
  Frame f(kViewWidth, kViewHeight, 255);
  line(f, 0, kViewHeight / 2.0, kViewWidth - 1, kViewHeight / 2.0, kBlack);
  line(f, kViewWidth / 2.0, 0, kViewWidth / 2.0, kViewHeight - 1, kBlack);
  const double half = kViewHeight / 2.0 - 10.0;
  const double x = std::clamp(q[0], -1.0, 1.0);
  const double y = q.size() > 1 ? std::clamp(q[1], -1.0, 1.0) : 0.0;
  disc(f, kViewWidth / 2.0 + x * half, kViewHeight / 2.0 - y * half, 5.0, kCar);
  return f;
}

std::string encode_ppm(const Frame& frame) {
  std::string out = "P6\n" + std::to_string(frame.width) + " " + std::to_string(frame.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(frame.rgb.data()), frame.rgb.size());
  return out;
}

void write_ppm(const std::filesystem::path& path, const Frame& frame) { write_text_file(path, encode_ppm(frame)); }

std::string frame_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%04zu.ppm", index);
  return buf;
}

}  // namespace hamopt
