#include <algorithm>
#include <array>
#include <cmath>

#include "hamopt/environments.hpp"
#include "hamopt/error.hpp"

namespace hamopt {

namespace {

// Cubic Lagrange basis on the lattice nodes {0, 1/3, 2/3, 1}.
std::array<double, kShapeLattice> lattice_basis(double t) {
  constexpr std::array<double, kShapeLattice> nodes{0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0};
  std::array<double, kShapeLattice> out{};
  for (std::size_t i = 0; i < kShapeLattice; ++i) {
    double num = 1.0;
    double den = 1.0;
    for (std::size_t j = 0; j < kShapeLattice; ++j) {
      if (j == i) continue;
      num *= t - nodes[j];
      den *= nodes[i] - nodes[j];
    }
    out[i] = num / den;
  }
  return out;
}

struct Point {
  double x;
  double y;
};

double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

// Fraction along the edge from a (value u) to b (value w) where the linear
// interpolant crosses zero. Requires exactly one of u, w to be positive.
double crossing(double u, double w) { return u / (u - w); }

struct CellMeasure {
  double area = 0.0;
  double length = 0.0;
};

// Unit cell with corners P0=(0,0), P1=(1,0), P2=(1,1), P3=(0,1), counter-clockwise.
CellMeasure measure_cell(const std::array<double, 4>& v) {
  static constexpr std::array<Point, 4> corners{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
  std::array<bool, 4> in{};
  int count = 0;
  for (int k = 0; k < 4; ++k) {
    in[k] = v[k] > 0.0;
    count += in[k] ? 1 : 0;
  }
  if (count == 0) return {0.0, 0.0};
  if (count == 4) return {1.0, 0.0};

  auto edge_point = [&](int k) {  // crossing on edge k -> k+1
    const int j = (k + 1) % 4;
    const double t = crossing(v[k], v[j]);
    return Point{corners[k].x + t * (corners[j].x - corners[k].x), corners[k].y + t * (corners[j].y - corners[k].y)};
  };

  const bool saddle = count == 2 && in[0] == in[2];
  if (saddle) {
    const double center = 0.25 * (v[0] + v[1] + v[2] + v[3]);
    const bool connected = center > 0.0;
    CellMeasure m;
    double cut_area = 0.0;
    for (int k = 0; k < 4; ++k) {
      // Corners whose region is isolated by the contour: negatives when the
      // positive set is connected through the centre, positives otherwise.
      if (in[k] == connected) continue;
      const int prev = (k + 3) % 4;
      const Point a = edge_point(prev);
      const Point b = edge_point(k);
      m.length += distance(a, b);
      cut_area += 0.5 * distance(corners[k], a) * distance(corners[k], b);
    }
    m.area = connected ? 1.0 - cut_area : cut_area;
    return m;
  }

  std::vector<Point> polygon;
  std::vector<Point> cuts;
  for (int k = 0; k < 4; ++k) {
    const int j = (k + 1) % 4;
    if (in[k]) polygon.push_back(corners[k]);
    if (in[k] != in[j]) {
      const Point p = edge_point(k);
      polygon.push_back(p);
      cuts.push_back(p);
    }
  }
  CellMeasure m;
  double twice_area = 0.0;
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    const Point& a = polygon[i];
    const Point& b = polygon[(i + 1) % polygon.size()];
    twice_area += a.x * b.y - b.x * a.y;
  }
  m.area = 0.5 * std::abs(twice_area);
  if (cuts.size() == 2) m.length = distance(cuts[0], cuts[1]);
  return m;
}

double positive_fraction(double u, double w) {
  const bool pu = u > 0.0;
  const bool pw = w > 0.0;
  if (pu && pw) return 1.0;
  if (!pu && !pw) return 0.0;
  return pu ? crossing(u, w) : crossing(w, u);
}

}  // namespace

double lattice_value(std::span<const double> controls, double x, double y) {
  if (controls.size() != kShapeControls) throw Error(ErrorKind::ShapeError, "shape lattice needs 16 values");
  const auto bx = lattice_basis(x);
  const auto by = lattice_basis(y);
  double acc = 0.0;
  for (std::size_t j = 0; j < kShapeLattice; ++j) {
    double row = 0.0;
    for (std::size_t i = 0; i < kShapeLattice; ++i) row += controls[j * kShapeLattice + i] * bx[i];
    acc += by[j] * row;
  }
  return acc;
}

DenseField interpolate_lattice(std::span<const double> controls, std::size_t resolution) {
  if (controls.size() != kShapeControls) throw Error(ErrorKind::ShapeError, "shape lattice needs 16 values");
  if (resolution < 2) throw Error(ErrorKind::ShapeError, "dense resolution must be at least 2");
  const double h = 1.0 / static_cast<double>(resolution - 1);
  std::vector<std::array<double, kShapeLattice>> basis(resolution);
  for (std::size_t k = 0; k < resolution; ++k) basis[k] = lattice_basis(static_cast<double>(k) * h);

  // rows[j][col]: lattice row j interpolated along x.
  std::vector<double> rows(kShapeLattice * resolution, 0.0);
  for (std::size_t j = 0; j < kShapeLattice; ++j) {
    for (std::size_t col = 0; col < resolution; ++col) {
      double acc = 0.0;
      for (std::size_t i = 0; i < kShapeLattice; ++i) acc += controls[j * kShapeLattice + i] * basis[col][i];
      rows[j * resolution + col] = acc;
    }
  }
  DenseField field;
  field.resolution = resolution;
  field.values.assign(resolution * resolution, 0.0);
  for (std::size_t row = 0; row < resolution; ++row) {
    for (std::size_t col = 0; col < resolution; ++col) {
      double acc = 0.0;
      for (std::size_t j = 0; j < kShapeLattice; ++j) acc += basis[row][j] * rows[j * resolution + col];
      field.values[row * resolution + col] = acc;
    }
  }
  return field;
}

ShapeGrid ShapeGrid::from_controls(std::span<const double> controls, std::size_t resolution) {
  ShapeGrid grid;
  if (controls.size() != kShapeControls) throw Error(ErrorKind::ShapeError, "shape lattice needs 16 values");
  std::copy(controls.begin(), controls.end(), grid.controls.begin());
  grid.dense = interpolate_lattice(controls, resolution);
  return grid;
}

ShapeMeasure measure_shape(const DenseField& field) {
  const std::size_t m = field.resolution;
  if (m < 2 || field.values.size() != m * m) throw Error(ErrorKind::ShapeError, "dense field is not square");
  const double h = 1.0 / static_cast<double>(m - 1);
  double area = 0.0;
  double length = 0.0;
  for (std::size_t r = 0; r + 1 < m; ++r) {
    for (std::size_t c = 0; c + 1 < m; ++c) {
      const std::array<double, 4> v{field.at(r, c), field.at(r, c + 1), field.at(r + 1, c + 1), field.at(r + 1, c)};
      const CellMeasure cell = measure_cell(v);
      area += cell.area;
      length += cell.length;
    }
  }
  double border = 0.0;
  for (std::size_t k = 0; k + 1 < m; ++k) {
    border += positive_fraction(field.at(0, k), field.at(0, k + 1));
    border += positive_fraction(field.at(m - 1, k), field.at(m - 1, k + 1));
    border += positive_fraction(field.at(k, 0), field.at(k + 1, 0));
    border += positive_fraction(field.at(k, m - 1), field.at(k + 1, m - 1));
  }
  return {(length + border) * h, area * h * h};
}

double shape_functional(const DenseField& field) {
  bool any_in = false;
  bool any_out = false;
  for (double v : field.values) {
    if (!std::isfinite(v)) throw Error(ErrorKind::NonFiniteValue, "non-finite level-set value");
    (v > 0.0 ? any_in : any_out) = true;
  }
  if (!any_in) throw Error(ErrorKind::EmptyShape, "level-set field has no positive samples");
  if (!any_out) throw Error(ErrorKind::FullShape, "level-set field has no negative samples");
  const ShapeMeasure m = measure_shape(field);
  return m.perimeter / std::sqrt(m.area);
}

double shape_functional(const ShapeGrid& grid) { return shape_functional(grid.dense); }

}  // namespace hamopt
