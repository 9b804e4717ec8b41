#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hamopt/autodiff.hpp"

namespace hamopt {

using Vec = std::vector<double>;
using VarList = std::vector<ad::Var>;

enum class EnvKind { Lq, CartPole, MountainCar, Shape };

// A control problem with dynamics affine in the control and running cost
// l(q, v) = l1(q) + 1/2 |v|^2. All members are pure; instances are immutable.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual EnvKind kind() const = 0;
  virtual std::string_view name() const = 0;
  virtual std::size_t state_dim() const = 0;
  virtual std::size_t control_dim() const = 0;

  // Black box f(q, v).
  virtual Vec flow(std::span<const double> q, std::span<const double> v) const = 0;
  // l1(q).
  virtual double running_cost(std::span<const double> q) const = 0;
  // g(q) and its gradient.
  virtual double terminal_cost(std::span<const double> q) const = 0;
  virtual Vec terminal_grad(std::span<const double> q) const = 0;
  virtual Vec sample_q0(std::uint64_t seed) const = 0;

  // Tape counterparts, used wherever these black boxes sit inside a
  // differentiated expression.
  virtual VarList flow(ad::Tape& tape, const VarList& q, const VarList& v) const = 0;
  virtual ad::Var running_cost(ad::Tape& tape, const VarList& q) const = 0;
  // Terminal-cost gradient as a tape expression of q. Environments without an
  // analytic gradient return a constant (no derivative flows through it).
  virtual ad::Var terminal_grad(ad::Tape& tape, const ad::Var& q) const = 0;

  // Full running cost l(q, v).
  double running_cost(std::span<const double> q, std::span<const double> v) const;
};

// ---------------------------------------------------------------------------
// Concrete problems

class LqEnvironment;
class CartPoleEnvironment;
class MountainCarEnvironment;
class ShapeEnvironment;

struct CartPoleParams {
  double gravity = 9.8;
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double half_length = 0.5;
};

struct MountainCarParams {
  double force_gain = 1.0;     // a
  double gravity_gain = 2.5;   // b
  double goal_position = 0.45;
  double goal_velocity = 0.0;
  double min_position = -1.2;
  double max_position = 0.6;
};

std::unique_ptr<Environment> make_lq(std::size_t dim = 2, double terminal_weight = 1.0);
std::unique_ptr<Environment> make_cartpole(CartPoleParams params = {});
std::unique_ptr<Environment> make_mountain_car(MountainCarParams params = {});
std::unique_ptr<Environment> make_shape(std::size_t resolution = 64);

// Registry keyed by name: lq, cartpole, mountaincar, shape.
std::unique_ptr<Environment> make_environment(std::string_view name);
const std::vector<std::string>& environment_names();

double lq_terminal_weight(const Environment& env);
const MountainCarParams& mountain_car_params(const Environment& env);
const CartPoleParams& cartpole_params(const Environment& env);
std::size_t shape_resolution(const Environment& env);

// ---------------------------------------------------------------------------
// Level-set shapes

inline constexpr std::size_t kShapeLattice = 4;
inline constexpr std::size_t kShapeControls = kShapeLattice * kShapeLattice;

// Samples of a level-set function on a resolution x resolution node grid
// covering the unit square; values[row * resolution + col] sits at
// (col, row) / (resolution - 1). The shape is {phi > 0}.
struct DenseField {
  std::size_t resolution = 0;
  std::vector<double> values;

  double at(std::size_t row, std::size_t col) const { return values[row * resolution + col]; }
};

// 4x4 lattice of level-set values at (i/3, j/3) plus its bicubic
// interpolant. The interpolant is the tensor-product cubic through the lattice
// (the not-a-knot cubic spline on four nodes), exact at lattice points.
struct ShapeGrid {
  std::array<double, kShapeControls> controls{};
  DenseField dense;

  static ShapeGrid from_controls(std::span<const double> controls, std::size_t resolution = 64);
};

DenseField interpolate_lattice(std::span<const double> controls, std::size_t resolution);
// Value of the interpolant at (x, y) in the unit square.
double lattice_value(std::span<const double> controls, double x, double y);

struct ShapeMeasure {
  double perimeter = 0.0;
  double area = 0.0;
};

// Marching squares: perimeter is the zero-contour length plus the length of
// the square's border where phi > 0; area is the positive part of each cell
// bounded by the linearly interpolated contour.
ShapeMeasure measure_shape(const DenseField& field);

// Peri(S) / sqrt(Area(S)). Throws EmptyShape / FullShape.
double shape_functional(const DenseField& field);
double shape_functional(const ShapeGrid& grid);

}  // namespace hamopt
