#pragma once

// Tape-based reverse-mode differentiation over dense float64 vectors.
//
// Every node on a Tape owns a contiguous slice of one value arena. Nodes are
// appended in evaluation order, so parents always precede children and the
// backward sweep is a single reverse pass. Matrices are stored row-major and
// participate through MatVec / MatTVec only.
//
// A tape belongs to one thread. Independent tapes share nothing.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace hamopt::ad {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t size() const { return data.size(); }
};

enum class OpKind : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Scale,
  AddConst,
  Axpy,
  MatVec,
  MatTVec,
  Tanh,
  OneMinusSquare,
  Exp,
  Log,
  Sin,
  Cos,
  Square,
  Sum,
  Dot,
  SquaredNorm,
  Concat,
  Slice,
  Symplectic,
  External,
};

class Tape;

// Lightweight handle to a node on a tape. Copyable; valid while the tape lives.
class Var {
 public:
  Var() = default;

  Tape* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  std::size_t size() const;
  std::span<const double> value() const;
  // Value of a size-1 node; throws ShapeError otherwise.
  double scalar() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

// Scalar function of a vector with a caller-supplied gradient. Lets black boxes
// that are not expressible as tape primitives (e.g. a finite-difference
// gradient) take part in a differentiated expression.
struct ExternalScalar {
  std::function<double(std::span<const double>)> value;
  std::function<void(std::span<const double>, std::span<double>)> gradient;
};

class Gradients {
 public:
  // Gradient of the output with respect to `v` (same length as v).
  std::span<const double> operator[](const Var& v) const;

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::vector<double> grads_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves. Variables receive gradients; constants do not.
  Var variable(std::span<const double> values);
  Var variable(double value);
  Var matrix_variable(std::size_t rows, std::size_t cols, std::span<const double> values);
  Var constant(std::span<const double> values);
  Var constant(double value);
  Var matrix_constant(std::size_t rows, std::size_t cols, std::span<const double> values);
  Var leaf(const Tensor& tensor, bool requires_grad);

  // Elementwise binary ops. A size-1 operand broadcasts against the other.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);

  Var neg(Var a);
  Var scale(Var a, double c);
  Var add_const(Var a, double c);
  // a + c * b
  Var axpy(Var a, double c, Var b);

  // W x with W (rows x cols), x (cols) -> (rows); and W^T x with x (rows) -> (cols).
  Var matvec(Var w, Var x);
  Var matvec_t(Var w, Var x);

  Var tanh(Var a);
  // 1 - a^2, the tanh derivative expressed through the activation.
  Var one_minus_square(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var sin(Var a);
  Var cos(Var a);
  Var square(Var a);

  Var sum(Var a);
  Var dot(Var a, Var b);
  Var squared_norm(Var a);

  Var concat(Var a, Var b);
  Var slice(Var a, std::size_t begin, std::size_t length);
  Var element(Var a, std::size_t index) { return slice(a, index, 1); }
  std::vector<Var> split(Var a);
  Var stack(std::span<const Var> parts);

  // For a gradient g = (g_q, g_p) of a Hamiltonian, returns sign * (g_p, -g_q).
  Var symplectic(Var grad, double sign);

  Var external(Var x, ExternalScalar fn);

  // Reverse sweep from a scalar output. Throws ShapeError for non-scalar output.
  Gradients backward(Var output) const;

  // Re-evaluate every non-leaf node from the current leaf values.
  void replay();
  // Overwrite a leaf's values (for replay).
  void set_leaf(Var leaf, std::span<const double> values);

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t value_count() const { return values_.size(); }

  std::span<const double> value(const Var& v) const;
  std::size_t size(const Var& v) const;
  OpKind op(const Var& v) const;
  std::vector<std::uint32_t> parents(const Var& v) const;

 private:
  friend class Gradients;

  static constexpr std::uint32_t kNone = 0xFFFFFFFFu;

  struct Node {
    OpKind op = OpKind::Leaf;
    bool needs_grad = false;
    std::uint32_t lhs = kNone;
    std::uint32_t rhs = kNone;
    std::uint32_t offset = 0;
    std::uint32_t size = 0;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    std::uint32_t aux = 0;
    double coeff = 0.0;
  };

  Var push(Node node);
  void evaluate(std::uint32_t id);
  void check_finite(std::uint32_t id) const;
  void check_owner(const Var& v) const;
  Var binary(OpKind op, Var a, Var b);
  Var unary(OpKind op, Var a, std::uint32_t size, double coeff = 0.0);

  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<ExternalScalar> externals_;
};

// Operator sugar for scalar-level expressions (environment black boxes).
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double c);
Var operator+(double c, Var a);
Var operator-(Var a, double c);
Var operator-(double c, Var a);
Var operator*(Var a, double c);
Var operator*(double c, Var a);
Var operator/(Var a, double c);
Var operator/(double c, Var a);
Var sin(Var a);
Var cos(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);

// Records f(x) on a fresh tape and returns its value and gradient.
struct ValueAndGradient {
  double value = 0.0;
  std::vector<double> gradient;
};
using ScalarFunction = std::function<Var(Tape&, Var)>;
ValueAndGradient value_and_gradient(const ScalarFunction& f, std::span<const double> x);

// max_i |analytic_i - fd_i| / max(1, |analytic_i|) against central differences.
// Throws InvalidStep for step <= 0.
double grad_check(const ScalarFunction& f, std::span<const double> x, double step);

}  // namespace hamopt::ad
