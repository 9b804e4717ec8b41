#include "hamopt/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hamopt/error.hpp"

namespace hamopt {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::ShapeError: return "ShapeError";
    case ErrorKind::InvalidStep: return "InvalidStep";
    case ErrorKind::InvalidSteps: return "InvalidSteps";
    case ErrorKind::InvalidArchitecture: return "InvalidArchitecture";
    case ErrorKind::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorKind::DimsMismatch: return "DimsMismatch";
    case ErrorKind::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorKind::NotAffineInControl: return "NotAffineInControl";
    case ErrorKind::EmptyShape: return "EmptyShape";
    case ErrorKind::FullShape: return "FullShape";
    case ErrorKind::SamplingFailed: return "SamplingFailed";
    case ErrorKind::EmptyBatch: return "EmptyBatch";
    case ErrorKind::TrainingDiverged: return "TrainingDiverged";
    case ErrorKind::MissingPhase1: return "MissingPhase1";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::EnvMismatch: return "EnvMismatch";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

}  // namespace hamopt

namespace hamopt::ad {

namespace {

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Div: return "div";
    case OpKind::Neg: return "neg";
    case OpKind::Scale: return "scale";
    case OpKind::AddConst: return "add_const";
    case OpKind::Axpy: return "axpy";
    case OpKind::MatVec: return "matvec";
    case OpKind::MatTVec: return "matvec_t";
    case OpKind::Tanh: return "tanh";
    case OpKind::OneMinusSquare: return "one_minus_square";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Sin: return "sin";
    case OpKind::Cos: return "cos";
    case OpKind::Square: return "square";
    case OpKind::Sum: return "sum";
    case OpKind::Dot: return "dot";
    case OpKind::SquaredNorm: return "squared_norm";
    case OpKind::Concat: return "concat";
    case OpKind::Slice: return "slice";
    case OpKind::Symplectic: return "symplectic";
    case OpKind::External: return "external";
  }
  return "?";
}

}  // namespace

Tensor Tensor::scalar(double value) { return Tensor{{1}, {value}}; }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor{{n}, std::move(values)};
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  if (rows * cols != values.size()) {
    throw Error(ErrorKind::ShapeError, "matrix buffer length does not match rows*cols");
  }
  return Tensor{{rows, cols}, std::move(values)};
}

std::size_t Var::size() const { return tape_->size(*this); }
std::span<const double> Var::value() const { return tape_->value(*this); }

double Var::scalar() const {
  const auto v = value();
  if (v.size() != 1) throw Error(ErrorKind::ShapeError, "scalar() on a node of size " + std::to_string(v.size()));
  return v[0];
}

std::span<const double> Gradients::operator[](const Var& v) const {
  const auto& node = tape_->nodes_.at(v.id());
  return {grads_.data() + node.offset, node.size};
}

// ---------------------------------------------------------------------------
// Construction

Var Tape::push(Node node) {
  node.offset = static_cast<std::uint32_t>(values_.size());
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(node);
  values_.resize(values_.size() + node.size);
  if (node.op != OpKind::Leaf) {
    evaluate(id);
    check_finite(id);
  }
  return Var(this, id);
}

void Tape::check_owner(const Var& v) const {
  if (v.tape() != this || v.id() >= nodes_.size()) {
    throw Error(ErrorKind::ShapeError, "variable does not belong to this tape");
  }
}

void Tape::check_finite(std::uint32_t id) const {
  const Node& n = nodes_[id];
  for (std::uint32_t i = 0; i < n.size; ++i) {
    if (!std::isfinite(values_[n.offset + i])) {
      throw Error(ErrorKind::NonFiniteValue,
                  std::string("non-finite value produced by ") + op_name(n.op) + " at node " + std::to_string(id));
    }
  }
}

Var Tape::leaf(const Tensor& tensor, bool requires_grad) {
  std::size_t expected = 1;
  for (auto d : tensor.shape) expected *= d;
  if (tensor.shape.empty() || expected != tensor.data.size()) {
    throw Error(ErrorKind::ShapeError, "tensor shape does not match its buffer");
  }
  Node node;
  node.op = OpKind::Leaf;
  node.needs_grad = requires_grad;
  node.size = static_cast<std::uint32_t>(tensor.data.size());
  if (tensor.shape.size() == 2) {
    node.rows = static_cast<std::uint32_t>(tensor.shape[0]);
    node.cols = static_cast<std::uint32_t>(tensor.shape[1]);
  } else {
    node.rows = node.size;
    node.cols = 1;
  }
  for (double x : tensor.data) {
    if (!std::isfinite(x)) throw Error(ErrorKind::NonFiniteValue, "non-finite leaf value");
  }
  Var v = push(node);
  std::copy(tensor.data.begin(), tensor.data.end(), values_.begin() + nodes_[v.id()].offset);
  return v;
}

Var Tape::variable(std::span<const double> values) {
  return leaf(Tensor::vector({values.begin(), values.end()}), true);
}
Var Tape::variable(double value) { return leaf(Tensor::scalar(value), true); }
Var Tape::matrix_variable(std::size_t rows, std::size_t cols, std::span<const double> values) {
  return leaf(Tensor::matrix(rows, cols, {values.begin(), values.end()}), true);
}
Var Tape::constant(std::span<const double> values) {
  return leaf(Tensor::vector({values.begin(), values.end()}), false);
}
Var Tape::constant(double value) { return leaf(Tensor::scalar(value), false); }
Var Tape::matrix_constant(std::size_t rows, std::size_t cols, std::span<const double> values) {
  return leaf(Tensor::matrix(rows, cols, {values.begin(), values.end()}), false);
}

Var Tape::binary(OpKind op, Var a, Var b) {
  check_owner(a);
  check_owner(b);
  const Node& na = nodes_[a.id()];
  const Node& nb = nodes_[b.id()];
  if (na.size != nb.size && na.size != 1 && nb.size != 1) {
    throw Error(ErrorKind::ShapeError, std::string(op_name(op)) + ": sizes " + std::to_string(na.size) + " and " +
                                           std::to_string(nb.size) + " do not broadcast");
  }
  Node node;
  node.op = op;
  node.lhs = a.id();
  node.rhs = b.id();
  node.size = std::max(na.size, nb.size);
  node.rows = node.size;
  node.cols = 1;
  node.needs_grad = na.needs_grad || nb.needs_grad;
  return push(node);
}

Var Tape::unary(OpKind op, Var a, std::uint32_t size, double coeff) {
  check_owner(a);
  Node node;
  node.op = op;
  node.lhs = a.id();
  node.size = size;
  node.rows = size;
  node.cols = 1;
  node.coeff = coeff;
  node.needs_grad = nodes_[a.id()].needs_grad;
  return push(node);
}

Var Tape::add(Var a, Var b) { return binary(OpKind::Add, a, b); }
Var Tape::sub(Var a, Var b) { return binary(OpKind::Sub, a, b); }
Var Tape::mul(Var a, Var b) { return binary(OpKind::Mul, a, b); }
Var Tape::div(Var a, Var b) { return binary(OpKind::Div, a, b); }

Var Tape::neg(Var a) { return unary(OpKind::Neg, a, nodes_.at(a.id()).size); }
Var Tape::scale(Var a, double c) { return unary(OpKind::Scale, a, nodes_.at(a.id()).size, c); }
Var Tape::add_const(Var a, double c) { return unary(OpKind::AddConst, a, nodes_.at(a.id()).size, c); }

Var Tape::axpy(Var a, double c, Var b) {
  check_owner(a);
  check_owner(b);
  if (nodes_[a.id()].size != nodes_[b.id()].size) {
    throw Error(ErrorKind::ShapeError, "axpy: operand sizes differ");
  }
  Node node;
  node.op = OpKind::Axpy;
  node.lhs = a.id();
  node.rhs = b.id();
  node.size = nodes_[a.id()].size;
  node.rows = node.size;
  node.cols = 1;
  node.coeff = c;
  node.needs_grad = nodes_[a.id()].needs_grad || nodes_[b.id()].needs_grad;
  return push(node);
}

Var Tape::matvec(Var w, Var x) {
  check_owner(w);
  check_owner(x);
  const Node& nw = nodes_[w.id()];
  if (nw.cols != nodes_[x.id()].size) {
    throw Error(ErrorKind::ShapeError, "matvec: matrix has " + std::to_string(nw.cols) + " columns, vector has " +
                                           std::to_string(nodes_[x.id()].size) + " entries");
  }
  Node node;
  node.op = OpKind::MatVec;
  node.lhs = w.id();
  node.rhs = x.id();
  node.size = nw.rows;
  node.rows = node.size;
  node.cols = 1;
  node.needs_grad = nw.needs_grad || nodes_[x.id()].needs_grad;
  return push(node);
}

Var Tape::matvec_t(Var w, Var x) {
  check_owner(w);
  check_owner(x);
  const Node& nw = nodes_[w.id()];
  if (nw.rows != nodes_[x.id()].size) {
    throw Error(ErrorKind::ShapeError, "matvec_t: matrix has " + std::to_string(nw.rows) + " rows, vector has " +
                                           std::to_string(nodes_[x.id()].size) + " entries");
  }
  Node node;
  node.op = OpKind::MatTVec;
  node.lhs = w.id();
  node.rhs = x.id();
  node.size = nw.cols;
  node.rows = node.size;
  node.cols = 1;
  node.needs_grad = nw.needs_grad || nodes_[x.id()].needs_grad;
  return push(node);
}

Var Tape::tanh(Var a) { return unary(OpKind::Tanh, a, nodes_.at(a.id()).size); }
Var Tape::one_minus_square(Var a) { return unary(OpKind::OneMinusSquare, a, nodes_.at(a.id()).size); }
Var Tape::exp(Var a) { return unary(OpKind::Exp, a, nodes_.at(a.id()).size); }
Var Tape::log(Var a) { return unary(OpKind::Log, a, nodes_.at(a.id()).size); }
Var Tape::sin(Var a) { return unary(OpKind::Sin, a, nodes_.at(a.id()).size); }
Var Tape::cos(Var a) { return unary(OpKind::Cos, a, nodes_.at(a.id()).size); }
Var Tape::square(Var a) { return unary(OpKind::Square, a, nodes_.at(a.id()).size); }
Var Tape::sum(Var a) { return unary(OpKind::Sum, a, 1); }
Var Tape::squared_norm(Var a) { return unary(OpKind::SquaredNorm, a, 1); }

Var Tape::dot(Var a, Var b) {
  check_owner(a);
  check_owner(b);
  if (nodes_[a.id()].size != nodes_[b.id()].size) throw Error(ErrorKind::ShapeError, "dot: operand sizes differ");
  Node node;
  node.op = OpKind::Dot;
  node.lhs = a.id();
  node.rhs = b.id();
  node.size = 1;
  node.rows = 1;
  node.cols = 1;
  node.needs_grad = nodes_[a.id()].needs_grad || nodes_[b.id()].needs_grad;
  return push(node);
}

Var Tape::concat(Var a, Var b) {
  check_owner(a);
  check_owner(b);
  Node node;
  node.op = OpKind::Concat;
  node.lhs = a.id();
  node.rhs = b.id();
  node.size = nodes_[a.id()].size + nodes_[b.id()].size;
  node.rows = node.size;
  node.cols = 1;
  node.needs_grad = nodes_[a.id()].needs_grad || nodes_[b.id()].needs_grad;
  return push(node);
}

Var Tape::slice(Var a, std::size_t begin, std::size_t length) {
  check_owner(a);
  if (begin + length > nodes_[a.id()].size || length == 0) {
    throw Error(ErrorKind::ShapeError, "slice out of range");
  }
  Node node;
  node.op = OpKind::Slice;
  node.lhs = a.id();
  node.size = static_cast<std::uint32_t>(length);
  node.rows = node.size;
  node.cols = 1;
  node.aux = static_cast<std::uint32_t>(begin);
  node.needs_grad = nodes_[a.id()].needs_grad;
  return push(node);
}

std::vector<Var> Tape::split(Var a) {
  const std::size_t n = size(a);
  std::vector<Var> parts;
  parts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) parts.push_back(slice(a, i, 1));
  return parts;
}

Var Tape::stack(std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorKind::ShapeError, "stack of zero parts");
  Var out = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) out = concat(out, parts[i]);
  return out;
}

Var Tape::symplectic(Var grad, double sign) {
  check_owner(grad);
  if (nodes_[grad.id()].size % 2 != 0) throw Error(ErrorKind::ShapeError, "symplectic: odd-length gradient");
  return unary(OpKind::Symplectic, grad, nodes_[grad.id()].size, sign);
}

Var Tape::external(Var x, ExternalScalar fn) {
  check_owner(x);
  externals_.push_back(std::move(fn));
  Node node;
  node.op = OpKind::External;
  node.lhs = x.id();
  node.size = 1;
  node.rows = 1;
  node.cols = 1;
  node.aux = static_cast<std::uint32_t>(externals_.size() - 1);
  node.needs_grad = nodes_[x.id()].needs_grad;
  return push(node);
}

std::span<const double> Tape::value(const Var& v) const {
  check_owner(v);
  const Node& n = nodes_[v.id()];
  return {values_.data() + n.offset, n.size};
}

std::size_t Tape::size(const Var& v) const {
  check_owner(v);
  return nodes_[v.id()].size;
}

OpKind Tape::op(const Var& v) const {
  check_owner(v);
  return nodes_[v.id()].op;
}

std::vector<std::uint32_t> Tape::parents(const Var& v) const {
  check_owner(v);
  std::vector<std::uint32_t> out;
  const Node& n = nodes_[v.id()];
  if (n.lhs != kNone) out.push_back(n.lhs);
  if (n.rhs != kNone) out.push_back(n.rhs);
  return out;
}

// ---------------------------------------------------------------------------
// Forward evaluation

void Tape::evaluate(std::uint32_t id) {
  const Node& n = nodes_[id];
  double* out = values_.data() + n.offset;
  const std::uint32_t size = n.size;

  const Node* na = n.lhs != kNone ? &nodes_[n.lhs] : nullptr;
  const Node* nb = n.rhs != kNone ? &nodes_[n.rhs] : nullptr;
  const double* a = na ? values_.data() + na->offset : nullptr;
  const double* b = nb ? values_.data() + nb->offset : nullptr;
  const std::uint32_t sa = na ? (na->size == 1 ? 0u : 1u) : 0u;
  const std::uint32_t sb = nb ? (nb->size == 1 ? 0u : 1u) : 0u;

  switch (n.op) {
    case OpKind::Leaf:
      break;
    case OpKind::Add:
      for (std::uint32_t i = 0; i < size; ++i) out[i] = a[i * sa] + b[i * sb];
      break;
    case OpKind::Sub:
      for (std::uint32_t i = 0; i < size; ++i) out[i] = a[i * sa] - b[i * sb];
      break;
    case OpKind::Mul:
      for (std::uint32_t i = 0; i < size; ++i) out[i] = a[i * sa] * b[i * sb];
      break;
    case OpKind::Div:
      for (std::uint32_t i = 0; i < size; ++i) out[i] = a[i * sa] / b[i * sb];
      break;
    case OpKind::Neg:
      for (std::uint32_t i = 0; i < size; ++i) out[i] = -a[i];
      break;
    case OpKind::Scale:
      for (std::uint32_t i = 0; i < size; ++i) out[i] = n.coeff * a[i];
      break;
    case OpKind::AddConst:
      for (std::uint32_t i = 0; i < size; ++i) out[i] = a[i] + n.coeff;
      break;
    case OpKind::Axpy:
      for (std::uint32_t i = 0; i < size; ++i) out[i] = a[i] + n.coeff * b[i];
      break;
    case OpKind::MatVec: {
      const std::uint32_t cols = na->cols;
      for (std::uint32_t r = 0; r < size; ++r) {
        const double* row = a + static_cast<std::size_t>(r) * cols;
        double acc = 0.0;
        for (std::uint32_t c = 0; c < cols; ++c) acc += row[c] * b[c];
        out[r] = acc;
      }
      break;
    }
    case OpKind::MatTVec: {
      const std::uint32_t rows = na->rows;
      const std::uint32_t cols = na->cols;
      std::fill(out, out + size, 0.0);
      for (std::uint32_t r = 0; r < rows; ++r) {
        const double* row = a + static_cast<std::size_t>(r) * cols;
        const double xr = b[r];
        for (std::uint32_t c = 0; c < cols; ++c) out[c] += row[c] * xr;
      }
      break;
    }
    case OpKind::Tanh:
      for (std::uint32_t i = 0; i < size; ++i) out[i] = std::tanh(a[i]);
      break;
    case OpKind::OneMinusSquare:
      for (std::uint32_t i = 0; i < size; ++i) out[i] = 1.0 - a[i] * a[i];
      break;
    case OpKind::Exp:
      for (std::uint32_t i = 0; i < size; ++i) out[i] = std::exp(a[i]);
      break;
    case OpKind::Log:
      for (std::uint32_t i = 0; i < size; ++i) out[i] = std::log(a[i]);
      break;
    case OpKind::Sin:
      for (std::uint32_t i = 0; i < size; ++i) out[i] = std::sin(a[i]);
      break;
    case OpKind::Cos:
      for (std::uint32_t i = 0; i < size; ++i) out[i] = std::cos(a[i]);
      break;
    case OpKind::Square:
      for (std::uint32_t i = 0; i < size; ++i) out[i] = a[i] * a[i];
      break;
    case OpKind::Sum: {
      double acc = 0.0;
      for (std::uint32_t i = 0; i < na->size; ++i) acc += a[i];
      out[0] = acc;
      break;
    }
    case OpKind::Dot: {
      double acc = 0.0;
      for (std::uint32_t i = 0; i < na->size; ++i) acc += a[i] * b[i];
      out[0] = acc;
      break;
    }
    case OpKind::SquaredNorm: {
      double acc = 0.0;
      for (std::uint32_t i = 0; i < na->size; ++i) acc += a[i] * a[i];
      out[0] = acc;
      break;
    }
    case OpKind::Concat:
      std::copy(a, a + na->size, out);
      std::copy(b, b + nb->size, out + na->size);
      break;
    case OpKind::Slice:
      std::copy(a + n.aux, a + n.aux + size, out);
      break;
    case OpKind::Symplectic: {
      const std::uint32_t half = size / 2;
      for (std::uint32_t i = 0; i < half; ++i) {
        out[i] = n.coeff * a[half + i];
        out[half + i] = -n.coeff * a[i];
      }
      break;
    }
    case OpKind::External:
      out[0] = externals_[n.aux].value(std::span<const double>(a, na->size));
      break;
  }
}

void Tape::replay() {
  for (std::uint32_t id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].op == OpKind::Leaf) continue;
    evaluate(id);
    check_finite(id);
  }
}

void Tape::set_leaf(Var leaf, std::span<const double> values) {
  check_owner(leaf);
  const Node& n = nodes_[leaf.id()];
  if (n.op != OpKind::Leaf) throw Error(ErrorKind::ShapeError, "set_leaf on a non-leaf node");
  if (values.size() != n.size) throw Error(ErrorKind::ShapeError, "set_leaf size mismatch");
  std::copy(values.begin(), values.end(), values_.begin() + n.offset);
}

// ---------------------------------------------------------------------------
// Reverse sweep

Gradients Tape::backward(Var output) const {
  check_owner(output);
  if (nodes_[output.id()].size != 1) {
    throw Error(ErrorKind::ShapeError, "backward requires a scalar output, got size " +
                                           std::to_string(nodes_[output.id()].size));
  }
  Gradients result;
  result.tape_ = this;
  result.grads_.assign(values_.size(), 0.0);
  std::vector<double>& grads = result.grads_;
  grads[nodes_[output.id()].offset] = 1.0;

  std::vector<double> scratch;
  for (std::int64_t sid = output.id(); sid >= 0; --sid) {
    const Node& n = nodes_[static_cast<std::size_t>(sid)];
    if (!n.needs_grad || n.op == OpKind::Leaf) continue;
    const double* g = grads.data() + n.offset;
    const double* y = values_.data() + n.offset;
    const std::uint32_t size = n.size;

    const Node* na = n.lhs != kNone ? &nodes_[n.lhs] : nullptr;
    const Node* nb = n.rhs != kNone ? &nodes_[n.rhs] : nullptr;
    const double* a = na ? values_.data() + na->offset : nullptr;
    const double* b = nb ? values_.data() + nb->offset : nullptr;
    double* ga = (na && na->needs_grad) ? grads.data() + na->offset : nullptr;
    double* gb = (nb && nb->needs_grad) ? grads.data() + nb->offset : nullptr;
    const std::uint32_t sa = na ? (na->size == 1 ? 0u : 1u) : 0u;
    const std::uint32_t sb = nb ? (nb->size == 1 ? 0u : 1u) : 0u;

    switch (n.op) {
      case OpKind::Leaf:
        break;
      case OpKind::Add:
        for (std::uint32_t i = 0; i < size; ++i) {
          if (ga) ga[i * sa] += g[i];
          if (gb) gb[i * sb] += g[i];
        }
        break;
      case OpKind::Sub:
        for (std::uint32_t i = 0; i < size; ++i) {
          if (ga) ga[i * sa] += g[i];
          if (gb) gb[i * sb] -= g[i];
        }
        break;
      case OpKind::Mul:
        for (std::uint32_t i = 0; i < size; ++i) {
          if (ga) ga[i * sa] += g[i] * b[i * sb];
          if (gb) gb[i * sb] += g[i] * a[i * sa];
        }
        break;
      case OpKind::Div:
        for (std::uint32_t i = 0; i < size; ++i) {
          const double denom = b[i * sb];
          if (ga) ga[i * sa] += g[i] / denom;
          if (gb) gb[i * sb] -= g[i] * y[i] / denom;
        }
        break;
      case OpKind::Neg:
        if (ga) for (std::uint32_t i = 0; i < size; ++i) ga[i] -= g[i];
        break;
      case OpKind::Scale:
        if (ga) for (std::uint32_t i = 0; i < size; ++i) ga[i] += n.coeff * g[i];
        break;
      case OpKind::AddConst:
        if (ga) for (std::uint32_t i = 0; i < size; ++i) ga[i] += g[i];
        break;
      case OpKind::Axpy:
        for (std::uint32_t i = 0; i < size; ++i) {
          if (ga) ga[i] += g[i];
          if (gb) gb[i] += n.coeff * g[i];
        }
        break;
      case OpKind::MatVec: {
        const std::uint32_t cols = na->cols;
        for (std::uint32_t r = 0; r < size; ++r) {
          const double gr = g[r];
          if (gr == 0.0) continue;
          const std::size_t base = static_cast<std::size_t>(r) * cols;
          if (ga) for (std::uint32_t c = 0; c < cols; ++c) ga[base + c] += gr * b[c];
          if (gb) for (std::uint32_t c = 0; c < cols; ++c) gb[c] += a[base + c] * gr;
        }
        break;
      }
      case OpKind::MatTVec: {
        const std::uint32_t rows = na->rows;
        const std::uint32_t cols = na->cols;
        for (std::uint32_t r = 0; r < rows; ++r) {
          const std::size_t base = static_cast<std::size_t>(r) * cols;
          if (ga) {
            const double xr = b[r];
            for (std::uint32_t c = 0; c < cols; ++c) ga[base + c] += xr * g[c];
          }
          if (gb) {
            double acc = 0.0;
            for (std::uint32_t c = 0; c < cols; ++c) acc += a[base + c] * g[c];
            gb[r] += acc;
          }
        }
        break;
      }
      case OpKind::Tanh:
        if (ga) for (std::uint32_t i = 0; i < size; ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      case OpKind::OneMinusSquare:
        if (ga) for (std::uint32_t i = 0; i < size; ++i) ga[i] -= 2.0 * g[i] * a[i];
        break;
      case OpKind::Exp:
        if (ga) for (std::uint32_t i = 0; i < size; ++i) ga[i] += g[i] * y[i];
        break;
      case OpKind::Log:
        if (ga) for (std::uint32_t i = 0; i < size; ++i) ga[i] += g[i] / a[i];
        break;
      case OpKind::Sin:
        if (ga) for (std::uint32_t i = 0; i < size; ++i) ga[i] += g[i] * std::cos(a[i]);
        break;
      case OpKind::Cos:
        if (ga) for (std::uint32_t i = 0; i < size; ++i) ga[i] -= g[i] * std::sin(a[i]);
        break;
      case OpKind::Square:
        if (ga) for (std::uint32_t i = 0; i < size; ++i) ga[i] += 2.0 * g[i] * a[i];
        break;
      case OpKind::Sum:
        if (ga) for (std::uint32_t i = 0; i < na->size; ++i) ga[i] += g[0];
        break;
      case OpKind::Dot:
        for (std::uint32_t i = 0; i < na->size; ++i) {
          if (ga) ga[i] += g[0] * b[i];
          if (gb) gb[i] += g[0] * a[i];
        }
        break;
      case OpKind::SquaredNorm:
        if (ga) for (std::uint32_t i = 0; i < na->size; ++i) ga[i] += 2.0 * g[0] * a[i];
        break;
      case OpKind::Concat:
        if (ga) for (std::uint32_t i = 0; i < na->size; ++i) ga[i] += g[i];
        if (gb) for (std::uint32_t i = 0; i < nb->size; ++i) gb[i] += g[na->size + i];
        break;
      case OpKind::Slice:
        if (ga) for (std::uint32_t i = 0; i < size; ++i) ga[n.aux + i] += g[i];
        break;
      case OpKind::Symplectic: {
        if (!ga) break;
        const std::uint32_t half = size / 2;
        for (std::uint32_t i = 0; i < half; ++i) {
          ga[half + i] += n.coeff * g[i];
          ga[i] -= n.coeff * g[half + i];
        }
        break;
      }
      case OpKind::External: {
        if (!ga || g[0] == 0.0) break;
        scratch.assign(na->size, 0.0);
        externals_[n.aux].gradient(std::span<const double>(a, na->size), scratch);
        for (std::uint32_t i = 0; i < na->size; ++i) ga[i] += g[0] * scratch[i];
        break;
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Operator sugar

Var operator+(Var a, Var b) { return a.tape()->add(a, b); }
Var operator-(Var a, Var b) { return a.tape()->sub(a, b); }
Var operator*(Var a, Var b) { return a.tape()->mul(a, b); }
Var operator/(Var a, Var b) { return a.tape()->div(a, b); }
Var operator-(Var a) { return a.tape()->neg(a); }
Var operator+(Var a, double c) { return a.tape()->add_const(a, c); }
Var operator+(double c, Var a) { return a.tape()->add_const(a, c); }
Var operator-(Var a, double c) { return a.tape()->add_const(a, -c); }
Var operator-(double c, Var a) { return a.tape()->add_const(a.tape()->neg(a), c); }
Var operator*(Var a, double c) { return a.tape()->scale(a, c); }
Var operator*(double c, Var a) { return a.tape()->scale(a, c); }
Var operator/(Var a, double c) { return a.tape()->div(a, a.tape()->constant(c)); }
Var operator/(double c, Var a) { return a.tape()->div(a.tape()->constant(c), a); }
Var sin(Var a) { return a.tape()->sin(a); }
Var cos(Var a) { return a.tape()->cos(a); }
Var tanh(Var a) { return a.tape()->tanh(a); }
Var exp(Var a) { return a.tape()->exp(a); }
Var log(Var a) { return a.tape()->log(a); }

// ---------------------------------------------------------------------------

ValueAndGradient value_and_gradient(const ScalarFunction& f, std::span<const double> x) {
  Tape tape;
  Var input = tape.variable(x);
  Var out = f(tape, input);
  const auto grads = tape.backward(out);
  const auto g = grads[input];
  return {out.scalar(), std::vector<double>(g.begin(), g.end())};
}

double grad_check(const ScalarFunction& f, std::span<const double> x, double step) {
  if (!(step > 0.0)) throw Error(ErrorKind::InvalidStep, "finite-difference step must be positive");
  const auto analytic = value_and_gradient(f, x);
  std::vector<double> probe(x.begin(), x.end());
  auto eval = [&](std::span<const double> point) {
    Tape tape;
    return f(tape, tape.constant(point)).scalar();
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + step;
    const double up = eval(probe);
    probe[i] = saved - step;
    const double down = eval(probe);
    probe[i] = saved;
    const double fd = (up - down) / (2.0 * step);
    const double a = analytic.gradient[i];
    worst = std::max(worst, std::abs(a - fd) / std::max(1.0, std::abs(a)));
  }
  return worst;
}

}  // namespace hamopt::ad
