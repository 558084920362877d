#include "stagg/autodiff.hpp"

#include "stagg/error.hpp"

#include <cmath>
#include <sstream>
#include <string>

namespace stagg::ad {

namespace {

std::string shape_of(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

Tape& same_tape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.valid() || !b.valid()) throw UsageError(std::string(op) + ": tensor not on a tape");
  if (a.tape() != b.tape()) throw UsageError(std::string(op) + ": operands live on different tapes");
  return *a.tape();
}

Tape& tape_of(const Tensor& a, const char* op) {
  if (!a.valid()) throw UsageError(std::string(op) + ": tensor not on a tape");
  return *a.tape();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_of(a.value()) + " vs " +
                         shape_of(b.value()));
  }
}

}  // namespace

const Matrix& Tensor::value() const {
  if (!tape_) throw UsageError("tensor not on a tape");
  return tape_->value(id_);
}

double Tensor::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw UsageError("item() on a " + shape_of(v) + " tensor");
  return v(0, 0);
}

Tensor Tape::variable(Matrix value) { return record(std::move(value), {}); }

Tensor Tape::constant(Matrix value) { return record(std::move(value), {}); }

Tensor Tape::record(Matrix value, Backward backward) {
  nodes_.push_back(Node{std::move(value), std::move(backward)});
  return Tensor(this, nodes_.size() - 1);
}

Gradients Tape::backward(const Tensor& output) const {
  if (output.tape() != this) throw UsageError("backward: output belongs to another tape");
  if (output.value().size() != 1) {
    throw UsageError("backward: output must be scalar, got " + shape_of(output.value()));
  }
  std::vector<Matrix> grads(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    grads[i] = Matrix::Zero(nodes_[i].value.rows(), nodes_[i].value.cols());
  }
  grads[output.id()](0, 0) = 1.0;
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    if (nodes_[i].backward) nodes_[i].backward(grads[i], grads);
  }
  return Gradients(std::move(grads));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tape& tape = same_tape(a, b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ " + shape_of(a.value()) + " x " +
                         shape_of(b.value()));
  }
  const std::size_t ia = a.id(), ib = b.id();
  const Tape* t = &tape;
  return tape.record(a.value() * b.value(), [t, ia, ib](const Matrix& g, std::vector<Matrix>& grads) {
    grads[ia].noalias() += g * t->value(ib).transpose();
    grads[ib].noalias() += t->value(ia).transpose() * g;
  });
}

Tensor transpose(const Tensor& a) {
  Tape& tape = tape_of(a, "transpose");
  const std::size_t ia = a.id();
  return tape.record(a.value().transpose(), [ia](const Matrix& g, std::vector<Matrix>& grads) {
    grads[ia] += g.transpose();
  });
}

Tensor block(const Tensor& a, Eigen::Index row, Eigen::Index col, Eigen::Index rows,
             Eigen::Index cols) {
  Tape& tape = tape_of(a, "block");
  if (row < 0 || col < 0 || rows < 0 || cols < 0 || row + rows > a.rows() ||
      col + cols > a.cols()) {
    throw DimensionError("block: range outside " + shape_of(a.value()));
  }
  const std::size_t ia = a.id();
  return tape.record(a.value().block(row, col, rows, cols),
                     [ia, row, col, rows, cols](const Matrix& g, std::vector<Matrix>& grads) {
                       grads[ia].block(row, col, rows, cols) += g;
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tape& tape = same_tape(a, b, "add");
  require_same_shape(a, b, "add");
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(a.value() + b.value(), [ia, ib](const Matrix& g, std::vector<Matrix>& grads) {
    grads[ia] += g;
    grads[ib] += g;
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tape& tape = same_tape(a, b, "sub");
  require_same_shape(a, b, "sub");
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(a.value() - b.value(), [ia, ib](const Matrix& g, std::vector<Matrix>& grads) {
    grads[ia] += g;
    grads[ib] -= g;
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tape& tape = same_tape(a, b, "mul");
  require_same_shape(a, b, "mul");
  const std::size_t ia = a.id(), ib = b.id();
  const Tape* t = &tape;
  return tape.record(a.value().cwiseProduct(b.value()),
                     [t, ia, ib](const Matrix& g, std::vector<Matrix>& grads) {
                       grads[ia] += g.cwiseProduct(t->value(ib));
                       grads[ib] += g.cwiseProduct(t->value(ia));
                     });
}

Tensor log(const Tensor& a) {
  Tape& tape = tape_of(a, "log");
  if ((a.value().array() <= 0.0).any()) throw DomainError("log: non-positive entry");
  const std::size_t ia = a.id();
  const Tape* t = &tape;
  return tape.record(a.value().array().log().matrix(),
                     [t, ia](const Matrix& g, std::vector<Matrix>& grads) {
                       grads[ia] += (g.array() / t->value(ia).array()).matrix();
                     });
}

Tensor exp(const Tensor& a) {
  Tape& tape = tape_of(a, "exp");
  const std::size_t ia = a.id();
  Matrix out = a.value().array().exp().matrix();
  const std::size_t io = tape.size();
  const Tape* t = &tape;
  return tape.record(std::move(out), [t, ia, io](const Matrix& g, std::vector<Matrix>& grads) {
    grads[ia] += g.cwiseProduct(t->value(io));
  });
}

Tensor square(const Tensor& a) {
  Tape& tape = tape_of(a, "square");
  const std::size_t ia = a.id();
  const Tape* t = &tape;
  return tape.record(a.value().array().square().matrix(),
                     [t, ia](const Matrix& g, std::vector<Matrix>& grads) {
                       grads[ia] += 2.0 * g.cwiseProduct(t->value(ia));
                     });
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor* b) {
  auto need_b = [&]() -> const Tensor& {
    if (b == nullptr) throw UsageError("elementwise: binary op without second operand");
    return *b;
  };
  switch (op) {
    case ElementwiseOp::add: return add(a, need_b());
    case ElementwiseOp::sub: return sub(a, need_b());
    case ElementwiseOp::mul: return mul(a, need_b());
    case ElementwiseOp::log: return log(a);
    case ElementwiseOp::exp: return exp(a);
    case ElementwiseOp::square: return square(a);
  }
  throw UsageError("elementwise: unknown op");
}

Tensor scale(const Tensor& a, double c) {
  Tape& tape = tape_of(a, "scale");
  const std::size_t ia = a.id();
  return tape.record(a.value() * c, [ia, c](const Matrix& g, std::vector<Matrix>& grads) {
    grads[ia] += c * g;
  });
}

Tensor shift(const Tensor& a, double c) {
  Tape& tape = tape_of(a, "shift");
  const std::size_t ia = a.id();
  return tape.record((a.value().array() + c).matrix(),
                     [ia](const Matrix& g, std::vector<Matrix>& grads) { grads[ia] += g; });
}

Tensor divide(const Tensor& a, const Tensor& s) {
  Tape& tape = same_tape(a, s, "divide");
  if (s.value().size() != 1) throw DimensionError("divide: divisor must be 1x1");
  const double d = s.item();
  if (d == 0.0) throw DomainError("divide: division by zero");
  const std::size_t ia = a.id(), is = s.id();
  const Tape* t = &tape;
  return tape.record(a.value() / d, [t, ia, is](const Matrix& g, std::vector<Matrix>& grads) {
    const double den = t->value(is)(0, 0);
    grads[ia] += g / den;
    grads[is](0, 0) -= g.cwiseProduct(t->value(ia)).sum() / (den * den);
  });
}

Tensor relu(const Tensor& a) {
  Tape& tape = tape_of(a, "relu");
  const std::size_t ia = a.id();
  const Tape* t = &tape;
  return tape.record(a.value().cwiseMax(0.0), [t, ia](const Matrix& g, std::vector<Matrix>& grads) {
    grads[ia] += (t->value(ia).array() > 0.0).select(g, 0.0).matrix();
  });
}

Tensor tanh(const Tensor& a) {
  Tape& tape = tape_of(a, "tanh");
  const std::size_t ia = a.id();
  const std::size_t io = tape.size();
  const Tape* t = &tape;
  return tape.record(a.value().array().tanh().matrix(),
                     [t, ia, io](const Matrix& g, std::vector<Matrix>& grads) {
                       const auto y = t->value(io).array();
                       grads[ia] += (g.array() * (1.0 - y.square())).matrix();
                     });
}

Tensor softmax_rows(const Tensor& a) {
  Tape& tape = tape_of(a, "softmax_rows");
  const Matrix& x = a.value();
  if (x.cols() == 0) throw DimensionError("softmax_rows: zero columns");
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  const std::size_t ia = a.id();
  const std::size_t io = tape.size();
  const Tape* t = &tape;
  return tape.record(std::move(y), [t, ia, io](const Matrix& g, std::vector<Matrix>& grads) {
    const Matrix& s = t->value(io);
    // dx = s * (g - rowsum(g * s))
    const Eigen::VectorXd inner = g.cwiseProduct(s).rowwise().sum();
    grads[ia] += (s.array() * (g.colwise() - inner).array()).matrix();
  });
}

Tensor activation(Activation kind, const Tensor& a) {
  switch (kind) {
    case Activation::identity: return a;
    case Activation::relu: return relu(a);
    case Activation::tanh: return tanh(a);
    case Activation::softmax_rows: return softmax_rows(a);
  }
  throw UsageError("activation: unknown kind");
}

Tensor sum(const Tensor& a) {
  Tape& tape = tape_of(a, "sum");
  const std::size_t ia = a.id();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return tape.record(std::move(out), [ia](const Matrix& g, std::vector<Matrix>& grads) {
    grads[ia].array() += g(0, 0);
  });
}

Tensor trace(const Tensor& a) {
  Tape& tape = tape_of(a, "trace");
  if (a.rows() != a.cols()) throw DimensionError("trace: non-square " + shape_of(a.value()));
  const std::size_t ia = a.id();
  Matrix out(1, 1);
  out(0, 0) = a.value().trace();
  return tape.record(std::move(out), [ia](const Matrix& g, std::vector<Matrix>& grads) {
    grads[ia].diagonal().array() += g(0, 0);
  });
}

Tensor frobenius_norm(const Tensor& a) {
  Tape& tape = tape_of(a, "frobenius_norm");
  const std::size_t ia = a.id();
  const double norm = a.value().norm();
  Matrix out(1, 1);
  out(0, 0) = norm;
  const Tape* t = &tape;
  return tape.record(std::move(out), [t, ia, norm](const Matrix& g, std::vector<Matrix>& grads) {
    if (norm == 0.0) return;
    grads[ia] += (g(0, 0) / norm) * t->value(ia);
  });
}

Tensor reduce(Reduction kind, const Tensor& a) {
  switch (kind) {
    case Reduction::sum: return sum(a);
    case Reduction::trace: return trace(a);
    case Reduction::frobenius_norm: return frobenius_norm(a);
  }
  throw UsageError("reduce: unknown kind");
}

}  // namespace stagg::ad
