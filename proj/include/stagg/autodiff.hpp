#pragma once

// Define-by-run reverse-mode differentiation over dense Eigen matrices.
//
// Every tensor is rank 2; vectors are n x 1 and scalars are 1 x 1. A Tape
// records each operation together with its forward value and a closure that
// propagates adjoints to the operands. Tapes are single-threaded and cheap to
// rebuild, so a training step builds a fresh one for each forward pass.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <vector>

namespace stagg::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

/// Handle to a value recorded on a Tape.
class Tensor {
 public:
  Tensor() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Scalar value of a 1 x 1 tensor.
  double item() const;

  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Adjoints of a scalar output with respect to every recorded tensor.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::vector<Matrix> grads) : grads_(std::move(grads)) {}

  /// Gradient for `t`; a zero matrix of t's shape when t is not on the path.
  const Matrix& operator[](const Tensor& t) const { return grads_.at(t.id()); }
  std::size_t size() const { return grads_.size(); }

 private:
  std::vector<Matrix> grads_;
};

class Tape {
 public:
  /// Receives the upstream adjoint and the gradient buffer (indexed by node id).
  using Backward = std::function<void(const Matrix& upstream, std::vector<Matrix>& grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf tensor whose gradient is wanted.
  Tensor variable(Matrix value);
  /// Leaf tensor treated as data.
  Tensor constant(Matrix value);

  /// Record an operation result. Used by the op implementations.
  Tensor record(Matrix value, Backward backward);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar output. Throws UsageError for non-scalar outputs.
  Gradients backward(const Tensor& output) const;

  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Matrix value;
    Backward backward;  // empty for leaves
  };
  std::vector<Node> nodes_;
};

// Linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// Sub-block copy, differentiable with respect to `a`.
Tensor block(const Tensor& a, Eigen::Index row, Eigen::Index col, Eigen::Index rows,
             Eigen::Index cols);

// Elementwise
enum class ElementwiseOp { add, sub, mul, log, exp, square };

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor square(const Tensor& a);
/// Dispatch form; `b` is required for binary kinds and ignored otherwise.
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor* b = nullptr);

/// a * c for a constant c.
Tensor scale(const Tensor& a, double c);
/// a + c for a constant c.
Tensor shift(const Tensor& a, double c);
/// a / s where s is a 1 x 1 tensor, broadcast over a.
Tensor divide(const Tensor& a, const Tensor& s);

// Activations
enum class Activation { identity, relu, tanh, softmax_rows };

Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
/// Row-wise softmax computed with per-row max subtraction.
Tensor softmax_rows(const Tensor& a);
Tensor activation(Activation kind, const Tensor& a);

// Reductions to 1 x 1
enum class Reduction { sum, trace, frobenius_norm };

Tensor sum(const Tensor& a);
Tensor trace(const Tensor& a);
/// Gradient a / ||a||_F, defined as zero at ||a||_F = 0.
Tensor frobenius_norm(const Tensor& a);
Tensor reduce(Reduction kind, const Tensor& a);

}  // namespace stagg::ad
