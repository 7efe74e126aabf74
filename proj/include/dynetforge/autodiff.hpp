#pragma once

// Dense reverse-mode automatic differentiation.
//
// A Tensor is a shared handle to a Node holding a row-major double matrix.
// Operations executed while a Tape is active on the current thread record a
// backward closure for every result that depends on a requires_grad input;
// with no active tape the same calls evaluate forward only and retain nothing.

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dynetforge/errors.hpp"

namespace dynetforge::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct Node {
  Matrix value;
  Matrix grad;  // size 0 until a gradient flows in
  bool requires_grad = false;
  std::function<void(Node&)> backward;

  template <class Expr>
  void accumulate(const Expr& g) {
    if (!requires_grad) return;
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

class Tape;

namespace detail {
inline thread_local Tape* active_tape = nullptr;
}

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Matrix value, bool requires_grad = false) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Tensor constant(Matrix value) { return Tensor(std::move(value), false); }
  static Tensor zeros(Eigen::Index rows, Eigen::Index cols, bool requires_grad = false) {
    return Tensor(Matrix::Zero(rows, cols), requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  const Matrix& value() const { return node_->value; }
  // In-place access for leaves (optimizer updates, test perturbations).
  Matrix& mutable_value() { return node_->value; }
  bool requires_grad() const { return node_->requires_grad; }

  // Accumulated gradient; zeros when nothing has flowed into this tensor.
  Matrix grad() const {
    if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
    return node_->grad;
  }
  bool has_grad() const { return node_->grad.size() != 0; }
  void zero_grad() { node_->grad.resize(0, 0); }

  double item() const {
    if (rows() != 1 || cols() != 1) {
      throw ShapeError("item() on non-scalar tensor " + shape_string());
    }
    return node_->value(0, 0);
  }

  std::string shape_string() const {
    std::ostringstream os;
    os << "(" << rows() << "x" << cols() << ")";
    return os.str();
  }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Records differentiable operations for one forward pass. Constructing a
// Tape makes it the active tape of the calling thread until destruction.
class Tape {
 public:
  Tape() : previous_(detail::active_tape) { detail::active_tape = this; }
  ~Tape() { detail::active_tape = previous_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::shared_ptr<Node> node) {
    if (consumed_) {
      throw std::logic_error("tape already consumed by backward(); call reset() before recording");
    }
    nodes_.push_back(std::move(node));
  }

  std::size_t size() const { return nodes_.size(); }

  // Propagates d(loss)/d(.) into every requires_grad leaf. Leaves accumulate;
  // callers zero them between steps.
  void backward(const Tensor& loss) {
    if (loss.rows() != 1 || loss.cols() != 1) {
      throw ShapeError("backward() requires a scalar loss, got " + loss.shape_string());
    }
    if (consumed_) {
      throw std::logic_error("backward() called twice on the same recording");
    }
    consumed_ = true;
    if (!loss.requires_grad()) return;

    std::size_t end = nodes_.size();
    while (end > 0 && nodes_[end - 1] != loss.node()) --end;
    if (end == 0) {
      throw std::logic_error("loss tensor was not recorded on this tape");
    }
    loss.node()->accumulate(Matrix::Ones(1, 1));
    for (std::size_t i = end; i-- > 0;) {
      Node& node = *nodes_[i];
      if (node.grad.size() != 0 && node.backward) node.backward(node);
    }
    release();
  }

  void reset() {
    release();
    nodes_.clear();
    consumed_ = false;
  }

 private:
  void release() {
    for (auto& node : nodes_) {
      node->backward = nullptr;
      node->grad.resize(0, 0);
    }
  }

  std::vector<std::shared_ptr<Node>> nodes_;
  bool consumed_ = false;
  Tape* previous_;
};

inline Tape* active_tape() { return detail::active_tape; }

// Suspends recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : saved_(detail::active_tape) { detail::active_tape = nullptr; }
  ~NoGradGuard() { detail::active_tape = saved_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* saved_;
};

// Fixed sparse left operand, e.g. a graph Laplacian. Never differentiated.
class SparseConstant {
 public:
  SparseConstant() = default;
  explicit SparseConstant(SparseMatrix m)
      : forward_(std::make_shared<SparseMatrix>(std::move(m))),
        transpose_(std::make_shared<SparseMatrix>(forward_->transpose())) {}

  static SparseConstant from_dense(const Matrix& dense) {
    return SparseConstant(SparseMatrix(dense.sparseView()));
  }

  Eigen::Index rows() const { return forward_->rows(); }
  Eigen::Index cols() const { return forward_->cols(); }
  const SparseMatrix& matrix() const { return *forward_; }
  const SparseMatrix& transpose() const { return *transpose_; }

 private:
  std::shared_ptr<const SparseMatrix> forward_;
  std::shared_ptr<const SparseMatrix> transpose_;
};

namespace detail {

inline bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

template <class Backward>
Tensor make_result(Matrix value, std::initializer_list<const Tensor*> inputs, Backward&& backward) {
  Tensor out(std::move(value), false);
  Tape* tape = active_tape;
  if (tape != nullptr && any_requires_grad(inputs)) {
    out.node()->requires_grad = true;
    out.node()->backward = std::forward<Backward>(backward);
    tape->record(out.node());
  }
  return out;
}

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: shape mismatch " + a.shape_string() + " x " + b.shape_string());
  }
  Matrix value = a.value() * b.value();
  auto an = a.node();
  auto bn = b.node();
  return detail::make_result(std::move(value), {&a, &b}, [an, bn](Node& self) {
    if (an->requires_grad) an->accumulate(self.grad * bn->value.transpose());
    if (bn->requires_grad) bn->accumulate(an->value.transpose() * self.grad);
  });
}

// Same contract as matmul with a constant sparse left operand.
inline Tensor sparse_matmul(const SparseConstant& s, const Tensor& b) {
  if (s.cols() != b.rows()) {
    std::ostringstream os;
    os << "sparse_matmul: shape mismatch (" << s.rows() << "x" << s.cols() << ") x "
       << b.shape_string();
    throw ShapeError(os.str());
  }
  Matrix value = s.matrix() * b.value();
  auto bn = b.node();
  return detail::make_result(std::move(value), {&b}, [s, bn](Node& self) {
    bn->accumulate(s.transpose() * self.grad);
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("add", a, b);
  Matrix value = a.value() + b.value();
  auto an = a.node();
  auto bn = b.node();
  return detail::make_result(std::move(value), {&a, &b}, [an, bn](Node& self) {
    an->accumulate(self.grad);
    bn->accumulate(self.grad);
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("sub", a, b);
  Matrix value = a.value() - b.value();
  auto an = a.node();
  auto bn = b.node();
  return detail::make_result(std::move(value), {&a, &b}, [an, bn](Node& self) {
    an->accumulate(self.grad);
    bn->accumulate(-self.grad);
  });
}

inline Tensor scalar_mul(const Tensor& a, double s) {
  Matrix value = s * a.value();
  auto an = a.node();
  return detail::make_result(std::move(value), {&a},
                             [an, s](Node& self) { an->accumulate(s * self.grad); });
}

// Elementwise (Hadamard) product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("mul", a, b);
  Matrix value = a.value().cwiseProduct(b.value());
  auto an = a.node();
  auto bn = b.node();
  return detail::make_result(std::move(value), {&a, &b}, [an, bn](Node& self) {
    if (an->requires_grad) an->accumulate(self.grad.cwiseProduct(bn->value));
    if (bn->requires_grad) bn->accumulate(self.grad.cwiseProduct(an->value));
  });
}

inline Tensor sigmoid(const Tensor& a) {
  Matrix value = a.value().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  auto an = a.node();
  return detail::make_result(std::move(value), {&a}, [an](Node& self) {
    an->accumulate(
        self.grad.cwiseProduct(self.value.unaryExpr([](double y) { return y * (1.0 - y); })));
  });
}

inline Tensor tanh(const Tensor& a) {
  Matrix value = a.value().unaryExpr([](double x) { return std::tanh(x); });
  auto an = a.node();
  return detail::make_result(std::move(value), {&a}, [an](Node& self) {
    an->accumulate(
        self.grad.cwiseProduct(self.value.unaryExpr([](double y) { return 1.0 - y * y; })));
  });
}

// Derivative taken as 0 at exactly 0.
inline Tensor relu(const Tensor& a) {
  Matrix value = a.value().cwiseMax(0.0);
  auto an = a.node();
  return detail::make_result(std::move(value), {&a}, [an](Node& self) {
    an->accumulate(self.grad.cwiseProduct(
        an->value.unaryExpr([](double x) { return x > 0.0 ? 1.0 : 0.0; })));
  });
}

inline Tensor sin(const Tensor& a) {
  Matrix value = a.value().unaryExpr([](double x) { return std::sin(x); });
  auto an = a.node();
  return detail::make_result(std::move(value), {&a}, [an](Node& self) {
    an->accumulate(
        self.grad.cwiseProduct(an->value.unaryExpr([](double x) { return std::cos(x); })));
  });
}

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("concat_cols: row mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
  Matrix value(a.rows(), a.cols() + b.cols());
  value.leftCols(a.cols()) = a.value();
  value.rightCols(b.cols()) = b.value();
  auto an = a.node();
  auto bn = b.node();
  const Eigen::Index split = a.cols();
  return detail::make_result(std::move(value), {&a, &b}, [an, bn, split](Node& self) {
    if (an->requires_grad) an->accumulate(self.grad.leftCols(split));
    if (bn->requires_grad) bn->accumulate(self.grad.rightCols(self.grad.cols() - split));
  });
}

// Columns [start, start + count).
inline Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    std::ostringstream os;
    os << "slice_cols: columns [" << start << ", " << start + count << ") out of range for "
       << a.shape_string();
    throw ShapeError(os.str());
  }
  Matrix value = a.value().middleCols(start, count);
  auto an = a.node();
  return detail::make_result(std::move(value), {&a}, [an, start, count](Node& self) {
    Matrix g = Matrix::Zero(an->value.rows(), an->value.cols());
    g.middleCols(start, count) = self.grad;
    an->accumulate(g);
  });
}

// mean(|a|) as a 1x1 tensor; sign(0) = 0 in the backward pass.
inline Tensor mean_abs(const Tensor& a) {
  if (a.value().size() == 0) throw ShapeError("mean_abs: empty tensor");
  Matrix value(1, 1);
  const double count = static_cast<double>(a.value().size());
  value(0, 0) = a.value().cwiseAbs().sum() / count;
  auto an = a.node();
  return detail::make_result(std::move(value), {&a}, [an, count](Node& self) {
    const double scale = self.grad(0, 0) / count;
    an->accumulate(an->value.unaryExpr([scale](double x) {
      return x > 0.0 ? scale : (x < 0.0 ? -scale : 0.0);
    }));
  });
}

inline Tensor sum(const Tensor& a) {
  Matrix value(1, 1);
  value(0, 0) = a.value().sum();
  auto an = a.node();
  return detail::make_result(std::move(value), {&a}, [an](Node& self) {
    an->accumulate(Matrix::Constant(an->value.rows(), an->value.cols(), self.grad(0, 0)));
  });
}

}  // namespace dynetforge::ad
