#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "aupt/errors.hpp"

namespace aupt {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_size(const Shape& dims) {
  return std::accumulate(dims.begin(), dims.end(), Index{1}, std::multiplies<>());
}

std::string shape_string(const Shape& dims);

namespace detail {

template <typename Scalar>
struct Node {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Shape dims;
  Vector value;
  Vector grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }
  Vector& ensure_grad() {
    if (grad.size() != value.size()) grad = Vector::Zero(value.size());
    return grad;
  }
};

bool& grad_mode_disabled();

}  // namespace detail

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_disabled()) { detail::grad_mode_disabled() = true; }
  ~NoGradGuard() { detail::grad_mode_disabled() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return !detail::grad_mode_disabled(); }

/// Dense row-major n-dimensional array with an optional gradient slot.
///
/// A Tensor is a handle: copies share storage and autograd history. Use
/// clone() for an independent copy of the values. Ops that consume tensors
/// with requires_grad record a backward closure so that backward() on a
/// scalar result fills the grad of every participating leaf.
template <typename Scalar>
class Tensor {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix>;
  using NodeType = detail::Node<Scalar>;

  Tensor() : Tensor(Shape{0}) {}

  explicit Tensor(Shape dims, bool requires_grad = false) : node_(std::make_shared<NodeType>()) {
    check_dims(dims);
    node_->value = Vector::Zero(shape_size(dims));
    node_->dims = std::move(dims);
    node_->requires_grad = requires_grad;
  }

  Tensor(Shape dims, Vector values, bool requires_grad = false) : node_(std::make_shared<NodeType>()) {
    check_dims(dims);
    if (shape_size(dims) != values.size()) {
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match dims " + shape_string(dims));
    }
    node_->value = std::move(values);
    node_->dims = std::move(dims);
    node_->requires_grad = requires_grad;
  }

  Tensor(Shape dims, std::initializer_list<Scalar> values, bool requires_grad = false)
      : Tensor(std::move(dims), Eigen::Map<const Vector>(values.begin(), Index(values.size())),
               requires_grad) {}

  static Tensor constant(Shape dims, Scalar value) {
    Tensor t(std::move(dims));
    t.values().setConstant(value);
    return t;
  }

  static Tensor scalar(Scalar value) { return constant(Shape{1}, value); }

  const Shape& dims() const { return node_->dims; }
  Index dim(std::size_t axis) const { return node_->dims.at(axis); }
  std::size_t rank() const { return node_->dims.size(); }
  Index size() const { return node_->value.size(); }

  Vector& values() { return node_->value; }
  const Vector& values() const { return node_->value; }
  Scalar* data() { return node_->value.data(); }
  const Scalar* data() const { return node_->value.data(); }

  /// Row-major matrix view; rows * cols must equal size().
  MatrixMap matrix(Index rows, Index cols) {
    check_view(rows, cols);
    return MatrixMap(data(), rows, cols);
  }
  ConstMatrixMap matrix(Index rows, Index cols) const {
    check_view(rows, cols);
    return ConstMatrixMap(data(), rows, cols);
  }

  Scalar item() const {
    if (size() != 1) throw ContractError("item() requires a single-element tensor, got " + shape_string(dims()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return node_->grad.size() == node_->value.size() && size() > 0; }
  /// Gradient slot; allocated as zeros on first access.
  Vector& grad() { return node_->ensure_grad(); }
  const Vector& grad() const { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.resize(0); }

  /// True when this tensor was produced by a recorded op.
  bool has_history() const { return !node_->is_leaf(); }

  /// Same values, no history, independent storage.
  Tensor clone() const { return Tensor(dims(), values(), requires_grad()); }

  /// Same storage viewed with new dims of equal size. Shares history.
  Tensor reshape(Shape new_dims) const;

  /// Reverse-mode sweep from this scalar. Leaf grads accumulate across calls.
  void backward() const;

  const std::shared_ptr<NodeType>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<NodeType> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  static void check_dims(const Shape& dims) {
    for (Index d : dims) {
      if (d < 0) throw ShapeError("negative dimension in " + shape_string(dims));
    }
  }
  void check_view(Index rows, Index cols) const {
    if (rows * cols != size()) {
      throw ShapeError("cannot view " + shape_string(dims()) + " as " + std::to_string(rows) + "x" +
                       std::to_string(cols));
    }
  }

  std::shared_ptr<NodeType> node_;
};

}  // namespace aupt
