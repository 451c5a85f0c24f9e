#include "aupt/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace aupt {

std::string shape_string(const Shape& dims) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out << ',';
    out << dims[i];
  }
  out << ')';
  return out.str();
}

namespace detail {

bool& grad_mode_disabled() {
  thread_local bool disabled = false;
  return disabled;
}

}  // namespace detail

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::reshape(Shape new_dims) const {
  if (shape_size(new_dims) != size()) {
    throw ShapeError("cannot reshape " + shape_string(dims()) + " to " + shape_string(new_dims));
  }
  Tensor out(std::move(new_dims), values());
  if (grad_enabled() && requires_grad()) {
    auto& n = *out.node_;
    n.requires_grad = true;
    n.parents = {node_};
    n.backward_fn = [](NodeType& self) {
      auto& parent = *self.parents[0];
      parent.ensure_grad() += self.grad;
    };
  }
  return out;
}

template <typename Scalar>
void Tensor<Scalar>::backward() const {
  if (size() != 1) {
    throw ContractError("backward() requires a scalar loss, got " + shape_string(dims()));
  }
  if (!requires_grad()) {
    throw ContractError("backward() called on a tensor that does not require grad");
  }
  if (node_->is_leaf()) {
    node_->ensure_grad()[0] += Scalar(1);
    return;
  }

  // Post-order DFS yields parents before children.
  std::vector<NodeType*> order;
  std::unordered_set<NodeType*> visited;
  std::vector<std::pair<NodeType*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodeType* parent = node->parents[next++].get();
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (NodeType* n : order) {
    if (!n->is_leaf()) n->grad.resize(0);
  }
  node_->grad = Vector::Ones(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeType* n = *it;
    if (n->is_leaf() || n->grad.size() == 0) continue;
    n->backward_fn(*n);
    n->grad.resize(0);
  }
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace aupt
