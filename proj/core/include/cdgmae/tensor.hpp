#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace cdgmae {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // sized lazily by backward
  bool requires_grad = false;
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this->grad and accumulates into inputs[i]->grad.
  std::function<void(Node&)> backward;

  std::vector<T>& grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

std::uint64_t next_node_id();

}  // namespace detail

/// Whether newly created tensors record their inputs for differentiation.
/// Thread-local; toggled with NoGradGuard.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense row-major tensor participating in a reverse-mode graph.
///
/// Copies are shallow: a BasicTensor is a handle to an immutable graph node.
/// Leaf tensors (no recorded inputs) may be mutated through mutable_data(),
/// which is how initializers and optimizers update parameters between steps.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  BasicTensor() = default;
  explicit BasicTensor(NodePtr node) : node_(std::move(node)) {}

  static BasicTensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false);
  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor full(Shape shape, T value, bool requires_grad = false);
  static BasicTensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data().size(); }
  std::span<const T> data() const;
  T operator[](std::size_t flat_index) const { return data()[flat_index]; }
  /// Value of a single-element tensor.
  T item() const;

  std::uint64_t id() const;
  bool requires_grad() const;
  bool is_leaf() const;

  /// Writable view of a leaf's values. Throws ContractError on non-leaves.
  std::span<T> mutable_data();
  BasicTensor& set_requires_grad(bool flag);

  /// New leaf holding a copy of the values, outside any graph.
  BasicTensor detach() const;
  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data().begin(), data().end());
    return BasicTensor<U>::from_data(shape(), std::move(out), requires_grad());
  }

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Topologically ordered record of the nodes reachable from a root:
/// every node appears after all of its inputs.
template <typename T>
struct GradTape {
  std::vector<std::shared_ptr<detail::Node<T>>> nodes;
};

template <typename T>
GradTape<T> record_tape(const BasicTensor<T>& root);

/// Gradients of every grad-tracked leaf reachable from a backward root,
/// keyed by tensor identity.
template <typename T>
class BasicGradients {
 public:
  bool contains(const BasicTensor<T>& leaf) const { return grads_.count(leaf.id()) != 0; }
  const BasicTensor<T>& at(const BasicTensor<T>& leaf) const;
  std::size_t size() const { return grads_.size(); }
  void insert(std::uint64_t id, BasicTensor<T> grad) { grads_[id] = std::move(grad); }

 private:
  std::unordered_map<std::uint64_t, BasicTensor<T>> grads_;
};

using Gradients = BasicGradients<float>;

/// Reverse-mode sweep from a scalar root. Throws ContractError when the
/// root has more than one element.
template <typename T>
BasicGradients<T> backward(const BasicTensor<T>& loss);

/// Builds a non-leaf node. Used by the primitive implementations.
template <typename T>
BasicTensor<T> make_op_result(Shape shape, std::vector<T> value,
                              std::vector<BasicTensor<T>> inputs,
                              std::function<void(detail::Node<T>&)> backward_fn);

}  // namespace cdgmae
