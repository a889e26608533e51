#include "cdgmae/tensor.hpp"

#include <atomic>
#include <sstream>
#include <unordered_set>

#include "cdgmae/errors.hpp"

namespace cdgmae {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {
std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

namespace {
thread_local bool g_grad_enabled = true;

void check_shape(const Shape& shape, std::size_t data_size) {
  if (numel(shape) != data_size) {
    throw DimensionError("shape " + shape_string(shape) + " does not match " +
                         std::to_string(data_size) + " values");
  }
}
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
BasicTensor<T> BasicTensor<T>::from_data(Shape shape, std::vector<T> data, bool requires_grad) {
  check_shape(shape, data.size());
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  node->id = detail::next_node_id();
  return BasicTensor(std::move(node));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = numel(shape);
  return from_data(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
  const std::size_t n = numel(shape);
  return from_data(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
  return from_data({}, {value}, requires_grad);
}

template <typename T>
const Shape& BasicTensor<T>::shape() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->shape;
}

template <typename T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_string(s));
  }
  return s[axis];
}

template <typename T>
std::span<const T> BasicTensor<T>::data() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->value;
}

template <typename T>
T BasicTensor<T>::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

template <typename T>
std::uint64_t BasicTensor<T>::id() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->id;
}

template <typename T>
bool BasicTensor<T>::requires_grad() const {
  return node_ && node_->requires_grad;
}

template <typename T>
bool BasicTensor<T>::is_leaf() const {
  return node_ && node_->inputs.empty() && !node_->backward;
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_data() {
  if (!is_leaf()) throw ContractError("mutable_data() requires a leaf tensor");
  return node_->value;
}

template <typename T>
BasicTensor<T>& BasicTensor<T>::set_requires_grad(bool flag) {
  if (!is_leaf()) throw ContractError("set_requires_grad() requires a leaf tensor");
  node_->requires_grad = flag;
  return *this;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return from_data(shape(), std::vector<T>(data().begin(), data().end()), false);
}

template <typename T>
const BasicTensor<T>& BasicGradients<T>::at(const BasicTensor<T>& leaf) const {
  auto it = grads_.find(leaf.id());
  if (it == grads_.end()) throw ContractError("no gradient recorded for tensor " + std::to_string(leaf.id()));
  return it->second;
}

template <typename T>
GradTape<T> record_tape(const BasicTensor<T>& root) {
  GradTape<T> tape;
  if (!root.defined()) return tape;
  // Iterative post-order DFS; only nodes that require grad are recorded.
  std::unordered_set<const detail::Node<T>*> visited;
  std::vector<std::pair<std::shared_ptr<detail::Node<T>>, std::size_t>> stack;
  if (root.requires_grad()) stack.emplace_back(root.node(), 0);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next == 0 && !visited.insert(node.get()).second) {
      stack.pop_back();
      continue;
    }
    if (next < node->inputs.size()) {
      auto child = node->inputs[next++];
      if (child->requires_grad && !visited.count(child.get())) stack.emplace_back(std::move(child), 0);
      continue;
    }
    tape.nodes.push_back(node);
    stack.pop_back();
  }
  return tape;
}

template <typename T>
BasicGradients<T> backward(const BasicTensor<T>& loss) {
  if (!loss.defined()) throw ContractError("backward() on undefined tensor");
  if (loss.size() != 1) {
    throw ContractError("backward() requires a scalar root, got shape " + shape_string(loss.shape()));
  }
  BasicGradients<T> grads;
  GradTape<T> tape = record_tape(loss);
  if (tape.nodes.empty()) return grads;
  for (auto& node : tape.nodes) node->grad.clear();
  tape.nodes.back()->grad_buffer()[0] = T(1);
  for (auto it = tape.nodes.rbegin(); it != tape.nodes.rend(); ++it) {
    detail::Node<T>& node = **it;
    if (node.backward) node.backward(node);
  }
  for (auto& node : tape.nodes) {
    if (node->inputs.empty() && !node->backward) {
      std::vector<T> g = std::move(node->grad_buffer());
      grads.insert(node->id, BasicTensor<T>::from_data(node->shape, std::move(g)));
    }
    node->grad.clear();
    node->grad.shrink_to_fit();
  }
  return grads;
}

template <typename T>
BasicTensor<T> make_op_result(Shape shape, std::vector<T> value, std::vector<BasicTensor<T>> inputs,
                              std::function<void(detail::Node<T>&)> backward_fn) {
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->id = detail::next_node_id();
  bool track = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) track = track || in.requires_grad();
  }
  if (track) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward_fn);
  }
  return BasicTensor<T>(std::move(node));
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template class BasicGradients<float>;
template class BasicGradients<double>;
template GradTape<float> record_tape(const BasicTensor<float>&);
template GradTape<double> record_tape(const BasicTensor<double>&);
template BasicGradients<float> backward(const BasicTensor<float>&);
template BasicGradients<double> backward(const BasicTensor<double>&);
template BasicTensor<float> make_op_result(Shape, std::vector<float>, std::vector<BasicTensor<float>>,
                                           std::function<void(detail::Node<float>&)>);
template BasicTensor<double> make_op_result(Shape, std::vector<double>, std::vector<BasicTensor<double>>,
                                            std::function<void(detail::Node<double>&)>);

}  // namespace cdgmae
