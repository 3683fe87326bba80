#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lsgc/errors.hpp"

namespace lsgc::num {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

template <typename T>
class Tape;

// Shared-handle tensor: copies alias the same storage, clone() makes a deep copy.
// Gradient access is const on the handle, like a shared_ptr.
// Row-major, dense. 1-D and 2-D shapes cover everything the models need.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
  }

  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    return Tensor(std::move(shape), std::move(values), requires_grad);
  }

  static Tensor scalar(T value, bool requires_grad = false) { return from({1}, {value}, requires_grad); }

  bool defined() const noexcept { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t dim(std::size_t i) const { return s_->shape.at(i); }
  std::size_t numel() const { return s_->data.size(); }
  // Rows/cols view a tensor as a matrix; a 1-D tensor is a single row.
  std::size_t rows() const { return rank() == 1 ? 1 : s_->shape[0]; }
  std::size_t cols() const { return s_->shape.back(); }

  std::span<T> data() { return s_->data; }
  std::span<const T> data() const { return s_->data; }
  T operator[](std::size_t i) const { return s_->data[i]; }
  T item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
    return s_->data[0];
  }

  bool requires_grad() const { return s_ && s_->requires_grad; }
  void set_requires_grad(bool on) {
    s_->requires_grad = on;
    if (!on) s_->grad.clear();
  }

  bool has_grad() const { return !s_->grad.empty(); }
  std::span<const T> grad() const { return s_->grad; }
  // Gradient values, zeros when nothing has been accumulated yet.
  std::vector<T> grad_values() const {
    return has_grad() ? s_->grad : std::vector<T>(numel(), T(0));
  }
  // Allocates a zeroed gradient buffer on first use.
  std::span<T> grad_buffer() const {
    if (s_->grad.empty()) s_->grad.assign(s_->data.size(), T(0));
    return s_->grad;
  }
  void zero_grad() const {
    if (!s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), T(0));
  }

  Tensor clone() const { return Tensor(s_->shape, s_->data, s_->requires_grad); }
  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
  };

  Tensor(Shape shape, std::vector<T> values, bool requires_grad) : s_(std::make_shared<Storage>()) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
    for (std::size_t d : shape) {
      if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
    }
    if (shape_numel(shape) != values.size()) {
      throw ShapeError("shape " + shape_string(shape) + " does not match " + std::to_string(values.size()) +
                       " values");
    }
    s_->shape = std::move(shape);
    s_->data = std::move(values);
    s_->requires_grad = requires_grad;
  }

  std::shared_ptr<Storage> s_;
};

// Records adjoint rules for ops executed while the tape is active on this thread.
// Ops only record when a tape is active and at least one input requires grad, so
// forward passes over frozen weights are tape-free and safe to run concurrently.
template <typename T>
class Tape {
 public:
  using Adjoint = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() noexcept { return current_; }

  void record(std::string_view op, Tensor<T> output, Adjoint adjoint) {
    nodes_.push_back(Node{std::string(op), std::move(output), std::move(adjoint)});
  }

  // Replays adjoints in reverse order. Leaf gradients accumulate across calls;
  // intermediate gradients are reset first.
  void backward(Tensor<T> loss);

  void reset() { nodes_.clear(); }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool empty() const noexcept { return nodes_.empty(); }

 private:
  struct Node {
    std::string op;
    Tensor<T> output;
    Adjoint adjoint;
  };

  template <typename>
  friend class TapeScope;

  static inline thread_local Tape* current_ = nullptr;
  std::vector<Node> nodes_;
};

template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape) : previous_(Tape<T>::current_) { Tape<T>::current_ = &tape; }
  ~TapeScope() { Tape<T>::current_ = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

namespace testing {
// Fault injection for the gradient checker: scales the upstream gradient fed
// into every adjoint of the named op. An empty name disables injection.
void set_adjoint_fault(std::string op, double factor);
void clear_adjoint_fault();
}  // namespace testing

namespace detail {
bool adjoint_fault_for(std::string_view op, double& factor);
}

template <typename T>
void Tape<T>::backward(Tensor<T> loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;
  for (auto& node : nodes_) node.output.zero_grad();
  loss.grad_buffer()[0] += T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    double factor = 1.0;
    if (detail::adjoint_fault_for(it->op, factor)) {
      for (T& g : it->output.grad_buffer()) g *= static_cast<T>(factor);
    }
    it->adjoint();
  }
}

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace lsgc::num
