#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "abpn/tensor.hpp"

namespace abpn {

/// A value in the computation graph. Leaves (parameters, inputs) live across
/// tapes; intermediates are created by ops and owned by the tape that
/// recorded them.
template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until the first gradient arrives
  bool requires_grad = false;
  bool is_leaf = true;

  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
  void zero_grad() { grad = Tensor<T>(); }
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

template <class T>
Var<T> make_var(Tensor<T> value, bool requires_grad = false) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return node;
}

/// Records ops in execution order so that one reverse sweep can propagate
/// gradients. Single writer; not thread safe.
template <class T>
class Tape {
 public:
  /// Receives dLoss/dOutput; adds contributions into the inputs' grad buffers.
  using BackwardFn = std::function<void(const Tensor<T>& grad_out)>;

  struct Entry {
    std::string op;
    std::vector<Var<T>> inputs;
    Var<T> output;
    BackwardFn backward;
  };

  /// Wraps `value` as the output of `op`. The entry is kept only when
  /// recording is enabled and some input requires a gradient.
  Var<T> record(std::string_view op, std::vector<Var<T>> inputs, Tensor<T> value,
                BackwardFn backward);

  /// Populates grads of every requires_grad leaf on the tape (zeros when
  /// `loss` does not depend on it). Leaf grads accumulate across calls;
  /// intermediate grads are reset.
  void backward(const Var<T>& loss);

  void clear() { entries_.clear(); }
  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  void set_recording(bool on) noexcept { recording_ = on; }
  bool recording() const noexcept { return recording_; }

  /// Debug sentinel: throw NonFiniteError naming the op after any op whose
  /// output (or propagated gradient) is not finite.
  void set_check_finite(bool on) noexcept { check_finite_ = on; }
  bool check_finite() const noexcept { return check_finite_; }

  /// Harness self-test hook: scales the incoming gradient of every entry
  /// whose op name matches, which corrupts that op's backward rule.
  void inject_fault(std::string op) { fault_op_ = std::move(op); }

 private:
  std::vector<Entry> entries_;
  bool recording_ = true;
  bool check_finite_ = false;
  std::string fault_op_;
};

/// Scoped recording switch for inference.
template <class T>
class NoGradGuard {
 public:
  explicit NoGradGuard(Tape<T>& tape) : tape_(tape), prev_(tape.recording()) {
    tape_.set_recording(false);
  }
  ~NoGradGuard() { tape_.set_recording(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape<T>& tape_;
  bool prev_;
};

}  // namespace abpn
