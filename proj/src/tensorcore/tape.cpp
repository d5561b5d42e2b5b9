#include <stdexcept>
#include <unordered_set>

#include "abpn/autograd.hpp"
#include "abpn/error.hpp"

namespace abpn {

template <class T>
Var<T> Tape<T>::record(std::string_view op, std::vector<Var<T>> inputs, Tensor<T> value,
                       BackwardFn backward) {
  if (check_finite_ && !value.all_finite()) throw NonFiniteError(std::string(op));
  bool needs_grad = false;
  if (recording_)
    for (const auto& in : inputs) needs_grad = needs_grad || (in && in->requires_grad);

  auto out = make_var(std::move(value), needs_grad);
  out->is_leaf = false;
  if (needs_grad)
    entries_.push_back(Entry{std::string(op), std::move(inputs), out, std::move(backward)});
  return out;
}

template <class T>
void Tape<T>::backward(const Var<T>& loss) {
  if (!loss || loss->value.size() != 1)
    throw std::invalid_argument("backward: loss must be a scalar tensor");

  for (auto& e : entries_) {
    e.output->zero_grad();
    for (auto& in : e.inputs) {
      if (!in) continue;
      if (!in->is_leaf)
        in->zero_grad();
      else if (in->requires_grad)
        in->grad_buffer();  // leaves off the loss path still get zeros
    }
  }
  if (!loss->requires_grad) return;
  loss->grad = Tensor<T>(loss->value.shape(), T(1));

  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    const Tensor<T>& g = it->output->grad;
    if (g.empty()) continue;
    if (it->op == fault_op_) {
      Tensor<T> corrupted = g;
      for (auto& v : corrupted.data()) v *= T(1.5);
      it->backward(corrupted);
    } else {
      it->backward(g);
    }
    if (check_finite_)
      for (const auto& in : it->inputs)
        if (in && !in->grad.empty() && !in->grad.all_finite()) throw NonFiniteError(it->op + " (backward)");
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace abpn
