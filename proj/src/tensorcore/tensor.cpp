#include "abpn/tensor.hpp"

#include <cmath>
#include <sstream>

#include "abpn/error.hpp"

namespace abpn {

std::string Shape::str() const {
  std::ostringstream os;
  os << n << "x" << c << "x" << h << "x" << w;
  return os.str();
}

template <class T>
Tensor<T>::Tensor(Shape shape, T fill)
    : shape_(shape), data_(static_cast<std::size_t>(shape.numel()), fill) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0)
    throw DimensionError("tensor", "shape", "negative extent " + shape.str());
}

template <class T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
  if (static_cast<std::int64_t>(data_.size()) != shape.numel())
    throw DimensionError("tensor", "data", "length " + std::to_string(data_.size()) +
                                               " does not match shape " + shape.str());
}

template <class T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape.numel() != shape_.numel())
    throw DimensionError("reshape", "numel", shape_.str() + " -> " + shape.str());
  return Tensor<T>(shape, data_);
}

template <class T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <class T>
bool Tensor<T>::all_finite() const noexcept {
  for (T v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

template <class T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw DimensionError("dot", "shape", a.shape().str() + " vs " + b.shape().str());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

template class Tensor<float>;
template class Tensor<double>;
template double dot(const Tensor<float>&, const Tensor<float>&);
template double dot(const Tensor<double>&, const Tensor<double>&);

}  // namespace abpn
