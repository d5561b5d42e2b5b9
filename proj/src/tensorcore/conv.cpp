#include <algorithm>
#include <memory>
#include <string>

#include <Eigen/Core>

#include "abpn/error.hpp"
#include "abpn/ops.hpp"

namespace abpn::ops {

namespace {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMatrix = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMapMatrix = Eigen::Map<const RowMatrix<T>>;

struct Geometry {
  std::int64_t channels;
  std::int64_t height, width;          // image side
  std::int64_t out_height, out_width;  // column side
  int kernel, stride, pad;

  std::int64_t rows() const { return channels * kernel * kernel; }
  std::int64_t cols() const { return out_height * out_width; }
};

// Output columns ox whose input column ox·s − p + kj lies inside [0, width).
struct ValidRange {
  std::int64_t lo, hi;
};

inline ValidRange valid_columns(const Geometry& g, int kj) {
  const std::int64_t first = g.pad - kj;  // need ox·s >= first
  std::int64_t lo = first <= 0 ? 0 : (first + g.stride - 1) / g.stride;
  const std::int64_t last = g.width - 1 + g.pad - kj;  // need ox·s <= last
  std::int64_t hi = last < 0 ? 0 : last / g.stride + 1;
  lo = std::min(lo, g.out_width);
  hi = std::clamp(hi, lo, g.out_width);
  return {lo, hi};
}

// col[(c·k + ki)·k + kj][oy·Wo + ox] = img[c][oy·s − p + ki][ox·s − p + kj], zero outside.
template <class T>
void im2col(const T* img, const Geometry& g, T* col) {
  const std::int64_t cols = g.cols();
  for (std::int64_t c = 0; c < g.channels; ++c) {
    const T* plane = img + c * g.height * g.width;
    for (int ki = 0; ki < g.kernel; ++ki) {
      for (int kj = 0; kj < g.kernel; ++kj) {
        T* dst = col + ((c * g.kernel + ki) * g.kernel + kj) * cols;
        const auto [lo, hi] = valid_columns(g, kj);
        for (std::int64_t oy = 0; oy < g.out_height; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ki;
          T* row = dst + oy * g.out_width;
          if (iy < 0 || iy >= g.height) {
            std::fill(row, row + g.out_width, T(0));
            continue;
          }
          std::fill(row, row + lo, T(0));
          std::fill(row + hi, row + g.out_width, T(0));
          const T* src = plane + iy * g.width - g.pad + kj;
          if (g.stride == 1) {
            std::copy(src + lo, src + hi, row + lo);
          } else {
            for (std::int64_t ox = lo; ox < hi; ++ox) row[ox] = src[ox * g.stride];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds columns back into the image.
template <class T>
void col2im(const T* col, const Geometry& g, T* img) {
  const std::int64_t cols = g.cols();
  for (std::int64_t c = 0; c < g.channels; ++c) {
    T* plane = img + c * g.height * g.width;
    for (int ki = 0; ki < g.kernel; ++ki) {
      for (int kj = 0; kj < g.kernel; ++kj) {
        const T* src = col + ((c * g.kernel + ki) * g.kernel + kj) * cols;
        const auto [lo, hi] = valid_columns(g, kj);
        for (std::int64_t oy = 0; oy < g.out_height; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.height) continue;
          T* dst = plane + iy * g.width - g.pad + kj;
          const T* row = src + oy * g.out_width;
          if (g.stride == 1) {
            for (std::int64_t ox = lo; ox < hi; ++ox) dst[ox] += row[ox];
          } else {
            for (std::int64_t ox = lo; ox < hi; ++ox) dst[ox * g.stride] += row[ox];
          }
        }
      }
    }
  }
}

// Scratch buffer without value-initialisation; im2col writes every entry.
template <class T>
std::unique_ptr<T[]> scratch(std::int64_t n) {
  return std::unique_ptr<T[]>(new T[static_cast<std::size_t>(n)]);
}

void check_geometry(const char* op, int kernel, int stride, int pad) {
  if (kernel < 1) throw DimensionError(op, "kernel", "kernel size must be >= 1, got " + std::to_string(kernel));
  if (stride < 1) throw DimensionError(op, "stride", "stride must be >= 1, got " + std::to_string(stride));
  if (pad < 0) throw DimensionError(op, "pad", "pad must be >= 0, got " + std::to_string(pad));
}

template <class T>
void check_weight(const char* op, const Var<T>& input, const Var<T>& weight, const Var<T>& bias,
                  std::int64_t in_channels_of_weight, std::int64_t out_channels) {
  const Shape& ws = weight->value.shape();
  if (ws.h != ws.w) throw DimensionError(op, "kernel", "non-square kernel " + ws.str());
  if (input->value.shape().c != in_channels_of_weight)
    throw DimensionError(op, "channels",
                         "input has " + std::to_string(input->value.shape().c) + " channels, weight expects " +
                             std::to_string(in_channels_of_weight));
  if (bias && bias->value.size() != static_cast<std::size_t>(out_channels))
    throw DimensionError(op, "bias", "bias length " + std::to_string(bias->value.size()) + " != " +
                                         std::to_string(out_channels));
}

template <class T>
void add_bias(Tensor<T>& out, const Tensor<T>& bias) {
  const Shape& s = out.shape();
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t c = 0; c < s.c; ++c) {
      T* p = &out.at(n, c, 0, 0);
      const T b = bias[static_cast<std::size_t>(c)];
      for (std::int64_t i = 0; i < s.plane(); ++i) p[i] += b;
    }
}

template <class T>
void accumulate_bias_grad(const Tensor<T>& grad_out, Tensor<T>& grad_bias) {
  const Shape& s = grad_out.shape();
  for (std::int64_t c = 0; c < s.c; ++c) {
    T acc = 0;
    for (std::int64_t n = 0; n < s.n; ++n) {
      const T* p = &grad_out.at(n, c, 0, 0);
      for (std::int64_t i = 0; i < s.plane(); ++i) acc += p[i];
    }
    grad_bias[static_cast<std::size_t>(c)] += acc;
  }
}

}  // namespace

std::int64_t conv_out_extent(std::int64_t in, int kernel, int stride, int pad) {
  const std::int64_t span = in + 2 * pad - kernel;
  if (span < 0) return 0;
  return span / stride + 1;
}

std::int64_t deconv_out_extent(std::int64_t in, int kernel, int stride, int pad) {
  return (in - 1) * stride - 2 * pad + kernel;
}

template <class T>
Var<T> conv2d(Tape<T>& tape, const Var<T>& input, const Var<T>& weight, const Var<T>& bias, int stride,
              int pad) {
  check_geometry("conv2d", static_cast<int>(weight->value.shape().h), stride, pad);
  const Shape& xs = input->value.shape();
  const Shape& ws = weight->value.shape();
  check_weight("conv2d", input, weight, bias, ws.c, ws.n);
  const int k = static_cast<int>(ws.h);
  const std::int64_t ho = conv_out_extent(xs.h, k, stride, pad);
  const std::int64_t wo = conv_out_extent(xs.w, k, stride, pad);
  if (ho < 1) throw DimensionError("conv2d", "height", "kernel larger than padded input " + xs.str());
  if (wo < 1) throw DimensionError("conv2d", "width", "kernel larger than padded input " + xs.str());

  const Geometry g{xs.c, xs.h, xs.w, ho, wo, k, stride, pad};
  const std::int64_t cout = ws.n;
  Tensor<T> out(Shape{xs.n, cout, ho, wo});
  const std::int64_t per_item = g.rows() * g.cols();
  // Columns are kept for the weight gradient when the op will be recorded.
  const bool keep = tape.recording() && weight->requires_grad;
  std::shared_ptr<T[]> cols(scratch<T>(keep ? xs.n * per_item : per_item).release(), std::default_delete<T[]>());
  ConstMapMatrix<T> w(weight->value.ptr(), cout, g.rows());
  for (std::int64_t n = 0; n < xs.n; ++n) {
    T* col = cols.get() + (keep ? n * per_item : 0);
    im2col(&input->value.at(n, 0, 0, 0), g, col);
    MapMatrix<T> y(&out.at(n, 0, 0, 0), cout, g.cols());
    y.noalias() = w * ConstMapMatrix<T>(col, g.rows(), g.cols());
  }
  if (bias) add_bias(out, bias->value);
  if (!keep) cols.reset();

  return tape.record("conv2d", {input, weight, bias}, std::move(out),
                     [input, weight, bias, g, cout, cols, per_item](const Tensor<T>& gy) {
                       auto dcol = scratch<T>(per_item);
                       ConstMapMatrix<T> w(weight->value.ptr(), cout, g.rows());
                       const std::int64_t batch = input->value.shape().n;
                       for (std::int64_t n = 0; n < batch; ++n) {
                         ConstMapMatrix<T> dy(&gy.at(n, 0, 0, 0), cout, g.cols());
                         if (weight->requires_grad) {
                           const T* col = cols ? cols.get() + n * per_item : dcol.get();
                           if (!cols) im2col(&input->value.at(n, 0, 0, 0), g, dcol.get());
                           MapMatrix<T> dw(weight->grad_buffer().ptr(), cout, g.rows());
                           dw.noalias() += dy * ConstMapMatrix<T>(col, g.rows(), g.cols()).transpose();
                         }
                         if (input->requires_grad) {
                           MapMatrix<T>(dcol.get(), g.rows(), g.cols()).noalias() = w.transpose() * dy;
                           col2im(dcol.get(), g, &input->grad_buffer().at(n, 0, 0, 0));
                         }
                       }
                       if (bias && bias->requires_grad) accumulate_bias_grad(gy, bias->grad_buffer());
                     });
}

template <class T>
Var<T> deconv2d(Tape<T>& tape, const Var<T>& input, const Var<T>& weight, const Var<T>& bias, int stride,
                int pad) {
  check_geometry("deconv2d", static_cast<int>(weight->value.shape().h), stride, pad);
  const Shape& xs = input->value.shape();
  const Shape& ws = weight->value.shape();
  check_weight("deconv2d", input, weight, bias, ws.n, ws.c);
  const int k = static_cast<int>(ws.h);
  const std::int64_t ho = deconv_out_extent(xs.h, k, stride, pad);
  const std::int64_t wo = deconv_out_extent(xs.w, k, stride, pad);
  if (ho < 1) throw DimensionError("deconv2d", "height", "empty output for input " + xs.str());
  if (wo < 1) throw DimensionError("deconv2d", "width", "empty output for input " + xs.str());

  const std::int64_t cin = ws.n;
  const std::int64_t cout = ws.c;
  const Geometry g{cout, ho, wo, xs.h, xs.w, k, stride, pad};
  Tensor<T> out(Shape{xs.n, cout, ho, wo});
  auto col = scratch<T>(g.rows() * g.cols());
  ConstMapMatrix<T> w(weight->value.ptr(), cin, g.rows());
  for (std::int64_t n = 0; n < xs.n; ++n) {
    MapMatrix<T>(col.get(), g.rows(), g.cols()).noalias() =
        w.transpose() * ConstMapMatrix<T>(&input->value.at(n, 0, 0, 0), cin, g.cols());
    col2im(col.get(), g, &out.at(n, 0, 0, 0));
  }
  if (bias) add_bias(out, bias->value);

  return tape.record("deconv2d", {input, weight, bias}, std::move(out),
                     [input, weight, bias, g, cin](const Tensor<T>& gy) {
                       auto dcol = scratch<T>(g.rows() * g.cols());
                       ConstMapMatrix<T> w(weight->value.ptr(), cin, g.rows());
                       const std::int64_t batch = input->value.shape().n;
                       for (std::int64_t n = 0; n < batch; ++n) {
                         im2col(&gy.at(n, 0, 0, 0), g, dcol.get());
                         ConstMapMatrix<T> dc(dcol.get(), g.rows(), g.cols());
                         if (input->requires_grad) {
                           MapMatrix<T> dx(&input->grad_buffer().at(n, 0, 0, 0), cin, g.cols());
                           dx.noalias() += w * dc;
                         }
                         if (weight->requires_grad) {
                           MapMatrix<T> dw(weight->grad_buffer().ptr(), cin, g.rows());
                           dw.noalias() += ConstMapMatrix<T>(&input->value.at(n, 0, 0, 0), cin, g.cols()) *
                                           dc.transpose();
                         }
                       }
                       if (bias && bias->requires_grad) accumulate_bias_grad(gy, bias->grad_buffer());
                     });
}

template Var<float> conv2d(Tape<float>&, const Var<float>&, const Var<float>&, const Var<float>&, int, int);
template Var<double> conv2d(Tape<double>&, const Var<double>&, const Var<double>&, const Var<double>&, int, int);
template Var<float> deconv2d(Tape<float>&, const Var<float>&, const Var<float>&, const Var<float>&, int, int);
template Var<double> deconv2d(Tape<double>&, const Var<double>&, const Var<double>&, const Var<double>&, int,
                              int);

}  // namespace abpn::ops
