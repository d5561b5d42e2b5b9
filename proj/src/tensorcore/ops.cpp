#include <algorithm>
#include <cmath>
#include <string>

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

void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (a.n != b.n) throw DimensionError(op, "batch", a.str() + " vs " + b.str());
  if (a.c != b.c) throw DimensionError(op, "channels", a.str() + " vs " + b.str());
  if (a.h != b.h) throw DimensionError(op, "height", a.str() + " vs " + b.str());
  if (a.w != b.w) throw DimensionError(op, "width", a.str() + " vs " + b.str());
}

template <class T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src, T factor = T(1)) {
  T* d = dst.ptr();
  const T* s = src.ptr();
  for (std::size_t i = 0; i < src.size(); ++i) d[i] += factor * s[i];
}

}  // namespace

template <class T>
Var<T> matmul(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  const Shape& as = a->value.shape();
  const Shape& bs = b->value.shape();
  if (as.n != bs.n) throw DimensionError("matmul", "batch", as.str() + " vs " + bs.str());
  if (as.c != bs.c) throw DimensionError("matmul", "channels", as.str() + " vs " + bs.str());
  if (as.w != bs.h) throw DimensionError("matmul", "inner", as.str() + " vs " + bs.str());

  const std::int64_t r = as.h, k = as.w, s = bs.w;
  Tensor<T> out(Shape{as.n, as.c, r, s});
  for (std::int64_t n = 0; n < as.n; ++n)
    for (std::int64_t c = 0; c < as.c; ++c)
      MapMatrix<T>(&out.at(n, c, 0, 0), r, s).noalias() =
          ConstMapMatrix<T>(&a->value.at(n, c, 0, 0), r, k) * ConstMapMatrix<T>(&b->value.at(n, c, 0, 0), k, s);

  return tape.record("matmul", {a, b}, std::move(out), [a, b, r, k, s](const Tensor<T>& g) {
    const Shape& as = a->value.shape();
    for (std::int64_t n = 0; n < as.n; ++n)
      for (std::int64_t c = 0; c < as.c; ++c) {
        ConstMapMatrix<T> dy(&g.at(n, c, 0, 0), r, s);
        if (a->requires_grad)
          MapMatrix<T>(&a->grad_buffer().at(n, c, 0, 0), r, k).noalias() +=
              dy * ConstMapMatrix<T>(&b->value.at(n, c, 0, 0), k, s).transpose();
        if (b->requires_grad)
          MapMatrix<T>(&b->grad_buffer().at(n, c, 0, 0), k, s).noalias() +=
              ConstMapMatrix<T>(&a->value.at(n, c, 0, 0), r, k).transpose() * dy;
      }
  });
}

template <class T>
Var<T> transpose(Tape<T>& tape, const Var<T>& a) {
  const Shape& as = a->value.shape();
  Tensor<T> out(Shape{as.n, as.c, as.w, as.h});
  for (std::int64_t n = 0; n < as.n; ++n)
    for (std::int64_t c = 0; c < as.c; ++c)
      MapMatrix<T>(&out.at(n, c, 0, 0), as.w, as.h) = ConstMapMatrix<T>(&a->value.at(n, c, 0, 0), as.h, as.w).transpose();

  return tape.record("transpose", {a}, std::move(out), [a](const Tensor<T>& g) {
    const Shape& as = a->value.shape();
    for (std::int64_t n = 0; n < as.n; ++n)
      for (std::int64_t c = 0; c < as.c; ++c)
        MapMatrix<T>(&a->grad_buffer().at(n, c, 0, 0), as.h, as.w) +=
            ConstMapMatrix<T>(&g.at(n, c, 0, 0), as.w, as.h).transpose();
  });
}

template <class T>
Var<T> reshape(Tape<T>& tape, const Var<T>& a, Shape shape) {
  Tensor<T> out = a->value.reshaped(shape);
  return tape.record("reshape", {a}, std::move(out), [a](const Tensor<T>& g) { accumulate(a->grad_buffer(), g); });
}

template <class T>
Var<T> softmax_rows(Tape<T>& tape, const Var<T>& m) {
  const Shape& ms = m->value.shape();
  const std::int64_t cols = ms.w;
  const std::int64_t rows = ms.numel() / std::max<std::int64_t>(cols, 1);
  Tensor<T> out(ms);
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* x = m->value.ptr() + r * cols;
    T* y = out.ptr() + r * cols;
    const T peak = *std::max_element(x, x + cols);
    T total = 0;
    for (std::int64_t j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - peak);
      total += y[j];
    }
    for (std::int64_t j = 0; j < cols; ++j) y[j] /= total;
  }
  Tensor<T> probs = out;
  return tape.record("softmax_rows", {m}, std::move(out),
                     [m, probs = std::move(probs), rows, cols](const Tensor<T>& g) {
                       T* dx = m->grad_buffer().ptr();
                       for (std::int64_t r = 0; r < rows; ++r) {
                         const T* y = probs.ptr() + r * cols;
                         const T* dy = g.ptr() + r * cols;
                         T inner = 0;
                         for (std::int64_t j = 0; j < cols; ++j) inner += y[j] * dy[j];
                         for (std::int64_t j = 0; j < cols; ++j) dx[r * cols + j] += y[j] * (dy[j] - inner);
                       }
                     });
}

template <class T>
Var<T> prelu(Tape<T>& tape, const Var<T>& x, const Var<T>& slope) {
  const Shape& xs = x->value.shape();
  if (slope->value.size() != static_cast<std::size_t>(xs.c))
    throw DimensionError("prelu", "channels", "slope length " + std::to_string(slope->value.size()) + " vs " +
                                                  std::to_string(xs.c) + " channels");
  Tensor<T> out(xs);
  const std::int64_t plane = xs.plane();
  for (std::int64_t n = 0; n < xs.n; ++n)
    for (std::int64_t c = 0; c < xs.c; ++c) {
      const T a = slope->value[static_cast<std::size_t>(c)];
      const T* src = &x->value.at(n, c, 0, 0);
      T* dst = &out.at(n, c, 0, 0);
      for (std::int64_t i = 0; i < plane; ++i) dst[i] = src[i] >= T(0) ? src[i] : a * src[i];
    }

  return tape.record("prelu", {x, slope}, std::move(out), [x, slope](const Tensor<T>& g) {
    const Shape& xs = x->value.shape();
    const std::int64_t plane = xs.plane();
    for (std::int64_t c = 0; c < xs.c; ++c) {
      const T a = slope->value[static_cast<std::size_t>(c)];
      T dslope = 0;
      for (std::int64_t n = 0; n < xs.n; ++n) {
        const T* src = &x->value.at(n, c, 0, 0);
        const T* dy = &g.at(n, c, 0, 0);
        T* dx = x->requires_grad ? &x->grad_buffer().at(n, c, 0, 0) : nullptr;
        for (std::int64_t i = 0; i < plane; ++i) {
          if (src[i] >= T(0)) {
            if (dx) dx[i] += dy[i];
          } else {
            if (dx) dx[i] += a * dy[i];
            dslope += src[i] * dy[i];
          }
        }
      }
      if (slope->requires_grad) slope->grad_buffer()[static_cast<std::size_t>(c)] += dslope;
    }
  });
}

template <class T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  require_same_shape("add", a->value.shape(), b->value.shape());
  Tensor<T> out = a->value;
  accumulate(out, b->value);
  return tape.record("add", {a, b}, std::move(out), [a, b](const Tensor<T>& g) {
    if (a->requires_grad) accumulate(a->grad_buffer(), g);
    if (b->requires_grad) accumulate(b->grad_buffer(), g);
  });
}

template <class T>
Var<T> sub(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  require_same_shape("sub", a->value.shape(), b->value.shape());
  Tensor<T> out = a->value;
  accumulate(out, b->value, T(-1));
  return tape.record("sub", {a, b}, std::move(out), [a, b](const Tensor<T>& g) {
    if (a->requires_grad) accumulate(a->grad_buffer(), g);
    if (b->requires_grad) accumulate(b->grad_buffer(), g, T(-1));
  });
}

template <class T>
Var<T> mul(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  require_same_shape("mul", a->value.shape(), b->value.shape());
  Tensor<T> out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
  return tape.record("mul", {a, b}, std::move(out), [a, b](const Tensor<T>& g) {
    if (a->requires_grad) {
      T* d = a->grad_buffer().ptr();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * b->value[i];
    }
    if (b->requires_grad) {
      T* d = b->grad_buffer().ptr();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * a->value[i];
    }
  });
}

template <class T>
Var<T> scale(Tape<T>& tape, const Var<T>& a, T factor) {
  Tensor<T> out = a->value;
  for (auto& v : out.data()) v *= factor;
  return tape.record("scale", {a}, std::move(out),
                     [a, factor](const Tensor<T>& g) { accumulate(a->grad_buffer(), g, factor); });
}

template <class T>
Var<T> concat_channels(Tape<T>& tape, const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_channels", "inputs", "nothing to concatenate");
  const Shape& first = parts.front()->value.shape();
  std::int64_t channels = 0;
  for (const auto& p : parts) {
    const Shape& s = p->value.shape();
    if (s.n != first.n) throw DimensionError("concat_channels", "batch", s.str() + " vs " + first.str());
    if (s.h != first.h) throw DimensionError("concat_channels", "height", s.str() + " vs " + first.str());
    if (s.w != first.w) throw DimensionError("concat_channels", "width", s.str() + " vs " + first.str());
    channels += s.c;
  }
  Tensor<T> out(Shape{first.n, channels, first.h, first.w});
  const std::int64_t plane = first.plane();
  for (std::int64_t n = 0; n < first.n; ++n) {
    std::int64_t offset = 0;
    for (const auto& p : parts) {
      const std::int64_t block = p->value.shape().c * plane;
      std::copy_n(&p->value.at(n, 0, 0, 0), block, &out.at(n, offset, 0, 0));
      offset += p->value.shape().c;
    }
  }
  return tape.record("concat_channels", parts, std::move(out), [parts, plane](const Tensor<T>& g) {
    const std::int64_t batch = g.shape().n;
    for (std::int64_t n = 0; n < batch; ++n) {
      std::int64_t offset = 0;
      for (const auto& p : parts) {
        const std::int64_t c = p->value.shape().c;
        if (p->requires_grad) {
          T* d = &p->grad_buffer().at(n, 0, 0, 0);
          const T* s = &g.at(n, offset, 0, 0);
          for (std::int64_t i = 0; i < c * plane; ++i) d[i] += s[i];
        }
        offset += c;
      }
    }
  });
}

template <class T>
Var<T> sum(Tape<T>& tape, const Var<T>& a) {
  T total = 0;
  for (T v : a->value.data()) total += v;
  return tape.record("sum", {a}, Tensor<T>(Shape{1, 1, 1, 1}, total), [a](const Tensor<T>& g) {
    const T d = g[0];
    for (auto& v : a->grad_buffer().data()) v += d;
  });
}

template <class T>
Var<T> mean(Tape<T>& tape, const Var<T>& a) {
  const T count = static_cast<T>(a->value.size());
  T total = 0;
  for (T v : a->value.data()) total += v;
  return tape.record("mean", {a}, Tensor<T>(Shape{1, 1, 1, 1}, total / count), [a, count](const Tensor<T>& g) {
    const T d = g[0] / count;
    for (auto& v : a->grad_buffer().data()) v += d;
  });
}

template <class T>
Var<T> lp_loss(Tape<T>& tape, const Var<T>& a, const Var<T>& b, int order) {
  if (order != 1 && order != 2) throw std::invalid_argument("lp_loss: order must be 1 or 2");
  require_same_shape("lp_loss", a->value.shape(), b->value.shape());
  const T count = static_cast<T>(a->value.size());
  T total = 0;
  for (std::size_t i = 0; i < a->value.size(); ++i) {
    const T d = a->value[i] - b->value[i];
    total += order == 1 ? std::abs(d) : d * d;
  }
  return tape.record("lp_loss", {a, b}, Tensor<T>(Shape{1, 1, 1, 1}, total / count),
                     [a, b, order, count](const Tensor<T>& g) {
                       const T scale = g[0] / count;
                       for (std::size_t i = 0; i < a->value.size(); ++i) {
                         const T d = a->value[i] - b->value[i];
                         T local;
                         if (order == 1)
                           local = d > T(0) ? scale : (d < T(0) ? -scale : T(0));
                         else
                           local = T(2) * d * scale;
                         if (a->requires_grad) a->grad_buffer()[i] += local;
                         if (b->requires_grad) b->grad_buffer()[i] -= local;
                       }
                     });
}

template <class T>
Var<T> resample(Tape<T>& tape, const Var<T>& x, const Eigen::MatrixXd& rows, const Eigen::MatrixXd& cols) {
  const Shape& xs = x->value.shape();
  if (rows.cols() != xs.h)
    throw DimensionError("resample", "height", "row operator expects " + std::to_string(rows.cols()) + ", input " + xs.str());
  if (cols.cols() != xs.w)
    throw DimensionError("resample", "width", "column operator expects " + std::to_string(cols.cols()) + ", input " + xs.str());
  const RowMatrix<T> r = rows.cast<T>();
  const RowMatrix<T> c = cols.cast<T>();
  const std::int64_t ho = rows.rows(), wo = cols.rows();
  Tensor<T> out(Shape{xs.n, xs.c, ho, wo});
  RowMatrix<T> tmp;
  for (std::int64_t n = 0; n < xs.n; ++n)
    for (std::int64_t ch = 0; ch < xs.c; ++ch) {
      tmp.noalias() = r * ConstMapMatrix<T>(&x->value.at(n, ch, 0, 0), xs.h, xs.w);
      MapMatrix<T>(&out.at(n, ch, 0, 0), ho, wo).noalias() = tmp * c.transpose();
    }
  return tape.record("resample", {x}, std::move(out), [x, r, c, ho, wo](const Tensor<T>& g) {
    const Shape& xs = x->value.shape();
    RowMatrix<T> tmp;
    for (std::int64_t n = 0; n < xs.n; ++n)
      for (std::int64_t ch = 0; ch < xs.c; ++ch) {
        tmp.noalias() = r.transpose() * ConstMapMatrix<T>(&g.at(n, ch, 0, 0), ho, wo);
        MapMatrix<T>(&x->grad_buffer().at(n, ch, 0, 0), xs.h, xs.w).noalias() += tmp * c;
      }
  });
}

#define ABPN_INSTANTIATE_OPS(T)                                                                   \
  template Var<T> matmul(Tape<T>&, const Var<T>&, const Var<T>&);                                 \
  template Var<T> transpose(Tape<T>&, const Var<T>&);                                             \
  template Var<T> reshape(Tape<T>&, const Var<T>&, Shape);                                        \
  template Var<T> softmax_rows(Tape<T>&, const Var<T>&);                                          \
  template Var<T> prelu(Tape<T>&, const Var<T>&, const Var<T>&);                                  \
  template Var<T> add(Tape<T>&, const Var<T>&, const Var<T>&);                                    \
  template Var<T> sub(Tape<T>&, const Var<T>&, const Var<T>&);                                    \
  template Var<T> mul(Tape<T>&, const Var<T>&, const Var<T>&);                                    \
  template Var<T> scale(Tape<T>&, const Var<T>&, T);                                              \
  template Var<T> concat_channels(Tape<T>&, const std::vector<Var<T>>&);                          \
  template Var<T> sum(Tape<T>&, const Var<T>&);                                                   \
  template Var<T> mean(Tape<T>&, const Var<T>&);                                                  \
  template Var<T> lp_loss(Tape<T>&, const Var<T>&, const Var<T>&, int);                           \
  template Var<T> resample(Tape<T>&, const Var<T>&, const Eigen::MatrixXd&, const Eigen::MatrixXd&);

ABPN_INSTANTIATE_OPS(float)
ABPN_INSTANTIATE_OPS(double)

}  // namespace abpn::ops
