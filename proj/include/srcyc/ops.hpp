// Differentiable tensor operations.
#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "srcyc/autodiff.hpp"

namespace srcyc {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

inline void require_4d(const Shape& s, const char* op) {
  require(s.size() == 4, std::string(op) + ": expected NCHW tensor, got " + to_string(s));
}

template <class T>
bool recording(std::initializer_list<const Var<T>*> vars) {
  if (!grad_enabled()) return false;
  for (const Var<T>* v : vars)
    if (v && v->requires_grad()) return true;
  return false;
}

template <class T, class F, class DF>
Var<T> unary(const Var<T>& x, F f, DF df) {
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return make_op<T>(std::move(out), {x}, [df](Node<T>& self) {
    auto& in = *self.inputs[0];
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(in.value[i], self.value[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  a.value().check_same_shape(b.value(), "add");
  Tensor<T> out = a.value();
  out += b.value();
  return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (auto& in : self.inputs)
      if (in->requires_grad) in->grad_buffer() += self.grad;
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  a.value().check_same_shape(b.value(), "sub");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
    if (self.inputs[0]->requires_grad) self.inputs[0]->grad_buffer() += self.grad;
    if (self.inputs[1]->requires_grad) {
      auto& g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  a.value().check_same_shape(b.value(), "mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
    auto& na = *self.inputs[0];
    auto& nb = *self.inputs[1];
    if (na.requires_grad) {
      auto& g = na.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * nb.value[i];
    }
    if (nb.requires_grad) {
      auto& g = nb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * na.value[i];
    }
  });
}

template <class T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  a.value().check_same_shape(b.value(), "div");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= b.value()[i];
  return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
    auto& na = *self.inputs[0];
    auto& nb = *self.inputs[1];
    if (na.requires_grad) {
      auto& g = na.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / nb.value[i];
    }
    if (nb.requires_grad) {
      auto& g = nb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i] * self.value[i] / nb.value[i];
    }
  });
}

template <class T>
Var<T> mul_const(const Var<T>& x, T c) {
  return detail::unary(x, [c](T v) { return v * c; }, [c](T, T) { return c; });
}

template <class T>
Var<T> add_const(const Var<T>& x, T c) {
  return detail::unary(x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

/// x - s where s holds a single element broadcast over x.
template <class T>
Var<T> sub_scalar(const Var<T>& x, const Var<T>& s) {
  detail::require(s.value().size() == 1, "sub_scalar: s must hold one element");
  const T sv = s.value()[0];
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v -= sv;
  return make_op<T>(std::move(out), {x, s}, [](Node<T>& self) {
    if (self.inputs[0]->requires_grad) self.inputs[0]->grad_buffer() += self.grad;
    if (self.inputs[1]->requires_grad) self.inputs[1]->grad_buffer()[0] -= self.grad.sum();
  });
}

template <class T>
Var<T> abs(const Var<T>& x) {
  return detail::unary(
      x, [](T v) { return std::abs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <class T>
Var<T> square(const Var<T>& x) {
  return detail::unary(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <class T>
Var<T> relu(const Var<T>& x) {
  return detail::unary(
      x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  return detail::unary(
      x, [slope](T v) { return v > T(0) ? v : slope * v; },
      [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

/// log(1 + exp(x)), evaluated without overflow.
template <class T>
Var<T> softplus(const Var<T>& x) {
  return detail::unary(
      x, [](T v) { return std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v))); },
      [](T v, T) {
        return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
      });
}

/// x^p for x > 0; zero (with zero gradient) for x <= 0.
template <class T>
Var<T> pow_const(const Var<T>& x, T p) {
  return detail::unary(
      x, [p](T v) { return v > T(0) ? std::pow(v, p) : T(0); },
      [p](T v, T y) { return v > T(0) ? p * y / v : T(0); });
}

/// Clamp to [lo, hi]; gradient passes where lo <= x <= hi.
template <class T>
Var<T> clip(const Var<T>& x, T lo, T hi) {
  return detail::unary(
      x, [lo, hi](T v) { return std::clamp(v, lo, hi); },
      [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T(1) : T(0); });
}

// ---------------------------------------------------------------------------
// Reductions

template <class T>
Var<T> sum(const Var<T>& x) {
  return make_op<T>(Tensor<T>::scalar(x.value().sum()), {x}, [](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const T s = self.grad[0];
    for (auto& v : g.values()) v += s;
  });
}

template <class T>
Var<T> mean(const Var<T>& x) {
  const T n = static_cast<T>(x.value().size());
  detail::require(n > 0, "mean of empty tensor");
  return make_op<T>(Tensor<T>::scalar(x.value().sum() / n), {x}, [n](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const T s = self.grad[0] / n;
    for (auto& v : g.values()) v += s;
  });
}

/// Spatial mean: NCHW -> NC.
template <class T>
Var<T> mean_hw(const Var<T>& x) {
  detail::require_4d(x.shape(), "mean_hw");
  const auto& s = x.shape();
  const int nc = s[0] * s[1];
  const std::size_t hw = static_cast<std::size_t>(s[2]) * s[3];
  Tensor<T> out(Shape{s[0], s[1]});
  const T* src = x.value().data();
  for (int i = 0; i < nc; ++i) {
    T acc = 0;
    for (std::size_t j = 0; j < hw; ++j) acc += src[i * hw + j];
    out[i] = acc / static_cast<T>(hw);
  }
  return make_op<T>(std::move(out), {x}, [nc, hw](Node<T>& self) {
    T* g = self.inputs[0]->grad_buffer().data();
    for (int i = 0; i < nc; ++i) {
      const T d = self.grad[i] / static_cast<T>(hw);
      for (std::size_t j = 0; j < hw; ++j) g[i * hw + j] += d;
    }
  });
}

// ---------------------------------------------------------------------------
// Convolution and friends

/// 2-D cross-correlation with zero padding. `bias` may be a default Var with an
/// empty value to mean "no bias". Weight layout: [Cout, Cin, k, k].
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride = 1, int pad = 0) {
  detail::require_4d(x.shape(), "conv2d");
  const auto& xs = x.shape();
  const auto& ws = weight.shape();
  detail::require(ws.size() == 4 && ws[2] == ws[3], "conv2d: weight must be [Cout,Cin,k,k]");
  detail::require(ws[1] == xs[1], "conv2d: channel mismatch " + to_string(xs) + " vs " + to_string(ws));
  const bool has_bias = !bias.value().empty();
  const int n = xs[0], cin = xs[1], h = xs[2], w = xs[3];
  const int cout = ws[0], k = ws[2];
  const int ho = (h + 2 * pad - k) / stride + 1;
  const int wo = (w + 2 * pad - k) / stride + 1;
  detail::require(ho >= 1 && wo >= 1, "conv2d: input " + to_string(xs) + " too small for kernel");
  const int kk = cin * k * k;
  const int p = ho * wo;

  const bool record = detail::recording<T>({&x, &weight, &bias});
  auto cols_cache = std::make_shared<std::vector<RowMatrix<T>>>();
  if (record) cols_cache->reserve(static_cast<std::size_t>(n));

  auto im2col = [=](const T* img, RowMatrix<T>& cols) {
    cols.resize(kk, p);
    for (int c = 0; c < cin; ++c)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          T* row = cols.data() + static_cast<std::size_t>((c * k + ky) * k + kx) * p;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride - pad + ky;
            T* dst = row + oy * wo;
            if (iy < 0 || iy >= h) {
              std::fill(dst, dst + wo, T(0));
              continue;
            }
            const T* src = img + (static_cast<std::size_t>(c) * h + iy) * w;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride - pad + kx;
              dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
            }
          }
        }
  };

  Tensor<T> out(Shape{n, cout, ho, wo});
  Eigen::Map<const RowMatrix<T>> wmat(weight.value().data(), cout, kk);
  RowMatrix<T> cols;
  for (int b = 0; b < n; ++b) {
    im2col(x.value().data() + static_cast<std::size_t>(b) * cin * h * w, cols);
    Eigen::Map<RowMatrix<T>> omat(out.data() + static_cast<std::size_t>(b) * cout * p, cout, p);
    omat.noalias() = wmat * cols;
    if (has_bias)
      for (int o = 0; o < cout; ++o) omat.row(o).array() += bias.value()[o];
    if (record) cols_cache->push_back(std::move(cols));
  }

  std::vector<Var<T>> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_op<T>(std::move(out), std::move(inputs), [=](Node<T>& self) {
    auto& nx = *self.inputs[0];
    auto& nw = *self.inputs[1];
    Eigen::Map<const RowMatrix<T>> wm(nw.value.data(), cout, kk);
    RowMatrix<T> dcols;
    for (int b = 0; b < n; ++b) {
      Eigen::Map<const RowMatrix<T>> g(self.grad.data() + static_cast<std::size_t>(b) * cout * p, cout, p);
      if (nw.requires_grad) {
        Eigen::Map<RowMatrix<T>> dw(nw.grad_buffer().data(), cout, kk);
        dw.noalias() += g * (*cols_cache)[b].transpose();
      }
      if (has_bias && self.inputs[2]->requires_grad) {
        auto& db = self.inputs[2]->grad_buffer();
        for (int o = 0; o < cout; ++o) db[o] += g.row(o).sum();
      }
      if (nx.requires_grad) {
        dcols.noalias() = wm.transpose() * g;
        T* dx = nx.grad_buffer().data() + static_cast<std::size_t>(b) * cin * h * w;
        for (int c = 0; c < cin; ++c)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const T* row = dcols.data() + static_cast<std::size_t>((c * k + ky) * k + kx) * p;
              for (int oy = 0; oy < ho; ++oy) {
                const int iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= h) continue;
                T* dst = dx + (static_cast<std::size_t>(c) * h + iy) * w;
                for (int ox = 0; ox < wo; ++ox) {
                  const int ix = ox * stride - pad + kx;
                  if (ix >= 0 && ix < w) dst[ix] += row[oy * wo + ox];
                }
              }
            }
      }
    }
  });
}

/// Mirror padding without edge repetition (index -1 maps to 1).
template <class T>
Var<T> reflect_pad(const Var<T>& x, int pad) {
  detail::require_4d(x.shape(), "reflect_pad");
  if (pad == 0) return x;
  const auto& s = x.shape();
  const int n = s[0], c = s[1], h = s[2], w = s[3];
  detail::require(pad < h && pad < w, "reflect_pad: pad " + std::to_string(pad) + " too large for " + to_string(s));
  const int hp = h + 2 * pad, wp = w + 2 * pad;
  auto reflect = [](int i, int len) {
    if (i < 0) return -i;
    if (i >= len) return 2 * (len - 1) - i;
    return i;
  };
  std::vector<int> ymap(hp), xmap(wp);
  for (int i = 0; i < hp; ++i) ymap[i] = reflect(i - pad, h);
  for (int i = 0; i < wp; ++i) xmap[i] = reflect(i - pad, w);
  Tensor<T> out(Shape{n, c, hp, wp});
  const T* src = x.value().data();
  for (int p = 0; p < n * c; ++p)
    for (int y = 0; y < hp; ++y) {
      const T* row = src + (static_cast<std::size_t>(p) * h + ymap[y]) * w;
      T* dst = out.data() + (static_cast<std::size_t>(p) * hp + y) * wp;
      for (int xx = 0; xx < wp; ++xx) dst[xx] = row[xmap[xx]];
    }
  return make_op<T>(std::move(out), {x}, [=](Node<T>& self) {
    T* g = self.inputs[0]->grad_buffer().data();
    for (int p = 0; p < n * c; ++p)
      for (int y = 0; y < hp; ++y) {
        T* row = g + (static_cast<std::size_t>(p) * h + ymap[y]) * w;
        const T* src_g = self.grad.data() + (static_cast<std::size_t>(p) * hp + y) * wp;
        for (int xx = 0; xx < wp; ++xx) row[xmap[xx]] += src_g[xx];
      }
  });
}

/// Parametric ReLU with one slope per channel.
template <class T>
Var<T> prelu(const Var<T>& x, const Var<T>& slope) {
  detail::require_4d(x.shape(), "prelu");
  const auto& s = x.shape();
  detail::require(slope.value().size() == static_cast<std::size_t>(s[1]), "prelu: slope/channel mismatch");
  const int n = s[0], c = s[1];
  const std::size_t hw = static_cast<std::size_t>(s[2]) * s[3];
  Tensor<T> out(s);
  const T* xv = x.value().data();
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      const T a = slope.value()[ch];
      const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const T v = xv[off + i];
        out[off + i] = v > T(0) ? v : a * v;
      }
    }
  return make_op<T>(std::move(out), {x, slope}, [=](Node<T>& self) {
    auto& nx = *self.inputs[0];
    auto& na = *self.inputs[1];
    for (int b = 0; b < n; ++b)
      for (int ch = 0; ch < c; ++ch) {
        const T a = na.value[ch];
        const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * hw;
        T da = 0;
        for (std::size_t i = 0; i < hw; ++i) {
          const T v = nx.value[off + i];
          const T g = self.grad[off + i];
          if (v <= T(0)) da += g * v;
          if (nx.requires_grad) nx.grad_buffer()[off + i] += v > T(0) ? g : a * g;
        }
        if (na.requires_grad) na.grad_buffer()[ch] += da;
      }
  });
}

/// Batch normalization over (N, H, W) per channel. In training mode the batch
/// statistics normalize the input and update the running buffers in place.
template <class T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, bool training, T momentum = T(0.1), T eps = T(1e-5)) {
  detail::require_4d(x.shape(), "batch_norm");
  const auto& s = x.shape();
  const int n = s[0], c = s[1];
  const std::size_t hw = static_cast<std::size_t>(s[2]) * s[3];
  const std::size_t m = hw * static_cast<std::size_t>(n);
  std::vector<T> mu(c), invstd(c);
  const T* xv = x.value().data();
  for (int ch = 0; ch < c; ++ch) {
    if (training) {
      double acc = 0, acc2 = 0;
      for (int b = 0; b < n; ++b) {
        const T* p = xv + (static_cast<std::size_t>(b) * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) acc += p[i];
      }
      const double mean_v = acc / static_cast<double>(m);
      for (int b = 0; b < n; ++b) {
        const T* p = xv + (static_cast<std::size_t>(b) * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) acc2 += (p[i] - mean_v) * (p[i] - mean_v);
      }
      const double var = acc2 / static_cast<double>(m);
      mu[ch] = static_cast<T>(mean_v);
      invstd[ch] = static_cast<T>(1.0 / std::sqrt(var + eps));
      const double unbiased = m > 1 ? acc2 / static_cast<double>(m - 1) : var;
      running_mean[ch] = static_cast<T>((1 - momentum) * running_mean[ch] + momentum * mean_v);
      running_var[ch] = static_cast<T>((1 - momentum) * running_var[ch] + momentum * unbiased);
    } else {
      mu[ch] = running_mean[ch];
      invstd[ch] = T(1) / std::sqrt(running_var[ch] + eps);
    }
  }
  Tensor<T> out(s);
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * hw;
      const T g = gamma.value()[ch], bt = beta.value()[ch];
      for (std::size_t i = 0; i < hw; ++i) out[off + i] = g * (xv[off + i] - mu[ch]) * invstd[ch] + bt;
    }
  return make_op<T>(std::move(out), {x, gamma, beta}, [=](Node<T>& self) {
    auto& nx = *self.inputs[0];
    auto& ng = *self.inputs[1];
    auto& nb = *self.inputs[2];
    for (int ch = 0; ch < c; ++ch) {
      T sum_g = 0, sum_gx = 0;
      for (int b = 0; b < n; ++b) {
        const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const T xhat = (nx.value[off + i] - mu[ch]) * invstd[ch];
          sum_g += self.grad[off + i];
          sum_gx += self.grad[off + i] * xhat;
        }
      }
      if (ng.requires_grad) ng.grad_buffer()[ch] += sum_gx;
      if (nb.requires_grad) nb.grad_buffer()[ch] += sum_g;
      if (!nx.requires_grad) continue;
      auto& dx = nx.grad_buffer();
      const T gm = ng.value[ch];
      const T mm = static_cast<T>(m);
      for (int b = 0; b < n; ++b) {
        const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          if (training) {
            const T xhat = (nx.value[off + i] - mu[ch]) * invstd[ch];
            dx[off + i] += gm * invstd[ch] / mm * (mm * self.grad[off + i] - sum_g - xhat * sum_gx);
          } else {
            dx[off + i] += gm * invstd[ch] * self.grad[off + i];
          }
        }
      }
    }
  });
}

/// Fully connected layer: x [N,K], weight [M,K], bias [M] -> [N,M].
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const auto& xs = x.shape();
  const auto& ws = weight.shape();
  detail::require(xs.size() == 2 && ws.size() == 2 && xs[1] == ws[1], "linear: shape mismatch");
  const int n = xs[0], k = xs[1], m = ws[0];
  Tensor<T> out(Shape{n, m});
  Eigen::Map<const RowMatrix<T>> xm(x.value().data(), n, k), wm(weight.value().data(), m, k);
  Eigen::Map<RowMatrix<T>> om(out.data(), n, m);
  om.noalias() = xm * wm.transpose();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) om(i, j) += bias.value()[j];
  return make_op<T>(std::move(out), {x, weight, bias}, [=](Node<T>& self) {
    auto& nx = *self.inputs[0];
    auto& nw = *self.inputs[1];
    auto& nb = *self.inputs[2];
    Eigen::Map<const RowMatrix<T>> g(self.grad.data(), n, m);
    if (nx.requires_grad) {
      Eigen::Map<RowMatrix<T>> dx(nx.grad_buffer().data(), n, k);
      Eigen::Map<const RowMatrix<T>> w2(nw.value.data(), m, k);
      dx.noalias() += g * w2;
    }
    if (nw.requires_grad) {
      Eigen::Map<RowMatrix<T>> dw(nw.grad_buffer().data(), m, k);
      Eigen::Map<const RowMatrix<T>> x2(nx.value.data(), n, k);
      dw.noalias() += g.transpose() * x2;
    }
    if (nb.requires_grad)
      for (int j = 0; j < m; ++j) nb.grad_buffer()[j] += g.col(j).sum();
  });
}

/// Separable linear resampling: each channel plane X becomes R_h * X * R_w^T.
template <class T>
Var<T> resample(const Var<T>& x, std::shared_ptr<const RowMatrix<T>> rh, std::shared_ptr<const RowMatrix<T>> rw) {
  detail::require_4d(x.shape(), "resample");
  const auto& s = x.shape();
  const int planes = s[0] * s[1], h = s[2], w = s[3];
  detail::require(rh->cols() == h && rw->cols() == w, "resample: matrix/input size mismatch");
  const int ho = static_cast<int>(rh->rows()), wo = static_cast<int>(rw->rows());
  Tensor<T> out(Shape{s[0], s[1], ho, wo});
  RowMatrix<T> tmp;
  for (int p = 0; p < planes; ++p) {
    Eigen::Map<const RowMatrix<T>> in(x.value().data() + static_cast<std::size_t>(p) * h * w, h, w);
    Eigen::Map<RowMatrix<T>> o(out.data() + static_cast<std::size_t>(p) * ho * wo, ho, wo);
    tmp.noalias() = (*rh) * in;
    o.noalias() = tmp * rw->transpose();
  }
  return make_op<T>(std::move(out), {x}, [=](Node<T>& self) {
    T* g = self.inputs[0]->grad_buffer().data();
    RowMatrix<T> t;
    for (int p = 0; p < planes; ++p) {
      Eigen::Map<const RowMatrix<T>> go(self.grad.data() + static_cast<std::size_t>(p) * ho * wo, ho, wo);
      Eigen::Map<RowMatrix<T>> gi(g + static_cast<std::size_t>(p) * h * w, h, w);
      t.noalias() = rh->transpose() * go;
      gi.noalias() += t * (*rw);
    }
  });
}

/// Valid 1-D correlation with a fixed kernel along width (axis = 3) or height
/// (axis = 2), applied to every channel independently.
template <class T>
Var<T> filter1d_valid(const Var<T>& x, std::span<const T> kernel, int axis) {
  detail::require_4d(x.shape(), "filter1d_valid");
  detail::require(axis == 2 || axis == 3, "filter1d_valid: axis must be 2 or 3");
  const auto& s = x.shape();
  const int planes = s[0] * s[1], h = s[2], w = s[3];
  const int k = static_cast<int>(kernel.size());
  const int ho = axis == 2 ? h - k + 1 : h;
  const int wo = axis == 3 ? w - k + 1 : w;
  detail::require(ho >= 1 && wo >= 1, "filter1d_valid: input " + to_string(s) + " smaller than kernel");
  std::vector<T> kv(kernel.begin(), kernel.end());
  const int step = axis == 3 ? 1 : w;
  Tensor<T> out(Shape{s[0], s[1], ho, wo});
  const T* xv = x.value().data();
  for (int p = 0; p < planes; ++p)
    for (int y = 0; y < ho; ++y)
      for (int xx = 0; xx < wo; ++xx) {
        const T* src = xv + (static_cast<std::size_t>(p) * h + y) * w + xx;
        T acc = 0;
        for (int t = 0; t < k; ++t) acc += kv[t] * src[t * step];
        out[(static_cast<std::size_t>(p) * ho + y) * wo + xx] = acc;
      }
  return make_op<T>(std::move(out), {x}, [=](Node<T>& self) {
    T* g = self.inputs[0]->grad_buffer().data();
    for (int p = 0; p < planes; ++p)
      for (int y = 0; y < ho; ++y)
        for (int xx = 0; xx < wo; ++xx) {
          const T d = self.grad[(static_cast<std::size_t>(p) * ho + y) * wo + xx];
          T* dst = g + (static_cast<std::size_t>(p) * h + y) * w + xx;
          for (int t = 0; t < k; ++t) dst[t * step] += kv[t] * d;
        }
  });
}

/// 2x2 average pooling; an odd trailing row/column is averaged over the pixels
/// that exist, so the output is ceil(H/2) x ceil(W/2).
template <class T>
Var<T> avg_pool2(const Var<T>& x) {
  detail::require_4d(x.shape(), "avg_pool2");
  const auto& s = x.shape();
  const int planes = s[0] * s[1], h = s[2], w = s[3];
  const int ho = (h + 1) / 2, wo = (w + 1) / 2;
  Tensor<T> out(Shape{s[0], s[1], ho, wo});
  const T* xv = x.value().data();
  auto visit = [=](int p, int oy, int ox, auto&& f) {
    const int y0 = 2 * oy, x0 = 2 * ox;
    const int y1 = std::min(y0 + 2, h), x1 = std::min(x0 + 2, w);
    const T inv = T(1) / static_cast<T>((y1 - y0) * (x1 - x0));
    for (int y = y0; y < y1; ++y)
      for (int xx = x0; xx < x1; ++xx) f((static_cast<std::size_t>(p) * h + y) * w + xx, inv);
  };
  for (int p = 0; p < planes; ++p)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        T acc = 0;
        visit(p, oy, ox, [&](std::size_t i, T inv) { acc += xv[i] * inv; });
        out[(static_cast<std::size_t>(p) * ho + oy) * wo + ox] = acc;
      }
  return make_op<T>(std::move(out), {x}, [=](Node<T>& self) {
    T* g = self.inputs[0]->grad_buffer().data();
    for (int p = 0; p < planes; ++p)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          const T d = self.grad[(static_cast<std::size_t>(p) * ho + oy) * wo + ox];
          visit(p, oy, ox, [&](std::size_t i, T inv) { g[i] += d * inv; });
        }
  });
}

/// Forward difference along width (axis = 3) or height (axis = 2), valid region
/// only: the differenced axis shrinks by one.
template <class T>
Var<T> forward_diff(const Var<T>& x, int axis) {
  detail::require_4d(x.shape(), "forward_diff");
  detail::require(axis == 2 || axis == 3, "forward_diff: axis must be 2 or 3");
  const auto& s = x.shape();
  const int planes = s[0] * s[1], h = s[2], w = s[3];
  const int ho = axis == 2 ? h - 1 : h;
  const int wo = axis == 3 ? w - 1 : w;
  detail::require(ho >= 1 && wo >= 1, "forward_diff: dimension < 2 in " + to_string(s));
  const int step = axis == 3 ? 1 : w;
  Tensor<T> out(Shape{s[0], s[1], ho, wo});
  const T* xv = x.value().data();
  for (int p = 0; p < planes; ++p)
    for (int y = 0; y < ho; ++y)
      for (int xx = 0; xx < wo; ++xx) {
        const std::size_t i = (static_cast<std::size_t>(p) * h + y) * w + xx;
        out[(static_cast<std::size_t>(p) * ho + y) * wo + xx] = xv[i + step] - xv[i];
      }
  return make_op<T>(std::move(out), {x}, [=](Node<T>& self) {
    T* g = self.inputs[0]->grad_buffer().data();
    for (int p = 0; p < planes; ++p)
      for (int y = 0; y < ho; ++y)
        for (int xx = 0; xx < wo; ++xx) {
          const std::size_t i = (static_cast<std::size_t>(p) * h + y) * w + xx;
          const T d = self.grad[(static_cast<std::size_t>(p) * ho + y) * wo + xx];
          g[i + step] += d;
          g[i] -= d;
        }
  });
}

/// Per-item Euclidean projection onto the l2 ball of radius
/// r_n = max(alpha, 0) * sigma_hat[n] / 255 * sqrt(M), M = elements per item.
template <class T>
Var<T> l2_ball_projection(const Var<T>& z, const Var<T>& alpha, std::span<const double> sigma_hat) {
  const auto& s = z.shape();
  detail::require(!s.empty() && static_cast<std::size_t>(s[0]) == sigma_hat.size(),
                  "l2_ball_projection: need one noise estimate per batch item");
  detail::require(alpha.value().size() == 1, "l2_ball_projection: alpha must be a scalar");
  const int n = s[0];
  const std::size_t m = z.value().size() / static_cast<std::size_t>(n);
  const T a = alpha.value()[0];
  const T a_pos = std::max(a, T(0));
  std::vector<T> norms(n), unit_radius(n), scale(n);
  std::vector<char> outside(n);
  Tensor<T> out = z.value();
  for (int b = 0; b < n; ++b) {
    const T* p = z.value().data() + b * m;
    T acc = 0;
    for (std::size_t i = 0; i < m; ++i) acc += p[i] * p[i];
    norms[b] = std::sqrt(acc);
    unit_radius[b] = static_cast<T>(sigma_hat[b] / 255.0) * std::sqrt(static_cast<T>(m));
    const T r = a_pos * unit_radius[b];
    outside[b] = norms[b] > r;
    scale[b] = outside[b] ? r / norms[b] : T(1);
    if (outside[b])
      for (std::size_t i = 0; i < m; ++i) out[b * m + i] *= scale[b];
  }
  return make_op<T>(std::move(out), {z, alpha}, [=](Node<T>& self) {
    auto& nz = *self.inputs[0];
    auto& na = *self.inputs[1];
    for (int b = 0; b < n; ++b) {
      const T* g = self.grad.data() + b * m;
      if (!outside[b]) {
        if (nz.requires_grad) {
          T* dz = nz.grad_buffer().data() + b * m;
          for (std::size_t i = 0; i < m; ++i) dz[i] += g[i];
        }
        continue;
      }
      const T* zv = nz.value.data() + b * m;
      T zg = 0;
      for (std::size_t i = 0; i < m; ++i) zg += zv[i] * g[i];
      const T nrm = norms[b];
      if (nz.requires_grad) {
        T* dz = nz.grad_buffer().data() + b * m;
        const T c = zg / (nrm * nrm);
        for (std::size_t i = 0; i < m; ++i) dz[i] += scale[b] * (g[i] - zv[i] * c);
      }
      if (na.requires_grad && a > T(0)) na.grad_buffer()[0] += zg / nrm * unit_radius[b];
    }
  });
}

}  // namespace srcyc
