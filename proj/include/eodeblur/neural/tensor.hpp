#pragma once

// NCHW tensors and a small reverse-mode tape covering the layer types the
// multi-scale restorer needs.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "eodeblur/error.hpp"
#include "eodeblur/imagecore.hpp"
#include "eodeblur/memory.hpp"

namespace eodeblur::neural {

template <class T = float>
struct Tensor4 {
  int n = 0, c = 0, h = 0, w = 0;
  tracked_vector<T> data;

  Tensor4() = default;
  Tensor4(int n_, int c_, int h_, int w_, T fill = T(0)) : n(n_), c(c_), h(h_), w(w_) {
    require(n_ >= 0 && c_ >= 0 && h_ >= 0 && w_ >= 0, "tensor dimensions must be non-negative");
    data.assign(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill);
  }

  std::size_t numel() const noexcept { return data.size(); }
  std::size_t plane_size() const noexcept { return static_cast<std::size_t>(h) * w; }
  bool same_shape(const Tensor4& o) const noexcept { return n == o.n && c == o.c && h == o.h && w == o.w; }
  std::string shape_string() const {
    return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + "]";
  }

  T& at(int in, int ic, int y, int x) { return data[((static_cast<std::size_t>(in) * c + ic) * h + y) * w + x]; }
  T at(int in, int ic, int y, int x) const { return data[((static_cast<std::size_t>(in) * c + ic) * h + y) * w + x]; }
  T* plane(int in, int ic) { return data.data() + (static_cast<std::size_t>(in) * c + ic) * plane_size(); }
  const T* plane(int in, int ic) const { return data.data() + (static_cast<std::size_t>(in) * c + ic) * plane_size(); }

  template <class U>
  Tensor4<U> cast() const {
    Tensor4<U> out(n, c, h, w);
    std::transform(data.begin(), data.end(), out.data.begin(), [](T v) { return static_cast<U>(v); });
    return out;
  }
};

/// Single-image tensor (n = 1) from a raster, channels preserved.
template <class T = float>
Tensor4<T> from_raster(const RasterImage& img) {
  Tensor4<T> t(1, img.channels(), img.height(), img.width());
  for (int c = 0; c < img.channels(); ++c) std::copy(img.plane(c).data.begin(), img.plane(c).data.end(), t.plane(0, c));
  return t;
}

template <class T>
RasterImage to_raster(const Tensor4<T>& t, int index = 0) {
  require(index >= 0 && index < t.n, "tensor batch index out of range");
  RasterImage img(t.w, t.h, t.c);
  for (int c = 0; c < t.c; ++c) {
    const T* src = t.plane(index, c);
    auto& dst = img.plane(c).data;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<float>(src[i]);
  }
  return img;
}

template <class T>
Tensor4<T> stack(const std::vector<Tensor4<T>>& items) {
  require(!items.empty(), "cannot stack an empty list");
  const auto& f = items.front();
  Tensor4<T> out(static_cast<int>(items.size()), f.c, f.h, f.w);
  for (std::size_t i = 0; i < items.size(); ++i) {
    require(items[i].c == f.c && items[i].h == f.h && items[i].w == f.w && items[i].n == 1, "stack needs equal single-image tensors");
    std::copy(items[i].data.begin(), items[i].data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i * f.numel()));
  }
  return out;
}

template <class T>
Tensor4<T> slice(const Tensor4<T>& t, int index) {
  require(index >= 0 && index < t.n, "tensor batch index out of range");
  Tensor4<T> out(1, t.c, t.h, t.w);
  const auto per = static_cast<std::ptrdiff_t>(out.numel());
  std::copy(t.data.begin() + index * per, t.data.begin() + (index + 1) * per, out.data.begin());
  return out;
}

enum class PadMode { zero, reflect };

struct ConvGeometry {
  int stride = 1;
  int pad = 0;
  PadMode mode = PadMode::zero;
};

inline int conv_out_dim(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

namespace detail {

// Source coordinate for padded position p, or -1 when it reads a zero.
inline int pad_source(int p, int size, PadMode mode) {
  if (p >= 0 && p < size) return p;
  return mode == PadMode::zero ? -1 : reflect_index(p, size);
}

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// cols is (cin*kh*kw) x (oh*ow), row-major, for one batch image.
template <class T>
void im2col(const Tensor4<T>& x, int in, int kh, int kw, const ConvGeometry& g, int oh, int ow, T* cols) {
  const std::size_t p = static_cast<std::size_t>(oh) * ow;
  for (int ic = 0; ic < x.c; ++ic) {
    const T* src = x.plane(in, ic);
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        T* row = cols + (static_cast<std::size_t>((ic * kh + ky) * kw + kx)) * p;
        for (int oy = 0; oy < oh; ++oy) {
          const int sy = pad_source(oy * g.stride - g.pad + ky, x.h, g.mode);
          T* out = row + static_cast<std::size_t>(oy) * ow;
          if (sy < 0) {
            std::fill(out, out + ow, T(0));
            continue;
          }
          const T* srow = src + static_cast<std::size_t>(sy) * x.w;
          for (int ox = 0; ox < ow; ++ox) {
            const int sx = pad_source(ox * g.stride - g.pad + kx, x.w, g.mode);
            out[ox] = sx < 0 ? T(0) : srow[sx];
          }
        }
      }
  }
}

template <class T>
void col2im(const T* cols, Tensor4<T>& dx, int in, int kh, int kw, const ConvGeometry& g, int oh, int ow) {
  const std::size_t p = static_cast<std::size_t>(oh) * ow;
  for (int ic = 0; ic < dx.c; ++ic) {
    T* dst = dx.plane(in, ic);
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        const T* row = cols + (static_cast<std::size_t>((ic * kh + ky) * kw + kx)) * p;
        for (int oy = 0; oy < oh; ++oy) {
          const int sy = pad_source(oy * g.stride - g.pad + ky, dx.h, g.mode);
          if (sy < 0) continue;
          const T* in_row = row + static_cast<std::size_t>(oy) * ow;
          T* drow = dst + static_cast<std::size_t>(sy) * dx.w;
          for (int ox = 0; ox < ow; ++ox) {
            const int sx = pad_source(ox * g.stride - g.pad + kx, dx.w, g.mode);
            if (sx >= 0) drow[sx] += in_row[ox];
          }
        }
      }
  }
}

}  // namespace detail

/// Cross-correlation; weight is (cout, cin, kh, kw), bias is (cout, 1, 1, 1)
/// or empty.
template <class T>
Tensor4<T> conv2d(const Tensor4<T>& x, const Tensor4<T>& weight, const Tensor4<T>& bias, const ConvGeometry& g) {
  if (weight.c != x.c)
    throw InvalidArgument("conv2d channel mismatch: input " + x.shape_string() + ", weight " + weight.shape_string());
  require(g.stride >= 1 && g.pad >= 0, "conv2d stride must be >= 1 and pad >= 0");
  require(bias.numel() == 0 || static_cast<int>(bias.numel()) == weight.n, "conv2d bias size mismatch");
  const int oh = conv_out_dim(x.h, weight.h, g.stride, g.pad);
  const int ow = conv_out_dim(x.w, weight.w, g.stride, g.pad);
  require(oh > 0 && ow > 0, "conv2d output would be empty");
  Tensor4<T> y(x.n, weight.n, oh, ow);
  const Eigen::Index k = static_cast<Eigen::Index>(weight.c) * weight.h * weight.w;
  const Eigen::Index p = static_cast<Eigen::Index>(oh) * ow;
  tracked_vector<T> cols(static_cast<std::size_t>(k * p));
  const Eigen::Map<const detail::RowMat<T>> wm(weight.data.data(), weight.n, k);
  for (int in = 0; in < x.n; ++in) {
    detail::im2col(x, in, weight.h, weight.w, g, oh, ow, cols.data());
    Eigen::Map<detail::RowMat<T>> ym(y.plane(in, 0), weight.n, p);
    ym.noalias() = wm * Eigen::Map<const detail::RowMat<T>>(cols.data(), k, p);
    if (bias.numel() != 0)
      for (int oc = 0; oc < weight.n; ++oc) ym.row(oc).array() += bias.data[static_cast<std::size_t>(oc)];
  }
  return y;
}

template <class T>
Tensor4<T> upsample2(const Tensor4<T>& x) {
  Tensor4<T> y(x.n, x.c, 2 * x.h, 2 * x.w);
  for (int in = 0; in < x.n; ++in)
    for (int c = 0; c < x.c; ++c)
      for (int yy = 0; yy < y.h; ++yy)
        for (int xx = 0; xx < y.w; ++xx) y.at(in, c, yy, xx) = x.at(in, c, yy / 2, xx / 2);
  return y;
}

/// 2x2 box average; dimensions must be even.
template <class T>
Tensor4<T> downsample2(const Tensor4<T>& x) {
  require(x.h % 2 == 0 && x.w % 2 == 0, "downsample2 needs even dimensions");
  Tensor4<T> y(x.n, x.c, x.h / 2, x.w / 2);
  for (int in = 0; in < x.n; ++in)
    for (int c = 0; c < x.c; ++c)
      for (int yy = 0; yy < y.h; ++yy)
        for (int xx = 0; xx < y.w; ++xx)
          y.at(in, c, yy, xx) = T(0.25) * (x.at(in, c, 2 * yy, 2 * xx) + x.at(in, c, 2 * yy, 2 * xx + 1) +
                                           x.at(in, c, 2 * yy + 1, 2 * xx) + x.at(in, c, 2 * yy + 1, 2 * xx + 1));
  return y;
}

/// Reverse-mode tape. Node values live until the graph is destroyed; with
/// recording off no backward closures are kept.
template <class T>
class Graph {
 public:
  using Var = int;

  explicit Graph(bool record = true) : record_(record) {}

  Var input(Tensor4<T> value) { return push(std::move(value), nullptr, false); }

  /// Leaf bound to external storage; its gradient is accumulated on backward.
  Var parameter(const Tensor4<T>& value) { return push(Tensor4<T>{}, &value, record_); }

  const Tensor4<T>& value(Var v) const {
    const Node& n = nodes_[static_cast<std::size_t>(v)];
    return n.external ? *n.external : n.own;
  }

  /// Gradient of a node after backward(); empty if none flowed.
  const Tensor4<T>& grad(Var v) const { return nodes_[static_cast<std::size_t>(v)].grad; }

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Inputs of every ReLU, in recording order (non-differentiable points).
  const std::vector<Var>& relu_inputs() const noexcept { return relu_inputs_; }

  Var conv2d(Var x, Var weight, Var bias, const ConvGeometry& g) {
    Var out = push(neural::conv2d(value(x), value(weight), value(bias), g), nullptr, any_grad({x, weight, bias}));
    if (wants(out))
      nodes_[static_cast<std::size_t>(out)].backward = [x, weight, bias, g](Graph& gr, const Tensor4<T>& dy) {
        const Tensor4<T>& xv = gr.value(x);
        const Tensor4<T>& wv = gr.value(weight);
        const Eigen::Index k = static_cast<Eigen::Index>(wv.c) * wv.h * wv.w;
        const Eigen::Index p = static_cast<Eigen::Index>(dy.h) * dy.w;
        tracked_vector<T> cols(static_cast<std::size_t>(k * p));
        const Eigen::Map<const detail::RowMat<T>> wm(wv.data.data(), wv.n, k);
        Tensor4<T>* dw = gr.needs(weight) ? &gr.grad_buffer(weight) : nullptr;
        Tensor4<T>* db = gr.needs(bias) ? &gr.grad_buffer(bias) : nullptr;
        Tensor4<T>* dx = gr.needs(x) ? &gr.grad_buffer(x) : nullptr;
        for (int in = 0; in < dy.n; ++in) {
          const Eigen::Map<const detail::RowMat<T>> dym(dy.plane(in, 0), dy.c, p);
          if (dw) {
            detail::im2col(xv, in, wv.h, wv.w, g, dy.h, dy.w, cols.data());
            Eigen::Map<detail::RowMat<T>>(dw->data.data(), wv.n, k).noalias() +=
                dym * Eigen::Map<const detail::RowMat<T>>(cols.data(), k, p).transpose();
          }
          if (db)
            for (int oc = 0; oc < dy.c; ++oc) db->data[static_cast<std::size_t>(oc)] += dym.row(oc).sum();
          if (dx) {
            Eigen::Map<detail::RowMat<T>>(cols.data(), k, p).noalias() = wm.transpose() * dym;
            detail::col2im(cols.data(), *dx, in, wv.h, wv.w, g, dy.h, dy.w);
          }
        }
      };
    return out;
  }

  Var relu(Var x) {
    Tensor4<T> y = value(x);
    for (auto& v : y.data) v = v > T(0) ? v : T(0);
    Var out = push(std::move(y), nullptr, any_grad({x}));
    relu_inputs_.push_back(x);
    if (wants(out))
      nodes_[static_cast<std::size_t>(out)].backward = [x](Graph& gr, const Tensor4<T>& dy) {
        const auto& xv = gr.value(x).data;
        auto& dx = gr.grad_buffer(x).data;
        for (std::size_t i = 0; i < dx.size(); ++i)
          if (xv[i] > T(0)) dx[i] += dy.data[i];
      };
    return out;
  }

  Var add(Var a, Var b) {
    const auto& av = value(a);
    const auto& bv = value(b);
    if (!av.same_shape(bv)) throw InvalidArgument("add shape mismatch: " + av.shape_string() + " vs " + bv.shape_string());
    Tensor4<T> y = av;
    for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] += bv.data[i];
    Var out = push(std::move(y), nullptr, any_grad({a, b}));
    if (wants(out))
      nodes_[static_cast<std::size_t>(out)].backward = [a, b](Graph& gr, const Tensor4<T>& dy) {
        for (Var v : {a, b}) {
          if (!gr.needs(v)) continue;
          auto& d = gr.grad_buffer(v).data;
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy.data[i];
        }
      };
    return out;
  }

  /// Channel concatenation.
  Var concat(Var a, Var b) {
    const auto& av = value(a);
    const auto& bv = value(b);
    if (av.n != bv.n || av.h != bv.h || av.w != bv.w)
      throw InvalidArgument("concat shape mismatch: " + av.shape_string() + " vs " + bv.shape_string());
    Tensor4<T> y(av.n, av.c + bv.c, av.h, av.w);
    const std::size_t ps = y.plane_size();
    for (int in = 0; in < y.n; ++in) {
      std::copy(av.plane(in, 0), av.plane(in, 0) + av.c * ps, y.plane(in, 0));
      std::copy(bv.plane(in, 0), bv.plane(in, 0) + bv.c * ps, y.plane(in, av.c));
    }
    Var out = push(std::move(y), nullptr, any_grad({a, b}));
    if (wants(out))
      nodes_[static_cast<std::size_t>(out)].backward = [a, b](Graph& gr, const Tensor4<T>& dy) {
        const int ca = gr.value(a).c;
        const std::size_t ps = dy.plane_size();
        for (int in = 0; in < dy.n; ++in) {
          if (gr.needs(a)) {
            T* d = gr.grad_buffer(a).plane(in, 0);
            const T* s = dy.plane(in, 0);
            for (std::size_t i = 0; i < ca * ps; ++i) d[i] += s[i];
          }
          if (gr.needs(b)) {
            auto& gb = gr.grad_buffer(b);
            T* d = gb.plane(in, 0);
            const T* s = dy.plane(in, ca);
            for (std::size_t i = 0; i < gb.c * ps; ++i) d[i] += s[i];
          }
        }
      };
    return out;
  }

  Var upsample2(Var x) {
    Var out = push(neural::upsample2(value(x)), nullptr, any_grad({x}));
    if (wants(out))
      nodes_[static_cast<std::size_t>(out)].backward = [x](Graph& gr, const Tensor4<T>& dy) {
        auto& dx = gr.grad_buffer(x);
        for (int in = 0; in < dy.n; ++in)
          for (int c = 0; c < dy.c; ++c)
            for (int yy = 0; yy < dy.h; ++yy)
              for (int xx = 0; xx < dy.w; ++xx) dx.at(in, c, yy / 2, xx / 2) += dy.at(in, c, yy, xx);
      };
    return out;
  }

  Var downsample2(Var x) {
    Var out = push(neural::downsample2(value(x)), nullptr, any_grad({x}));
    if (wants(out))
      nodes_[static_cast<std::size_t>(out)].backward = [x](Graph& gr, const Tensor4<T>& dy) {
        auto& dx = gr.grad_buffer(x);
        for (int in = 0; in < dy.n; ++in)
          for (int c = 0; c < dy.c; ++c)
            for (int yy = 0; yy < dx.h; ++yy)
              for (int xx = 0; xx < dx.w; ++xx) dx.at(in, c, yy, xx) += T(0.25) * dy.at(in, c, yy / 2, xx / 2);
      };
    return out;
  }

  /// Propagates the given output gradients through the recorded tape.
  void backward(const std::vector<std::pair<Var, Tensor4<T>>>& seeds) {
    require(record_, "backward on a graph built without recording");
    for (const auto& [v, g] : seeds) {
      if (!value(v).same_shape(g)) throw InvalidArgument("seed gradient shape mismatch");
      if (!needs(v)) continue;
      auto& buf = grad_buffer(v);
      for (std::size_t i = 0; i < buf.numel(); ++i) buf.data[i] += g.data[i];
    }
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.numel() == 0) continue;
      // Closures only touch gradients of earlier nodes, so n.grad stays put.
      n.backward(*this, n.grad);
    }
  }

 private:
  struct Node {
    Tensor4<T> own;
    const Tensor4<T>* external = nullptr;
    bool requires_grad = false;
    Tensor4<T> grad;
    std::function<void(Graph&, const Tensor4<T>&)> backward;
  };

  Var push(Tensor4<T> v, const Tensor4<T>* ext, bool requires_grad) {
    Node n;
    n.own = std::move(v);
    n.external = ext;
    n.requires_grad = record_ && requires_grad;
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
  }

  bool any_grad(std::initializer_list<Var> vs) const {
    return std::any_of(vs.begin(), vs.end(), [this](Var v) { return needs(v); });
  }
  bool wants(Var v) const { return nodes_[static_cast<std::size_t>(v)].requires_grad; }
  bool needs(Var v) const { return v >= 0 && nodes_[static_cast<std::size_t>(v)].requires_grad; }

  Tensor4<T>& grad_buffer(Var v) {
    Node& n = nodes_[static_cast<std::size_t>(v)];
    if (n.grad.numel() == 0) {
      const auto& val = value(v);
      n.grad = Tensor4<T>(val.n, val.c, val.h, val.w);
    }
    return n.grad;
  }

  bool record_;
  std::vector<Node> nodes_;
  std::vector<Var> relu_inputs_;
};

}  // namespace eodeblur::neural
