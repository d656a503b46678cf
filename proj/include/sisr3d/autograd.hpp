#pragma once

// Minimal reverse-mode automatic differentiation over 5-axis tensors
// (N, C, D, H, W). Every op records a closure that maps the output gradient
// onto its inputs; backward() replays them in reverse topological order.
//
// Only the layer set needed by the super-resolution architectures exists:
// 3x3x3 convolution (stride 1 or 2), 2x2x2 max-pooling, trilinear x2 / x0.5
// resizing, leaky ReLU, addition, channel concatenation and an MSE loss.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sisr3d/error.hpp"
#include "sisr3d/interp.hpp"

namespace sisr3d::ag {

struct Shape5 {
  std::array<std::int64_t, 5> dims{1, 1, 1, 1, 1};

  Shape5() = default;
  Shape5(std::int64_t n, std::int64_t c, std::int64_t d, std::int64_t h, std::int64_t w)
      : dims{n, c, d, h, w} {}

  std::int64_t n() const { return dims[0]; }
  std::int64_t c() const { return dims[1]; }
  std::int64_t d() const { return dims[2]; }
  std::int64_t h() const { return dims[3]; }
  std::int64_t w() const { return dims[4]; }
  std::int64_t spatial() const { return dims[2] * dims[3] * dims[4]; }
  std::int64_t numel() const { return dims[0] * dims[1] * spatial(); }

  friend bool operator==(const Shape5&, const Shape5&) = default;
};

inline std::string to_string(const Shape5& s) {
  std::ostringstream os;
  os << "(" << s.n() << "," << s.c() << "," << s.d() << "," << s.h() << "," << s.w() << ")";
  return os.str();
}

using BackwardFn = std::function<void(std::span<const double> grad_out)>;

namespace detail {

struct Node {
  Shape5 shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool consumed = false;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

// Disables graph recording in the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode(); }

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape5& shape, bool requires_grad = false) {
    return from(shape, std::vector<double>(static_cast<std::size_t>(shape.numel()), 0.0), requires_grad);
  }

  static Tensor from(const Shape5& shape, std::vector<double> values, bool requires_grad = false) {
    for (auto d : shape.dims) sisr3d::detail::require(d > 0, "tensor dims must be positive");
    sisr3d::detail::require(static_cast<std::int64_t>(values.size()) == shape.numel(),
                            "tensor value count does not match shape " + to_string(shape));
    auto node = std::make_shared<detail::Node>();
    node->shape = shape;
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  bool defined() const { return node_ != nullptr; }
  const Shape5& shape() const { return node_->shape; }
  std::int64_t numel() const { return node_->shape.numel(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> values() const { return node_->value; }
  // Direct write access for optimizers and initializers; never call while a
  // graph that captured this tensor is still pending backward.
  std::span<double> mutable_values() { return node_->value; }

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad; }
  void zero_grad() {
    if (has_grad()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  double item() const {
    sisr3d::detail::require(numel() == 1, "item() on non-scalar tensor");
    return node_->value[0];
  }

  Tensor detach() const { return from(shape(), node_->value, false); }

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend Tensor make_op(const Shape5&, std::vector<double>, std::initializer_list<Tensor>, BackwardFn);

  std::shared_ptr<detail::Node> node_;
};

// Gradient buffer of `t` for a backward closure to accumulate into; empty when
// `t` does not require a gradient.
inline std::span<double> grad_sink(const Tensor& t) {
  if (!t.requires_grad()) return {};
  t.node()->ensure_grad();
  return t.node()->grad;
}

// Builds an op result. The closure is retained only when recording is enabled
// and at least one parent requires a gradient.
inline Tensor make_op(const Shape5& shape, std::vector<double> values, std::initializer_list<Tensor> parents,
                      BackwardFn fn) {
  Tensor out = Tensor::from(shape, std::move(values), false);
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  for (const auto& p : parents) node.parents.push_back(p.node());
  node.backward_fn = std::move(fn);
  return out;
}

// Reverse sweep from a scalar loss. Gradients accumulate into every tensor
// that requires one; the graph is released afterwards, so a second call on
// the same loss is a StateError.
inline void backward(const Tensor& loss) {
  if (!loss.defined() || !loss.requires_grad())
    throw StateError("backward: loss is not attached to a recorded graph");
  sisr3d::detail::require(loss.numel() == 1, "backward: loss must be a scalar");
  auto* root = loss.node().get();
  if (root->consumed) throw StateError("backward: graph already consumed by a previous backward");

  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward_fn) {
      n->ensure_grad();
      n->backward_fn(n->grad);
    }
  }
  for (detail::Node* n : order) {
    if (n->backward_fn || !n->parents.empty()) {
      n->backward_fn = nullptr;
      n->parents.clear();
      n->consumed = true;
    }
  }
}

// ---------------------------------------------------------------------------
// Kernels

namespace kernels {

// y[i] += sum over the 3x3 in-plane taps w[kh*3+kw] * x[i + kh*row + kw].
inline void taps9(double* __restrict y, const double* __restrict w, const double* __restrict x,
                  std::int64_t row, std::int64_t n) {
  const double w0 = w[0], w1 = w[1], w2 = w[2], w3 = w[3], w4 = w[4], w5 = w[5], w6 = w[6], w7 = w[7], w8 = w[8];
  const double* __restrict r0 = x;
  const double* __restrict r1 = x + row;
  const double* __restrict r2 = x + 2 * row;
  for (std::int64_t i = 0; i < n; ++i)
    y[i] += w0 * r0[i] + w1 * r0[i + 1] + w2 * r0[i + 2] + w3 * r1[i] + w4 * r1[i + 1] + w5 * r1[i + 2] +
            w6 * r2[i] + w7 * r2[i + 1] + w8 * r2[i + 2];
}

// Transposed form: y[j] += sum w[kh*3+kw] * g[j - kh*row - kw]. `g` must be
// readable at negative offsets down to -(2*row + 2).
inline void taps9_adjoint(double* __restrict y, const double* __restrict w, const double* __restrict g,
                          std::int64_t row, std::int64_t n) {
  const double w0 = w[0], w1 = w[1], w2 = w[2], w3 = w[3], w4 = w[4], w5 = w[5], w6 = w[6], w7 = w[7], w8 = w[8];
  const double* __restrict r0 = g;
  const double* __restrict r1 = g - row;
  const double* __restrict r2 = g - 2 * row;
  for (std::int64_t i = 0; i < n; ++i)
    y[i] += w0 * r0[i] + w1 * r0[i - 1] + w2 * r0[i - 2] + w3 * r1[i] + w4 * r1[i - 1] + w5 * r1[i - 2] +
            w6 * r2[i] + w7 * r2[i - 1] + w8 * r2[i - 2];
}

// out[kh*3+kw] += sum_i g[i] * x[i + kh*row + kw]. The lane split of the
// reduction is fixed at compile time, so results do not vary run to run.
inline void taps9_correlate(double* __restrict out, const double* __restrict g, const double* __restrict x,
                            std::int64_t row, std::int64_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0, s5 = 0, s6 = 0, s7 = 0, s8 = 0;
  const double* __restrict r0 = x;
  const double* __restrict r1 = x + row;
  const double* __restrict r2 = x + 2 * row;
#pragma omp simd reduction(+ : s0, s1, s2, s3, s4, s5, s6, s7, s8)
  for (std::int64_t i = 0; i < n; ++i) {
    const double gv = g[i];
    s0 += gv * r0[i];
    s1 += gv * r0[i + 1];
    s2 += gv * r0[i + 2];
    s3 += gv * r1[i];
    s4 += gv * r1[i + 1];
    s5 += gv * r1[i + 2];
    s6 += gv * r2[i];
    s7 += gv * r2[i + 1];
    s8 += gv * r2[i + 2];
  }
  out[0] += s0;
  out[1] += s1;
  out[2] += s2;
  out[3] += s3;
  out[4] += s4;
  out[5] += s5;
  out[6] += s6;
  out[7] += s7;
  out[8] += s8;
}

// Geometry of a 3^3 "valid" correlation evaluated on a zero-padded block.
// Output position (d, h, w) is stored at d*plane + h*Wp + w, so that every
// kernel tap becomes a contiguous sweep of length `span` over the padded input.
struct ConvGeometry {
  std::int64_t D, H, W, pad, stride;
  std::int64_t Dp, Hp, Wp, plane, volume;
  std::int64_t Do, Ho, Wo;  // strided output dims
  std::int64_t span;

  ConvGeometry(std::int64_t d, std::int64_t h, std::int64_t w, std::int64_t p, std::int64_t s)
      : D(d), H(h), W(w), pad(p), stride(s) {
    Dp = D + 2 * p;
    Hp = H + 2 * p;
    Wp = W + 2 * p;
    plane = Hp * Wp;
    volume = Dp * plane;
    const auto out_dim = [&](std::int64_t padded) { return padded < 3 ? 0 : (padded - 3) / s + 1; };
    Do = out_dim(Dp);
    Ho = out_dim(Hp);
    Wo = out_dim(Wp);
    span = (Dp - 3) * plane + (Hp - 3) * Wp + (Wp - 2);
  }

  std::int64_t out_index(std::int64_t d, std::int64_t h, std::int64_t w) const {
    return (d * stride) * plane + (h * stride) * Wp + w * stride;
  }

  void pad_into(const double* src, std::int64_t channels, std::vector<double>& dst) const {
    dst.assign(static_cast<std::size_t>(channels * volume), 0.0);
    for (std::int64_t c = 0; c < channels; ++c)
      for (std::int64_t d = 0; d < D; ++d)
        for (std::int64_t h = 0; h < H; ++h)
          std::memcpy(dst.data() + c * volume + (d + pad) * plane + (h + pad) * Wp + pad,
                      src + ((c * D + d) * H + h) * W, static_cast<std::size_t>(W) * sizeof(double));
  }
};

}  // namespace kernels

// ---------------------------------------------------------------------------
// Ops

// Cross-correlation with a (Cout, Cin, 3, 3, 3) kernel and a (Cout, 1, 1, 1, 1)
// bias. Output extent per axis is floor((S + 2p - 3) / stride) + 1.
inline Tensor conv3d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding) {
  using sisr3d::detail::require;
  const Shape5& xs = x.shape();
  const Shape5& ws = weight.shape();
  require(stride == 1 || stride == 2, "conv3d: stride must be 1 or 2");
  require(padding == 0 || padding == 1, "conv3d: padding must be 0 or 1");
  require(ws.d() == 3 && ws.h() == 3 && ws.w() == 3, "conv3d: kernel must be 3x3x3");
  require(ws.c() == xs.c(), "conv3d: input has " + std::to_string(xs.c()) + " channels, kernel expects " +
                                std::to_string(ws.c()));
  require(bias.numel() == ws.n(), "conv3d: bias length must equal output channels");
  const kernels::ConvGeometry g(xs.d(), xs.h(), xs.w(), padding, stride);
  require(g.Do >= 1 && g.Ho >= 1 && g.Wo >= 1, "conv3d: degenerate output dims for input " + to_string(xs));

  const std::int64_t N = xs.n(), Cin = xs.c(), Cout = ws.n();
  const Shape5 os(N, Cout, g.Do, g.Ho, g.Wo);
  std::vector<double> out(static_cast<std::size_t>(os.numel()));
  std::vector<double> xp, acc(static_cast<std::size_t>(g.span));
  const double* wv = weight.values().data();
  const double* bv = bias.values().data();
  for (std::int64_t n = 0; n < N; ++n) {
    g.pad_into(x.values().data() + n * Cin * xs.spatial(), Cin, xp);
    for (std::int64_t co = 0; co < Cout; ++co) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::int64_t ci = 0; ci < Cin; ++ci) {
        const double* wk = wv + (co * Cin + ci) * 27;
        const double* xc = xp.data() + ci * g.volume;
        for (std::int64_t kd = 0; kd < 3; ++kd) kernels::taps9(acc.data(), wk + 9 * kd, xc + kd * g.plane, g.Wp, g.span);
      }
      double* o = out.data() + (n * Cout + co) * os.spatial();
      for (std::int64_t d = 0; d < g.Do; ++d)
        for (std::int64_t h = 0; h < g.Ho; ++h)
          for (std::int64_t w = 0; w < g.Wo; ++w) *o++ = acc[static_cast<std::size_t>(g.out_index(d, h, w))] + bv[co];
    }
  }

  return make_op(os, std::move(out), {x, weight, bias}, [x, weight, bias, g, os](std::span<const double> gout) {
    const std::int64_t N = os.n(), Cout = os.c(), Cin = x.shape().c();
    auto gx = grad_sink(x);
    auto gw = grad_sink(weight);
    auto gb = grad_sink(bias);
    const double* wv = weight.values().data();
    std::vector<double> xp, gp(static_cast<std::size_t>(Cout * g.span)), gxp, gpm;
    for (std::int64_t n = 0; n < N; ++n) {
      std::fill(gp.begin(), gp.end(), 0.0);
      for (std::int64_t co = 0; co < Cout; ++co) {
        const double* go = gout.data() + (n * Cout + co) * os.spatial();
        double* dst = gp.data() + co * g.span;
        double bsum = 0.0;
        for (std::int64_t d = 0; d < g.Do; ++d)
          for (std::int64_t h = 0; h < g.Ho; ++h)
            for (std::int64_t w = 0; w < g.Wo; ++w) {
              dst[g.out_index(d, h, w)] = *go;
              bsum += *go++;
            }
        if (!gb.empty()) gb[static_cast<std::size_t>(co)] += bsum;
      }
      if (!gw.empty()) {
        g.pad_into(x.values().data() + n * Cin * x.shape().spatial(), Cin, xp);
        for (std::int64_t co = 0; co < Cout; ++co)
          for (std::int64_t ci = 0; ci < Cin; ++ci) {
            double* gwk = gw.data() + (co * Cin + ci) * 27;
            const double* xc = xp.data() + ci * g.volume;
            for (std::int64_t kd = 0; kd < 3; ++kd)
              kernels::taps9_correlate(gwk + 9 * kd, gp.data() + co * g.span, xc + kd * g.plane, g.Wp, g.span);
          }
      }
      if (!gx.empty()) {
        // gp is re-laid with a zero margin so the adjoint taps can read
        // behind position 0 and past the end of the span.
        const std::int64_t margin = 2 * g.plane + 2 * g.Wp + 2;
        gpm.assign(static_cast<std::size_t>(Cout * (g.volume + margin)), 0.0);
        for (std::int64_t co = 0; co < Cout; ++co)
          std::memcpy(gpm.data() + co * (g.volume + margin) + margin, gp.data() + co * g.span,
                      static_cast<std::size_t>(g.span) * sizeof(double));
        gxp.assign(static_cast<std::size_t>(Cin * g.volume), 0.0);
        for (std::int64_t ci = 0; ci < Cin; ++ci) {
          double* gc = gxp.data() + ci * g.volume;
          for (std::int64_t co = 0; co < Cout; ++co) {
            const double* wk = wv + (co * Cin + ci) * 27;
            const double* src = gpm.data() + co * (g.volume + margin) + margin;
            for (std::int64_t kd = 0; kd < 3; ++kd)
              kernels::taps9_adjoint(gc, wk + 9 * kd, src - kd * g.plane, g.Wp, g.volume);
          }
        }
        double* gxn = gx.data() + n * Cin * x.shape().spatial();
        for (std::int64_t ci = 0; ci < Cin; ++ci)
          for (std::int64_t d = 0; d < g.D; ++d)
            for (std::int64_t h = 0; h < g.H; ++h) {
              const double* src = gxp.data() + ci * g.volume + (d + g.pad) * g.plane + (h + g.pad) * g.Wp + g.pad;
              double* dst = gxn + ((ci * g.D + d) * g.H + h) * g.W;
              for (std::int64_t w = 0; w < g.W; ++w) dst[w] += src[w];
            }
      }
    }
  });
}

// 2x2x2 max-pooling with stride 2. Ties go to the lowest linear index.
inline Tensor maxpool3d(const Tensor& x) {
  const Shape5& s = x.shape();
  sisr3d::detail::require(s.d() % 2 == 0 && s.h() % 2 == 0 && s.w() % 2 == 0,
                          "maxpool3d: spatial dims must be even, got " + to_string(s));
  const Shape5 os(s.n(), s.c(), s.d() / 2, s.h() / 2, s.w() / 2);
  std::vector<double> out(static_cast<std::size_t>(os.numel()));
  std::vector<std::int64_t> argmax(out.size());
  const double* xv = x.values().data();
  std::size_t o = 0;
  for (std::int64_t nc = 0; nc < s.n() * s.c(); ++nc) {
    const std::int64_t base = nc * s.spatial();
    for (std::int64_t d = 0; d < os.d(); ++d)
      for (std::int64_t h = 0; h < os.h(); ++h)
        for (std::int64_t w = 0; w < os.w(); ++w, ++o) {
          std::int64_t best = -1;
          double best_v = 0.0;
          for (std::int64_t a = 0; a < 2; ++a)
            for (std::int64_t b = 0; b < 2; ++b)
              for (std::int64_t c = 0; c < 2; ++c) {
                const std::int64_t idx = base + ((2 * d + a) * s.h() + (2 * h + b)) * s.w() + (2 * w + c);
                if (best < 0 || xv[idx] > best_v) {
                  best = idx;
                  best_v = xv[idx];
                }
              }
          out[o] = best_v;
          argmax[o] = best;
        }
  }
  return make_op(os, std::move(out), {x}, [x, argmax = std::move(argmax)](std::span<const double> gout) {
    auto gx = grad_sink(x);
    for (std::size_t i = 0; i < argmax.size(); ++i) gx[static_cast<std::size_t>(argmax[i])] += gout[i];
  });
}

enum class ResizeFactor { half, twice };

// Separable trilinear resampling with half-pixel centres. Linear in x, so the
// backward pass is the exact transpose of the three axis passes.
inline Tensor trilinear_resize(const Tensor& x, ResizeFactor factor) {
  const Shape5& s = x.shape();
  if (factor == ResizeFactor::half)
    sisr3d::detail::require(s.d() % 2 == 0 && s.h() % 2 == 0 && s.w() % 2 == 0,
                            "trilinear_resize: halving needs even spatial dims, got " + to_string(s));
  const auto scale = [factor](std::int64_t v) { return factor == ResizeFactor::half ? v / 2 : v * 2; };
  const std::int64_t NC = s.n() * s.c();
  const std::int64_t D = s.d(), H = s.h(), W = s.w();
  const std::int64_t Do = scale(D), Ho = scale(H), Wo = scale(W);
  const Shape5 os(s.n(), s.c(), Do, Ho, Wo);

  const std::int64_t dw[3] = {NC * D * H, W, 1};
  const std::int64_t dh[3] = {NC * D, H, Wo};
  const std::int64_t dd[3] = {NC, D, Ho * Wo};
  std::vector<double> t1(static_cast<std::size_t>(NC * D * H * Wo));
  resample_axis(x.values().data(), t1.data(), dw, 1, Wo);
  std::vector<double> t2(static_cast<std::size_t>(NC * D * Ho * Wo));
  resample_axis(t1.data(), t2.data(), dh, 1, Ho);
  std::vector<double> out(static_cast<std::size_t>(os.numel()));
  resample_axis(t2.data(), out.data(), dd, 1, Do);

  return make_op(os, std::move(out), {x}, [=](std::span<const double> gout) {
    std::int64_t ddims[3] = {dd[0], dd[1], dd[2]};
    std::int64_t hdims[3] = {dh[0], dh[1], dh[2]};
    std::int64_t wdims[3] = {dw[0], dw[1], dw[2]};
    std::vector<double> g2(static_cast<std::size_t>(NC * D * Ho * Wo), 0.0);
    resample_axis_adjoint(gout.data(), g2.data(), ddims, 1, Do);
    std::vector<double> g1(static_cast<std::size_t>(NC * D * H * Wo), 0.0);
    resample_axis_adjoint(g2.data(), g1.data(), hdims, 1, Ho);
    std::vector<double> g0(static_cast<std::size_t>(NC * D * H * W), 0.0);
    resample_axis_adjoint(g1.data(), g0.data(), wdims, 1, Wo);
    auto gx = grad_sink(x);
    for (std::size_t i = 0; i < g0.size(); ++i) gx[i] += g0[i];
  });
}

// Derivative at exactly zero is taken as 1.
inline Tensor leaky_relu(const Tensor& x, double slope) {
  sisr3d::detail::require(slope > 0.0 && slope < 1.0, "leaky_relu: slope must lie in (0, 1)");
  std::vector<double> out(x.values().begin(), x.values().end());
  for (auto& v : out)
    if (v < 0.0) v *= slope;
  return make_op(x.shape(), std::move(out), {x}, [x, slope](std::span<const double> gout) {
    auto gx = grad_sink(x);
    const auto xv = x.values();
    for (std::size_t i = 0; i < gout.size(); ++i) gx[i] += xv[i] >= 0.0 ? gout[i] : slope * gout[i];
  });
}

inline Tensor add(const Tensor& x, const Tensor& y) {
  sisr3d::detail::require(x.shape() == y.shape(), "add: shape mismatch " + to_string(x.shape()) + " vs " +
                                                      to_string(y.shape()));
  std::vector<double> out(x.values().begin(), x.values().end());
  const auto yv = y.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += yv[i];
  return make_op(x.shape(), std::move(out), {x, y}, [x, y](std::span<const double> gout) {
    for (const Tensor* t : {&x, &y}) {
      auto g = grad_sink(*t);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i];
    }
  });
}

// Channel-axis concatenation, x first.
inline Tensor concat_channels(const Tensor& x, const Tensor& y) {
  const Shape5& a = x.shape();
  const Shape5& b = y.shape();
  sisr3d::detail::require(a.n() == b.n() && a.d() == b.d() && a.h() == b.h() && a.w() == b.w(),
                          "concat_channels: batch/spatial mismatch " + to_string(a) + " vs " + to_string(b));
  const Shape5 os(a.n(), a.c() + b.c(), a.d(), a.h(), a.w());
  const std::int64_t xa = a.c() * a.spatial(), yb = b.c() * b.spatial();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(os.numel()));
  for (std::int64_t n = 0; n < a.n(); ++n) {
    out.insert(out.end(), x.values().begin() + n * xa, x.values().begin() + (n + 1) * xa);
    out.insert(out.end(), y.values().begin() + n * yb, y.values().begin() + (n + 1) * yb);
  }
  return make_op(os, std::move(out), {x, y}, [x, y, xa, yb](std::span<const double> gout) {
    auto gx = grad_sink(x);
    auto gy = grad_sink(y);
    const std::int64_t N = x.shape().n();
    for (std::int64_t n = 0; n < N; ++n) {
      const double* g = gout.data() + n * (xa + yb);
      if (!gx.empty())
        for (std::int64_t i = 0; i < xa; ++i) gx[static_cast<std::size_t>(n * xa + i)] += g[i];
      if (!gy.empty())
        for (std::int64_t i = 0; i < yb; ++i) gy[static_cast<std::size_t>(n * yb + i)] += g[xa + i];
    }
  });
}

// Channels [begin, begin + count) of x.
inline Tensor slice_channels(const Tensor& x, std::int64_t begin, std::int64_t count) {
  const Shape5& s = x.shape();
  sisr3d::detail::require(begin >= 0 && count > 0 && begin + count <= s.c(), "slice_channels: range out of bounds");
  const Shape5 os(s.n(), count, s.d(), s.h(), s.w());
  const std::int64_t sp = s.spatial();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(os.numel()));
  for (std::int64_t n = 0; n < s.n(); ++n) {
    const auto from = x.values().begin() + (n * s.c() + begin) * sp;
    out.insert(out.end(), from, from + count * sp);
  }
  return make_op(os, std::move(out), {x}, [x, begin, count, sp](std::span<const double> gout) {
    auto gx = grad_sink(x);
    const Shape5& s = x.shape();
    for (std::int64_t n = 0; n < s.n(); ++n)
      for (std::int64_t i = 0; i < count * sp; ++i)
        gx[static_cast<std::size_t>((n * s.c() + begin) * sp + i)] += gout[static_cast<std::size_t>(n * count * sp + i)];
  });
}

inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_op(Shape5(1, 1, 1, 1, 1), {s}, {x}, [x](std::span<const double> gout) {
    auto gx = grad_sink(x);
    for (auto& g : gx) g += gout[0];
  });
}

inline Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  sisr3d::detail::require(pred.shape() == target.shape(), "mse_loss: shape mismatch " + to_string(pred.shape()) +
                                                              " vs " + to_string(target.shape()));
  const auto p = pred.values();
  const auto t = target.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - t[i];
    acc += d * d;
  }
  const double count = static_cast<double>(p.size());
  return make_op(Shape5(1, 1, 1, 1, 1), {acc / count}, {pred, target},
                 [pred, target, count](std::span<const double> gout) {
                   const auto p = pred.values();
                   const auto t = target.values();
                   const double k = 2.0 * gout[0] / count;
                   auto gp = grad_sink(pred);
                   auto gt = grad_sink(target);
                   for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += k * (p[i] - t[i]);
                   for (std::size_t i = 0; i < gt.size(); ++i) gt[i] -= k * (p[i] - t[i]);
                 });
}

// ---------------------------------------------------------------------------
// Gradient verification

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::int64_t worst_index = -1;
  bool passed = false;
};

// Compares the analytic gradient of scalar program f at x with central
// differences. Relative error per element is |a - n| / max(|a|, |n|, 1e-3).
inline GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h,
                                  double tol) {
  sisr3d::detail::require(h >= 1e-6 && h <= 1e-3, "grad_check: step must lie in [1e-6, 1e-3]");
  Tensor probe = Tensor::from(x.shape(), std::vector<double>(x.values().begin(), x.values().end()), true);
  Tensor y = f(probe);
  sisr3d::detail::require(y.numel() == 1, "grad_check: program must be scalar-valued");
  backward(y);
  const std::vector<double> analytic(probe.grad().begin(), probe.grad().end());

  GradCheckReport report;
  NoGradGuard no_grad;
  std::vector<double> work(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < work.size(); ++i) {
    const double orig = work[i];
    work[i] = orig + h;
    const double fp = f(Tensor::from(x.shape(), work)).item();
    work[i] = orig - h;
    const double fm = f(Tensor::from(x.shape(), work)).item();
    work[i] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    const double abs_err = std::abs(analytic[i] - numeric);
    const double rel = abs_err / std::max({std::abs(analytic[i]), std::abs(numeric), 1e-3});
    report.max_abs_error = std::max(report.max_abs_error, abs_err);
    if (rel > report.max_rel_error || report.worst_index < 0) {
      report.max_rel_error = std::max(report.max_rel_error, rel);
      report.worst_index = static_cast<std::int64_t>(i);
    }
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

// ---------------------------------------------------------------------------
// Named-array archive: <base>.bin holds little-endian float64 values back to
// back; <base>.manifest lists header lines followed by `param <name> <shape>
// <offset>` records (offset in elements) in construction order.

struct NamedArray {
  std::string name;
  Tensor tensor;
};

inline void write_archive(const std::filesystem::path& base, const std::vector<std::string>& header,
                          const std::vector<NamedArray>& arrays) {
  if (base.empty()) throw IoError("checkpoint path is empty");
  auto bin_path = base;
  bin_path += ".bin";
  auto man_path = base;
  man_path += ".manifest";
  std::ofstream bin(bin_path, std::ios::binary | std::ios::trunc);
  std::ofstream man(man_path, std::ios::trunc);
  if (!bin || !man) throw IoError("cannot write checkpoint at " + base.string());
  for (const auto& line : header) man << line << "\n";
  std::int64_t offset = 0;
  for (const auto& a : arrays) {
    const Shape5& s = a.tensor.shape();
    man << "param " << a.name << " " << s.n() << "x" << s.c() << "x" << s.d() << "x" << s.h() << "x" << s.w()
        << " " << offset << "\n";
    for (double v : a.tensor.values()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      char bytes[8];
      for (int k = 0; k < 8; ++k) bytes[k] = static_cast<char>((bits >> (8 * k)) & 0xFF);
      bin.write(bytes, 8);
    }
    offset += a.tensor.numel();
  }
  if (!bin || !man) throw IoError("short write to checkpoint at " + base.string());
}

struct Archive {
  std::vector<std::string> header;
  std::vector<NamedArray> arrays;
};

inline Archive read_archive(const std::filesystem::path& base) {
  if (base.empty()) throw IoError("checkpoint path is empty");
  auto bin_path = base;
  bin_path += ".bin";
  auto man_path = base;
  man_path += ".manifest";
  std::ifstream man(man_path);
  if (!man) throw IoError("cannot open " + man_path.string());
  std::ifstream bin(bin_path, std::ios::binary | std::ios::ate);
  if (!bin) throw IoError("cannot open " + bin_path.string());
  const auto bytes = static_cast<std::int64_t>(bin.tellg());
  bin.seekg(0);
  std::vector<unsigned char> raw(static_cast<std::size_t>(bytes));
  bin.read(reinterpret_cast<char*>(raw.data()), bytes);

  Archive ar;
  std::string line;
  std::int64_t expected_offset = 0;
  while (std::getline(man, line)) {
    if (line.rfind("param ", 0) != 0) {
      if (!line.empty()) ar.header.push_back(line);
      continue;
    }
    std::istringstream is(line.substr(6));
    std::string name, shape_str;
    std::int64_t offset = -1;
    if (!(is >> name >> shape_str >> offset)) throw FormatError("corrupt manifest line: " + line);
    Shape5 shape;
    std::istringstream ss(shape_str);
    std::string tok;
    std::size_t k = 0;
    while (std::getline(ss, tok, 'x')) {
      if (k >= 5) throw FormatError("corrupt shape in manifest: " + shape_str);
      try {
        shape.dims[k++] = std::stoll(tok);
      } catch (const std::logic_error&) {
        throw FormatError("corrupt shape in manifest: " + shape_str);
      }
    }
    if (k != 5 || offset != expected_offset) throw FormatError("corrupt manifest line: " + line);
    for (auto d : shape.dims)
      if (d <= 0) throw FormatError("corrupt shape in manifest: " + shape_str);
    const std::int64_t n = shape.numel();
    if ((offset + n) * 8 > bytes) throw FormatError("checkpoint binary shorter than manifest declares");
    std::vector<double> values(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b)
        bits |= static_cast<std::uint64_t>(raw[static_cast<std::size_t>((offset + i) * 8 + b)]) << (8 * b);
      std::memcpy(&values[static_cast<std::size_t>(i)], &bits, sizeof bits);
    }
    ar.arrays.push_back({name, Tensor::from(shape, std::move(values), true)});
    expected_offset += n;
  }
  if (expected_offset * 8 != bytes) throw FormatError("checkpoint binary length does not match manifest");
  return ar;
}

}  // namespace sisr3d::ag
