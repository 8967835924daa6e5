#include "ops.hpp"

#include <algorithm>
#include <cmath>

namespace lab {

namespace {

constexpr real kSeluLambda = real(1.0507009873554804934193349852946L);
constexpr real kSeluAlpha = real(1.6732632423543772848170429916717L);

void check_finite(const Tensor& t, const char* op) {
  if (!all_finite(t.value()))
    throw NumericError(std::string(op) + ": non-finite value in input tensor" +
                       (t.name().empty() ? "" : " '" + t.name() + "'"));
}

Tensor make_node(Shape shape, std::vector<real> value, std::vector<Tensor> inputs,
                 std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->inputs = std::move(inputs);
  n->backward = std::move(bw);
  return Tensor(std::move(n));
}

// right-aligned numpy-style broadcast
struct Bcast {
  Shape out;
  std::vector<std::int64_t> sa, sb;  // strides into a and b per out axis
  std::int64_t n;
};

Bcast broadcast(const Shape& a, const Shape& b, const char* op) {
  size_t rank = std::max(a.size(), b.size());
  Bcast bc;
  bc.out.resize(rank);
  bc.sa.resize(rank);
  bc.sb.resize(rank);
  std::vector<std::int64_t> stride_a(a.size()), stride_b(b.size());
  std::int64_t s = 1;
  for (int i = static_cast<int>(a.size()) - 1; i >= 0; --i) stride_a[i] = s, s *= a[i];
  s = 1;
  for (int i = static_cast<int>(b.size()) - 1; i >= 0; --i) stride_b[i] = s, s *= b[i];
  for (size_t i = 0; i < rank; ++i) {
    size_t ro = rank - 1 - i;
    int da = i < a.size() ? a[a.size() - 1 - i] : 1;
    int db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1)
      throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                       " are not broadcastable");
    bc.out[ro] = std::max(da, db);
    bc.sa[ro] = (i < a.size() && da != 1) ? stride_a[a.size() - 1 - i] : 0;
    bc.sb[ro] = (i < b.size() && db != 1) ? stride_b[b.size() - 1 - i] : 0;
  }
  bc.n = numel(bc.out);
  return bc;
}

template <typename FwdFn, typename BwdFn>
Tensor binary_bcast(const Tensor& a, const Tensor& b, const char* op, FwdFn fwd, BwdFn bwd) {
  check_finite(a, op);
  check_finite(b, op);
  Bcast bc = broadcast(a.shape(), b.shape(), op);
  std::vector<real> out(static_cast<size_t>(bc.n));
  size_t rank = bc.out.size();
  const auto& av = a.value();
  const auto& bv = b.value();
  if (a.shape() == b.shape()) {  // fast path
    for (std::int64_t k = 0; k < bc.n; ++k) out[k] = fwd(av[k], bv[k]);
  } else {
    std::vector<int> idx(rank, 0);
    std::int64_t ia = 0, ib = 0;
    for (std::int64_t k = 0; k < bc.n; ++k) {
      out[k] = fwd(av[ia], bv[ib]);
      for (int d = static_cast<int>(rank) - 1; d >= 0; --d) {
        ia += bc.sa[d];
        ib += bc.sb[d];
        if (++idx[d] < bc.out[d]) break;
        ia -= bc.sa[d] * bc.out[d];
        ib -= bc.sb[d] * bc.out[d];
        idx[d] = 0;
      }
    }
  }
  Tensor ta = a, tb = b;
  return make_node(bc.out, std::move(out), {a, b}, [ta, tb, bc, bwd](Node& n) {
    auto& ga = ta.grad();
    auto& gb = tb.grad();
    const auto& av = ta.value();
    const auto& bv = tb.value();
    size_t rank = bc.out.size();
    if (ta.shape() == tb.shape()) {
      for (std::int64_t k = 0; k < bc.n; ++k) {
        auto [da, db] = bwd(av[k], bv[k], n.grad[k]);
        ga[k] += da;
        gb[k] += db;
      }
      return;
    }
    std::vector<int> idx(rank, 0);
    std::int64_t ia = 0, ib = 0;
    for (std::int64_t k = 0; k < bc.n; ++k) {
      auto [da, db] = bwd(av[ia], bv[ib], n.grad[k]);
      ga[ia] += da;
      gb[ib] += db;
      for (int d = static_cast<int>(rank) - 1; d >= 0; --d) {
        ia += bc.sa[d];
        ib += bc.sb[d];
        if (++idx[d] < bc.out[d]) break;
        ia -= bc.sa[d] * bc.out[d];
        ib -= bc.sb[d] * bc.out[d];
        idx[d] = 0;
      }
    }
  });
}

template <typename FwdFn, typename DerivFn>
Tensor unary_ew(const Tensor& x, const char* op, FwdFn fwd, DerivFn deriv) {
  check_finite(x, op);
  const auto& xv = x.value();
  std::vector<real> out(xv.size());
  for (size_t k = 0; k < xv.size(); ++k) out[k] = fwd(xv[k]);
  Tensor tx = x;
  return make_node(x.shape(), std::move(out), {x}, [tx, deriv](Node& n) {
    auto& gx = tx.grad();
    const auto& xv = tx.value();
    for (size_t k = 0; k < xv.size(); ++k) gx[k] += deriv(xv[k], n.value[k]) * n.grad[k];
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_bcast(a, b, "add", [](real x, real y) { return x + y; },
                      [](real, real, real g) { return std::pair<real, real>{g, g}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_bcast(a, b, "sub", [](real x, real y) { return x - y; },
                      [](real, real, real g) { return std::pair<real, real>{g, -g}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_bcast(a, b, "mul", [](real x, real y) { return x * y; },
                      [](real x, real y, real g) { return std::pair<real, real>{g * y, g * x}; });
}

Tensor neg(const Tensor& x) {
  return unary_ew(x, "neg", [](real v) { return -v; }, [](real, real) { return real(-1); });
}

Tensor affine(const Tensor& x, real a, real b) {
  return unary_ew(x, "affine", [a, b](real v) { return a * v + b; },
                  [a](real, real) { return a; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_finite(a, "matmul");
  check_finite(b, "matmul");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2)
    throw ShapeError("matmul needs rank >= 2, got " + shape_str(sa) + " @ " + shape_str(sb));
  bool b_bcast = sb.size() == 2 && sa.size() > 2;
  if (!b_bcast && sa.size() != sb.size())
    throw ShapeError("matmul rank mismatch: " + shape_str(sa) + " @ " + shape_str(sb));
  std::int64_t batch = 1;
  for (size_t i = 0; i + 2 < sa.size(); ++i) {
    if (!b_bcast && sa[i] != sb[i])
      throw ShapeError("matmul batch mismatch: " + shape_str(sa) + " @ " + shape_str(sb));
    batch *= sa[i];
  }
  std::int64_t m = sa[sa.size() - 2], k = sa[sa.size() - 1];
  std::int64_t k2 = sb[sb.size() - 2], nn = sb[sb.size() - 1];
  if (k != k2)
    throw ShapeError("matmul inner dim mismatch: " + shape_str(sa) + " @ " + shape_str(sb));

  Shape out_shape(sa.begin(), sa.end() - 2);
  out_shape.push_back(static_cast<int>(m));
  out_shape.push_back(static_cast<int>(nn));
  std::vector<real> out(static_cast<size_t>(batch * m * nn), real(0));
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::int64_t t = 0; t < batch; ++t) {
    const real* A = av.data() + t * m * k;
    const real* B = bv.data() + (b_bcast ? 0 : t * k * nn);
    real* O = out.data() + t * m * nn;
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t l = 0; l < k; ++l) {
        real ail = A[i * k + l];
        const real* Br = B + l * nn;
        real* Or = O + i * nn;
        for (std::int64_t j = 0; j < nn; ++j) Or[j] += ail * Br[j];
      }
  }
  Tensor ta = a, tb = b;
  return make_node(out_shape, std::move(out), {a, b},
                   [ta, tb, batch, m, k, nn, b_bcast](Node& n) {
                     auto& ga = ta.grad();
                     auto& gb = tb.grad();
                     const auto& av = ta.value();
                     const auto& bv = tb.value();
                     for (std::int64_t t = 0; t < batch; ++t) {
                       const real* A = av.data() + t * m * k;
                       const real* B = bv.data() + (b_bcast ? 0 : t * k * nn);
                       const real* G = n.grad.data() + t * m * nn;
                       real* GA = ga.data() + t * m * k;
                       real* GB = gb.data() + (b_bcast ? 0 : t * k * nn);
                       // dA = G @ B^T
                       for (std::int64_t i = 0; i < m; ++i)
                         for (std::int64_t j = 0; j < nn; ++j) {
                           real g = G[i * nn + j];
                           if (g == real(0)) continue;
                           const real* Br = B + j;
                           for (std::int64_t l = 0; l < k; ++l) GA[i * k + l] += g * Br[l * nn];
                         }
                       // dB = A^T @ G
                       for (std::int64_t l = 0; l < k; ++l)
                         for (std::int64_t i = 0; i < m; ++i) {
                           real ail = A[i * k + l];
                           if (ail == real(0)) continue;
                           const real* Gr = G + i * nn;
                           real* GBr = GB + l * nn;
                           for (std::int64_t j = 0; j < nn; ++j) GBr[j] += ail * Gr[j];
                         }
                     }
                   });
}

Tensor transpose(const Tensor& x, int axis_a, int axis_b) {
  check_finite(x, "transpose");
  const Shape& s = x.shape();
  int r = static_cast<int>(s.size());
  if (axis_a < 0) axis_a += r;
  if (axis_b < 0) axis_b += r;
  if (axis_a < 0 || axis_a >= r || axis_b < 0 || axis_b >= r)
    throw ShapeError("transpose axes out of range for " + shape_str(s));
  Shape os = s;
  std::swap(os[axis_a], os[axis_b]);
  std::vector<std::int64_t> in_stride(r, 1), out_stride(r, 1);
  for (int i = r - 2; i >= 0; --i) in_stride[i] = in_stride[i + 1] * s[i + 1];
  for (int i = r - 2; i >= 0; --i) out_stride[i] = out_stride[i + 1] * os[i + 1];
  std::int64_t n = numel(s);
  // permutation: out axis i reads input axis perm[i]
  std::vector<int> perm(r);
  for (int i = 0; i < r; ++i) perm[i] = i;
  std::swap(perm[axis_a], perm[axis_b]);
  std::vector<std::int64_t> map(static_cast<size_t>(n));
  std::vector<int> idx(r, 0);
  std::int64_t src = 0;
  for (std::int64_t k = 0; k < n; ++k) {
    std::int64_t dst = 0;
    for (int i = 0; i < r; ++i) dst += out_stride[i] * idx[perm[i]];
    map[static_cast<size_t>(dst)] = src;
    ++src;
    for (int d = r - 1; d >= 0; --d) {
      if (++idx[d] < s[d]) break;
      idx[d] = 0;
    }
  }
  const auto& xv = x.value();
  std::vector<real> out(xv.size());
  for (size_t k = 0; k < out.size(); ++k) out[k] = xv[map[k]];
  Tensor tx = x;
  auto mp = std::make_shared<std::vector<std::int64_t>>(std::move(map));
  return make_node(os, std::move(out), {x}, [tx, mp](Node& n) {
    auto& gx = tx.grad();
    for (size_t k = 0; k < n.grad.size(); ++k) gx[(*mp)[k]] += n.grad[k];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  check_finite(x, "reshape");
  if (numel(shape) != x.numel())
    throw ShapeError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape) +
                     " changes element count");
  Tensor tx = x;
  return make_node(std::move(shape), x.value(), {x}, [tx](Node& n) {
    auto& gx = tx.grad();
    for (size_t k = 0; k < n.grad.size(); ++k) gx[k] += n.grad[k];
  });
}

namespace {

struct ConvDims {
  std::int64_t B, Cin, H, W, Cout, kh, kw, Ho, Wo;
  int stride, pad;
};

ConvDims conv_dims(const Shape& xs, const Shape& ws, int stride, int pad, bool depthwise,
                   const char* op) {
  if (xs.size() != 4) throw ShapeError(std::string(op) + ": input must be (B,C,H,W), got " + shape_str(xs));
  if (ws.size() != 4) throw ShapeError(std::string(op) + ": weight must be rank 4, got " + shape_str(ws));
  if (stride < 1) throw ShapeError(std::string(op) + ": stride must be >= 1");
  if (pad < 0) throw ShapeError(std::string(op) + ": negative padding");
  ConvDims d;
  d.B = xs[0]; d.Cin = xs[1]; d.H = xs[2]; d.W = xs[3];
  d.stride = stride; d.pad = pad;
  if (depthwise) {
    if (ws[0] != xs[1] || ws[1] != 1)
      throw ShapeError(std::string(op) + ": weight " + shape_str(ws) + " incompatible with input " +
                       shape_str(xs) + " (want (C,1,kh,kw))");
    d.Cout = ws[0];
  } else {
    if (ws[1] != xs[1])
      throw ShapeError(std::string(op) + ": weight " + shape_str(ws) +
                       " in-channels do not match input " + shape_str(xs));
    d.Cout = ws[0];
  }
  d.kh = ws[2]; d.kw = ws[3];
  d.Ho = (d.H + 2 * pad - d.kh) / stride + 1;
  d.Wo = (d.W + 2 * pad - d.kw) / stride + 1;
  if (d.Ho <= 0 || d.Wo <= 0)
    throw ShapeError(std::string(op) + ": kernel " + shape_str(ws) + " too large for input " +
                     shape_str(xs) + " with pad " + std::to_string(pad));
  return d;
}

Tensor conv_impl(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad,
                 bool depthwise, const char* op) {
  check_finite(x, op);
  check_finite(w, op);
  if (bias.defined()) {
    check_finite(bias, op);
    if (bias.shape().size() != 1 || bias.shape()[0] != w.shape()[0])
      throw ShapeError(std::string(op) + ": bias must be (Cout)");
  }
  ConvDims d = conv_dims(x.shape(), w.shape(), stride, pad, depthwise, op);
  std::vector<real> out(static_cast<size_t>(d.B * d.Cout * d.Ho * d.Wo), real(0));
  const auto& xv = x.value();
  const auto& wv = w.value();
  auto in_at = [&](std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t ww) {
    return xv[((b * d.Cin + c) * d.H + h) * d.W + ww];
  };
  for (std::int64_t b = 0; b < d.B; ++b)
    for (std::int64_t co = 0; co < d.Cout; ++co) {
      std::int64_t ci_lo = depthwise ? co : 0;
      std::int64_t ci_hi = depthwise ? co + 1 : d.Cin;
      real bias_v = bias.defined() ? bias.value()[co] : real(0);
      for (std::int64_t ho = 0; ho < d.Ho; ++ho)
        for (std::int64_t wo = 0; wo < d.Wo; ++wo) {
          real acc = bias_v;
          for (std::int64_t ci = ci_lo; ci < ci_hi; ++ci)
            for (std::int64_t ky = 0; ky < d.kh; ++ky) {
              std::int64_t ih = ho * d.stride + ky - d.pad;
              if (ih < 0 || ih >= d.H) continue;
              for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                std::int64_t iw = wo * d.stride + kx - d.pad;
                if (iw < 0 || iw >= d.W) continue;
                std::int64_t wi = depthwise ? ((co * d.kh + ky) * d.kw + kx)
                                            : (((co * d.Cin + ci) * d.kh + ky) * d.kw + kx);
                acc += in_at(b, ci, ih, iw) * wv[wi];
              }
            }
          out[((b * d.Cout + co) * d.Ho + ho) * d.Wo + wo] = acc;
        }
    }
  Shape os{static_cast<int>(d.B), static_cast<int>(d.Cout), static_cast<int>(d.Ho),
           static_cast<int>(d.Wo)};
  Tensor tx = x, tw = w, tb = bias;
  std::vector<Tensor> ins{x, w};
  if (bias.defined()) ins.push_back(bias);
  return make_node(os, std::move(out), std::move(ins), [tx, tw, tb, d, depthwise](Node& n) {
    auto& gx = tx.grad();
    auto& gw = tw.grad();
    const auto& xv = tx.value();
    const auto& wv = tw.value();
    real* gb = nullptr;
    if (tb.defined()) gb = tb.grad().data();
    for (std::int64_t b = 0; b < d.B; ++b)
      for (std::int64_t co = 0; co < d.Cout; ++co) {
        std::int64_t ci_lo = depthwise ? co : 0;
        std::int64_t ci_hi = depthwise ? co + 1 : d.Cin;
        for (std::int64_t ho = 0; ho < d.Ho; ++ho)
          for (std::int64_t wo = 0; wo < d.Wo; ++wo) {
            real g = n.grad[((b * d.Cout + co) * d.Ho + ho) * d.Wo + wo];
            if (g == real(0)) continue;
            if (gb) gb[co] += g;
            for (std::int64_t ci = ci_lo; ci < ci_hi; ++ci)
              for (std::int64_t ky = 0; ky < d.kh; ++ky) {
                std::int64_t ih = ho * d.stride + ky - d.pad;
                if (ih < 0 || ih >= d.H) continue;
                for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                  std::int64_t iw = wo * d.stride + kx - d.pad;
                  if (iw < 0 || iw >= d.W) continue;
                  std::int64_t xi = ((b * d.Cin + ci) * d.H + ih) * d.W + iw;
                  std::int64_t wi = depthwise ? ((co * d.kh + ky) * d.kw + kx)
                                              : (((co * d.Cin + ci) * d.kh + ky) * d.kw + kx);
                  gx[xi] += g * wv[wi];
                  gw[wi] += g * xv[xi];
                }
              }
          }
      }
  });
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
  return conv_impl(x, w, bias, stride, pad, false, "conv2d");
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride,
                        int pad) {
  return conv_impl(x, w, bias, stride, pad, true, "depthwise_conv2d");
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                  bool training, real momentum, real eps) {
  check_finite(x, "batch_norm");
  const Shape& s = x.shape();
  if (s.size() < 2) throw ShapeError("batch_norm input must be at least (B,C), got " + shape_str(s));
  std::int64_t B = s[0], C = s[1], S = 1;
  for (size_t i = 2; i < s.size(); ++i) S *= s[i];
  if (gamma.numel() != C || beta.numel() != C)
    throw ShapeError("batch_norm gamma/beta must have C=" + std::to_string(C) + " entries");
  if (static_cast<std::int64_t>(state.running_mean.size()) != C) state.init(static_cast<int>(C));

  std::vector<real> mean(C), var(C);
  const auto& xv = x.value();
  if (training) {
    real count = static_cast<real>(B * S);
    for (std::int64_t c = 0; c < C; ++c) {
      real m = 0;
      for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t k = 0; k < S; ++k) m += xv[(b * C + c) * S + k];
      m /= count;
      real v = 0;
      for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t k = 0; k < S; ++k) {
          real d = xv[(b * C + c) * S + k] - m;
          v += d * d;
        }
      v /= count;
      mean[c] = m;
      var[c] = v;
      state.running_mean[c] = (1 - momentum) * state.running_mean[c] + momentum * m;
      state.running_var[c] = (1 - momentum) * state.running_var[c] + momentum * v;
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }

  std::vector<real> xhat(xv.size()), out(xv.size());
  std::vector<real> inv_std(C);
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  for (std::int64_t c = 0; c < C; ++c) inv_std[c] = real(1) / std::sqrt(var[c] + eps);
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t k = 0; k < S; ++k) {
        std::int64_t i = (b * C + c) * S + k;
        xhat[i] = (xv[i] - mean[c]) * inv_std[c];
        out[i] = gv[c] * xhat[i] + bv[c];
      }

  Tensor tx = x, tg = gamma, tb = beta;
  auto xh = std::make_shared<std::vector<real>>(std::move(xhat));
  auto istd = std::make_shared<std::vector<real>>(std::move(inv_std));
  return make_node(s, std::move(out), {x, gamma, beta}, [tx, tg, tb, xh, istd, B, C, S,
                                                         training](Node& n) {
    auto& gx = tx.grad();
    auto& gg = tg.grad();
    auto& gb = tb.grad();
    const auto& gv = tg.value();
    real count = static_cast<real>(B * S);
    for (std::int64_t c = 0; c < C; ++c) {
      real sum_dy = 0, sum_dy_xhat = 0;
      for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t k = 0; k < S; ++k) {
          std::int64_t i = (b * C + c) * S + k;
          sum_dy += n.grad[i];
          sum_dy_xhat += n.grad[i] * (*xh)[i];
        }
      gg[c] += sum_dy_xhat;
      gb[c] += sum_dy;
      if (training) {
        // full Jacobian through the batch statistics
        for (std::int64_t b = 0; b < B; ++b)
          for (std::int64_t k = 0; k < S; ++k) {
            std::int64_t i = (b * C + c) * S + k;
            gx[i] += gv[c] * (*istd)[c] *
                     (n.grad[i] - sum_dy / count - (*xh)[i] * sum_dy_xhat / count);
          }
      } else {
        for (std::int64_t b = 0; b < B; ++b)
          for (std::int64_t k = 0; k < S; ++k) {
            std::int64_t i = (b * C + c) * S + k;
            gx[i] += gv[c] * (*istd)[c] * n.grad[i];
          }
      }
    }
  });
}

Tensor selu(const Tensor& x) {
  return unary_ew(x, "selu",
                  [](real v) {
                    return v > 0 ? kSeluLambda * v : kSeluLambda * kSeluAlpha * (std::exp(v) - 1);
                  },
                  [](real v, real) {
                    return v > 0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(v);
                  });
}

Tensor sigmoid(const Tensor& x) {
  return unary_ew(x, "sigmoid",
                  [](real v) {
                    return v >= 0 ? real(1) / (real(1) + std::exp(-v))
                                  : std::exp(v) / (real(1) + std::exp(v));
                  },
                  [](real, real y) { return y * (real(1) - y); });
}

Tensor masked_softmax(const Tensor& x, std::shared_ptr<const Mask> mask, real tau) {
  check_finite(x, "masked_softmax");
  if (tau <= real(0)) throw ShapeError("softmax temperature must be positive");
  if (mask && mask->size() != x.value().size())
    throw ShapeError("masked_softmax: mask size does not match tensor");
  const Shape& s = x.shape();
  std::int64_t K = s.back();
  std::int64_t rows = x.numel() / K;
  const auto& xv = x.value();
  std::vector<real> out(xv.size(), real(0));
  for (std::int64_t r = 0; r < rows; ++r) {
    const real* xr = xv.data() + r * K;
    const std::uint8_t* mr = mask ? mask->data() + r * K : nullptr;
    real mx = -std::numeric_limits<real>::infinity();
    int selected = 0;
    for (std::int64_t j = 0; j < K; ++j)
      if (!mr || mr[j]) {
        mx = std::max(mx, xr[j] / tau);
        ++selected;
      }
    if (selected == 0) throw DataError("masked_softmax: row " + std::to_string(r) + " selects nothing");
    real denom = 0;
    for (std::int64_t j = 0; j < K; ++j)
      if (!mr || mr[j]) denom += std::exp(xr[j] / tau - mx);
    for (std::int64_t j = 0; j < K; ++j)
      if (!mr || mr[j]) out[r * K + j] = std::exp(xr[j] / tau - mx) / denom;
  }
  Tensor tx = x;
  return make_node(s, std::move(out), {x}, [tx, mask, tau, rows, K](Node& n) {
    auto& gx = tx.grad();
    for (std::int64_t r = 0; r < rows; ++r) {
      const real* yr = n.value.data() + r * K;
      const real* gr = n.grad.data() + r * K;
      const std::uint8_t* mr = mask ? mask->data() + r * K : nullptr;
      real dot = 0;
      for (std::int64_t j = 0; j < K; ++j)
        if (!mr || mr[j]) dot += gr[j] * yr[j];
      for (std::int64_t j = 0; j < K; ++j)
        if (!mr || mr[j]) gx[r * K + j] += yr[j] * (gr[j] - dot) / tau;
    }
  });
}

Tensor softmax_temp(const Tensor& x, real tau) { return masked_softmax(x, nullptr, tau); }

Tensor vlog(const Tensor& x) {
  for (real v : x.value())
    if (v <= real(0)) throw NumericError("log of non-positive value " + std::to_string(v));
  return unary_ew(x, "log", [](real v) { return std::log(v); },
                  [](real v, real) { return real(1) / v; });
}

Tensor vabs(const Tensor& x) {
  // subgradient at 0 is taken as 0
  return unary_ew(x, "abs", [](real v) { return std::fabs(v); },
                  [](real v, real) { return v > 0 ? real(1) : (v < 0 ? real(-1) : real(0)); });
}

Tensor mean_tail(const Tensor& x, int keep) {
  check_finite(x, "mean");
  const Shape& s = x.shape();
  if (keep < 0 || keep > static_cast<int>(s.size()))
    throw ShapeError("mean: keep=" + std::to_string(keep) + " out of range for " + shape_str(s));
  Shape os(s.begin(), s.begin() + keep);
  if (os.empty()) os.push_back(1);
  std::int64_t groups = 1;
  for (int i = 0; i < keep; ++i) groups *= s[i];
  std::int64_t M = x.numel() / groups;
  const auto& xv = x.value();
  std::vector<real> out(static_cast<size_t>(groups), real(0));
  for (std::int64_t g = 0; g < groups; ++g) {
    real acc = 0;
    for (std::int64_t k = 0; k < M; ++k) acc += xv[g * M + k];
    out[g] = acc / static_cast<real>(M);
  }
  Tensor tx = x;
  return make_node(os, std::move(out), {x}, [tx, groups, M](Node& n) {
    auto& gx = tx.grad();
    for (std::int64_t g = 0; g < groups; ++g) {
      real gv = n.grad[g] / static_cast<real>(M);
      for (std::int64_t k = 0; k < M; ++k) gx[g * M + k] += gv;
    }
  });
}

Tensor sum_all(const Tensor& x) {
  check_finite(x, "sum");
  real acc = 0;
  for (real v : x.value()) acc += v;
  Tensor tx = x;
  return make_node({1}, {acc}, {x}, [tx](Node& n) {
    auto& gx = tx.grad();
    for (auto& g : gx) g += n.grad[0];
  });
}

Tensor clamp(const Tensor& x, real lo, real hi) {
  if (lo > hi) throw ShapeError("clamp: lo > hi");
  return unary_ew(x, "clamp",
                  [lo, hi](real v) { return std::min(std::max(v, lo), hi); },
                  [lo, hi](real v, real) { return (v >= lo && v <= hi) ? real(1) : real(0); });
}

Tensor grl_op(const Tensor& x, real lambda) {
  check_finite(x, "grl");
  Tensor tx = x;
  return make_node(x.shape(), x.value(), {x}, [tx, lambda](Node& n) {
    auto& gx = tx.grad();
    for (size_t k = 0; k < gx.size(); ++k) gx[k] += -lambda * n.grad[k];
  });
}

Tensor unfold_patches(const Tensor& x, int patch) {
  check_finite(x, "unfold");
  const Shape& s = x.shape();
  if (s.size() != 4) throw ShapeError("unfold expects (B,C,H,W), got " + shape_str(s));
  if (patch < 1 || s[2] % patch != 0 || s[3] % patch != 0)
    throw ShapeError("unfold: spatial dims " + shape_str(s) + " not divisible by patch " +
                     std::to_string(patch));
  std::int64_t B = s[0], C = s[1], H = s[2], W = s[3], P = patch;
  std::int64_t gh = H / P, gw = W / P, N = gh * gw, D = C * P * P;
  const auto& xv = x.value();
  std::vector<real> out(static_cast<size_t>(B * N * D));
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t h = 0; h < H; ++h)
        for (std::int64_t w = 0; w < W; ++w) {
          std::int64_t t = (h / P) * gw + (w / P);
          std::int64_t f = (c * P + (h % P)) * P + (w % P);
          out[(b * N + t) * D + f] = xv[((b * C + c) * H + h) * W + w];
        }
  Tensor tx = x;
  return make_node({static_cast<int>(B), static_cast<int>(N), static_cast<int>(D)}, std::move(out),
                   {x}, [tx, B, C, H, W, P, gw, N, D](Node& n) {
                     auto& gx = tx.grad();
                     for (std::int64_t b = 0; b < B; ++b)
                       for (std::int64_t c = 0; c < C; ++c)
                         for (std::int64_t h = 0; h < H; ++h)
                           for (std::int64_t w = 0; w < W; ++w) {
                             std::int64_t t = (h / P) * gw + (w / P);
                             std::int64_t f = (c * P + (h % P)) * P + (w % P);
                             gx[((b * C + c) * H + h) * W + w] += n.grad[(b * N + t) * D + f];
                           }
                   });
}

Tensor fold_patches(const Tensor& t, int patch, int channels, int height, int width) {
  check_finite(t, "fold");
  const Shape& s = t.shape();
  std::int64_t P = patch, C = channels, H = height, W = width;
  if (s.size() != 3) throw ShapeError("fold expects (B,N,D), got " + shape_str(s));
  if (P < 1 || H % P != 0 || W % P != 0)
    throw ShapeError("fold: target dims not divisible by patch");
  std::int64_t gh = H / P, gw = W / P, N = gh * gw, D = C * P * P;
  if (s[1] != N || s[2] != D)
    throw ShapeError("fold: tokens " + shape_str(s) + " do not match target (C,H,W,P)=( " +
                     std::to_string(C) + "," + std::to_string(H) + "," + std::to_string(W) + "," +
                     std::to_string(P) + ")");
  std::int64_t B = s[0];
  const auto& tv = t.value();
  std::vector<real> out(static_cast<size_t>(B * C * H * W));
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t h = 0; h < H; ++h)
        for (std::int64_t w = 0; w < W; ++w) {
          std::int64_t tk = (h / P) * gw + (w / P);
          std::int64_t f = (c * P + (h % P)) * P + (w % P);
          out[((b * C + c) * H + h) * W + w] = tv[(b * N + tk) * D + f];
        }
  Tensor tt = t;
  return make_node({static_cast<int>(B), static_cast<int>(C), static_cast<int>(H),
                    static_cast<int>(W)},
                   std::move(out), {t}, [tt, B, C, H, W, P, gw, N, D](Node& n) {
                     auto& gt = tt.grad();
                     for (std::int64_t b = 0; b < B; ++b)
                       for (std::int64_t c = 0; c < C; ++c)
                         for (std::int64_t h = 0; h < H; ++h)
                           for (std::int64_t w = 0; w < W; ++w) {
                             std::int64_t tk = (h / P) * gw + (w / P);
                             std::int64_t f = (c * P + (h % P)) * P + (w % P);
                             gt[(b * N + tk) * D + f] += n.grad[((b * C + c) * H + h) * W + w];
                           }
                   });
}

Tensor upsample2x(const Tensor& x) {
  check_finite(x, "upsample2x");
  const Shape& s = x.shape();
  if (s.size() != 4) throw ShapeError("upsample2x expects (B,C,H,W), got " + shape_str(s));
  std::int64_t B = s[0], C = s[1], H = s[2], W = s[3];
  const auto& xv = x.value();
  std::vector<real> out(static_cast<size_t>(B * C * 4 * H * W));
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t h = 0; h < 2 * H; ++h)
        for (std::int64_t w = 0; w < 2 * W; ++w)
          out[((b * C + c) * 2 * H + h) * 2 * W + w] = xv[((b * C + c) * H + h / 2) * W + w / 2];
  Tensor tx = x;
  return make_node({static_cast<int>(B), static_cast<int>(C), static_cast<int>(2 * H),
                    static_cast<int>(2 * W)},
                   std::move(out), {x}, [tx, B, C, H, W](Node& n) {
                     auto& gx = tx.grad();
                     for (std::int64_t b = 0; b < B; ++b)
                       for (std::int64_t c = 0; c < C; ++c)
                         for (std::int64_t h = 0; h < 2 * H; ++h)
                           for (std::int64_t w = 0; w < 2 * W; ++w)
                             gx[((b * C + c) * H + h / 2) * W + w / 2] +=
                                 n.grad[((b * C + c) * 2 * H + h) * 2 * W + w];
                   });
}

Tensor adaptive_avg_pool(const Tensor& x, int out_h, int out_w) {
  check_finite(x, "adaptive_avg_pool");
  const Shape& s = x.shape();
  if (s.size() != 4) throw ShapeError("adaptive_avg_pool expects (B,C,H,W), got " + shape_str(s));
  if (out_h < 1 || out_w < 1) throw ShapeError("adaptive_avg_pool: output dims must be positive");
  std::int64_t B = s[0], C = s[1], H = s[2], W = s[3];
  auto win = [](std::int64_t i, std::int64_t in, std::int64_t out) {
    std::int64_t lo = (i * in) / out;
    std::int64_t hi = ((i + 1) * in + out - 1) / out;
    return std::pair<std::int64_t, std::int64_t>{lo, std::max(hi, lo + 1)};
  };
  const auto& xv = x.value();
  std::vector<real> out(static_cast<size_t>(B * C * out_h * out_w));
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t oh = 0; oh < out_h; ++oh) {
        auto [h0, h1] = win(oh, H, out_h);
        for (std::int64_t ow = 0; ow < out_w; ++ow) {
          auto [w0, w1] = win(ow, W, out_w);
          real acc = 0;
          for (std::int64_t h = h0; h < h1; ++h)
            for (std::int64_t w = w0; w < w1; ++w) acc += xv[((b * C + c) * H + h) * W + w];
          out[((b * C + c) * out_h + oh) * out_w + ow] =
              acc / static_cast<real>((h1 - h0) * (w1 - w0));
        }
      }
  Tensor tx = x;
  return make_node({static_cast<int>(B), static_cast<int>(C), out_h, out_w}, std::move(out), {x},
                   [tx, B, C, H, W, out_h, out_w, win](Node& n) {
                     auto& gx = tx.grad();
                     for (std::int64_t b = 0; b < B; ++b)
                       for (std::int64_t c = 0; c < C; ++c)
                         for (std::int64_t oh = 0; oh < out_h; ++oh) {
                           auto [h0, h1] = win(oh, H, out_h);
                           for (std::int64_t ow = 0; ow < out_w; ++ow) {
                             auto [w0, w1] = win(ow, W, out_w);
                             real g = n.grad[((b * C + c) * out_h + oh) * out_w + ow] /
                                      static_cast<real>((h1 - h0) * (w1 - w0));
                             for (std::int64_t h = h0; h < h1; ++h)
                               for (std::int64_t w = w0; w < w1; ++w)
                                 gx[((b * C + c) * H + h) * W + w] += g;
                           }
                         }
                   });
}

// ---- registry ----------------------------------------------------------

const char* op_kind_name(OpKind k) {
  switch (k) {
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Neg: return "neg";
    case OpKind::Affine: return "affine";
    case OpKind::MatMul: return "matmul";
    case OpKind::Transpose: return "transpose";
    case OpKind::Reshape: return "reshape";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::DepthwiseConv2d: return "depthwise_conv2d";
    case OpKind::PointwiseConv: return "pointwise_conv";
    case OpKind::BatchNorm: return "batch_norm";
    case OpKind::Selu: return "selu";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::SoftmaxTemp: return "softmax_temp";
    case OpKind::MaskedSoftmax: return "masked_softmax";
    case OpKind::Log: return "log";
    case OpKind::Abs: return "abs";
    case OpKind::Mean: return "mean";
    case OpKind::SumAll: return "sum_all";
    case OpKind::Clamp: return "clamp";
    case OpKind::Grl: return "grl";
    case OpKind::UnfoldPatches: return "unfold_patches";
    case OpKind::FoldPatches: return "fold_patches";
    case OpKind::Upsample2x: return "upsample2x";
    case OpKind::AdaptiveAvgPool: return "adaptive_avg_pool";
  }
  return "?";
}

const std::vector<OpKind>& all_op_kinds() {
  static const std::vector<OpKind> kinds = {
      OpKind::Add, OpKind::Sub, OpKind::Mul, OpKind::Neg, OpKind::Affine, OpKind::MatMul,
      OpKind::Transpose, OpKind::Reshape, OpKind::Conv2d, OpKind::DepthwiseConv2d,
      OpKind::PointwiseConv, OpKind::BatchNorm, OpKind::Selu, OpKind::Sigmoid,
      OpKind::SoftmaxTemp, OpKind::MaskedSoftmax, OpKind::Log, OpKind::Abs, OpKind::Mean,
      OpKind::SumAll, OpKind::Clamp, OpKind::Grl, OpKind::UnfoldPatches, OpKind::FoldPatches,
      OpKind::Upsample2x, OpKind::AdaptiveAvgPool};
  return kinds;
}

Tensor forward_op(OpKind kind, const std::vector<Tensor>& in, const OpAttrs& a) {
  auto need = [&](size_t n) {
    if (in.size() != n)
      throw ShapeError(std::string(op_kind_name(kind)) + ": expected " + std::to_string(n) +
                       " inputs, got " + std::to_string(in.size()));
  };
  switch (kind) {
    case OpKind::Add: need(2); return add(in[0], in[1]);
    case OpKind::Sub: need(2); return sub(in[0], in[1]);
    case OpKind::Mul: need(2); return mul(in[0], in[1]);
    case OpKind::Neg: need(1); return neg(in[0]);
    case OpKind::Affine:
      need(1);
      return affine(in[0], static_cast<real>(a.get_f("a", 1)), static_cast<real>(a.get_f("b", 0)));
    case OpKind::MatMul: need(2); return matmul(in[0], in[1]);
    case OpKind::Transpose: need(1); return transpose(in[0], a.get_i("axis_a", -2), a.get_i("axis_b", -1));
    case OpKind::Reshape: {
      need(1);
      Shape s;
      for (int k = 0; k < a.get_i("rank", 0); ++k) s.push_back(a.get_i("d" + std::to_string(k), 1));
      return reshape(in[0], s);
    }
    case OpKind::Conv2d:
      return conv2d(in[0], in[1], in.size() > 2 ? in[2] : Tensor(), a.get_i("stride", 1),
                    a.get_i("pad", 0));
    case OpKind::DepthwiseConv2d:
      return depthwise_conv2d(in[0], in[1], in.size() > 2 ? in[2] : Tensor(),
                              a.get_i("stride", 1), a.get_i("pad", 0));
    case OpKind::PointwiseConv:
      return pointwise_conv(in[0], in[1], in.size() > 2 ? in[2] : Tensor());
    case OpKind::BatchNorm: {
      need(3);
      // dispatcher form runs in training mode against scratch statistics
      BatchNormState scratch;
      return batch_norm(in[0], in[1], in[2], scratch, true,
                        static_cast<real>(a.get_f("momentum", 0.1)),
                        static_cast<real>(a.get_f("eps", 1e-5)));
    }
    case OpKind::Selu: need(1); return selu(in[0]);
    case OpKind::Sigmoid: need(1); return sigmoid(in[0]);
    case OpKind::SoftmaxTemp: need(1); return softmax_temp(in[0], static_cast<real>(a.get_f("tau", 1)));
    case OpKind::MaskedSoftmax:
      need(1);
      return masked_softmax(in[0], a.mask, static_cast<real>(a.get_f("tau", 1)));
    case OpKind::Log: need(1); return vlog(in[0]);
    case OpKind::Abs: need(1); return vabs(in[0]);
    case OpKind::Mean: need(1); return mean_tail(in[0], a.get_i("keep", 0));
    case OpKind::SumAll: need(1); return sum_all(in[0]);
    case OpKind::Clamp:
      need(1);
      return clamp(in[0], static_cast<real>(a.get_f("lo", 0)), static_cast<real>(a.get_f("hi", 1)));
    case OpKind::Grl: need(1); return grl_op(in[0], static_cast<real>(a.get_f("lambda", 1)));
    case OpKind::UnfoldPatches: need(1); return unfold_patches(in[0], a.get_i("patch", 2));
    case OpKind::FoldPatches:
      need(1);
      return fold_patches(in[0], a.get_i("patch", 2), a.get_i("channels", 1), a.get_i("height", 2),
                          a.get_i("width", 2));
    case OpKind::Upsample2x: need(1); return upsample2x(in[0]);
    case OpKind::AdaptiveAvgPool:
      need(1);
      return adaptive_avg_pool(in[0], a.get_i("out_h", 1), a.get_i("out_w", 1));
  }
  throw Error("unknown op kind");
}

}  // namespace lab
