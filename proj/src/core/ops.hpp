// Differentiable ops. Each function validates shapes, computes the result
// eagerly and records a backward closure on the output node.
//
// Conventions:
//   - feature maps are NCHW, token tensors are (B, N, D)
//   - softmax rows run over the last axis
//   - elementwise add/sub/mul broadcast numpy-style (right aligned)
#pragma once

#include <cstdint>
#include <map>
#include <memory>

#include "tensor.hpp"

namespace lab {

using Mask = std::vector<std::uint8_t>;  // 1 = selected, matches tensor numel

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
// a*x + b, scalar coefficients
Tensor affine(const Tensor& x, real a, real b);
inline Tensor scale(const Tensor& x, real a) { return affine(x, a, real(0)); }

// a: [..., m, k], b: [..., k, n] (same leading dims) or b: [k, n] broadcast
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x, int axis_a, int axis_b);
Tensor reshape(const Tensor& x, Shape shape);

// x: (B,Cin,H,W), w: (Cout,Cin,kh,kw), bias: (Cout) or undefined
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad);
// w: (C,1,kh,kw), one filter per channel
Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad);
inline Tensor pointwise_conv(const Tensor& x, const Tensor& w, const Tensor& bias) {
  return conv2d(x, w, bias, 1, 0);
}

struct BatchNormState {
  std::vector<real> running_mean;
  std::vector<real> running_var;
  void init(int channels) {
    running_mean.assign(channels, real(0));
    running_var.assign(channels, real(1));
  }
};
// x: (B,C,...) normalized per channel. Training uses batch statistics and
// updates `state`; eval uses the running averages and leaves them alone.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                  bool training, real momentum = real(0.1), real eps = real(1e-5));

Tensor selu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
// softmax(x / tau) over the last axis
Tensor softmax_temp(const Tensor& x, real tau);
// softmax over the selected entries of each row; zeros elsewhere
Tensor masked_softmax(const Tensor& x, std::shared_ptr<const Mask> mask, real tau = real(1));
Tensor vlog(const Tensor& x);
Tensor vabs(const Tensor& x);
// mean over all axes except the first `keep` (keep=0 gives a scalar)
Tensor mean_tail(const Tensor& x, int keep);
inline Tensor mean_all(const Tensor& x) { return mean_tail(x, 0); }
Tensor sum_all(const Tensor& x);
Tensor clamp(const Tensor& x, real lo, real hi);
// identity forward, gradient scaled by -lambda on the way back
Tensor grl_op(const Tensor& x, real lambda);

// (B,C,H,W) -> (B,N,C*P*P) with N=(H/P)*(W/P), row-major patch order
Tensor unfold_patches(const Tensor& x, int patch);
// inverse of unfold_patches
Tensor fold_patches(const Tensor& t, int patch, int channels, int height, int width);
Tensor upsample2x(const Tensor& x);
Tensor adaptive_avg_pool(const Tensor& x, int out_h, int out_w);

// ---- generic dispatch over the registered op kinds --------------------

enum class OpKind {
  Add, Sub, Mul, Neg, Affine, MatMul, Transpose, Reshape, Conv2d, DepthwiseConv2d,
  PointwiseConv, BatchNorm, Selu, Sigmoid, SoftmaxTemp, MaskedSoftmax, Log, Abs,
  Mean, SumAll, Clamp, Grl, UnfoldPatches, FoldPatches, Upsample2x, AdaptiveAvgPool,
};

const char* op_kind_name(OpKind k);
const std::vector<OpKind>& all_op_kinds();

struct OpAttrs {
  std::map<std::string, double> f;  // scalar attributes
  std::map<std::string, int> i;     // integral attributes
  std::shared_ptr<const Mask> mask;
  double get_f(const std::string& k, double dflt) const {
    auto it = f.find(k);
    return it == f.end() ? dflt : it->second;
  }
  int get_i(const std::string& k, int dflt) const {
    auto it = i.find(k);
    return it == i.end() ? dflt : it->second;
  }
};

// Uniform entry point used by the per-kind gradient sweeps. BatchNorm runs
// in training mode against scratch running statistics here.
Tensor forward_op(OpKind kind, const std::vector<Tensor>& inputs, const OpAttrs& attrs);

}  // namespace lab
