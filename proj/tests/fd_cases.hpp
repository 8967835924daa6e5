// Randomized finite-difference cases, one per registered op kind. Shared by
// the unit suite and the acceptance gate. Inputs are sampled away from
// non-differentiable points (|x| for abs, clamp edges, top-k ties).
#pragma once

#include <functional>

#include "core/fd_check.hpp"
#include "core/ops.hpp"

namespace lab::testing {

struct FdCase {
  std::function<Tensor()> f;   // rebuilds the graph from current param values
  std::vector<Tensor> params;  // differentiable inputs under test
};

// Each case wraps the op output as mean(out * constant_weights) so that
// row-normalized outputs (softmax) do not collapse to a constant loss.
inline FdCase make_fd_case(OpKind kind, Rng& rng) {
  FdCase c;
  auto uni = [&](Shape s, real lo, real hi) {
    return Tensor::rand_uniform(std::move(s), rng, lo, hi, true);
  };
  switch (kind) {
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul: {
      Tensor a = uni({2, 3, 4}, -1, 1);
      Tensor b = uni({3, 4}, -1, 1);  // broadcast path
      Tensor wsel = Tensor::rand_uniform({2, 3, 4}, rng, -1, 1);
      c.params = {a, b};
      c.f = [kind, a, b, wsel]() {
        Tensor o = kind == OpKind::Add ? add(a, b) : kind == OpKind::Sub ? sub(a, b) : mul(a, b);
        return mean_all(mul(o, wsel));
      };
      return c;
    }
    case OpKind::Neg:
    case OpKind::Selu:
    case OpKind::Sigmoid: {
      Tensor x = uni({3, 5}, -2, 2);
      Tensor w = Tensor::rand_uniform({3, 5}, rng, -1, 1);
      c.params = {x};
      c.f = [kind, x, w]() {
        Tensor o = kind == OpKind::Neg ? neg(x) : kind == OpKind::Selu ? selu(x) : sigmoid(x);
        return mean_all(mul(o, w));
      };
      return c;
    }
    case OpKind::Affine: {
      Tensor x = uni({4, 3}, -1, 1);
      real a = static_cast<real>(rng.uniform(0.5, 2.0));
      real b = static_cast<real>(rng.uniform(-1.0, 1.0));
      Tensor w = Tensor::rand_uniform({4, 3}, rng, -1, 1);
      c.params = {x};
      c.f = [x, a, b, w]() { return mean_all(mul(affine(x, a, b), w)); };
      return c;
    }
    case OpKind::MatMul: {
      Tensor a = uni({2, 3, 4}, -1, 1);
      Tensor b = uni({2, 4, 5}, -1, 1);
      Tensor w = Tensor::rand_uniform({2, 3, 5}, rng, -1, 1);
      c.params = {a, b};
      c.f = [a, b, w]() { return mean_all(mul(matmul(a, b), w)); };
      return c;
    }
    case OpKind::Transpose: {
      Tensor x = uni({2, 3, 4}, -1, 1);
      Tensor w = Tensor::rand_uniform({4, 3, 2}, rng, -1, 1);
      c.params = {x};
      c.f = [x, w]() { return mean_all(mul(transpose(transpose(x, 0, 2), 1, 2), transpose(w, 1, 2))); };
      return c;
    }
    case OpKind::Reshape: {
      Tensor x = uni({2, 6}, -1, 1);
      Tensor w = Tensor::rand_uniform({3, 4}, rng, -1, 1);
      c.params = {x};
      c.f = [x, w]() { return mean_all(mul(reshape(x, {3, 4}), w)); };
      return c;
    }
    case OpKind::Conv2d: {
      Tensor x = uni({2, 3, 5, 5}, -1, 1);
      Tensor w = uni({4, 3, 3, 3}, -0.5, 0.5);
      Tensor b = uni({4}, -0.2, 0.2);
      Tensor sel = Tensor::rand_uniform({2, 4, 3, 3}, rng, -1, 1);  // stride 2, pad 1 -> 3x3
      c.params = {x, w, b};
      c.f = [x, w, b, sel]() { return mean_all(mul(conv2d(x, w, b, 2, 1), sel)); };
      return c;
    }
    case OpKind::DepthwiseConv2d: {
      Tensor x = uni({2, 3, 4, 4}, -1, 1);
      Tensor w = uni({3, 1, 3, 3}, -0.5, 0.5);
      Tensor b = uni({3}, -0.2, 0.2);
      Tensor sel = Tensor::rand_uniform({2, 3, 4, 4}, rng, -1, 1);
      c.params = {x, w, b};
      c.f = [x, w, b, sel]() { return mean_all(mul(depthwise_conv2d(x, w, b, 1, 1), sel)); };
      return c;
    }
    case OpKind::PointwiseConv: {
      Tensor x = uni({2, 3, 4, 4}, -1, 1);
      Tensor w = uni({5, 3, 1, 1}, -0.5, 0.5);
      Tensor b = uni({5}, -0.2, 0.2);
      Tensor sel = Tensor::rand_uniform({2, 5, 4, 4}, rng, -1, 1);
      c.params = {x, w, b};
      c.f = [x, w, b, sel]() { return mean_all(mul(pointwise_conv(x, w, b), sel)); };
      return c;
    }
    case OpKind::BatchNorm: {
      Tensor x = uni({3, 4, 2, 2}, -1, 1);
      Tensor g = uni({4}, 0.5, 1.5);
      Tensor b = uni({4}, -0.5, 0.5);
      Tensor sel = Tensor::rand_uniform({3, 4, 2, 2}, rng, -1, 1);
      c.params = {x, g, b};
      c.f = [x, g, b, sel]() {
        BatchNormState st;  // fresh statistics keep the function pure
        return mean_all(mul(batch_norm(x, g, b, st, true), sel));
      };
      return c;
    }
    case OpKind::SoftmaxTemp: {
      Tensor x = uni({3, 6}, -2, 2);
      real tau = static_cast<real>(rng.uniform(0.4, 2.0));
      Tensor w = Tensor::rand_uniform({3, 6}, rng, -1, 1);
      c.params = {x};
      c.f = [x, tau, w]() { return mean_all(mul(softmax_temp(x, tau), w)); };
      return c;
    }
    case OpKind::MaskedSoftmax: {
      Tensor x = uni({4, 6}, -2, 2);
      auto mask = std::make_shared<Mask>(24, 0);
      for (int r = 0; r < 4; ++r) {
        (*mask)[static_cast<size_t>(r * 6 + static_cast<int>(rng.below(6)))] = 1;  // >=1 per row
        for (int j = 0; j < 6; ++j)
          if (rng.uniform() < 0.5) (*mask)[static_cast<size_t>(r * 6 + j)] = 1;
      }
      Tensor w = Tensor::rand_uniform({4, 6}, rng, -1, 1);
      c.params = {x};
      c.f = [x, mask, w]() { return mean_all(mul(masked_softmax(x, mask), w)); };
      return c;
    }
    case OpKind::Log: {
      Tensor x = uni({3, 4}, 0.5, 2.0);
      Tensor w = Tensor::rand_uniform({3, 4}, rng, -1, 1);
      c.params = {x};
      c.f = [x, w]() { return mean_all(mul(vlog(x), w)); };
      return c;
    }
    case OpKind::Abs: {
      // sampled away from the kink at 0
      std::vector<real> vals(12);
      for (auto& v : vals) {
        double m = rng.uniform(0.3, 1.0);
        v = static_cast<real>(rng.uniform() < 0.5 ? -m : m);
      }
      Tensor x = Tensor::from({3, 4}, vals, true);
      Tensor w = Tensor::rand_uniform({3, 4}, rng, -1, 1);
      c.params = {x};
      c.f = [x, w]() { return mean_all(mul(vabs(x), w)); };
      return c;
    }
    case OpKind::Mean: {
      Tensor x = uni({2, 3, 4}, -1, 1);
      Tensor w = Tensor::rand_uniform({2}, rng, -1, 1);
      c.params = {x};
      c.f = [x, w]() { return mean_all(mul(mean_tail(x, 1), w)); };
      return c;
    }
    case OpKind::SumAll: {
      Tensor x = uni({7}, -1, 1);
      c.params = {x};
      c.f = [x]() { return sum_all(x); };
      return c;
    }
    case OpKind::Clamp: {
      Tensor x = uni({3, 4}, -0.8, 0.8);  // interior of [-1, 1]
      Tensor w = Tensor::rand_uniform({3, 4}, rng, -1, 1);
      c.params = {x};
      c.f = [x, w]() { return mean_all(mul(clamp(x, real(-1), real(1)), w)); };
      return c;
    }
    case OpKind::Grl: {
      // double reversal: the composed gradient is (-1)^2 = +1, so the chain
      // matches the forward identity and finite differences apply
      Tensor x = uni({3, 4}, -1, 1);
      Tensor w = Tensor::rand_uniform({3, 4}, rng, -1, 1);
      c.params = {x};
      c.f = [x, w]() { return mean_all(mul(grl_op(grl_op(x, real(1)), real(1)), w)); };
      return c;
    }
    case OpKind::UnfoldPatches: {
      Tensor x = uni({2, 2, 4, 4}, -1, 1);
      Tensor w = Tensor::rand_uniform({2, 4, 8}, rng, -1, 1);
      c.params = {x};
      c.f = [x, w]() { return mean_all(mul(unfold_patches(x, 2), w)); };
      return c;
    }
    case OpKind::FoldPatches: {
      Tensor t = uni({2, 4, 8}, -1, 1);
      Tensor w = Tensor::rand_uniform({2, 2, 4, 4}, rng, -1, 1);
      c.params = {t};
      c.f = [t, w]() { return mean_all(mul(fold_patches(t, 2, 2, 4, 4), w)); };
      return c;
    }
    case OpKind::Upsample2x: {
      Tensor x = uni({2, 2, 3, 3}, -1, 1);
      Tensor w = Tensor::rand_uniform({2, 2, 6, 6}, rng, -1, 1);
      c.params = {x};
      c.f = [x, w]() { return mean_all(mul(upsample2x(x), w)); };
      return c;
    }
    case OpKind::AdaptiveAvgPool: {
      Tensor x = uni({2, 3, 5, 7}, -1, 1);
      Tensor w = Tensor::rand_uniform({2, 3, 4, 4}, rng, -1, 1);
      c.params = {x};
      c.f = [x, w]() { return mean_all(mul(adaptive_avg_pool(x, 4, 4), w)); };
      return c;
    }
  }
  throw Error("no fd case for op kind");
}

}  // namespace lab::testing
