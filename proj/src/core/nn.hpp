// Building blocks shared by both trainers: conv stacks, residual blocks,
// hybrid conv/transformer blocks, the patch discriminator, the shared
// structure encoder and the gradient reversal layer.
#pragma once

#include <cstdint>

#include "ops.hpp"

namespace lab {

// named buffers that are state but not parameters (BN running statistics)
using BufferList = std::vector<std::pair<std::string, std::vector<real>*>>;

struct Conv2dLayer {
  Tensor w, b;
  int stride = 1, pad = 0;
  Conv2dLayer() = default;
  Conv2dLayer(int cin, int cout, int k, int stride, int pad, Rng& rng, const std::string& name);
  Tensor forward(const Tensor& x) const { return conv2d(x, w, b, stride, pad); }
  void params(std::vector<Tensor>& out) const;
};

struct DepthwiseConvLayer {
  Tensor w, b;
  int stride = 1, pad = 0;
  DepthwiseConvLayer() = default;
  DepthwiseConvLayer(int channels, int k, int stride, int pad, Rng& rng, const std::string& name);
  Tensor forward(const Tensor& x) const { return depthwise_conv2d(x, w, b, stride, pad); }
  void params(std::vector<Tensor>& out) const;
};

struct BatchNorm2d {
  Tensor gamma, beta;
  BatchNormState state;
  BatchNorm2d() = default;
  BatchNorm2d(int channels, const std::string& name);
  Tensor forward(const Tensor& x, bool training) {
    return batch_norm(x, gamma, beta, state, training);
  }
  void params(std::vector<Tensor>& out) const;
  void buffers(BufferList& out, const std::string& name);
};

struct LinearLayer {
  Tensor w, b;  // (in,out), (out)
  LinearLayer() = default;
  LinearLayer(int in, int out, Rng& rng, const std::string& name);
  Tensor forward(const Tensor& x) const { return add(matmul(x, w), b); }
  void params(std::vector<Tensor>& out) const;
};

// conv -> BN -> SELU
struct ConvBnAct {
  Conv2dLayer conv;
  BatchNorm2d bn;
  ConvBnAct() = default;
  ConvBnAct(int cin, int cout, int k, int stride, int pad, Rng& rng, const std::string& name);
  Tensor forward(const Tensor& x, bool training) {
    return selu(bn.forward(conv.forward(x), training));
  }
  void params(std::vector<Tensor>& out) const;
  void buffers(BufferList& out, const std::string& name);
};

// x + BN(conv(SELU(BN(conv(x)))))
struct ResidualBlock {
  ConvBnAct c1;
  Conv2dLayer c2;
  BatchNorm2d bn2;
  ResidualBlock() = default;
  ResidualBlock(int channels, Rng& rng, const std::string& name);
  Tensor forward(const Tensor& x, bool training);
  void params(std::vector<Tensor>& out) const;
  void buffers(BufferList& out, const std::string& name);
};

// Multi-head attention over (B,N,d) tokens. Scores are raw Q.K^T per head;
// an optional row mask restricts the softmax support (sparse variant) and an
// optional additive bias on the attention matrix supports direct probing of
// d(loss)/d(attention).
struct MultiheadAttention {
  Tensor wq, wk, wv, wo;
  int heads = 1;
  MultiheadAttention() = default;
  MultiheadAttention(int dim, int heads, Rng& rng, const std::string& name);
  struct Out {
    Tensor tokens;  // (B,N,d)
    Tensor attn;    // (B,H,N,N), rows sum to 1 over their support
    Tensor scores;  // (B,H,N,N) raw Q.K^T
  };
  Out forward(const Tensor& x, const std::shared_ptr<const Mask>& mask = nullptr,
              const Tensor* attn_bias = nullptr) const;
  void params(std::vector<Tensor>& out) const;
};

struct TransformerBlock {
  MultiheadAttention attn;
  LinearLayer fc1, fc2;
  TransformerBlock() = default;
  TransformerBlock(int dim, int heads, int mlp_dim, Rng& rng, const std::string& name);
  struct Out {
    Tensor tokens;
    Tensor attn;
  };
  Out forward(const Tensor& x, const std::shared_ptr<const Mask>& mask = nullptr,
              const Tensor* attn_bias = nullptr) const;
  void params(std::vector<Tensor>& out) const;
};

enum class AttentionVariant { Dense, Sparse };

struct MobileViTBlockCfg {
  int channels = 8;
  int patch = 2;
  int hidden_dim = 16;
  int heads = 2;
  AttentionVariant variant = AttentionVariant::Dense;
  void validate(int height, int width) const;
  int tokens(int height, int width) const { return (height * width) / (patch * patch); }
};

// local conv stage -> unfold to N patch tokens -> transformer -> fold -> add
struct MobileViTBlock {
  MobileViTBlockCfg cfg;
  ConvBnAct local;
  LinearLayer proj_in, proj_out;
  TransformerBlock txf;
  MobileViTBlock() = default;
  MobileViTBlock(MobileViTBlockCfg cfg, Rng& rng, const std::string& name);
  struct Out {
    Tensor map;       // (B,C,H,W)
    Tensor tokens_in; // (B,N,d) transformer input, feeds the gradient simulator
    Tensor attn;      // (B,H,N,N)
  };
  Out forward(const Tensor& x, bool training,
              const std::shared_ptr<const Mask>& mask = nullptr,
              const Tensor* attn_bias = nullptr);
  void params(std::vector<Tensor>& out) const;
  void buffers(BufferList& out, const std::string& name);
};

// 3 stride-2 conv stages with SELU, then a 1x1 map to per-patch realness
struct PatchDiscriminator {
  Conv2dLayer c1, c2, c3, head;
  PatchDiscriminator() = default;
  PatchDiscriminator(int in_channels, int base, Rng& rng, const std::string& name);
  Tensor forward(const Tensor& x) const;  // (B,1,H/8,W/8) in (0,1)
  void params(std::vector<Tensor>& out) const;
};

// shared structure encoder: 2 stride-2 conv stages + residual trunk
struct Mafe {
  ConvBnAct enc1, enc2;
  std::vector<ResidualBlock> trunk;
  int out_channels = 0;
  Mafe() = default;
  Mafe(int in_channels, int base, int trunk_blocks, Rng& rng, const std::string& name);
  Tensor forward(const Tensor& x, bool training);
  void params(std::vector<Tensor>& out) const;
  void buffers(BufferList& out, const std::string& name);
};

// domain classifier C(E(x)) = sigmoid(W^T pool(E(x)) + z), fed through the GRL
struct DomainClassifier {
  LinearLayer lin;
  DomainClassifier() = default;
  DomainClassifier(int feat_channels, Rng& rng, const std::string& name);
  // gradient reaches `features` scaled by -grl_lambda
  Tensor forward(const Tensor& features, real grl_lambda) const;
  void params(std::vector<Tensor>& out) const;
};

// lambda_grl = 2/(1+exp(-gamma*p)) - 1, the progressive schedule
real grl_schedule(real progress, real gamma);

struct Grl {
  real gamma = real(5);
  real lambda = real(0);
  void update(real progress) { lambda = grl_schedule(progress, gamma); }
};

inline Tensor grl_apply(const Tensor& x, const Grl& grl) { return grl_op(x, grl.lambda); }

// set every parameter (not buffers) to a constant; test hook
void fill_params(const std::vector<Tensor>& params, real v);

}  // namespace lab
