#include "nn.hpp"

#include <cmath>

namespace lab {

namespace {
constexpr real kInitStd = real(0.02);

Tensor init_weight(Shape shape, Rng& rng, const std::string& name) {
  Tensor t = Tensor::rand_trunc_normal(std::move(shape), rng, kInitStd, true);
  t.set_name(name);
  return t;
}

Tensor init_zeros(Shape shape, const std::string& name) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  t.set_name(name);
  return t;
}
}  // namespace

Conv2dLayer::Conv2dLayer(int cin, int cout, int k, int stride_, int pad_, Rng& rng,
                         const std::string& name)
    : w(init_weight({cout, cin, k, k}, rng, name + ".w")),
      b(init_zeros({cout}, name + ".b")),
      stride(stride_),
      pad(pad_) {}

void Conv2dLayer::params(std::vector<Tensor>& out) const {
  out.push_back(w);
  out.push_back(b);
}

DepthwiseConvLayer::DepthwiseConvLayer(int channels, int k, int stride_, int pad_, Rng& rng,
                                       const std::string& name)
    : w(init_weight({channels, 1, k, k}, rng, name + ".w")),
      b(init_zeros({channels}, name + ".b")),
      stride(stride_),
      pad(pad_) {}

void DepthwiseConvLayer::params(std::vector<Tensor>& out) const {
  out.push_back(w);
  out.push_back(b);
}

BatchNorm2d::BatchNorm2d(int channels, const std::string& name)
    : gamma(Tensor::full({channels}, real(1), true)), beta(init_zeros({channels}, name + ".beta")) {
  gamma.set_name(name + ".gamma");
  state.init(channels);
}

void BatchNorm2d::params(std::vector<Tensor>& out) const {
  out.push_back(gamma);
  out.push_back(beta);
}

void BatchNorm2d::buffers(BufferList& out, const std::string& name) {
  out.emplace_back(name + ".running_mean", &state.running_mean);
  out.emplace_back(name + ".running_var", &state.running_var);
}

LinearLayer::LinearLayer(int in, int out, Rng& rng, const std::string& name)
    : w(init_weight({in, out}, rng, name + ".w")), b(init_zeros({out}, name + ".b")) {}

void LinearLayer::params(std::vector<Tensor>& out) const {
  out.push_back(w);
  out.push_back(b);
}

ConvBnAct::ConvBnAct(int cin, int cout, int k, int stride, int pad, Rng& rng,
                     const std::string& name)
    : conv(cin, cout, k, stride, pad, rng, name + ".conv"), bn(cout, name + ".bn") {}

void ConvBnAct::params(std::vector<Tensor>& out) const {
  conv.params(out);
  bn.params(out);
}

void ConvBnAct::buffers(BufferList& out, const std::string& name) {
  bn.buffers(out, name + ".bn");
}

ResidualBlock::ResidualBlock(int channels, Rng& rng, const std::string& name)
    : c1(channels, channels, 3, 1, 1, rng, name + ".c1"),
      c2(channels, channels, 3, 1, 1, rng, name + ".c2"),
      bn2(channels, name + ".bn2") {}

Tensor ResidualBlock::forward(const Tensor& x, bool training) {
  Tensor h = c1.forward(x, training);
  h = bn2.forward(c2.forward(h), training);
  return add(x, h);
}

void ResidualBlock::params(std::vector<Tensor>& out) const {
  c1.params(out);
  c2.params(out);
  bn2.params(out);
}

void ResidualBlock::buffers(BufferList& out, const std::string& name) {
  c1.buffers(out, name + ".c1");
  bn2.buffers(out, name + ".bn2");
}

MultiheadAttention::MultiheadAttention(int dim, int heads_, Rng& rng, const std::string& name)
    : wq(init_weight({dim, dim}, rng, name + ".wq")),
      wk(init_weight({dim, dim}, rng, name + ".wk")),
      wv(init_weight({dim, dim}, rng, name + ".wv")),
      wo(init_weight({dim, dim}, rng, name + ".wo")),
      heads(heads_) {
  if (dim % heads != 0) throw ConfigError("attention dim must be divisible by head count");
}

MultiheadAttention::Out MultiheadAttention::forward(const Tensor& x,
                                                    const std::shared_ptr<const Mask>& mask,
                                                    const Tensor* attn_bias) const {
  const Shape& s = x.shape();
  if (s.size() != 3) throw ShapeError("attention expects (B,N,d) tokens, got " + shape_str(s));
  int B = s[0], N = s[1], d = s[2];
  int dh = d / heads;
  auto split = [&](const Tensor& t) {
    // (B,N,d) -> (B,H,N,dh)
    return transpose(reshape(t, {B, N, heads, dh}), 1, 2);
  };
  Tensor q = split(matmul(x, wq));
  Tensor k = split(matmul(x, wk));
  Tensor v = split(matmul(x, wv));
  Tensor scores = matmul(q, transpose(k, 2, 3));  // (B,H,N,N)
  Tensor attn = masked_softmax(scores, mask);
  if (attn_bias) attn = add(attn, *attn_bias);
  Tensor mixed = matmul(attn, v);  // (B,H,N,dh)
  Tensor merged = reshape(transpose(mixed, 1, 2), {B, N, d});
  Out out;
  out.tokens = matmul(merged, wo);
  out.attn = attn;
  out.scores = scores;
  return out;
}

void MultiheadAttention::params(std::vector<Tensor>& out) const {
  out.push_back(wq);
  out.push_back(wk);
  out.push_back(wv);
  out.push_back(wo);
}

TransformerBlock::TransformerBlock(int dim, int heads, int mlp_dim, Rng& rng,
                                   const std::string& name)
    : attn(dim, heads, rng, name + ".attn"),
      fc1(dim, mlp_dim, rng, name + ".fc1"),
      fc2(mlp_dim, dim, rng, name + ".fc2") {}

TransformerBlock::Out TransformerBlock::forward(const Tensor& x,
                                                const std::shared_ptr<const Mask>& mask,
                                                const Tensor* attn_bias) const {
  auto a = attn.forward(x, mask, attn_bias);
  Tensor h = add(x, a.tokens);
  Tensor m = fc2.forward(selu(fc1.forward(h)));
  return {add(h, m), a.attn};
}

void TransformerBlock::params(std::vector<Tensor>& out) const {
  attn.params(out);
  fc1.params(out);
  fc2.params(out);
}

void MobileViTBlockCfg::validate(int height, int width) const {
  if (patch < 1 || height % patch != 0 || width % patch != 0)
    throw ConfigError("mobilevit: spatial dims " + std::to_string(height) + "x" +
                      std::to_string(width) + " not divisible by patch " + std::to_string(patch));
  if (hidden_dim % heads != 0)
    throw ConfigError("mobilevit: hidden dim must be divisible by head count");
}

MobileViTBlock::MobileViTBlock(MobileViTBlockCfg cfg_, Rng& rng, const std::string& name)
    : cfg(cfg_),
      local(cfg_.channels, cfg_.channels, 3, 1, 1, rng, name + ".local"),
      proj_in(cfg_.channels * cfg_.patch * cfg_.patch, cfg_.hidden_dim, rng, name + ".proj_in"),
      proj_out(cfg_.hidden_dim, cfg_.channels * cfg_.patch * cfg_.patch, rng, name + ".proj_out"),
      txf(cfg_.hidden_dim, cfg_.heads, 2 * cfg_.hidden_dim, rng, name + ".txf") {}

MobileViTBlock::Out MobileViTBlock::forward(const Tensor& x, bool training,
                                            const std::shared_ptr<const Mask>& mask,
                                            const Tensor* attn_bias) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != cfg.channels)
    throw ShapeError("mobilevit block expects (B," + std::to_string(cfg.channels) +
                     ",H,W), got " + shape_str(s));
  cfg.validate(s[2], s[3]);
  Tensor loc = local.forward(x, training);
  Tensor tokens = proj_in.forward(unfold_patches(loc, cfg.patch));
  auto t = txf.forward(tokens, mask, attn_bias);
  Tensor folded = fold_patches(proj_out.forward(t.tokens), cfg.patch, cfg.channels, s[2], s[3]);
  Out out;
  out.map = add(loc, folded);
  out.tokens_in = tokens;
  out.attn = t.attn;
  return out;
}

void MobileViTBlock::params(std::vector<Tensor>& out) const {
  local.params(out);
  proj_in.params(out);
  proj_out.params(out);
  txf.params(out);
}

void MobileViTBlock::buffers(BufferList& out, const std::string& name) {
  local.buffers(out, name + ".local");
}

PatchDiscriminator::PatchDiscriminator(int in_channels, int base, Rng& rng,
                                       const std::string& name)
    : c1(in_channels, base, 3, 2, 1, rng, name + ".c1"),
      c2(base, 2 * base, 3, 2, 1, rng, name + ".c2"),
      c3(2 * base, 4 * base, 3, 2, 1, rng, name + ".c3"),
      head(4 * base, 1, 1, 1, 0, rng, name + ".head") {}

Tensor PatchDiscriminator::forward(const Tensor& x) const {
  Tensor h = selu(c1.forward(x));
  h = selu(c2.forward(h));
  h = selu(c3.forward(h));
  return sigmoid(head.forward(h));
}

void PatchDiscriminator::params(std::vector<Tensor>& out) const {
  c1.params(out);
  c2.params(out);
  c3.params(out);
  head.params(out);
}

Mafe::Mafe(int in_channels, int base, int trunk_blocks, Rng& rng, const std::string& name)
    : enc1(in_channels, base, 3, 2, 1, rng, name + ".enc1"),
      enc2(base, 2 * base, 3, 2, 1, rng, name + ".enc2"),
      out_channels(2 * base) {
  for (int i = 0; i < trunk_blocks; ++i)
    trunk.emplace_back(2 * base, rng, name + ".trunk" + std::to_string(i));
}

Tensor Mafe::forward(const Tensor& x, bool training) {
  Tensor h = enc2.forward(enc1.forward(x, training), training);
  for (auto& blk : trunk) h = blk.forward(h, training);
  return h;
}

void Mafe::params(std::vector<Tensor>& out) const {
  enc1.params(out);
  enc2.params(out);
  for (const auto& blk : trunk) blk.params(out);
}

void Mafe::buffers(BufferList& out, const std::string& name) {
  enc1.buffers(out, name + ".enc1");
  enc2.buffers(out, name + ".enc2");
  for (size_t i = 0; i < trunk.size(); ++i)
    trunk[i].buffers(out, name + ".trunk" + std::to_string(i));
}

DomainClassifier::DomainClassifier(int feat_channels, Rng& rng, const std::string& name)
    : lin(feat_channels, 1, rng, name + ".lin") {}

Tensor DomainClassifier::forward(const Tensor& features, real grl_lambda) const {
  Tensor h = grl_op(features, grl_lambda);
  Tensor pooled = mean_tail(h, 2);  // (B,C)
  return sigmoid(lin.forward(pooled));
}

void DomainClassifier::params(std::vector<Tensor>& out) const { lin.params(out); }

real grl_schedule(real progress, real gamma) {
  if (progress < real(0) || progress > real(1))
    throw ConfigError("grl_schedule: progress must lie in [0,1], got " + std::to_string(progress));
  return real(2) / (real(1) + std::exp(-gamma * progress)) - real(1);
}

void fill_params(const std::vector<Tensor>& params, real v) {
  for (const auto& p : params)
    for (auto& x : p.value()) x = v;
}

}  // namespace lab
