#include "cyclegan.hpp"

#include <cmath>

namespace lab {

void TranslationConfig::validate() const {
  if (image_side < 8 || image_side % 4 != 0)
    throw ConfigError("image side must be a multiple of 4 (two stride-2 stages), got " +
                      std::to_string(image_side));
  if (lambda_weight < 0 || mu_weight < 0) throw ConfigError("loss weights must be non-negative");
  if (lr < 0) throw ConfigError("learning rate must be non-negative");
  if (batch < 1) throw ConfigError("batch size must be at least 1");
}

GeneratorMapper::GeneratorMapper(int feat_channels, int out_channels, int private_blocks, Rng& rng,
                                 const std::string& name)
    : up1(feat_channels, feat_channels / 2, 3, 1, 1, rng, name + ".up1"),
      up2(feat_channels / 2, out_channels, 3, 1, 1, rng, name + ".up2") {
  for (int i = 0; i < private_blocks; ++i)
    blocks.emplace_back(feat_channels, rng, name + ".blk" + std::to_string(i));
}

Tensor GeneratorMapper::forward(const Tensor& features, bool training) {
  Tensor h = features;
  for (auto& blk : blocks) h = blk.forward(h, training);
  h = up1.forward(upsample2x(h), training);
  return sigmoid(up2.forward(upsample2x(h)));
}

void GeneratorMapper::params(std::vector<Tensor>& out) const {
  for (const auto& blk : blocks) blk.params(out);
  up1.params(out);
  up2.params(out);
}

void GeneratorMapper::buffers(BufferList& out, const std::string& name) {
  for (size_t i = 0; i < blocks.size(); ++i)
    blocks[i].buffers(out, name + ".blk" + std::to_string(i));
  up1.buffers(out, name + ".up1");
}

TranslationSystem::TranslationSystem(TranslationConfig cfg_, Rng& rng)
    : cfg(cfg_),
      mafe(cfg_.in_channels, cfg_.base_channels, cfg_.trunk_blocks, rng, "mafe"),
      g(2 * cfg_.base_channels, cfg_.in_channels, cfg_.private_blocks, rng, "g"),
      f(2 * cfg_.base_channels, cfg_.in_channels, cfg_.private_blocks, rng, "f"),
      dx(cfg_.in_channels, cfg_.disc_base, rng, "dx"),
      dy(cfg_.in_channels, cfg_.disc_base, rng, "dy"),
      cls(2 * cfg_.base_channels, rng, "cls") {
  cfg.validate();
  grl.gamma = cfg.grl_gamma;
}

std::vector<Tensor> TranslationSystem::generator_params() const {
  std::vector<Tensor> out;
  mafe.params(out);
  g.params(out);
  f.params(out);
  return out;
}

std::vector<Tensor> TranslationSystem::discriminator_params() const {
  std::vector<Tensor> out;
  dx.params(out);
  dy.params(out);
  return out;
}

std::vector<Tensor> TranslationSystem::domain_params() const {
  std::vector<Tensor> out;
  cls.params(out);
  return out;
}

NamedState TranslationSystem::named_state() {
  NamedState st;
  mafe.params(st.params);
  g.params(st.params);
  f.params(st.params);
  dx.params(st.params);
  dy.params(st.params);
  cls.params(st.params);
  mafe.buffers(st.buffers, "mafe");
  g.buffers(st.buffers, "g");
  f.buffers(st.buffers, "f");
  return st;
}

namespace {

// log of clamped probabilities, counting how often the clamp engaged
Tensor safe_log(const Tensor& probs, long* clamp_warnings) {
  constexpr real kEps = real(1e-7);
  if (clamp_warnings) {
    for (real v : probs.value())
      if (v < kEps || v > real(1) - kEps) {
        ++*clamp_warnings;
        break;
      }
  }
  return vlog(clamp(probs, kEps, real(1) - kEps));
}

Tensor mean_l1(const Tensor& a, const Tensor& b) { return mean_all(vabs(sub(a, b))); }

// per-sample binary cross-entropy, then mean over the batch (1/n weighting)
Tensor bce_mean(const Tensor& probs, real label, long* clamp_warnings) {
  Tensor lp = safe_log(probs, clamp_warnings);
  Tensor lq = safe_log(affine(probs, real(-1), real(1)), clamp_warnings);
  // -[d log p + (1-d) log(1-p)]
  return neg(add(scale(lp, label), scale(lq, real(1) - label)));
}

}  // namespace

Tensor adv_loss(const PatchDiscriminator& d, const Tensor& real_batch, const Tensor& fake_batch,
                long* clamp_warnings) {
  Tensor on_real = mean_all(safe_log(d.forward(real_batch), clamp_warnings));
  Tensor on_fake =
      mean_all(safe_log(affine(d.forward(fake_batch), real(-1), real(1)), clamp_warnings));
  return add(on_real, on_fake);
}

Tensor cycle_loss(TranslationSystem& sys, const Tensor& x, const Tensor& y, bool training) {
  Tensor fgx = sys.translate_yx(sys.translate_xy(x, training), training);
  Tensor gfy = sys.translate_xy(sys.translate_yx(y, training), training);
  return add(mean_l1(fgx, x), mean_l1(gfy, y));
}

Tensor maf_loss(TranslationSystem& sys, const Tensor& x, const Tensor& u_hat, bool training) {
  Tensor ex = sys.encode(x, training);
  Tensor e_cycle_x = sys.encode(sys.translate_yx(sys.translate_xy(x, training), training),
                                training);
  Tensor eu = sys.encode(u_hat, training);
  Tensor e_cycle_u = sys.encode(sys.translate_xy(sys.translate_yx(u_hat, training), training),
                                training);
  return add(mean_l1(e_cycle_x, ex), mean_l1(e_cycle_u, eu));
}

Tensor domain_loss(TranslationSystem& sys, const Tensor& x, const Tensor& y, bool training) {
  if (x.shape()[0] < 1 || y.shape()[0] < 1) throw DataError("domain_loss: empty domain batch");
  // domain labels: 0 for the x (source) domain, 1 for the y (target) domain
  Tensor px = sys.cls.forward(sys.encode(x, training), sys.grl.lambda);
  Tensor py = sys.cls.forward(sys.encode(y, training), sys.grl.lambda);
  Tensor lx = mean_all(bce_mean(px, real(0), &sys.clamp_warnings));
  Tensor ly = mean_all(bce_mean(py, real(1), &sys.clamp_warnings));
  return add(lx, ly);
}

Tensor identity_loss(TranslationSystem& sys, const Tensor& x, const Tensor& y, bool training) {
  if (x.shape()[1] != y.shape()[1])
    throw ShapeError("identity loss needs equal channel counts in both domains");
  Tensor gy = sys.translate_xy(y, training);
  Tensor fx = sys.translate_yx(x, training);
  return add(mean_l1(gy, y), mean_l1(fx, x));
}

real weighted_total(real adv_g, real adv_f, real cyc, real maf, real dom, real id, real lambda,
                    real mu) {
  return adv_g + adv_f + lambda * (cyc + maf) + mu * (dom + id);
}

namespace {

struct GenStepGraph {
  Tensor total;               // differentiable objective for step 2
  double cyc, maf, id;        // component values for logging
};

GenStepGraph build_generator_graph(TranslationSystem& sys, const UnpairedBatch& batch) {
  bool training = true;
  const Tensor& x = batch.x;
  const Tensor& y = batch.y;
  // shared intermediates across cycle / feature / identity terms
  Tensor ex = sys.encode(x, training);
  Tensor ey = sys.encode(y, training);
  Tensor gx = sys.g.forward(ex, training);       // G(x)
  Tensor fy = sys.f.forward(ey, training);       // F(y)
  Tensor egx = sys.encode(gx, training);
  Tensor efy = sys.encode(fy, training);
  Tensor fgx = sys.f.forward(egx, training);     // F(G(x))
  Tensor gfy = sys.g.forward(efy, training);     // G(F(y))

  Tensor adv;
  if (sys.cfg.nonsaturating) {
    // surrogate: maximize log D(fake) for both generators
    Tensor a1 = mean_all(safe_log(sys.dy.forward(gx), &sys.clamp_warnings));
    Tensor a2 = mean_all(safe_log(sys.dx.forward(fy), &sys.clamp_warnings));
    adv = neg(add(a1, a2));
  } else {
    // literal minimax terms; the parts without generator dependence are
    // constants for this step but keep the value faithful
    adv = add(adv_loss(sys.dy, y, gx, &sys.clamp_warnings),
              adv_loss(sys.dx, x, fy, &sys.clamp_warnings));
  }

  Tensor cyc = add(mean_l1(fgx, x), mean_l1(gfy, y));

  // feature consistency with u_hat = G(x) reused from this batch:
  // F(u_hat) is exactly fgx, so E(G(F(u_hat))) re-encodes g(E(fgx))
  Tensor e_fgx = sys.encode(fgx, training);
  Tensor gf_u = sys.g.forward(e_fgx, training);
  Tensor maf = add(mean_l1(e_fgx, ex), mean_l1(sys.encode(gf_u, training), egx));

  Tensor id = add(mean_l1(sys.g.forward(ey, training), y),
                  mean_l1(sys.f.forward(ex, training), x));

  real lam = sys.cfg.lambda_weight, mu = sys.cfg.mu_weight;
  Tensor total = adv;
  if (sys.cfg.alg1_weighting) {
    // alternate grouping: lambda*cyc + mu*id + unweighted feature term
    total = add(total, add(scale(cyc, lam), add(maf, scale(id, mu))));
  } else {
    total = add(total, add(scale(add(cyc, maf), lam), scale(id, mu)));
  }
  GenStepGraph out;
  out.total = total;
  out.cyc = cyc.item();
  out.maf = maf.item();
  out.id = id.item();
  return out;
}

}  // namespace

Tensor total_generator_loss(TranslationSystem& sys, const UnpairedBatch& batch) {
  return build_generator_graph(sys, batch).total;
}

namespace {

Tensor stack_batch(const std::vector<std::vector<real>>& images, const std::vector<int>& idx,
                   size_t from, size_t count, int side) {
  std::vector<real> data;
  data.reserve(count * static_cast<size_t>(side) * side);
  for (size_t i = from; i < from + count; ++i) {
    const auto& img = images[static_cast<size_t>(idx[i])];
    data.insert(data.end(), img.begin(), img.end());
  }
  return Tensor::from({static_cast<int>(count), 1, side, side}, std::move(data));
}

}  // namespace

GanTrainResult train_gan(TranslationSystem& sys, const UnpairedDataset& data, int epochs,
                         Rng& rng, const std::string& checkpoint_path) {
  if (data.x_images.empty() || data.y_images.empty())
    throw DataError("train_gan: dataset must be nonempty in both domains");
  GanTrainResult result;
  Adam opt({sys.cfg.lr});
  int B = sys.cfg.batch;
  int side = data.side;
  auto gen_params = sys.generator_params();
  auto disc_params = sys.discriminator_params();
  auto dom_params = sys.domain_params();
  std::vector<Tensor> enc_params;
  sys.mafe.params(enc_params);

  size_t n_batches = std::min(data.x_images.size(), data.y_images.size()) /
                     static_cast<size_t>(B);
  if (n_batches == 0) throw DataError("train_gan: dataset smaller than one batch");

  auto save = [&]() {
    if (!checkpoint_path.empty()) {
      NamedState st = sys.named_state();
      save_checkpoint(checkpoint_path, "GANS", st);
    }
  };
  save();  // epochs==0 still leaves a valid (initialized) checkpoint

  std::vector<int> xi(data.x_images.size()), yi(data.y_images.size());
  for (size_t i = 0; i < xi.size(); ++i) xi[i] = static_cast<int>(i);
  for (size_t i = 0; i < yi.size(); ++i) yi[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    sys.grl.update(static_cast<real>(epoch) / static_cast<real>(epochs));
    rng.shuffle(xi);
    rng.shuffle(yi);
    GanEpochRow row;
    row.epoch = epoch + 1;
    for (size_t bi = 0; bi < n_batches; ++bi) {
      Tensor x = stack_batch(data.x_images, xi, bi * B, B, side);
      Tensor y = stack_batch(data.y_images, yi, bi * B, B, side);

      // step 1: discriminators on detached fakes
      Tensor gx_det = sys.translate_xy(x, true).detach();
      Tensor fy_det = sys.translate_yx(y, true).detach();
      Tensor adv_g_val = adv_loss(sys.dy, y, gx_det, &sys.clamp_warnings);
      Tensor adv_f_val = adv_loss(sys.dx, x, fy_det, &sys.clamp_warnings);
      Tensor d_obj = neg(add(adv_g_val, adv_f_val));  // maximize the value
      zero_grads(disc_params);
      backward(d_obj);
      opt.step(disc_params);

      // step 2: generators
      GenStepGraph gen = build_generator_graph(sys, {x, y});
      if (!std::isfinite(gen.total.item())) {
        result.aborted_non_finite = true;
        return result;  // last epoch checkpoint stays on disk
      }
      zero_grads(gen_params);
      backward(gen.total);
      opt.step(gen_params);

      // step 3: domain classifier, encoder updated through the GRL
      Tensor dom = domain_loss(sys, x, y, true);
      zero_grads(dom_params);
      zero_grads(enc_params);
      backward(dom);
      opt.step(dom_params);
      opt.step(enc_params);

      row.adv_g += adv_g_val.item();
      row.adv_f += adv_f_val.item();
      row.cyc += gen.cyc;
      row.maf += gen.maf;
      row.dom += dom.item();
      row.id += gen.id;
    }
    double nb = static_cast<double>(n_batches);
    row.adv_g /= nb;
    row.adv_f /= nb;
    row.cyc /= nb;
    row.maf /= nb;
    row.dom /= nb;
    row.id /= nb;
    row.total = weighted_total(row.adv_g, row.adv_f, row.cyc, row.maf, row.dom, row.id,
                               sys.cfg.lambda_weight, sys.cfg.mu_weight);
    result.history.push_back(row);
    save();
  }
  return result;
}

}  // namespace lab
