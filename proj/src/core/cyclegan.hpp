// Unpaired translation system: shared structure encoder, two private
// mappers, two patch discriminators and a domain classifier behind a
// gradient reversal layer, trained by three-step alternation.
#pragma once

#include "adam.hpp"
#include "checkpoint.hpp"
#include "nn.hpp"

namespace lab {

struct TranslationConfig {
  int image_side = 32;
  int in_channels = 1;
  int base_channels = 8;   // encoder widths: base, 2*base
  int trunk_blocks = 2;    // shared residual trunk
  int private_blocks = 2;  // residual blocks per mapper
  int disc_base = 8;
  real lambda_weight = real(10);  // consistency group
  real mu_weight = real(5);       // domain + identity group
  real grl_gamma = real(5);
  real lr = real(2e-4);
  int batch = 8;
  bool nonsaturating = true;   // generator adversarial surrogate
  bool alg1_weighting = false; // feature-consistency term unweighted
  void validate() const;
};

// private mapper: residual blocks on shared features, then 2x2 upsampling
// decoder back to image space with a sigmoid head
struct GeneratorMapper {
  std::vector<ResidualBlock> blocks;
  ConvBnAct up1;
  Conv2dLayer up2;
  GeneratorMapper() = default;
  GeneratorMapper(int feat_channels, int out_channels, int private_blocks, Rng& rng,
                  const std::string& name);
  Tensor forward(const Tensor& features, bool training);
  void params(std::vector<Tensor>& out) const;
  void buffers(BufferList& out, const std::string& name);
};

struct UnpairedBatch {
  Tensor x;  // (B,1,H,W) source-domain images
  Tensor y;  // (B,1,H,W) target-domain images
};

struct TranslationSystem {
  TranslationConfig cfg;
  Mafe mafe;  // shared E; the same object feeds g, f and the classifier
  GeneratorMapper g, f;
  PatchDiscriminator dx, dy;
  DomainClassifier cls;
  Grl grl;
  long clamp_warnings = 0;

  TranslationSystem(TranslationConfig cfg, Rng& rng);

  Tensor encode(const Tensor& img, bool training) { return mafe.forward(img, training); }
  Tensor translate_xy(const Tensor& x, bool training) {
    return g.forward(encode(x, training), training);
  }
  Tensor translate_yx(const Tensor& y, bool training) {
    return f.forward(encode(y, training), training);
  }

  std::vector<Tensor> generator_params() const;  // E + g + f
  std::vector<Tensor> discriminator_params() const;
  std::vector<Tensor> domain_params() const;  // classifier only
  NamedState named_state();
};

// ---- losses (value function per the defining equations) -----------------

// E[log D(real)] + E[log(1 - D(fake))]; D outputs clamped to
// [1e-7, 1-1e-7] with a warning counter
Tensor adv_loss(const PatchDiscriminator& d, const Tensor& real_batch, const Tensor& fake_batch,
                long* clamp_warnings);

Tensor cycle_loss(TranslationSystem& sys, const Tensor& x, const Tensor& y, bool training);

// mean-L1 feature consistency; u_hat is the synthetic target-domain batch
Tensor maf_loss(TranslationSystem& sys, const Tensor& x, const Tensor& u_hat, bool training);

// per-domain averaged BCE (1/n and 1/m weights); gradients reach the encoder
// only through the GRL
Tensor domain_loss(TranslationSystem& sys, const Tensor& x, const Tensor& y, bool training);

Tensor identity_loss(TranslationSystem& sys, const Tensor& x, const Tensor& y, bool training);

// advG + advF + lambda*(cyc + maf) + mu*(dom + id); pure arithmetic
real weighted_total(real adv_g, real adv_f, real cyc, real maf, real dom, real id, real lambda,
                    real mu);

// differentiable generator-step objective on one batch (what step 2 descends)
Tensor total_generator_loss(TranslationSystem& sys, const UnpairedBatch& batch);

// ---- training -------------------------------------------------------------

struct UnpairedDataset {
  std::vector<std::vector<real>> x_images, y_images;
  int side = 0;
};

struct GanEpochRow {
  int epoch = 0;
  double adv_g = 0, adv_f = 0, cyc = 0, maf = 0, dom = 0, id = 0, total = 0;
};

struct GanTrainResult {
  std::vector<GanEpochRow> history;
  bool aborted_non_finite = false;
};

// Three-step alternation per minibatch (discriminators, generators, domain
// classifier + reversed encoder update), k=1 discriminator steps, GRL
// progress p = epoch/epochs. checkpoint_path, when set, is rewritten each
// epoch and retained on a non-finite abort.
GanTrainResult train_gan(TranslationSystem& sys, const UnpairedDataset& data, int epochs,
                         Rng& rng, const std::string& checkpoint_path = "");

}  // namespace lab
