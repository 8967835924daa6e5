// Gradient-distilled screening network: a dense-attention teacher trained
// concurrently with a sparse-attention student whose attention support is
// selected by a learned gradient simulator.
#pragma once

#include "adam.hpp"
#include "checkpoint.hpp"
#include "metrics.hpp"
#include "nn.hpp"

namespace lab {

enum class KRule { Full, N10, N25, N50 };

KRule parse_k_rule(const std::string& s);
const char* k_rule_name(KRule r);
// floor(N/divisor), clamped to at least 1 (clamping bumps a warning counter
// when provided)
int k_for(KRule rule, int n_tokens, long* clamp_warnings = nullptr);

enum class LambdaForm { Linear, Cosine };
// progressive decoupling weight, 1 at t=0 down to 0 at t=T
real lambda_schedule(LambdaForm form, std::int64_t t, std::int64_t t_total);

struct DistillConfig {
  int image_side = 32;
  int in_channels = 1;
  int stem_teacher = 16, stem_student = 8;  // channels after the stride-2 stem
  int d_teacher = 64, d_student = 16;
  int heads = 2;
  int patch = 2;
  real tau = real(0.5);
  real alpha_fuse = real(0.7);
  real alpha_ema = real(0.9);
  KRule k_rule = KRule::N25;
  LambdaForm lambda_form = LambdaForm::Linear;
  AttentionVariant attention = AttentionVariant::Sparse;
  real distill_temp = real(2);
  real lr = real(2e-4);
  int batch = 8;
  void validate() const;
  int token_grid() const { return image_side / 2 / patch; }  // stem halves the map
  int tokens() const { return token_grid() * token_grid(); }
};

// stem conv -> hybrid block -> two stride-2 conv stages -> pooled linear
// head; used for both roles
struct ClassifierNet {
  ConvBnAct stem;
  MobileViTBlock block;
  ConvBnAct post1, post2;
  LinearLayer head;
  ClassifierNet() = default;
  ClassifierNet(int in_channels, int stem_channels, int dim, int heads, int patch, Rng& rng,
                const std::string& name);
  struct Out {
    Tensor logit;      // (B,1)
    Tensor attn;       // (B,H,N,N)
    Tensor tokens_in;  // (B,N,d)
  };
  Out forward(const Tensor& x, bool training,
              const std::shared_ptr<const Mask>& mask = nullptr,
              const Tensor* attn_bias = nullptr);
  void params(std::vector<Tensor>& out) const;
  void buffers(BufferList& out, const std::string& name);
};

// depthwise separable conv on the re-folded token grid, then per-head
// self-correlation through SELU
struct GradSimulator {
  DepthwiseConvLayer dw;
  Conv2dLayer pw;
  BatchNorm2d bn;
  int heads = 1;
  GradSimulator() = default;
  GradSimulator(int dim, int heads, Rng& rng, const std::string& name);
  // tokens: (B,N,D) with N = grid*grid; returns (B,H,N,N), symmetric per head
  Tensor forward(const Tensor& tokens, int grid, bool training);
  void params(std::vector<Tensor>& out) const;
  void buffers(BufferList& out, const std::string& name);
};

// gradient map -> 128-dim embedding (conv compression + adaptive pooling);
// parameters are frozen at initialization
struct PhiEmbedder {
  Conv2dLayer c1, c2;
  PhiEmbedder() = default;
  PhiEmbedder(Rng& rng, const std::string& name);
  Tensor forward(const Tensor& grad_map) const;  // (B,1,N,N) -> (B,128)
  void params(std::vector<Tensor>& out) const;
};

Tensor embed_grad(const PhiEmbedder& phi, const Tensor& grad_map);

// ---- the distillation mechanics ------------------------------------------

// alpha * softmax(g/tau) + (1-alpha) * (1 - softmax(-g/tau)), row-wise
Tensor importance_fusion(const Tensor& grad_sim, real tau, real alpha_fuse);

// per-row top-k indices, ties broken toward the lower index, sorted ascending
std::vector<int> select_topk_row(const real* row, int n, int k);
// mask over (..., N, N) rows of an importance tensor
std::shared_ptr<Mask> build_topk_mask(const Tensor& importance, int k);

struct SparseAttentionOut {
  Tensor mixed;  // (B,H,N,dh)
  Tensor attn;   // (B,H,N,N) rows: softmax over the selected keys, 0 elsewhere
};
SparseAttentionOut sparse_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                    const std::shared_ptr<const Mask>& mask);

// || Phi(mean_heads(sim)) - Phi(mean_heads(target)) ||^2, mean over batch
Tensor grad_sim_loss(const PhiEmbedder& phi, const Tensor& grad_sim, const Tensor& target);

std::vector<real> ema_smooth(const std::vector<real>& prev, const std::vector<real>& next,
                             real alpha_ema);

// Per-sample smoothing: each training sample keeps its own exponentially
// averaged teacher gradient across the epochs it appears in, initialized at
// first sight.
struct SampleEma {
  std::vector<std::vector<real>> slots;
  real alpha = real(0.9);
  void resize(size_t n_samples) { slots.assign(n_samples, {}); }
  void update(size_t sample, const real* grad, size_t len) {
    auto& s = slots[sample];
    if (s.empty()) {
      s.assign(grad, grad + len);
    } else {
      for (size_t i = 0; i < len; ++i) s[i] = alpha * s[i] + (real(1) - alpha) * grad[i];
    }
  }
};

real total_objective(real cls, real distill, real grad_sim, std::int64_t t, std::int64_t t_total,
                     LambdaForm form);

// ---- system ----------------------------------------------------------------

struct StudentNet {
  ClassifierNet net;
  GradSimulator sim;
  DistillConfig cfg;
  long k_clamp_warnings = 0;
  std::vector<real> meta;  // {attention variant}; checkpointed so eval restores it
  StudentNet() = default;
  StudentNet(const DistillConfig& cfg, Rng& rng);
  void sync_variant_from_meta();
  struct Out {
    Tensor logit;
    Tensor attn;
    Tensor grad_sim;  // (B,H,N,N) differentiable into the simulator
  };
  // dense variant ignores the simulator entirely
  Out forward(const Tensor& x, bool training);
  std::vector<Tensor> trainable_params() const;  // net + simulator
  NamedState named_state();
};

struct DistillSystem {
  DistillConfig cfg;
  ClassifierNet teacher;
  StudentNet student;
  PhiEmbedder phi;  // frozen
  SampleEma ema;
  DistillSystem(DistillConfig cfg, Rng& rng);
  NamedState teacher_state();
};

// classification loss gradient at the teacher's attention matrix; returns a
// detached (B,H,N,N) tensor
Tensor teacher_attention_grad(ClassifierNet& teacher, const Tensor& batch, const Tensor& labels);

struct LabeledDataset {
  std::vector<std::vector<real>> images;
  std::vector<int> labels;
  int side = 0;
};

struct DistillStepRow {
  std::int64_t step = 0;
  double cls = 0, distill = 0, gradsim = 0, lambda = 0;
  double acc_val = 0;  // validation accuracy at the end of this row's epoch
};

struct DistillTrainResult {
  std::vector<DistillStepRow> history;
  std::vector<EpochCandidate> val_candidates;
  int chosen_epoch = 0;
  bool aborted_non_finite = false;
};

// Concurrent teacher/student training with EMA-smoothed gradient targets and
// progressive decoupling. Applies the dual-threshold selection rule to the
// per-epoch validation history; checkpoint_path (when set) receives the
// selected epoch's student parameters.
DistillTrainResult train_distill(DistillSystem& sys, const LabeledDataset& train,
                                 const LabeledDataset& val, int epochs, Rng& rng,
                                 const std::string& checkpoint_path = "");

// teacher-free scoring; BN in inference mode
std::vector<double> standalone_inference(StudentNet& student,
                                         const std::vector<std::vector<real>>& images, int side,
                                         int batch);

// ---- analytic cost model ----------------------------------------------------

struct FlopsBreakdown {
  double total = 0;            // multiply-adds end to end
  double attention_stage = 0;  // score + mix terms only
};
double flops_matmul(std::int64_t m, std::int64_t n, std::int64_t p);
FlopsBreakdown flops_estimate(const DistillConfig& cfg, bool student);

}  // namespace lab
