#include "distill.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lab {

KRule parse_k_rule(const std::string& s) {
  if (s == "n" || s == "full") return KRule::Full;
  if (s == "n10") return KRule::N10;
  if (s == "n25") return KRule::N25;
  if (s == "n50") return KRule::N50;
  throw ConfigError("unknown k_rule '" + s + "' (expected n|n10|n25|n50)");
}

const char* k_rule_name(KRule r) {
  switch (r) {
    case KRule::Full: return "n";
    case KRule::N10: return "n10";
    case KRule::N25: return "n25";
    case KRule::N50: return "n50";
  }
  return "?";
}

int k_for(KRule rule, int n_tokens, long* clamp_warnings) {
  if (n_tokens < 1) throw ConfigError("k_for: token count must be positive");
  int k = n_tokens;
  switch (rule) {
    case KRule::Full: k = n_tokens; break;
    case KRule::N10: k = n_tokens / 10; break;
    case KRule::N25: k = n_tokens / 25; break;
    case KRule::N50: k = n_tokens / 50; break;
  }
  if (k < 1) {
    if (clamp_warnings) ++*clamp_warnings;
    k = 1;
  }
  return k;
}

real lambda_schedule(LambdaForm form, std::int64_t t, std::int64_t t_total) {
  if (t_total < 1) throw ConfigError("lambda_schedule: t_total must be positive");
  if (t < 0 || t > t_total) throw ConfigError("lambda_schedule: t outside [0, t_total]");
  real p = static_cast<real>(t) / static_cast<real>(t_total);
  if (form == LambdaForm::Linear) return std::max(real(0), real(1) - p);
  return real(0.5) * (real(1) + std::cos(real(3.14159265358979323846) * p));
}

void DistillConfig::validate() const {
  if (image_side < 8 || image_side % 2 != 0)
    throw ConfigError("image side must be even and at least 8");
  if ((image_side / 2) % patch != 0)
    throw ConfigError("side/2 must be divisible by the patch size (side " +
                      std::to_string(image_side) + ", patch " + std::to_string(patch) + ")");
  if (d_student >= d_teacher)
    throw ConfigError("student hidden dim must be smaller than the teacher's");
  if (d_teacher % heads != 0 || d_student % heads != 0)
    throw ConfigError("hidden dims must be divisible by the head count");
  if (tau <= 0) throw ConfigError("tau must be positive");
  if (alpha_fuse < 0 || alpha_fuse > 1) throw ConfigError("alpha_fuse must lie in [0,1]");
  if (alpha_ema < 0 || alpha_ema >= 1) throw ConfigError("alpha_ema must lie in [0,1)");
  if (lr < 0) throw ConfigError("learning rate must be non-negative");
  if (batch < 1) throw ConfigError("batch size must be at least 1");
  int n = tokens();
  if (attention == AttentionVariant::Sparse && n < k_for(k_rule, n))
    throw ConfigError("token count smaller than k in sparse mode");
}

ClassifierNet::ClassifierNet(int in_channels, int stem_channels, int dim, int heads, int patch,
                             Rng& rng, const std::string& name)
    : stem(in_channels, stem_channels, 3, 2, 1, rng, name + ".stem"),
      block({stem_channels, patch, dim, heads, AttentionVariant::Dense}, rng, name + ".block"),
      post1(stem_channels, 2 * stem_channels, 3, 2, 1, rng, name + ".post1"),
      post2(2 * stem_channels, 2 * stem_channels, 3, 2, 1, rng, name + ".post2"),
      head(2 * stem_channels, 1, rng, name + ".head") {}

ClassifierNet::Out ClassifierNet::forward(const Tensor& x, bool training,
                                          const std::shared_ptr<const Mask>& mask,
                                          const Tensor* attn_bias) {
  Tensor h = stem.forward(x, training);
  auto b = block.forward(h, training, mask, attn_bias);
  Tensor p = post2.forward(post1.forward(b.map, training), training);
  Tensor pooled = mean_tail(p, 2);  // (B,2C)
  Out out;
  out.logit = head.forward(pooled);
  out.attn = b.attn;
  out.tokens_in = b.tokens_in;
  return out;
}

void ClassifierNet::params(std::vector<Tensor>& out) const {
  stem.params(out);
  block.params(out);
  post1.params(out);
  post2.params(out);
  head.params(out);
}

void ClassifierNet::buffers(BufferList& out, const std::string& name) {
  stem.buffers(out, name + ".stem");
  block.buffers(out, name + ".block");
  post1.buffers(out, name + ".post1");
  post2.buffers(out, name + ".post2");
}

GradSimulator::GradSimulator(int dim, int heads_, Rng& rng, const std::string& name)
    : dw(dim, 3, 1, 1, rng, name + ".dw"),
      pw(dim, dim, 1, 1, 0, rng, name + ".pw"),
      bn(dim, name + ".bn"),
      heads(heads_) {}

Tensor GradSimulator::forward(const Tensor& tokens, int grid, bool training) {
  const Shape& s = tokens.shape();
  if (s.size() != 3) throw ShapeError("simulator expects (B,N,D) tokens, got " + shape_str(s));
  int B = s[0], N = s[1], D = s[2];
  if (grid * grid != N) throw ShapeError("simulator: token count is not a square grid");
  if (D % heads != 0) throw ShapeError("simulator: token dim not divisible by heads");
  // re-fold tokens to the patch grid: (B,N,D) -> (B,D,grid,grid)
  Tensor x_conv = reshape(transpose(tokens, 1, 2), {B, D, grid, grid});
  Tensor z_map = bn.forward(pw.forward(dw.forward(x_conv)), training);
  Tensor z = transpose(reshape(z_map, {B, D, N}), 1, 2);  // (B,N,D)
  int dh = D / heads;
  Tensor zh = transpose(reshape(z, {B, N, heads, dh}), 1, 2);  // (B,H,N,dh)
  return selu(matmul(zh, transpose(zh, 2, 3)));               // (B,H,N,N)
}

void GradSimulator::params(std::vector<Tensor>& out) const {
  dw.params(out);
  pw.params(out);
  bn.params(out);
}

void GradSimulator::buffers(BufferList& out, const std::string& name) {
  bn.buffers(out, name + ".bn");
}

PhiEmbedder::PhiEmbedder(Rng& rng, const std::string& name)
    : c1(1, 8, 3, 2, 1, rng, name + ".c1"), c2(8, 8, 3, 2, 1, rng, name + ".c2") {}

Tensor PhiEmbedder::forward(const Tensor& grad_map) const {
  Tensor x = grad_map;
  if (x.shape().size() == 2)
    x = reshape(x, {1, 1, x.shape()[0], x.shape()[1]});
  if (x.shape().size() != 4 || x.shape()[1] != 1)
    throw ShapeError("phi expects (B,1,N,N) maps, got " + shape_str(grad_map.shape()));
  Tensor h = selu(c1.forward(x));
  h = selu(c2.forward(h));
  h = adaptive_avg_pool(h, 4, 4);  // (B,8,4,4)
  return reshape(h, {x.shape()[0], 128});
}

void PhiEmbedder::params(std::vector<Tensor>& out) const {
  c1.params(out);
  c2.params(out);
}

Tensor embed_grad(const PhiEmbedder& phi, const Tensor& grad_map) { return phi.forward(grad_map); }

Tensor importance_fusion(const Tensor& grad_sim, real tau, real alpha_fuse) {
  Tensor p_pos = softmax_temp(grad_sim, tau);
  Tensor p_neg = softmax_temp(neg(grad_sim), tau);
  return add(scale(p_pos, alpha_fuse), affine(p_neg, -(real(1) - alpha_fuse), real(1) - alpha_fuse));
}

std::vector<int> select_topk_row(const real* row, int n, int k) {
  k = std::min(k, n);
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  // value descending, index ascending on ties
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
    if (row[a] != row[b]) return row[a] > row[b];
    return a < b;
  });
  idx.resize(static_cast<size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::shared_ptr<Mask> build_topk_mask(const Tensor& importance, int k) {
  const Shape& s = importance.shape();
  if (s.size() < 2) throw ShapeError("top-k mask needs (..., N, N) importance");
  int N = s.back();
  if (k < 1) throw ConfigError("top-k mask: k must be at least 1");
  std::int64_t rows = importance.numel() / N;
  auto mask = std::make_shared<Mask>(importance.value().size(), 0);
  const auto& v = importance.value();
  for (std::int64_t r = 0; r < rows; ++r) {
    auto sel = select_topk_row(v.data() + r * N, N, k);
    for (int j : sel) (*mask)[static_cast<size_t>(r * N + j)] = 1;
  }
  return mask;
}

SparseAttentionOut sparse_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                    const std::shared_ptr<const Mask>& mask) {
  Tensor scores = matmul(q, transpose(k, -2, -1));
  SparseAttentionOut out;
  out.attn = masked_softmax(scores, mask);
  out.mixed = matmul(out.attn, v);
  return out;
}

namespace {

// (B,H,N,N) -> (B,1,N,N) head average
Tensor head_mean(const Tensor& t) {
  const Shape& s = t.shape();
  if (s.size() != 4) throw ShapeError("head_mean expects (B,H,N,N), got " + shape_str(s));
  int B = s[0], H = s[1], N = s[2];
  Tensor flat = reshape(t, {B, H, N * N});
  Tensor swapped = transpose(flat, 1, 2);           // (B,N*N,H)
  Tensor avg = mean_tail(swapped, 2);               // (B,N*N)
  return reshape(avg, {B, 1, N, N});
}

}  // namespace

Tensor grad_sim_loss(const PhiEmbedder& phi, const Tensor& grad_sim, const Tensor& target) {
  if (grad_sim.shape() != target.shape())
    throw ShapeError("grad_sim_loss: simulator output " + shape_str(grad_sim.shape()) +
                     " vs target " + shape_str(target.shape()));
  Tensor e1 = phi.forward(head_mean(grad_sim));
  Tensor e2 = phi.forward(head_mean(target));
  Tensor d = sub(e1, e2);
  Tensor per_sample = scale(mean_tail(mul(d, d), 1), real(128));  // squared L2 per sample
  return mean_all(per_sample);
}

std::vector<real> ema_smooth(const std::vector<real>& prev, const std::vector<real>& next,
                             real alpha_ema) {
  if (prev.size() != next.size()) throw ShapeError("ema_smooth: size mismatch");
  if (alpha_ema < 0 || alpha_ema >= 1) throw ConfigError("ema alpha must lie in [0,1)");
  std::vector<real> out(prev.size());
  for (size_t i = 0; i < prev.size(); ++i)
    out[i] = alpha_ema * prev[i] + (real(1) - alpha_ema) * next[i];
  return out;
}

real total_objective(real cls, real distill, real grad_sim, std::int64_t t, std::int64_t t_total,
                     LambdaForm form) {
  return cls + distill + lambda_schedule(form, t, t_total) * grad_sim;
}

StudentNet::StudentNet(const DistillConfig& cfg_, Rng& rng)
    : net(cfg_.in_channels, cfg_.stem_student, cfg_.d_student, cfg_.heads, cfg_.patch, rng,
          "student"),
      sim(cfg_.d_student, cfg_.heads, rng, "student.sim"),
      cfg(cfg_),
      meta{cfg_.attention == AttentionVariant::Sparse ? real(1) : real(0)} {
  net.block.cfg.variant = cfg.attention;
}

void StudentNet::sync_variant_from_meta() {
  cfg.attention = meta.at(0) != real(0) ? AttentionVariant::Sparse : AttentionVariant::Dense;
  net.block.cfg.variant = cfg.attention;
}

StudentNet::Out StudentNet::forward(const Tensor& x, bool training) {
  Out out;
  if (cfg.attention == AttentionVariant::Dense) {
    auto o = net.forward(x, training);
    out.logit = o.logit;
    out.attn = o.attn;
    return out;
  }
  // single pass: the projected tokens drive the simulator, whose fused
  // importance picks the attention support; selection itself carries no
  // gradient (detached), the simulator trains through grad_sim_loss only
  Tensor h = net.stem.forward(x, training);
  Tensor loc = net.block.local.forward(h, training);
  Tensor tokens = net.block.proj_in.forward(unfold_patches(loc, cfg.patch));
  Tensor gsim = sim.forward(tokens, cfg.token_grid(), training);
  Tensor importance = importance_fusion(gsim.detach(), cfg.tau, cfg.alpha_fuse);
  int n = cfg.tokens();
  int k = k_for(cfg.k_rule, n, &k_clamp_warnings);
  auto mask = build_topk_mask(importance, k);

  auto t = net.block.txf.forward(tokens, mask, nullptr);
  Tensor folded = fold_patches(net.block.proj_out.forward(t.tokens), cfg.patch,
                               cfg.stem_student, h.shape()[2], h.shape()[3]);
  Tensor map = add(loc, folded);
  Tensor p = net.post2.forward(net.post1.forward(map, training), training);
  Tensor pooled = mean_tail(p, 2);
  out.logit = net.head.forward(pooled);
  out.attn = t.attn;
  out.grad_sim = gsim;
  return out;
}

std::vector<Tensor> StudentNet::trainable_params() const {
  std::vector<Tensor> out;
  net.params(out);
  if (cfg.attention == AttentionVariant::Sparse) sim.params(out);
  return out;
}

NamedState StudentNet::named_state() {
  NamedState st;
  net.params(st.params);
  sim.params(st.params);
  net.buffers(st.buffers, "student");
  sim.buffers(st.buffers, "student.sim");
  st.buffers.emplace_back("student.meta.attention", &meta);
  return st;
}

DistillSystem::DistillSystem(DistillConfig cfg_, Rng& rng)
    : cfg(cfg_),
      teacher(cfg_.in_channels, cfg_.stem_teacher, cfg_.d_teacher, cfg_.heads, cfg_.patch, rng,
              "teacher"),
      student(cfg_, rng),
      phi(rng, "phi") {
  cfg.validate();
  ema.alpha = cfg.alpha_ema;
}

NamedState DistillSystem::teacher_state() {
  NamedState st;
  teacher.params(st.params);
  teacher.buffers(st.buffers, "teacher");
  return st;
}

namespace {

Tensor bce_loss(const Tensor& probs, const Tensor& targets01) {
  constexpr real kEps = real(1e-7);
  Tensor p = clamp(probs, kEps, real(1) - kEps);
  Tensor pos = mul(targets01, vlog(p));
  Tensor neg_part = mul(affine(targets01, real(-1), real(1)), vlog(affine(p, real(-1), real(1))));
  return neg(mean_all(add(pos, neg_part)));
}

Tensor stack_images(const std::vector<std::vector<real>>& images, const std::vector<int>& idx,
                    size_t from, size_t count, int side) {
  std::vector<real> data;
  data.reserve(count * static_cast<size_t>(side) * side);
  for (size_t i = from; i < from + count; ++i) {
    const auto& img = images[static_cast<size_t>(idx[i])];
    data.insert(data.end(), img.begin(), img.end());
  }
  return Tensor::from({static_cast<int>(count), 1, side, side}, std::move(data));
}

Tensor stack_labels(const std::vector<int>& labels, const std::vector<int>& idx, size_t from,
                    size_t count) {
  std::vector<real> data(count);
  for (size_t i = 0; i < count; ++i)
    data[i] = static_cast<real>(labels[static_cast<size_t>(idx[from + i])]);
  return Tensor::from({static_cast<int>(count), 1}, std::move(data));
}

}  // namespace

Tensor teacher_attention_grad(ClassifierNet& teacher, const Tensor& batch, const Tensor& labels) {
  std::vector<Tensor> tp;
  teacher.params(tp);
  zero_grads(tp);
  auto out = teacher.forward(batch, true);
  Tensor loss = bce_loss(sigmoid(out.logit), labels);
  out.attn.zero_grad();
  backward(loss);
  return Tensor::from(out.attn.shape(), out.attn.grad());
}

DistillTrainResult train_distill(DistillSystem& sys, const LabeledDataset& train,
                                 const LabeledDataset& val, int epochs, Rng& rng,
                                 const std::string& checkpoint_path) {
  if (train.images.empty()) throw DataError("train_distill: empty training set");
  if (train.images.size() != train.labels.size())
    throw DataError("train_distill: image/label count mismatch");
  bool has_pos = false, has_neg = false;
  for (int l : train.labels) (l ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg) throw DataError("train_distill: training labels must cover both classes");

  DistillTrainResult result;
  const DistillConfig& cfg = sys.cfg;
  bool sparse = cfg.attention == AttentionVariant::Sparse;
  Adam opt_teacher({cfg.lr});
  Adam opt_student({cfg.lr});
  std::vector<Tensor> teacher_params;
  sys.teacher.params(teacher_params);
  std::vector<Tensor> student_params = sys.student.trainable_params();

  int B = cfg.batch;
  size_t n_batches = train.images.size() / static_cast<size_t>(B);
  if (n_batches == 0) throw DataError("train_distill: dataset smaller than one batch");
  std::int64_t t_total = static_cast<std::int64_t>(n_batches) * epochs;

  std::vector<int> order(train.images.size());
  std::iota(order.begin(), order.end(), 0);

  // epoch snapshot for the dual-threshold selection rule
  std::vector<std::vector<real>> best_params;
  std::vector<std::pair<std::string, std::vector<real>>> best_buffers;
  auto snapshot = [&]() {
    best_params.clear();
    NamedState st = sys.student.named_state();
    for (const auto& p : st.params) best_params.push_back(p.value());
    best_buffers.clear();
    for (const auto& [name, vec] : st.buffers) best_buffers.emplace_back(name, *vec);
  };
  auto restore_and_save = [&]() {
    // leave the live student holding the selected epoch's parameters
    NamedState st = sys.student.named_state();
    if (!best_params.empty()) {
      for (size_t i = 0; i < st.params.size(); ++i) st.params[i].value() = best_params[i];
      for (size_t i = 0; i < st.buffers.size(); ++i) *st.buffers[i].second = best_buffers[i].second;
    }
    if (!checkpoint_path.empty()) save_checkpoint(checkpoint_path, "LSNT", st);
  };
  snapshot();
  restore_and_save();  // epochs==0 leaves an initialized checkpoint

  std::int64_t step = 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    size_t epoch_row_start = result.history.size();
    for (size_t bi = 0; bi < n_batches; ++bi) {
      Tensor x = stack_images(train.images, order, bi * B, static_cast<size_t>(B), train.side);
      Tensor y = stack_labels(train.labels, order, bi * B, static_cast<size_t>(B));

      DistillStepRow row;
      row.step = step + 1;
      row.lambda = static_cast<double>(lambda_schedule(cfg.lambda_form, step, t_total));

      Tensor teacher_logit_detached;
      if (sparse) {
        // teacher pass: classification loss, attention gradient, own update
        auto t_out = sys.teacher.forward(x, true);
        Tensor t_loss = bce_loss(sigmoid(t_out.logit), y);
        t_out.attn.zero_grad();
        zero_grads(teacher_params);
        backward(t_loss);
        size_t per_sample = t_out.attn.grad().size() / static_cast<size_t>(B);
        for (int i = 0; i < B; ++i)
          sys.ema.update(static_cast<size_t>(order[bi * B + static_cast<size_t>(i)]),
                         t_out.attn.grad().data() + static_cast<size_t>(i) * per_sample,
                         per_sample);
        teacher_logit_detached = t_out.logit.detach();
        opt_teacher.step(teacher_params);
      }

      auto s_out = sys.student.forward(x, true);
      Tensor s_prob = sigmoid(s_out.logit);
      Tensor cls = bce_loss(s_prob, y);
      Tensor total = cls;
      row.cls = cls.item();

      if (sparse) {
        // softened probability matching against the detached teacher
        Tensor pt = sigmoid(scale(teacher_logit_detached, real(1) / cfg.distill_temp));
        Tensor ps = sigmoid(scale(s_out.logit, real(1) / cfg.distill_temp));
        constexpr real kEps = real(1e-7);
        Tensor psc = clamp(ps, kEps, real(1) - kEps);
        Tensor distill = neg(mean_all(add(mul(pt, vlog(psc)),
                                          mul(affine(pt, real(-1), real(1)),
                                              vlog(affine(psc, real(-1), real(1)))))));
        row.distill = distill.item();
        total = add(total, distill);

        real lambda_t = lambda_schedule(cfg.lambda_form, step, t_total);
        Tensor target = Tensor::from(s_out.grad_sim.shape(), sys.ema.value);
        Tensor gsim_loss = grad_sim_loss(sys.phi, s_out.grad_sim, target);
        row.gradsim = gsim_loss.item();
        if (lambda_t > 0) total = add(total, scale(gsim_loss, lambda_t));
      }

      if (!std::isfinite(total.item())) {
        result.aborted_non_finite = true;
        restore_and_save();
        return result;
      }
      zero_grads(student_params);
      backward(total);
      opt_student.step(student_params);
      result.history.push_back(row);
      ++step;
    }

    // per-epoch validation, dual-threshold bookkeeping
    double acc = 0;
    EpochCandidate cand;
    cand.epoch = epoch + 1;
    if (!val.images.empty()) {
      auto scores = standalone_inference(sys.student, val.images, val.side, B);
      PredictionSet ps;
      ps.scores = scores;
      ps.labels = val.labels;
      ConfusionMetrics m = confusion_metrics(ps);
      acc = m.accuracy;
      cand.sensitivity = m.sensitivity;
      cand.specificity = m.specificity;
    }
    result.val_candidates.push_back(cand);
    for (size_t i = epoch_row_start; i < result.history.size(); ++i)
      result.history[i].acc_val = acc;
    if (checkpoint_select(result.val_candidates) == cand.epoch) snapshot();
  }
  result.chosen_epoch =
      result.val_candidates.empty() ? 0 : checkpoint_select(result.val_candidates);
  restore_and_save();
  return result;
}

std::vector<double> standalone_inference(StudentNet& student,
                                         const std::vector<std::vector<real>>& images, int side,
                                         int batch) {
  std::vector<double> scores;
  scores.reserve(images.size());
  std::vector<int> idx(images.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (size_t from = 0; from < images.size(); from += static_cast<size_t>(batch)) {
    size_t count = std::min(static_cast<size_t>(batch), images.size() - from);
    Tensor x = stack_images(images, idx, from, count, side);
    auto out = student.forward(x, false);
    Tensor p = sigmoid(out.logit);
    for (size_t i = 0; i < count; ++i) scores.push_back(static_cast<double>(p.value()[i]));
  }
  return scores;
}

double flops_matmul(std::int64_t m, std::int64_t n, std::int64_t p) {
  return static_cast<double>(m) * static_cast<double>(n) * static_cast<double>(p);
}

FlopsBreakdown flops_estimate(const DistillConfig& cfg, bool student) {
  FlopsBreakdown out;
  int side = cfg.image_side;
  int c = student ? cfg.stem_student : cfg.stem_teacher;
  int d = student ? cfg.d_student : cfg.d_teacher;
  int half = side / 2;
  std::int64_t n = cfg.tokens();
  std::int64_t patch_dim = static_cast<std::int64_t>(c) * cfg.patch * cfg.patch;

  // stem + local conv stage
  out.total += flops_matmul(static_cast<std::int64_t>(c) * 9, 1, cfg.in_channels) * half * half;
  out.total += static_cast<double>(c) * c * 9 * half * half;
  // token projections
  out.total += flops_matmul(n, patch_dim, d) * 2;
  // attention projections (q,k,v,o)
  out.total += flops_matmul(n, d, d) * 4;
  // attention score + mix
  bool sparse = student && cfg.attention == AttentionVariant::Sparse;
  std::int64_t k = sparse ? k_for(cfg.k_rule, static_cast<int>(n)) : n;
  out.attention_stage = flops_matmul(n, d, k) + flops_matmul(n, k, d);
  out.total += out.attention_stage;
  // transformer mlp (d -> 2d -> d)
  out.total += flops_matmul(n, d, 2 * d) * 2;
  // post stages (stride-2 convs to the pooled head)
  out.total += static_cast<double>(2 * c) * c * 9 * (half / 2) * (half / 2);
  out.total += static_cast<double>(2 * c) * 2 * c * 9 * (half / 4) * (half / 4);
  // simulator (student sparse path)
  if (sparse) {
    out.total += static_cast<double>(d) * 9 * n;      // depthwise 3x3
    out.total += flops_matmul(n, d, d);               // pointwise
    out.total += flops_matmul(n, d, n);               // Z Z^T
  }
  // classifier head
  out.total += 2 * c;
  return out;
}

}  // namespace lab
