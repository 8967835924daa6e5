#include "commands.hpp"

#include <filesystem>

#include "csv.hpp"
#include "cyclegan.hpp"
#include "distill.hpp"
#include "metrics.hpp"
#include "phantom.hpp"

namespace lab {

namespace {

namespace fs = std::filesystem;

void echo_config(const RunConfig& cfg) {
  write_text_file(cfg.out + "/config_resolved.cfg", cfg.echo());
}

struct SplitImages {
  std::vector<std::vector<real>> images;
  std::vector<int> labels;
  std::vector<std::string> paths;
  int side = 0;
};

bool path_has_kind(const std::string& path, const std::string& kind) {
  auto slash = path.find_last_of('/');
  std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
  return base.rfind(kind + "_", 0) == 0;
}

SplitImages load_split(const std::string& root, const std::string& split,
                       const std::string& kind) {
  if (!fs::exists(root + "/index.csv")) throw IoError("dataset not found: " + root);
  SplitImages out;
  for (const auto& row : read_index(root)) {
    if (row.split != split && split != "*") continue;
    if (!path_has_kind(row.path, kind)) continue;
    PhntImage img = read_phnt(root + "/" + row.path);
    if (out.side == 0) out.side = img.side;
    if (img.side != out.side) throw DataError("mixed image sides in dataset " + root);
    out.images.push_back(std::move(img.pixels));
    out.labels.push_back(row.label);
    out.paths.push_back(row.path);
  }
  return out;
}

TranslationConfig gan_config(const RunConfig& cfg, int side) {
  TranslationConfig tc;
  tc.image_side = side;
  tc.base_channels = cfg.base_channels;
  tc.trunk_blocks = cfg.trunk_blocks;
  tc.private_blocks = cfg.private_blocks;
  tc.disc_base = cfg.disc_base;
  tc.lambda_weight = static_cast<real>(cfg.lambda);
  tc.mu_weight = static_cast<real>(cfg.mu);
  tc.grl_gamma = static_cast<real>(cfg.gamma);
  tc.lr = static_cast<real>(cfg.lr);
  tc.batch = cfg.batch;
  tc.nonsaturating = cfg.gen_adv == "nonsat";
  tc.alg1_weighting = cfg.alg1_weighting != 0;
  return tc;
}

DistillConfig distill_config(const RunConfig& cfg, int side) {
  DistillConfig dc;
  dc.image_side = side;
  dc.stem_teacher = cfg.stem_teacher;
  dc.stem_student = cfg.stem_student;
  dc.d_teacher = cfg.d_teacher;
  dc.d_student = cfg.d_student;
  dc.heads = cfg.heads;
  dc.patch = cfg.patch;
  dc.tau = static_cast<real>(cfg.tau);
  dc.alpha_fuse = static_cast<real>(cfg.alpha_fuse);
  dc.alpha_ema = static_cast<real>(cfg.alpha_ema);
  dc.k_rule = parse_k_rule(cfg.k_rule);
  dc.lambda_form = cfg.lambda_form == "cosine" ? LambdaForm::Cosine : LambdaForm::Linear;
  dc.attention = cfg.attention == "dense" ? AttentionVariant::Dense : AttentionVariant::Sparse;
  dc.distill_temp = static_cast<real>(cfg.distill_temp);
  dc.lr = static_cast<real>(cfg.lr);
  dc.batch = cfg.batch;
  return dc;
}

void write_point_metrics(const std::string& path, const PredictionSet& ps) {
  ConfusionMetrics m = confusion_metrics(ps);
  CsvTable t;
  t.header = {"metric", "value"};
  t.rows.push_back({"n", std::to_string(ps.scores.size())});
  t.rows.push_back({"tp", std::to_string(m.tp)});
  t.rows.push_back({"fp", std::to_string(m.fp)});
  t.rows.push_back({"fn", std::to_string(m.fn)});
  t.rows.push_back({"tn", std::to_string(m.tn)});
  t.rows.push_back({"accuracy", fmt_real(m.accuracy)});
  t.rows.push_back({"sensitivity", fmt_real(m.sensitivity)});
  t.rows.push_back({"specificity", fmt_real(m.specificity)});
  t.rows.push_back({"precision", m.precision_defined ? fmt_real(m.precision) : "n/a"});
  t.rows.push_back({"f1", m.precision_defined ? fmt_real(m.f1) : "n/a"});
  t.rows.push_back({"roc_auc", fmt_real(roc_auc(ps))});
  write_csv(path, t);
}

void write_bootstrap(const std::string& path, const BootstrapReport& r) {
  CsvTable t;
  t.header = {"metric", "mean", "sd", "ci_lo", "ci_hi"};
  for (int i = 0; i < BootstrapReport::kMetricCount; ++i) {
    const MetricStats& s = r.stats[i];
    t.rows.push_back({BootstrapReport::metric_name(i), fmt_real(s.mean), fmt_real(s.sd),
                      fmt_real(s.ci_lo), fmt_real(s.ci_hi)});
  }
  t.rows.push_back({"auc_skipped", std::to_string(r.auc_skipped), "0", "0", "0"});
  write_csv(path, t);
}

void eval_classifier(const RunConfig& cfg, StudentNet& student) {
  SplitImages test = load_split(cfg.dataset, "test", "us");
  if (test.images.empty()) throw DataError("eval: empty test split in " + cfg.dataset);
  PredictionSet ps;
  ps.scores = standalone_inference(student, test.images, test.side, cfg.batch);
  ps.labels = test.labels;
  ps.threshold = cfg.threshold;
  if (!ps.both_classes()) throw DataError("eval: test split lacks a class");

  CsvTable scores;
  scores.header = {"score", "label"};
  for (size_t i = 0; i < ps.scores.size(); ++i)
    scores.rows.push_back({fmt_real(ps.scores[i]), std::to_string(ps.labels[i])});
  write_csv(cfg.out + "/scores.csv", scores);

  write_point_metrics(cfg.out + "/metrics.csv", ps);
  if (cfg.resamples > 0)
    write_bootstrap(cfg.out + "/bootstrap.csv", bootstrap_ci(ps, cfg.resamples, cfg.seed));
}

void eval_predictions_csv(const RunConfig& cfg) {
  CsvTable t = read_csv(cfg.predictions);
  if (t.header != std::vector<std::string>{"score", "label"})
    throw DataError("predictions CSV must have header score,label: " + cfg.predictions);
  PredictionSet ps;
  ps.threshold = cfg.threshold;
  for (const auto& row : t.rows) {
    if (row.size() != 2) throw DataError("malformed predictions row in " + cfg.predictions);
    ps.scores.push_back(std::stod(row[0]));
    ps.labels.push_back(std::stoi(row[1]));
  }
  if (!ps.both_classes()) throw DataError("eval: predictions lack a class");
  write_point_metrics(cfg.out + "/metrics.csv", ps);
  if (cfg.resamples > 0)
    write_bootstrap(cfg.out + "/bootstrap.csv", bootstrap_ci(ps, cfg.resamples, cfg.seed));
}

void eval_translator(const RunConfig& cfg, TranslationSystem& sys) {
  SplitImages test = load_split(cfg.dataset, "test", "mri");
  if (test.images.empty()) throw DataError("eval: empty test split in " + cfg.dataset);
  CsvTable fid;
  fid.header = {"path", "dice"};
  double sum = 0, mn = 1e9, mx = -1e9;
  std::vector<IndexRow> exported;
  for (size_t i = 0; i < test.images.size(); ++i) {
    Tensor x = Tensor::from({1, 1, test.side, test.side}, test.images[i]);
    Tensor y = sys.translate_xy(x, false);
    // sidecar mask: same directory, mask_<seed>.phnt
    std::string mask_path = test.paths[i];
    auto pos = mask_path.rfind("mri_");
    mask_path.replace(pos, 4, "mask_");
    PhntImage mask_img = read_phnt(cfg.dataset + "/" + mask_path);
    std::vector<std::uint8_t> band(mask_img.pixels.size());
    for (size_t j = 0; j < band.size(); ++j)
      band[j] = static_cast<std::uint8_t>(mask_img.pixels[j]) == kBand ? 1 : 0;
    double d = structure_fidelity(y.value(), band, test.side);
    sum += d;
    mn = std::min(mn, d);
    mx = std::max(mx, d);
    fid.rows.push_back({test.paths[i], fmt_real(d)});
    if (cfg.export_translated) {
      PhntImage out_img;
      out_img.side = test.side;
      out_img.channels = 1;
      out_img.label = mask_img.label;
      out_img.pixels = y.value();
      std::string rel = "synthetic/us_" + std::to_string(i) + ".phnt";
      write_phnt(cfg.out + "/translated/" + rel, out_img);
      exported.push_back({rel, "synthetic", mask_img.label, static_cast<std::uint64_t>(i)});
    }
  }
  write_csv(cfg.out + "/fidelity.csv", fid);
  CsvTable summary;
  summary.header = {"stat", "value"};
  summary.rows.push_back({"n", std::to_string(test.images.size())});
  summary.rows.push_back({"mean", fmt_real(sum / static_cast<double>(test.images.size()))});
  summary.rows.push_back({"min", fmt_real(mn)});
  summary.rows.push_back({"max", fmt_real(mx)});
  write_csv(cfg.out + "/fidelity_summary.csv", summary);
  if (cfg.export_translated) {
    CsvTable idx;
    idx.header = {"path", "split", "label", "seed"};
    for (const auto& r : exported)
      idx.rows.push_back({r.path, r.split, std::to_string(r.label), std::to_string(r.seed)});
    write_csv(cfg.out + "/translated/index.csv", idx);
  }
}

}  // namespace

void cmd_gen_data(const RunConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.out);
  DatasetSpec spec;
  spec.n_per_class = cfg.n_per_class;
  spec.side = cfg.side;
  spec.seed = cfg.seed;
  gen_dataset(cfg.out, spec);
  echo_config(cfg);
}

void cmd_train_gan(const RunConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.out);
  SplitImages x = load_split(cfg.dataset, "train", "mri");
  SplitImages y = load_split(cfg.dataset, "train", "us");
  if (x.images.empty() || y.images.empty())
    throw DataError("train-gan: training split is empty in " + cfg.dataset);
  UnpairedDataset data;
  data.x_images = std::move(x.images);
  data.y_images = std::move(y.images);
  data.side = x.side;

  Rng rng(cfg.seed);
  TranslationSystem sys(gan_config(cfg, data.side), rng);
  GanTrainResult res =
      train_gan(sys, data, cfg.epochs, rng, cfg.out + "/checkpoint_gan.sgcg");

  CsvTable t;
  t.header = {"epoch", "adv_g", "adv_f", "cyc", "maf", "dom", "id", "total"};
  for (const auto& r : res.history)
    t.rows.push_back({std::to_string(r.epoch), fmt_real(r.adv_g), fmt_real(r.adv_f),
                      fmt_real(r.cyc), fmt_real(r.maf), fmt_real(r.dom), fmt_real(r.id),
                      fmt_real(r.total)});
  write_csv(cfg.out + "/history.csv", t);
  echo_config(cfg);
  if (res.aborted_non_finite)
    throw NumericError("train-gan: non-finite loss, aborted (last checkpoint retained)");
}

void cmd_train_lsnet(const RunConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.out);
  SplitImages train = load_split(cfg.dataset, "train", "us");
  SplitImages val = load_split(cfg.dataset, "val", "us");
  if (train.images.empty()) throw DataError("train-lsnet: training split is empty");
  if (!cfg.synthetic_dataset.empty()) {
    // two-phase strategy in miniature: fold a synthetic corpus into training
    SplitImages syn = load_split(cfg.synthetic_dataset, "*", "us");
    if (syn.side != 0 && syn.side != train.side)
      throw DataError("synthetic dataset side does not match training data");
    for (size_t i = 0; i < syn.images.size(); ++i) {
      train.images.push_back(std::move(syn.images[i]));
      train.labels.push_back(syn.labels[i]);
    }
  }

  LabeledDataset tr{std::move(train.images), std::move(train.labels), train.side};
  LabeledDataset va{std::move(val.images), std::move(val.labels), val.side};

  Rng rng(cfg.seed);
  DistillSystem sys(distill_config(cfg, tr.side), rng);
  DistillTrainResult res =
      train_distill(sys, tr, va, cfg.epochs, rng, cfg.out + "/checkpoint_lsnet.sgcg");

  CsvTable t;
  t.header = {"step", "cls", "distill", "gradsim", "lambda", "acc_val"};
  for (const auto& r : res.history)
    t.rows.push_back({std::to_string(r.step), fmt_real(r.cls), fmt_real(r.distill),
                      fmt_real(r.gradsim), fmt_real(r.lambda), fmt_real(r.acc_val)});
  write_csv(cfg.out + "/history.csv", t);

  CsvTable sel;
  sel.header = {"epoch", "sensitivity", "specificity", "selected"};
  for (const auto& c : res.val_candidates)
    sel.rows.push_back({std::to_string(c.epoch), fmt_real(c.sensitivity),
                        fmt_real(c.specificity),
                        c.epoch == res.chosen_epoch ? "1" : "0"});
  write_csv(cfg.out + "/selection.csv", sel);
  echo_config(cfg);
  if (res.aborted_non_finite)
    throw NumericError("train-lsnet: non-finite loss, aborted (last checkpoint retained)");
}

void cmd_eval(const RunConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.out);
  if (!cfg.predictions.empty()) {
    eval_predictions_csv(cfg);
    echo_config(cfg);
    return;
  }
  if (!fs::exists(cfg.checkpoint)) throw IoError("checkpoint not found: " + cfg.checkpoint);
  std::string tag = checkpoint_tag(cfg.checkpoint);
  // image side comes from the data, architecture from the config
  SplitImages probe = load_split(cfg.dataset, "test", tag == "LSNT" ? "us" : "mri");
  if (probe.side == 0) throw DataError("eval: empty test split in " + cfg.dataset);
  Rng rng(cfg.seed);
  if (tag == "LSNT") {
    DistillConfig dc = distill_config(cfg, probe.side);
    StudentNet student(dc, rng);
    NamedState st = student.named_state();
    load_checkpoint(cfg.checkpoint, "LSNT", st);
    student.sync_variant_from_meta();
    eval_classifier(cfg, student);
  } else {
    TranslationSystem sys(gan_config(cfg, probe.side), rng);
    NamedState st = sys.named_state();
    load_checkpoint(cfg.checkpoint, "GANS", st);
    eval_translator(cfg, sys);
  }
  echo_config(cfg);
}

void cmd_screen(const RunConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.out);
  std::vector<ScreeningProfile> rows;
  for (double p : cfg.prevalences) rows.push_back(screening_indicators(cfg.se, cfg.sp, p));

  CsvTable t;
  t.header = {"prevalence", "sensitivity", "specificity", "ppv", "npv", "lr_positive",
              "screen_positive_rate", "nns", "ppv_display", "npv_display", "lr_display",
              "rate_display", "nns_display"};
  for (const auto& s : rows)
    t.rows.push_back({fmt_real(s.prevalence), fmt_real(s.sensitivity), fmt_real(s.specificity),
                      fmt_real(s.ppv), fmt_real(s.npv), fmt_real(s.lr_positive),
                      fmt_real(s.screen_positive_rate), fmt_real(s.nns),
                      screening_display_ppv(s), screening_display_npv(s),
                      screening_display_lr(s), screening_display_rate(s),
                      screening_display_nns(s)});
  write_csv(cfg.out + "/screening.csv", t);
  write_text_file(cfg.out + "/screening.txt", screening_table(rows));
  echo_config(cfg);
}

void run_command(const RunConfig& cfg) {
  if (cfg.command == "gen-data") cmd_gen_data(cfg);
  else if (cfg.command == "train-gan") cmd_train_gan(cfg);
  else if (cfg.command == "train-lsnet") cmd_train_lsnet(cfg);
  else if (cfg.command == "eval") cmd_eval(cfg);
  else if (cfg.command == "screen") cmd_screen(cfg);
  else throw ConfigError("unknown command '" + cfg.command + "'");
}

int status_of_exception(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const IoError*>(&e)) return 3;
  if (dynamic_cast<const NumericError*>(&e)) return 4;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const ShapeError*>(&e)) return 5;
  return 1;
}

}  // namespace lab
