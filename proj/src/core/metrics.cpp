#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "csv.hpp"
#include "rng.hpp"
#include "threads.hpp"

namespace lab {

void PredictionSet::validate() const {
  if (scores.empty()) throw DataError("prediction set is empty");
  if (scores.size() != labels.size())
    throw DataError("prediction set has " + std::to_string(scores.size()) + " scores but " +
                    std::to_string(labels.size()) + " labels");
  for (double s : scores)
    if (!std::isfinite(s)) throw DataError("non-finite score in prediction set");
  for (int l : labels)
    if (l != 0 && l != 1) throw DataError("labels must be 0/1");
}

bool PredictionSet::both_classes() const {
  bool pos = false, neg = false;
  for (int l : labels) (l ? pos : neg) = true;
  return pos && neg;
}

ConfusionMetrics confusion_metrics(const PredictionSet& p) {
  p.validate();
  ConfusionMetrics m;
  for (size_t i = 0; i < p.scores.size(); ++i) {
    bool pred = p.scores[i] >= p.threshold;
    bool truth = p.labels[i] == 1;
    if (pred && truth) ++m.tp;
    else if (pred && !truth) ++m.fp;
    else if (!pred && truth) ++m.fn;
    else ++m.tn;
  }
  double n = static_cast<double>(p.scores.size());
  m.accuracy = (m.tp + m.tn) / n;
  m.sensitivity = (m.tp + m.fn) ? static_cast<double>(m.tp) / (m.tp + m.fn) : 0.0;
  m.specificity = (m.tn + m.fp) ? static_cast<double>(m.tn) / (m.tn + m.fp) : 0.0;
  if (m.tp + m.fp == 0) {
    m.precision_defined = false;
    m.precision = std::numeric_limits<double>::quiet_NaN();
    m.f1 = std::numeric_limits<double>::quiet_NaN();
  } else {
    m.precision = static_cast<double>(m.tp) / (m.tp + m.fp);
    double denom = m.precision + m.sensitivity;
    m.f1 = denom > 0 ? 2 * m.precision * m.sensitivity / denom : 0.0;
  }
  return m;
}

double roc_auc(const PredictionSet& p) {
  p.validate();
  if (!p.both_classes()) throw DataError("roc_auc needs both classes present");
  size_t n = p.scores.size();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return p.scores[a] < p.scores[b]; });
  // midranks over tied groups
  std::vector<double> rank(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && p.scores[order[j + 1]] == p.scores[order[i]]) ++j;
    double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double n1 = 0, rank_sum = 0;
  for (size_t k = 0; k < n; ++k)
    if (p.labels[k] == 1) {
      n1 += 1;
      rank_sum += rank[k];
    }
  double n0 = static_cast<double>(n) - n1;
  return (rank_sum - n1 * (n1 + 1) / 2.0) / (n1 * n0);
}

const char* BootstrapReport::metric_name(int i) {
  static const char* names[kMetricCount] = {"accuracy", "sensitivity", "specificity",
                                            "precision", "f1", "roc_auc"};
  return names[i];
}

namespace {

void point_metrics(const PredictionSet& p, double out[BootstrapReport::kMetricCount],
                   bool& auc_valid) {
  ConfusionMetrics m = confusion_metrics(p);
  out[0] = m.accuracy;
  out[1] = m.sensitivity;
  out[2] = m.specificity;
  out[3] = m.precision;
  out[4] = m.f1;
  auc_valid = p.both_classes();
  out[5] = auc_valid ? roc_auc(p) : std::numeric_limits<double>::quiet_NaN();
}

MetricStats summarize(std::vector<double>& draws) {
  MetricStats s;
  if (draws.empty()) {
    s.mean = s.sd = s.ci_lo = s.ci_hi = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  double sum = 0;
  for (double v : draws) sum += v;
  s.mean = sum / static_cast<double>(draws.size());
  double ss = 0;
  for (double v : draws) ss += (v - s.mean) * (v - s.mean);
  s.sd = draws.size() > 1 ? std::sqrt(ss / static_cast<double>(draws.size() - 1)) : 0.0;
  std::sort(draws.begin(), draws.end());
  auto percentile = [&](double q) {
    double pos = q * static_cast<double>(draws.size() - 1);
    size_t lo = static_cast<size_t>(pos);
    size_t hi = std::min(lo + 1, draws.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return draws[lo] * (1 - frac) + draws[hi] * frac;
  };
  s.ci_lo = percentile(0.025);
  s.ci_hi = percentile(0.975);
  return s;
}

}  // namespace

BootstrapReport bootstrap_ci(const PredictionSet& p, int n_resamples, std::uint64_t seed) {
  p.validate();
  if (n_resamples < 1) throw ConfigError("bootstrap needs at least one resample");
  BootstrapReport report;
  report.resamples = n_resamples;
  report.seed = seed;

  size_t n = p.scores.size();
  std::vector<std::vector<double>> draws(
      BootstrapReport::kMetricCount,
      std::vector<double>(static_cast<size_t>(n_resamples),
                          std::numeric_limits<double>::quiet_NaN()));
  Rng master(seed);
  parallel_for(n_resamples, [&](std::int64_t r) {
    Rng rng = master.fork(static_cast<std::uint64_t>(r));
    PredictionSet q;
    q.threshold = p.threshold;
    q.scores.resize(n);
    q.labels.resize(n);
    for (size_t i = 0; i < n; ++i) {
      size_t j = static_cast<size_t>(rng.below(n));
      q.scores[i] = p.scores[j];
      q.labels[i] = p.labels[j];
    }
    double vals[BootstrapReport::kMetricCount];
    bool auc_valid = false;
    point_metrics(q, vals, auc_valid);
    for (int m = 0; m < BootstrapReport::kMetricCount; ++m)
      draws[m][static_cast<size_t>(r)] = vals[m];
  });

  for (int m = 0; m < BootstrapReport::kMetricCount; ++m) {
    std::vector<double> valid;
    valid.reserve(draws[m].size());
    for (double v : draws[m])
      if (std::isfinite(v)) valid.push_back(v);
    if (m == 5) report.auc_skipped = n_resamples - static_cast<int>(valid.size());
    report.stats[m] = summarize(valid);
  }
  return report;
}

ScreeningProfile screening_indicators(double se, double sp, double prevalence) {
  auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in01(se) || !in01(sp) || !in01(prevalence))
    throw ConfigError("screening_indicators: Se, Sp and P must lie in [0,1]");
  ScreeningProfile s;
  s.sensitivity = se;
  s.specificity = sp;
  s.prevalence = prevalence;
  double inf = std::numeric_limits<double>::infinity();

  s.lr_infinite = (sp == 1.0);
  s.lr_positive = s.lr_infinite ? inf : se / (1.0 - sp);

  s.screen_positive_rate = prevalence * se + (1.0 - prevalence) * (1.0 - sp);
  s.ppv = s.screen_positive_rate > 0
              ? prevalence * se / s.screen_positive_rate
              : std::numeric_limits<double>::quiet_NaN();
  double npv_den = (1.0 - prevalence) * sp + prevalence * (1.0 - se);
  s.npv = npv_den > 0 ? (1.0 - prevalence) * sp / npv_den
                      : std::numeric_limits<double>::quiet_NaN();

  s.nns_infinite = (prevalence * se == 0.0);
  s.nns = s.nns_infinite ? inf : 1.0 / (prevalence * se);
  return s;
}

namespace {

// percent, 3 significant figures, at most 2 decimals
std::string pct_3sig(double frac) {
  double v = frac * 100.0;
  if (!std::isfinite(v)) return "n/a";
  if (v == 0.0) return "0.00";
  int mag = static_cast<int>(std::floor(std::log10(std::fabs(v))));
  int dp = std::clamp(2 - mag, 0, 2);
  double scale = std::pow(10.0, dp);
  double rounded = std::round(v * scale) / scale;
  return fmt_fixed(rounded, 2);
}

std::string pct_2dp(double frac) {
  if (!std::isfinite(frac)) return "n/a";
  return fmt_fixed(frac * 100.0, 2);
}

}  // namespace

std::string screening_display_ppv(const ScreeningProfile& s) { return pct_3sig(s.ppv) + "%"; }

std::string screening_display_npv(const ScreeningProfile& s) {
  if (!std::isfinite(s.npv)) return "n/a";
  if (s.npv < 1.0 && std::round(s.npv * 10000.0) >= 10000.0) return "~99.99%";
  return pct_2dp(s.npv) + "%";
}

std::string screening_display_lr(const ScreeningProfile& s) {
  return s.lr_infinite ? "inf" : fmt_fixed(s.lr_positive, 2);
}

std::string screening_display_rate(const ScreeningProfile& s) {
  return pct_2dp(s.screen_positive_rate) + "%";
}

std::string screening_display_nns(const ScreeningProfile& s) {
  if (s.nns_infinite) return "inf";
  return std::to_string(static_cast<long long>(std::llround(s.nns)));
}

std::string screening_table(const std::vector<ScreeningProfile>& rows) {
  std::vector<std::vector<std::string>> cells;
  cells.push_back({"Prevalence", "PPV", "NPV", "LR+", "Screen-Positive Rate", "NNS"});
  for (const auto& s : rows)
    cells.push_back({pct_2dp(s.prevalence) + "%", screening_display_ppv(s),
                     screening_display_npv(s), screening_display_lr(s),
                     screening_display_rate(s), screening_display_nns(s)});
  std::vector<size_t> width(cells[0].size(), 0);
  for (const auto& row : cells)
    for (size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::string out;
  for (const auto& row : cells) {
    for (size_t c = 0; c < row.size(); ++c) {
      std::string cell = row[c];
      cell.resize(width[c], ' ');
      out += cell;
      if (c + 1 < row.size()) out += "  ";
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += '\n';
  }
  return out;
}

int checkpoint_select(const std::vector<EpochCandidate>& candidates) {
  if (candidates.empty()) throw DataError("checkpoint_select: no candidates");
  bool any_high = false;
  for (const auto& c : candidates)
    if (c.sensitivity >= 0.95) any_high = true;
  const EpochCandidate* best = nullptr;
  auto better = [](double key, int epoch, const EpochCandidate* cur, double cur_key) {
    return !cur || key > cur_key || (key == cur_key && epoch > cur->epoch);
  };
  for (const auto& c : candidates) {
    if (any_high) {
      if (c.sensitivity < 0.95) continue;
      if (better(c.specificity, c.epoch, best, best ? best->specificity : 0)) best = &c;
    } else {
      if (better(c.sensitivity, c.epoch, best, best ? best->sensitivity : 0)) best = &c;
    }
  }
  return best->epoch;
}

}  // namespace lab
