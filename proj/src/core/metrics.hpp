// Classification metrics, bootstrap confidence intervals, the screening
// indicator calculator and the dual-threshold checkpoint selection rule.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"

namespace lab {

struct PredictionSet {
  std::vector<double> scores;  // in [0,1]
  std::vector<int> labels;     // 0/1
  double threshold = 0.5;
  void validate() const;
  bool both_classes() const;
};

struct ConfusionMetrics {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  double accuracy = 0, sensitivity = 0, specificity = 0, precision = 0, f1 = 0;
  // no predicted positives: precision (and f1) are flagged not-applicable
  bool precision_defined = true;
};

ConfusionMetrics confusion_metrics(const PredictionSet& p);

// Mann-Whitney statistic; ties count 1/2. Throws on single-class input.
double roc_auc(const PredictionSet& p);

struct MetricStats {
  double mean = 0, sd = 0, ci_lo = 0, ci_hi = 0;
};

struct BootstrapReport {
  // order: accuracy, sensitivity, specificity, precision, f1, roc_auc
  static constexpr int kMetricCount = 6;
  static const char* metric_name(int i);
  MetricStats stats[kMetricCount];
  int resamples = 0;
  std::uint64_t seed = 0;
  int auc_skipped = 0;  // resamples lacking a class, excluded from the AUC draw
};

// Resamples with replacement at the original size; per-resample seeds derive
// from the master seed so results do not depend on the worker count.
BootstrapReport bootstrap_ci(const PredictionSet& p, int n_resamples, std::uint64_t seed);

struct ScreeningProfile {
  double sensitivity = 0, specificity = 0, prevalence = 0;
  double ppv = 0, npv = 0, lr_positive = 0, screen_positive_rate = 0, nns = 0;
  bool lr_infinite = false;   // specificity == 1
  bool nns_infinite = false;  // prevalence * sensitivity == 0
};

ScreeningProfile screening_indicators(double se, double sp, double prevalence);

// Paper-style display forms. Percent columns round to 2 decimals; PPV rounds
// to 3 significant figures capped at 2 decimals; NPV that would print as
// 100.00 for an imperfect test floors to 99.99; NNS rounds to nearest.
std::string screening_display_ppv(const ScreeningProfile& s);
std::string screening_display_npv(const ScreeningProfile& s);
std::string screening_display_lr(const ScreeningProfile& s);
std::string screening_display_rate(const ScreeningProfile& s);
std::string screening_display_nns(const ScreeningProfile& s);

// aligned plain-text table, one row per profile
std::string screening_table(const std::vector<ScreeningProfile>& rows);

struct EpochCandidate {
  int epoch = 0;
  double sensitivity = 0, specificity = 0;
};

// Highest sensitivity while every candidate is below 0.95; once candidates
// reach 0.95 sensitivity, highest specificity among those. Ties go to the
// latest epoch.
int checkpoint_select(const std::vector<EpochCandidate>& candidates);

}  // namespace lab
