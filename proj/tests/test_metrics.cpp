#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "core/metrics.hpp"
#include "core/rng.hpp"

using namespace lab;

namespace {
PredictionSet make_set(std::vector<double> scores, std::vector<int> labels, double thr = 0.5) {
  PredictionSet p;
  p.scores = std::move(scores);
  p.labels = std::move(labels);
  p.threshold = thr;
  return p;
}
}  // namespace

TEST_CASE("confusion metrics hand example: TP=2 FP=1 FN=0 TN=3") {
  auto p = make_set({0.9, 0.8, 0.7, 0.2, 0.1, 0.3}, {1, 1, 0, 0, 0, 0});
  ConfusionMetrics m = confusion_metrics(p);
  CHECK(m.tp == 2);
  CHECK(m.fp == 1);
  CHECK(m.fn == 0);
  CHECK(m.tn == 3);
  CHECK(m.sensitivity == doctest::Approx(1.0));
  CHECK(m.specificity == doctest::Approx(0.75));
  CHECK(m.precision == doctest::Approx(2.0 / 3).epsilon(1e-4));
  CHECK(m.accuracy == doctest::Approx(5.0 / 6).epsilon(1e-4));
  CHECK(m.f1 == doctest::Approx(0.8).epsilon(1e-6));
}

TEST_CASE("confusion metrics degenerate cases") {
  SUBCASE("all correct gives all ones") {
    auto p = make_set({0.9, 0.1, 0.8, 0.2}, {1, 0, 1, 0});
    ConfusionMetrics m = confusion_metrics(p);
    CHECK(m.accuracy == 1.0);
    CHECK(m.sensitivity == 1.0);
    CHECK(m.specificity == 1.0);
    CHECK(m.precision == 1.0);
    CHECK(m.f1 == 1.0);
  }
  SUBCASE("no predicted positives flags precision") {
    auto p = make_set({0.1, 0.2, 0.3}, {1, 0, 1});
    ConfusionMetrics m = confusion_metrics(p);
    CHECK(m.sensitivity == 0.0);
    CHECK_FALSE(m.precision_defined);
    CHECK(std::isnan(m.precision));
  }
  SUBCASE("empty set is an error") {
    PredictionSet p;
    CHECK_THROWS_AS(confusion_metrics(p), DataError);
  }
  SUBCASE("invariant under simultaneous permutation") {
    auto p = make_set({0.9, 0.2, 0.7, 0.4}, {1, 0, 0, 1});
    auto q = make_set({0.4, 0.7, 0.2, 0.9}, {1, 0, 0, 1});
    ConfusionMetrics a = confusion_metrics(p), b = confusion_metrics(q);
    CHECK(a.accuracy == b.accuracy);
    CHECK(a.sensitivity == b.sensitivity);
    CHECK(a.specificity == b.specificity);
  }
}

TEST_CASE("roc auc") {
  SUBCASE("perfect separation gives 1") {
    CHECK(roc_auc(make_set({0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0})) == doctest::Approx(1.0));
  }
  SUBCASE("hand case: 3 of 4 pairs concordant") {
    CHECK(roc_auc(make_set({0.9, 0.2, 0.1, 0.8}, {1, 1, 0, 0})) == doctest::Approx(0.75));
  }
  SUBCASE("all ties give one half") {
    CHECK(roc_auc(make_set({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0})) == doctest::Approx(0.5));
  }
  SUBCASE("single-class input is an error") {
    CHECK_THROWS_AS(roc_auc(make_set({0.5, 0.6}, {1, 1})), DataError);
  }
  SUBCASE("invariant under strictly monotone transforms") {
    Rng rng(5);
    for (int t = 0; t < 30; ++t) {
      std::vector<double> s;
      std::vector<int> l;
      for (int i = 0; i < 40; ++i) {
        s.push_back(rng.uniform());
        l.push_back(rng.uniform() < 0.4 ? 1 : 0);
      }
      l[0] = 1;
      l[1] = 0;
      double base = roc_auc(make_set(s, l));
      std::vector<double> warped;
      for (double v : s) warped.push_back(1.0 / (1.0 + std::exp(-7 * (v - 0.3))));
      CHECK(roc_auc(make_set(warped, l)) == doctest::Approx(base).epsilon(1e-12));
    }
  }
}

TEST_CASE("bootstrap") {
  SUBCASE("all-correct input gives [1,1] intervals") {
    auto p = make_set({0.9, 0.1, 0.8, 0.2, 0.95, 0.05}, {1, 0, 1, 0, 1, 0});
    BootstrapReport r = bootstrap_ci(p, 500, 7);
    for (int m = 0; m < BootstrapReport::kMetricCount; ++m) {
      if (m == 5 && r.auc_skipped > 0) continue;  // draws lacking a class skip auc
      CHECK(r.stats[m].ci_lo == doctest::Approx(1.0));
      CHECK(r.stats[m].ci_hi == doctest::Approx(1.0));
    }
  }
  SUBCASE("same seed reproduces the report exactly") {
    Rng rng(11);
    std::vector<double> s;
    std::vector<int> l;
    for (int i = 0; i < 60; ++i) {
      s.push_back(rng.uniform());
      l.push_back(static_cast<int>(rng.below(2)));
    }
    l[0] = 1;
    l[1] = 0;
    auto p = make_set(s, l);
    BootstrapReport a = bootstrap_ci(p, 300, 99);
    BootstrapReport b = bootstrap_ci(p, 300, 99);
    for (int m = 0; m < BootstrapReport::kMetricCount; ++m) {
      CHECK(a.stats[m].mean == b.stats[m].mean);
      CHECK(a.stats[m].ci_lo == b.stats[m].ci_lo);
      CHECK(a.stats[m].ci_hi == b.stats[m].ci_hi);
    }
    CHECK(a.auc_skipped == b.auc_skipped);
  }
  SUBCASE("ci width narrows with sample size at fixed accuracy") {
    double prev_width = 1e9;
    for (int n : {100, 400, 1600}) {
      std::vector<double> s;
      std::vector<int> l;
      Rng rng(1234);
      for (int i = 0; i < n; ++i) {
        int label = i % 2;
        bool correct = rng.uniform() < 0.9;  // fixed accuracy
        s.push_back(correct == (label == 1) ? 0.9 : 0.1);
        l.push_back(label);
      }
      BootstrapReport r = bootstrap_ci(make_set(s, l), 2000, 5);
      double width = r.stats[0].ci_hi - r.stats[0].ci_lo;
      CHECK(width < prev_width);
      prev_width = width;
    }
  }
  SUBCASE("bootstrap means stay within 3 standard errors of the point metric") {
    Rng rng(77);
    std::vector<double> s;
    std::vector<int> l;
    for (int i = 0; i < 200; ++i) {
      int label = i % 2;
      bool correct = rng.uniform() < 0.85;
      s.push_back(correct == (label == 1) ? 0.7 + 0.2 * rng.uniform() : 0.1 + 0.2 * rng.uniform());
      l.push_back(label);
    }
    auto p = make_set(s, l);
    ConfusionMetrics point = confusion_metrics(p);
    BootstrapReport r = bootstrap_ci(p, 10000, 3);
    double se = r.stats[0].sd / std::sqrt(10000.0) * 100;  // generous envelope
    CHECK(std::fabs(r.stats[0].mean - point.accuracy) <= std::max(3 * se, 0.01));
  }
}

TEST_CASE("screening indicators reproduce the golden table") {
  const double se = 0.9950, sp = 0.9722;
  SUBCASE("general screening P=0.02%") {
    ScreeningProfile s = screening_indicators(se, sp, 0.0002);
    CHECK(screening_display_lr(s) == "35.79");
    CHECK(screening_display_ppv(s) == "0.71%");
    CHECK(screening_display_npv(s) == "~99.99%");
    CHECK(screening_display_rate(s) == "2.80%");
    CHECK(screening_display_nns(s) == "5025");
  }
  SUBCASE("postmenopausal bleeding P=9%") {
    ScreeningProfile s = screening_indicators(se, sp, 0.09);
    CHECK(screening_display_ppv(s) == "78.00%");
    CHECK(screening_display_rate(s) == "11.48%");
    CHECK(screening_display_nns(s) == "11");
    CHECK(screening_display_npv(s) == "99.95%");
  }
  SUBCASE("atypical hyperplasia P=30.8%") {
    ScreeningProfile s = screening_indicators(se, sp, 0.308);
    CHECK(screening_display_ppv(s) == "94.10%");
    CHECK(screening_display_rate(s) == "32.57%");
    CHECK(screening_display_nns(s) == "3");
  }
  SUBCASE("perfect test flags infinite LR+ and unit PPV") {
    ScreeningProfile s = screening_indicators(1.0, 1.0, 0.1);
    CHECK(s.lr_infinite);
    CHECK(s.ppv == doctest::Approx(1.0));
  }
  SUBCASE("zero prevalence flags infinite NNS") {
    ScreeningProfile s = screening_indicators(se, sp, 0.0);
    CHECK(s.nns_infinite);
    CHECK(screening_display_nns(s) == "inf");
  }
  SUBCASE("out-of-range inputs rejected") {
    CHECK_THROWS_AS(screening_indicators(1.2, 0.5, 0.5), ConfigError);
    CHECK_THROWS_AS(screening_indicators(0.5, -0.1, 0.5), ConfigError);
  }
  SUBCASE("algebraic identities hold exactly") {
    Rng rng(9);
    for (int t = 0; t < 200; ++t) {
      double s_se = rng.uniform(0.01, 1.0), s_sp = rng.uniform(0.0, 0.999);
      double p = rng.uniform(0.001, 0.999);
      ScreeningProfile s = screening_indicators(s_se, s_sp, p);
      CHECK(s.screen_positive_rate ==
            doctest::Approx(p * s_se + (1 - p) * (1 - s_sp)).epsilon(1e-14));
      CHECK(s.ppv * s.screen_positive_rate == doctest::Approx(p * s_se).epsilon(1e-12));
      // LR+ does not depend on prevalence
      ScreeningProfile s2 = screening_indicators(s_se, s_sp, p / 2);
      CHECK(s.lr_positive == s2.lr_positive);
    }
  }
}

TEST_CASE("checkpoint selection rule") {
  SUBCASE("three-candidate example picks epoch 3") {
    CHECK(checkpoint_select({{1, 0.94, 0.99}, {2, 0.96, 0.90}, {3, 0.97, 0.95}}) == 3);
  }
  SUBCASE("all below 0.95 picks the sensitivity argmax") {
    CHECK(checkpoint_select({{1, 0.91, 0.99}, {2, 0.94, 0.90}, {3, 0.80, 0.95}}) == 2);
  }
  SUBCASE("single candidate wins") {
    CHECK(checkpoint_select({{7, 0.5, 0.5}}) == 7);
  }
  SUBCASE("ties go to the latest epoch") {
    CHECK(checkpoint_select({{1, 0.96, 0.95}, {2, 0.96, 0.95}}) == 2);
    CHECK(checkpoint_select({{1, 0.90, 0.95}, {2, 0.90, 0.80}}) == 2);
  }
  SUBCASE("empty list is an error") {
    CHECK_THROWS_AS(checkpoint_select({}), DataError);
  }
}
