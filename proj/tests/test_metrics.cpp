#include <cmath>

#include "doctest.h"
#include "judgekit/errors.hpp"
#include "judgekit/metrics.hpp"
#include "judgekit/rng.hpp"
#include "oracles.hpp"

using namespace judgekit;

TEST_CASE("confusion arithmetic") {
  const auto m = classification_metrics(Confusion{8, 2, 0, 90});
  CHECK(*m.precision == doctest::Approx(0.8));
  CHECK(*m.recall == 1.0);
  CHECK(*m.f1 == doctest::Approx(8.0 / 9.0));
  CHECK(m.accuracy == doctest::Approx(0.98));

  const auto none_predicted = classification_metrics(Confusion{0, 0, 3, 7});
  CHECK_FALSE(none_predicted.precision.has_value());
  CHECK(*none_predicted.recall == 0.0);
  CHECK_FALSE(none_predicted.f1.has_value());
  const auto no_truth = classification_metrics(Confusion{0, 2, 0, 8});
  CHECK_FALSE(no_truth.recall.has_value());
  CHECK_THROWS_AS(classification_metrics(Confusion{}), UndefinedMetricError);
}

TEST_CASE("classification over judgment sets") {
  JudgmentSet truth, pred;
  truth.add({"t", "a", 1});
  truth.add({"t", "b", 0});
  truth.add({"t", "c", 2});
  pred.add_label("t", "a", true, JudgmentSource::adapter);
  pred.add_label("t", "b", true, JudgmentSource::adapter);
  pred.add_label("t", "c", false, JudgmentSource::adapter);
  const auto m = classification_metrics(pred, truth, "t");
  CHECK(m.counts.tp == 1);
  CHECK(m.counts.fp == 1);
  CHECK(m.counts.fn == 1);
  CHECK(m.counts.tn == 0);
  truth.add({"t", "d", 0});
  CHECK_THROWS(classification_metrics(pred, truth, "t"));
}

TEST_CASE("macro average skips undefined topics") {
  const auto a = classification_metrics(Confusion{1, 1, 0, 2});
  const auto b = classification_metrics(Confusion{0, 0, 2, 2});
  const auto m = macro_average({a, b});
  CHECK(m.topics == 2);
  CHECK(*m.precision == doctest::Approx(0.5));
  CHECK(m.undefined_precision == 1);
  CHECK(*m.recall == doctest::Approx(0.5));
  CHECK(*m.accuracy == doctest::Approx(0.625));
}

TEST_CASE("ndcg hand example") {
  const double ranked[] = {1, 0, 1};
  const double judged[] = {1, 0, 1};
  const auto r = ndcg_from_gains(ranked, judged, 3);
  CHECK(r.value == doctest::Approx(1.5 / (1 + 1 / std::log2(3.0))).epsilon(1e-12));
  CHECK(r.value == doctest::Approx(0.919721).epsilon(1e-6));
  // An unretrieved relevant doc raises the ideal.
  const double judged3[] = {1, 1, 1, 0};
  CHECK(ndcg_from_gains(ranked, judged3, 3).value ==
        doctest::Approx(1.5 / (1 + 1 / std::log2(3.0) + 0.5)).epsilon(1e-12));

  JudgmentSet j;
  j.add({"t", "d1", 1});
  j.add({"t", "d2", 0});
  j.add({"t", "d3", 1});
  CHECK(ndcg_at_k({"d1", "d2", "d3"}, j, "t", 3).value ==
        doctest::Approx(0.919721).epsilon(1e-6));
  CHECK(ndcg_at_k({"d1", "x", "d3"}, j, "t", 3).value ==
        ndcg_at_k({"d1", "d2", "d3"}, j, "t", 3).value);
  const auto degenerate = ndcg_at_k({"d2"}, j.for_topic("none"), "none", 3);
  CHECK(degenerate.degenerate);
  CHECK(degenerate.value == 0.0);
}

TEST_CASE("graded gain") {
  JudgmentSet j;
  j.add({"t", "a", 3});
  j.add({"t", "b", 1});
  const auto g = ndcg_at_k({"b", "a"}, j, "t", 2, Gain::graded);
  CHECK(g.value == doctest::Approx((1 + 3 / std::log2(3.0)) / (3 + 1 / std::log2(3.0))));
  CHECK(ndcg_at_k({"b", "a"}, j, "t", 2, Gain::binary).value == doctest::Approx(1.0));
}

TEST_CASE("spearman examples") {
  const double a[] = {1, 2, 3, 4};
  const double b[] = {1, 3, 2, 4};
  const double rev[] = {4, 3, 2, 1};
  CHECK(spearman_rho(a, b) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(spearman_rho(a, a) == 1.0);
  CHECK(spearman_rho(a, rev) == -1.0);
  const double flat[] = {2, 2, 2, 2};
  CHECK_THROWS_AS(spearman_rho(a, flat), UndefinedMetricError);
  CHECK_THROWS(spearman_rho(std::span(a, 3), b));
  const double tied[] = {1, 1, 2, 3};
  const auto r = average_ranks(tied);
  CHECK(r[0] == 1.5);
  CHECK(r[1] == 1.5);
  CHECK(r[3] == 4.0);
}

TEST_CASE("krippendorff alpha examples") {
  const std::vector<std::pair<int, int>> u{{1, 1}, {1, 0}, {0, 0}, {0, 0}};
  CHECK(krippendorff_alpha_nominal(u) == doctest::Approx(1 - 0.25 / (30.0 / 56.0)).epsilon(1e-12));
  CHECK(krippendorff_alpha_nominal(u) == doctest::Approx(0.5333).epsilon(1e-4));
  const std::vector<std::pair<int, int>> agree{{1, 1}, {0, 0}};
  CHECK(krippendorff_alpha_nominal(agree) == 1.0);
  const std::vector<std::pair<int, int>> constant{{1, 1}, {1, 1}};
  CHECK_THROWS_AS(krippendorff_alpha_nominal(constant), UndefinedMetricError);

  JudgmentSet a, b;
  a.add({"t", "1", 1});
  a.add({"t", "2", 1});
  a.add({"t", "3", 0});
  a.add({"t", "4", 0});
  a.add({"t", "5", 1});
  b.add_label("t", "1", true, JudgmentSource::human);
  b.add_label("t", "2", false, JudgmentSource::adapter);
  b.add_label("t", "3", false, JudgmentSource::adapter);
  b.add_label("t", "4", false, JudgmentSource::human);
  CHECK(krippendorff_alpha_nominal(a, b) == doctest::Approx(0.5333).epsilon(1e-4));
  // Predicted-only units are (1, 0) and (0, 0).
  const std::vector<std::pair<int, int>> predicted{{1, 0}, {0, 0}};
  CHECK(krippendorff_alpha_nominal(a, b, AlphaUnits::predicted_only) ==
        doctest::Approx(krippendorff_alpha_nominal(predicted)));
}

TEST_CASE("system ranking") {
  JudgmentSet j;
  j.add({"t1", "r", 1});
  j.add({"t1", "n", 0});
  j.add({"t2", "r", 1});
  RunSet runs;
  runs.insert_list("good", "t1", {{"r", 2}, {"n", 1}});
  runs.insert_list("good", "t2", {{"r", 2}, {"n", 1}});
  runs.insert_list("bad", "t1", {{"r", 1}, {"n", 2}});
  runs.insert_list("bad", "t2", {{"r", 1}, {"n", 2}});
  runs.insert_list("same", "t1", {{"r", 1}, {"n", 2}});
  runs.insert_list("same", "t2", {{"r", 1}, {"n", 2}});
  const auto r = rank_systems(runs, j, 10);
  CHECK(r[0].run_tag == "good");
  CHECK(r[0].mean == 1.0);
  CHECK(r[1].run_tag == "bad");  // tie with "same", broken by tag
  CHECK(r[1].mean == r[2].mean);
  CHECK(r[2].run_tag == "same");

  RunSet partial;
  partial.insert_list("a", "t1", {{"r", 1}});
  partial.insert_list("b", "t1", {{"n", 1}});
  partial.insert_list("b", "t2", {{"r", 1}});
  const auto p = rank_systems(partial, j, 10);
  CHECK(p[0].run_tag == "a");
  CHECK(p[0].mean == doctest::Approx(0.5));
  CHECK(p[1].mean == doctest::Approx(0.5));
  CHECK_THROWS(rank_systems(partial.restricted_to({"a"}), j, 10));
}

TEST_CASE("metric identities") {
  Rng rng(17);
  for (int rep = 0; rep < 300; ++rep) {
    const int n = 2 + static_cast<int>(rng.below(7));
    std::vector<double> a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a[i] = static_cast<double>(rng.below(4));
      b[i] = static_cast<double>(rng.below(4));
    }
    const auto o = oracle::spearman(a, b);
    if (o) {
      const double rho = spearman_rho(a, b);
      CHECK(std::abs(rho - *o) <= 1e-9);
      CHECK(rho == spearman_rho(b, a));
      CHECK(spearman_rho(a, a) == 1.0);
    }

    std::vector<double> ranked(n), judged;
    for (int i = 0; i < n; ++i) ranked[i] = static_cast<double>(rng.below(3));
    for (double g : ranked) judged.push_back(g);
    for (int extra = static_cast<int>(rng.below(3)); extra > 0; --extra)
      judged.push_back(static_cast<double>(rng.below(3)));
    const int k = 1 + static_cast<int>(rng.below(n));
    const auto expected = oracle::ndcg(ranked, judged, k);
    const auto got = ndcg_from_gains(ranked, judged, k);
    CHECK(got.degenerate == !expected.has_value());
    if (expected) {
      CHECK(std::abs(got.value - *expected) <= 1e-9);
      CHECK(got.value >= 0.0);
      CHECK(got.value <= 1.0 + 1e-12);
    }
  }
}
