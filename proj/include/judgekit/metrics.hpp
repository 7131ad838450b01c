#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "judgekit/trec_io.hpp"

namespace judgekit {

enum class Gain { binary, graded };

std::string_view to_string(Gain g);
Gain parse_gain(std::string_view name);

struct MetricSpec {
  std::vector<int> ndcg_depths{5, 10, 50};
  Gain gain = Gain::binary;

  void validate() const;
};

struct Confusion {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  long tn = 0;

  long total() const { return tp + fp + fn + tn; }
};

// Positive class = relevant. Precision is undefined (empty) when nothing is
// predicted relevant, recall when no truth label is relevant, F1 when either
// is undefined. Undefined values are never reported as 0.
struct ClassificationMetrics {
  Confusion counts;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  double accuracy = 0.0;
};

ClassificationMetrics classification_metrics(const Confusion& counts);

// Scores every truth judgment of `topic`; each must be covered by `predicted`.
ClassificationMetrics classification_metrics(const JudgmentSet& predicted,
                                             const JudgmentSet& truth,
                                             const std::string& topic);

// Means over the topics where each metric is defined.
struct MacroMetrics {
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  std::optional<double> accuracy;
  std::size_t topics = 0;
  std::size_t undefined_precision = 0;
  std::size_t undefined_recall = 0;
  std::size_t undefined_f1 = 0;
};

MacroMetrics macro_average(const std::vector<ClassificationMetrics>& per_topic);

struct NdcgResult {
  double value = 0.0;
  bool degenerate = false;  // ideal DCG is zero
};

// DCG over the first min(k, len) entries of `ranked_gains`, normalized by
// the DCG of `judged_gains` (all judged documents of the topic) in ideal order.
NdcgResult ndcg_from_gains(std::span<const double> ranked_gains,
                           std::span<const double> judged_gains, int k);

NdcgResult ndcg_at_k(const std::vector<std::string>& ranked_doc_ids,
                     const JudgmentSet& judgments, const std::string& topic, int k,
                     Gain gain = Gain::binary);

struct SystemScore {
  std::string run_tag;
  double mean = 0.0;
};

// Mean nDCG@k over `topics` (all judged topics when empty), descending, ties by
// run tag. A run without a list for a topic scores 0 on it.
std::vector<SystemScore> rank_systems(const RunSet& runs, const JudgmentSet& judgments, int k,
                                      Gain gain = Gain::binary,
                                      const std::vector<std::string>& topics = {});

// Fractional (average-of-ties) ranks, 1-based.
std::vector<double> average_ranks(std::span<const double> values);

// Pearson correlation of average ranks. Throws UndefinedMetricError when
// either side is constant.
double spearman_rho(std::span<const double> a, std::span<const double> b);

// Aligns two system rankings by run tag, then spearman_rho on their means.
double ranking_correlation(const std::vector<SystemScore>& a, const std::vector<SystemScore>& b);

// Nominal alpha for two coders over units given as (value_a, value_b).
double krippendorff_alpha_nominal(std::span<const std::pair<int, int>> units);

enum class AlphaUnits {
  all_overlapping,
  predicted_only,  // units whose label in the second set is not human
};

// Binary relevance labels over the keys present in both sets.
double krippendorff_alpha_nominal(const JudgmentSet& labels_a, const JudgmentSet& labels_b,
                                  AlphaUnits units = AlphaUnits::all_overlapping);

struct BootstrapResult {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single value
  std::vector<std::uint64_t> seeds;
  std::vector<std::optional<double>> per_seed;
  std::size_t undefined = 0;
};

// (predicted-judgment scores, ground-truth scores) per system, aligned.
using RankingPair = std::pair<std::vector<double>, std::vector<double>>;

std::vector<std::uint64_t> default_bootstrap_seeds();

BootstrapResult bootstrap_correlation(const std::function<RankingPair(std::uint64_t)>& simulate,
                                      const std::vector<std::uint64_t>& seeds);

// Aggregates precomputed per-seed correlations (empty = undefined).
BootstrapResult aggregate_correlations(const std::vector<std::uint64_t>& seeds,
                                       std::vector<std::optional<double>> per_seed);

}  // namespace judgekit
