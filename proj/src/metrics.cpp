#include "judgekit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "judgekit/errors.hpp"

namespace judgekit {
namespace {

double gain_of(const JudgmentSet& judgments, const Judgment& j, Gain gain) {
  if (gain == Gain::binary) return judgments.is_relevant(j) ? 1.0 : 0.0;
  return static_cast<double>(j.grade);
}

double dcg(std::span<const double> gains, std::size_t depth) {
  double sum = 0.0;
  const std::size_t n = std::min(depth, gains.size());
  for (std::size_t i = 0; i < n; ++i) sum += gains[i] / std::log2(static_cast<double>(i) + 2.0);
  return sum;
}

std::vector<double> ideal_gains(const JudgmentSet& judgments, const std::string& topic, Gain gain) {
  std::vector<double> out;
  for (auto it = judgments.begin(); it != judgments.end(); ++it) {
    if (it->first.first == topic) out.push_back(gain_of(judgments, it->second, gain));
  }
  return out;
}

}  // namespace

std::string_view to_string(Gain g) { return g == Gain::binary ? "binary" : "graded"; }

Gain parse_gain(std::string_view name) {
  if (name == "binary") return Gain::binary;
  if (name == "graded") return Gain::graded;
  throw Error("unknown gain: " + std::string(name));
}

void MetricSpec::validate() const {
  if (ndcg_depths.empty()) throw ConfigError("ndcg_depths is empty");
  for (std::size_t i = 0; i < ndcg_depths.size(); ++i) {
    if (ndcg_depths[i] < 1) throw ConfigError("ndcg depths must be >= 1");
    if (i > 0 && ndcg_depths[i] <= ndcg_depths[i - 1]) {
      throw ConfigError("ndcg depths must be strictly increasing");
    }
  }
}

ClassificationMetrics classification_metrics(const Confusion& c) {
  ClassificationMetrics m;
  m.counts = c;
  if (c.total() == 0) throw UndefinedMetricError("no judgments to score");
  if (c.tp + c.fp > 0) m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (m.precision && m.recall) {
    const double p = *m.precision;
    const double r = *m.recall;
    m.f1 = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  return m;
}

ClassificationMetrics classification_metrics(const JudgmentSet& predicted,
                                             const JudgmentSet& truth, const std::string& topic) {
  Confusion c;
  for (auto it = truth.begin(); it != truth.end(); ++it) {
    if (it->first.first != topic) continue;
    const Judgment* p = predicted.find(topic, it->first.second);
    if (!p) {
      throw Error("prediction missing for topic " + topic + " doc " + it->first.second);
    }
    const bool t = truth.is_relevant(it->second);
    const bool y = predicted.is_relevant(*p);
    if (t && y) ++c.tp;
    else if (!t && y) ++c.fp;
    else if (t && !y) ++c.fn;
    else ++c.tn;
  }
  return classification_metrics(c);
}

MacroMetrics macro_average(const std::vector<ClassificationMetrics>& per_topic) {
  MacroMetrics out;
  out.topics = per_topic.size();
  auto mean_of = [&](auto getter, std::size_t& undefined) -> std::optional<double> {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& m : per_topic) {
      const std::optional<double> v = getter(m);
      if (v) {
        sum += *v;
        ++n;
      } else {
        ++undefined;
      }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  };
  out.precision = mean_of([](const ClassificationMetrics& m) { return m.precision; }, out.undefined_precision);
  out.recall = mean_of([](const ClassificationMetrics& m) { return m.recall; }, out.undefined_recall);
  out.f1 = mean_of([](const ClassificationMetrics& m) { return m.f1; }, out.undefined_f1);
  std::size_t never = 0;
  out.accuracy = mean_of([](const ClassificationMetrics& m) { return std::optional<double>(m.accuracy); }, never);
  return out;
}

NdcgResult ndcg_from_gains(std::span<const double> ranked_gains,
                           std::span<const double> judged_gains, int k) {
  if (k < 1) throw Error("nDCG depth must be >= 1");
  std::vector<double> ideal(judged_gains.begin(), judged_gains.end());
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  const auto depth = static_cast<std::size_t>(k);
  const double idcg = dcg(ideal, depth);
  if (idcg <= 0.0) return {0.0, true};
  return {dcg(ranked_gains, depth) / idcg, false};
}

NdcgResult ndcg_at_k(const std::vector<std::string>& ranked_doc_ids,
                     const JudgmentSet& judgments, const std::string& topic, int k, Gain gain) {
  std::vector<double> ranked;
  const std::size_t n = std::min(ranked_doc_ids.size(), static_cast<std::size_t>(std::max(k, 0)));
  for (std::size_t i = 0; i < n; ++i) {
    const Judgment* j = judgments.find(topic, ranked_doc_ids[i]);
    ranked.push_back(j ? gain_of(judgments, *j, gain) : 0.0);
  }
  const auto judged = ideal_gains(judgments, topic, gain);
  return ndcg_from_gains(ranked, judged, k);
}

std::vector<SystemScore> rank_systems(const RunSet& runs, const JudgmentSet& judgments, int k,
                                      Gain gain, const std::vector<std::string>& topics_in) {
  if (runs.run_count() < 2) throw Error("ranking systems needs at least 2 runs");
  const std::vector<std::string> topics = topics_in.empty() ? judgments.topics() : topics_in;
  if (topics.empty()) throw Error("ranking systems needs at least 1 topic");
  if (k < 1) throw Error("nDCG depth must be >= 1");

  std::map<std::string, double> ideal;
  for (const auto& t : topics) {
    auto gains = ideal_gains(judgments, t, gain);
    std::sort(gains.begin(), gains.end(), std::greater<>());
    ideal[t] = dcg(gains, static_cast<std::size_t>(k));
  }

  std::vector<SystemScore> out;
  std::vector<double> ranked;
  for (const auto& [tag, _] : runs.runs()) {
    double sum = 0.0;
    for (const auto& t : topics) {
      const double idcg = ideal[t];
      const RankedList* list = runs.list(tag, t);
      if (!list || idcg <= 0.0) continue;
      ranked.clear();
      const std::size_t n = std::min(list->size(), static_cast<std::size_t>(k));
      for (std::size_t i = 0; i < n; ++i) {
        const Judgment* j = judgments.find(t, (*list)[i].doc_id);
        ranked.push_back(j ? gain_of(judgments, *j, gain) : 0.0);
      }
      sum += dcg(ranked, static_cast<std::size_t>(k)) / idcg;
    }
    out.push_back({tag, sum / static_cast<double>(topics.size())});
  }
  std::sort(out.begin(), out.end(), [](const SystemScore& a, const SystemScore& b) {
    if (a.mean != b.mean) return a.mean > b.mean;
    return a.run_tag < b.run_tag;
  });
  return out;
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman_rho(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("spearman_rho: length mismatch");
  if (a.size() < 2) throw Error("spearman_rho needs at least 2 values");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - mean;
    const double db = rb[i] - mean;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) {
    throw UndefinedMetricError("spearman_rho undefined for a constant vector");
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double ranking_correlation(const std::vector<SystemScore>& a, const std::vector<SystemScore>& b) {
  std::map<std::string, double> mb;
  for (const auto& s : b) mb[s.run_tag] = s.mean;
  if (mb.size() != a.size()) throw Error("system rankings cover different runs");
  std::vector<double> va;
  std::vector<double> vb;
  for (const auto& s : a) {
    auto it = mb.find(s.run_tag);
    if (it == mb.end()) throw Error("run " + s.run_tag + " missing from second ranking");
    va.push_back(s.mean);
    vb.push_back(it->second);
  }
  return spearman_rho(va, vb);
}

double krippendorff_alpha_nominal(std::span<const std::pair<int, int>> units) {
  if (units.size() < 2) throw UndefinedMetricError("alpha needs at least 2 units");
  // Each unit has exactly two values, so it contributes 1/(2-1) to both
  // ordered coincidence cells.
  std::map<int, double> marginal;
  double disagreeing = 0.0;
  for (const auto& [x, y] : units) {
    marginal[x] += 1.0;
    marginal[y] += 1.0;
    if (x != y) disagreeing += 2.0;
  }
  const double n = 2.0 * static_cast<double>(units.size());
  const double d_o = disagreeing / n;
  double same = 0.0;
  for (const auto& [_, nc] : marginal) same += nc * (nc - 1.0);
  const double d_e = (n * (n - 1.0) - same) / (n * (n - 1.0));
  if (d_e == 0.0) throw UndefinedMetricError("alpha undefined: every value is identical");
  return 1.0 - d_o / d_e;
}

double krippendorff_alpha_nominal(const JudgmentSet& labels_a, const JudgmentSet& labels_b,
                                  AlphaUnits units) {
  std::vector<std::pair<int, int>> pairs;
  for (const auto& [key, ja] : labels_a) {
    const Judgment* jb = labels_b.find(key.first, key.second);
    if (!jb) continue;
    if (units == AlphaUnits::predicted_only && jb->source == JudgmentSource::human) continue;
    pairs.emplace_back(labels_a.is_relevant(ja) ? 1 : 0, labels_b.is_relevant(*jb) ? 1 : 0);
  }
  return krippendorff_alpha_nominal(pairs);
}

std::vector<std::uint64_t> default_bootstrap_seeds() {
  std::vector<std::uint64_t> seeds(20);
  std::iota(seeds.begin(), seeds.end(), std::uint64_t{1});
  return seeds;
}

BootstrapResult aggregate_correlations(const std::vector<std::uint64_t>& seeds,
                                       std::vector<std::optional<double>> per_seed) {
  if (seeds.empty()) throw Error("bootstrap needs at least one seed");
  BootstrapResult out;
  out.seeds = seeds;
  out.per_seed = std::move(per_seed);
  std::vector<double> defined;
  for (const auto& v : out.per_seed) {
    if (v) defined.push_back(*v);
    else ++out.undefined;
  }
  if (defined.empty()) throw UndefinedMetricError("correlation undefined for every seed");
  const double n = static_cast<double>(defined.size());
  out.mean = std::accumulate(defined.begin(), defined.end(), 0.0) / n;
  if (defined.size() > 1) {
    double ss = 0.0;
    for (double v : defined) ss += (v - out.mean) * (v - out.mean);
    out.stddev = std::sqrt(ss / (n - 1.0));
  }
  return out;
}

BootstrapResult bootstrap_correlation(const std::function<RankingPair(std::uint64_t)>& simulate,
                                      const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw Error("bootstrap needs at least one seed");
  std::vector<std::optional<double>> per_seed;
  for (auto seed : seeds) {
    const auto [pred, truth] = simulate(seed);
    try {
      per_seed.emplace_back(spearman_rho(pred, truth));
    } catch (const UndefinedMetricError&) {
      per_seed.emplace_back(std::nullopt);
    }
  }
  return aggregate_correlations(seeds, std::move(per_seed));
}

}  // namespace judgekit
