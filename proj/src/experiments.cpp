#include "judgekit/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>

#include <spdlog/spdlog.h>

#include "judgekit/errors.hpp"
#include "judgekit/rng.hpp"
#include "judgekit/synthetic.hpp"
#include "judgekit/trainer.hpp"

namespace judgekit {
namespace {

using nlohmann::json;

class ScorerLabeler final : public TopicLabeler {
 public:
  ScorerLabeler(const AdapterJudgeTrainer& owner, Topic topic, ReferenceScorer scorer, std::size_t params)
      : owner_(owner), topic_(std::move(topic)), scorer_(std::move(scorer)), params_(params) {}

  std::vector<bool> label(const std::vector<std::string>& doc_ids) const override {
    if (doc_ids.empty()) return {};
    const Vector scores = scorer_.forward_batch(owner_.features(topic_, doc_ids));
    std::vector<bool> out(doc_ids.size());
    for (std::size_t i = 0; i < doc_ids.size(); ++i) {
      out[i] = scores(static_cast<Eigen::Index>(i)) >= kDecisionThreshold;
    }
    return out;
  }
  std::size_t trainable_parameters() const override { return params_; }

 private:
  const AdapterJudgeTrainer& owner_;
  Topic topic_;
  ReferenceScorer scorer_;
  std::size_t params_;
};

class OracleLabeler final : public TopicLabeler {
 public:
  OracleLabeler(const JudgmentSet& truth, std::string topic) : truth_(truth), topic_(std::move(topic)) {}
  std::vector<bool> label(const std::vector<std::string>& doc_ids) const override {
    std::vector<bool> out;
    for (const auto& d : doc_ids) {
      const Judgment* j = truth_.find(topic_, d);
      out.push_back(j && truth_.is_relevant(*j));
    }
    return out;
  }

 private:
  const JudgmentSet& truth_;
  std::string topic_;
};

// Topics that are judged, described, and retrieved by at least one run.
std::vector<std::string> eligible_topics(const Collection& c, const JudgmentSet& truth, int min_relevant) {
  std::vector<std::string> out;
  const auto run_topics = c.runs.topics();
  for (const auto& t : select_topics(truth, min_relevant)) {
    if (c.topics.contains(t) && std::binary_search(run_topics.begin(), run_topics.end(), t)) out.push_back(t);
  }
  return out;
}

std::unique_ptr<AdapterJudgeTrainer> default_trainer(const ExperimentConfig& config, const Collection& c) {
  return std::make_unique<AdapterJudgeTrainer>(ReferenceScorer(config.scorer), config.train, c.docs);
}

std::string fmt_rate(double rate) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", rate);
  return buf;
}

struct Ranked {
  std::map<int, std::vector<SystemScore>> by_depth;
};

Ranked rank_all(const RunSet& runs, const JudgmentSet& j, const ExperimentConfig& config,
                const std::vector<std::string>& topics) {
  Ranked r;
  for (int d : config.metrics.ndcg_depths) r.by_depth[d] = rank_systems(runs, j, d, config.metrics.gain, topics);
  return r;
}

std::optional<double> correlation_or_empty(const std::vector<SystemScore>& a, const std::vector<SystemScore>& b) {
  try {
    return ranking_correlation(a, b);
  } catch (const UndefinedMetricError&) {
    return std::nullopt;
  }
}

}  // namespace

AdapterJudgeTrainer::AdapterJudgeTrainer(ReferenceScorer base, TrainConfig config, const DocumentStore& docs)
    : base_(std::move(base)), config_(std::move(config)), docs_(docs) {
  config_.validate();
  if (config_.max_sequence_tokens != base_.config().max_sequence_tokens) {
    throw ConfigError("train config token budget differs from the scorer's");
  }
}

void AdapterJudgeTrainer::prepare(const Topic& topic, const std::vector<std::string>& doc_ids) const {
  std::vector<std::string> missing;
  {
    std::lock_guard lock(mutex_);
    auto it = cache_.find(topic.topic_id);
    for (const auto& d : doc_ids) {
      if (it == cache_.end() || !it->second->column.count(d)) missing.push_back(d);
    }
  }
  std::sort(missing.begin(), missing.end());
  missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
  if (missing.empty()) return;
  std::vector<std::string_view> texts;
  for (const auto& d : missing) texts.push_back(docs_.at(d));
  const Matrix fresh = base_.featurize_batch(topic.query_text, texts);

  std::lock_guard lock(mutex_);
  auto& slot = cache_[topic.topic_id];
  auto next = std::make_shared<TopicFeatures>(slot ? *slot : TopicFeatures{});
  std::vector<std::string> added;
  for (std::size_t i = 0; i < missing.size(); ++i) {
    if (!next->column.count(missing[i])) added.push_back(missing[i]);
  }
  const Eigen::Index old_cols = next->x.cols();
  Matrix grown(base_.input_dim(), old_cols + static_cast<Eigen::Index>(added.size()));
  if (old_cols) grown.leftCols(old_cols) = next->x;
  Eigen::Index col = old_cols;
  for (std::size_t i = 0, a = 0; i < missing.size() && a < added.size(); ++i) {
    if (missing[i] != added[a]) continue;
    grown.col(col) = fresh.col(static_cast<Eigen::Index>(i));
    next->column[added[a]] = col++;
    ++a;
  }
  next->x = std::move(grown);
  slot = std::move(next);
}

Matrix AdapterJudgeTrainer::features(const Topic& topic, const std::vector<std::string>& doc_ids) const {
  prepare(topic, doc_ids);
  std::shared_ptr<TopicFeatures> f;
  {
    std::lock_guard lock(mutex_);
    f = cache_.at(topic.topic_id);
  }
  Matrix out(base_.input_dim(), static_cast<Eigen::Index>(doc_ids.size()));
  for (std::size_t i = 0; i < doc_ids.size(); ++i) {
    out.col(static_cast<Eigen::Index>(i)) = f->x.col(f->column.at(doc_ids[i]));
  }
  return out;
}

std::unique_ptr<TopicLabeler> AdapterJudgeTrainer::train(const Topic& topic, const JudgmentSet& sample,
                                                         TrainMode mode, std::uint64_t seed) const {
  const auto ids = sample.doc_ids(topic.topic_id);
  if (ids.size() != sample.size()) {
    throw Error("training sample for topic " + topic.topic_id + " contains other topics");
  }
  Vector labels(static_cast<Eigen::Index>(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    labels(static_cast<Eigen::Index>(i)) = sample.is_relevant(*sample.find(topic.topic_id, ids[i])) ? 1.0 : 0.0;
  }
  TrainConfig cfg = config_;
  cfg.mode = mode;
  cfg.seed = seed;
  TrainedJudge judge = train_topic_judge_on_features(base_, topic, features(topic, ids), labels, cfg);
  return std::make_unique<ScorerLabeler>(*this, topic, judge.effective_scorer(base_), judge.trainable_parameters);
}

std::unique_ptr<TopicLabeler> OracleJudgeTrainer::train(const Topic& topic, const JudgmentSet&, TrainMode,
                                                        std::uint64_t) const {
  return std::make_unique<OracleLabeler>(truth_, topic.topic_id);
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

JudgmentSet pool_truth(const JudgmentSet& qrels, const Pool& full_pool) {
  JudgmentSet out(qrels.threshold());
  for (const auto& [topic, docs] : full_pool) {
    for (const auto& d : docs) {
      if (const Judgment* j = qrels.find(topic, d)) out.add(*j);
    }
  }
  return out;
}

Collection load_collection(const ExperimentConfig& config) {
  Collection c;
  c.name = config.collection.name;
  if (config.collection.synthetic) {
    SyntheticCollection s = generate_synthetic_collection(*config.collection.synthetic, config.collection.synthetic_seed);
    c.docs = std::move(s.docs);
    c.topics = std::move(s.topics);
    c.qrels = std::move(s.qrels);
    c.runs = std::move(s.runs);
    if (config.binarization_threshold != c.qrels.threshold()) {
      JudgmentSet rethresholded(config.binarization_threshold);
      for (const auto& [_, j] : c.qrels) rethresholded.add(j);
      c.qrels = std::move(rethresholded);
    }
    return c;
  }
  c.docs = read_documents_file(config.collection.documents);
  c.topics = read_topics_file(config.collection.topics);
  c.qrels = read_qrels_file(config.collection.qrels, config.binarization_threshold);
  c.runs = read_run_file(config.collection.runs);
  return c;
}

std::string shallow_approach_name(InfillMethod method, std::optional<int> k, double rate) {
  std::string name(to_string(method));
  if (k) name += "(k=" + std::to_string(*k) + ")";
  return name + "@" + fmt_rate(rate);
}

EvalReport run_experiment_deep(const ExperimentConfig& config, const Collection& c, const ExperimentHooks& hooks) {
  config.validate();
  EvalReport report;
  report.experiment = "deep";
  report.config = to_json(config);
  std::unique_ptr<AdapterJudgeTrainer> owned;
  const JudgeTrainer* trainer = hooks.trainer;
  if (!trainer) trainer = (owned = default_trainer(config, c)).get();

  std::vector<std::string> topics;
  for (const auto& t : select_topics(c.qrels, config.min_relevant)) {
    if (c.topics.contains(t)) topics.push_back(t);
  }
  report.topics_requested = topics.size();
  std::set<std::string> covered;

  for (TrainMode mode : config.modes) {
    ApproachReport row;
    row.approach = std::string(to_string(mode));
    std::vector<std::optional<TopicMetrics>> results(topics.size());
    std::vector<std::string> failures(topics.size());
    std::vector<std::size_t> params(topics.size(), 0);
    parallel_for(topics.size(), config.threads, [&](std::size_t i) {
      const Topic& topic = c.topics.at(topics[i]);
      try {
        SplitSpec spec{config.train_fraction, derive_seed(config.seed, topic.topic_id), true};
        const Split split = stratified_split(c.qrels.for_topic(topic.topic_id), spec);
        auto labeler = trainer->train(topic, split.train, mode, config.seed);
        const auto test_ids = split.test.doc_ids(topic.topic_id);
        const auto labels = labeler->label(test_ids);
        JudgmentSet predicted(c.qrels.threshold());
        for (std::size_t d = 0; d < test_ids.size(); ++d) {
          predicted.add_label(topic.topic_id, test_ids[d], labels[d], JudgmentSource::adapter);
        }
        results[i] = TopicMetrics{topic.topic_id, classification_metrics(predicted, split.test, topic.topic_id)};
        params[i] = labeler->trainable_parameters();
      } catch (const Error& e) {
        failures[i] = e.what();
      }
    });
    std::vector<ClassificationMetrics> ok;
    for (std::size_t i = 0; i < topics.size(); ++i) {
      if (results[i]) {
        row.per_topic.push_back(*results[i]);
        ok.push_back(results[i]->metrics);
        covered.insert(topics[i]);
      } else {
        spdlog::warn("deep: topic {} skipped: {}", topics[i], failures[i]);
        report.omissions.push_back({row.approach + " topic " + topics[i], failures[i]});
      }
    }
    if (!ok.empty()) row.macro = macro_average(ok);
    row.extra["trainable_parameters"] = params.empty() ? 0 : *std::max_element(params.begin(), params.end());
    row.labeled = 0;
    for (const auto& m : ok) row.labeled += static_cast<std::size_t>(m.counts.total());
    report.approaches.push_back(std::move(row));
  }
  report.topics_covered = covered.size();
  return report;
}

EvalReport run_experiment_shallow(const ExperimentConfig& config, const Collection& c, const ExperimentHooks& hooks) {
  config.validate();
  for (auto m : config.infill) {
    if (m == InfillMethod::llm_zero_shot || m == InfillMethod::llm_few_shot) {
      throw ConfigError("shallow experiment does not support LLM infill; use llm_compare");
    }
  }
  EvalReport report;
  report.experiment = "shallow";
  report.config = to_json(config);
  std::unique_ptr<AdapterJudgeTrainer> owned;
  const JudgeTrainer* trainer = hooks.trainer;
  if (!trainer) trainer = (owned = default_trainer(config, c)).get();

  const Pool full_pool = build_pool(c.runs, config.pool_depth);
  const JudgmentSet truth = pool_truth(c.qrels, full_pool);
  const auto topics = eligible_topics(c, truth, config.min_relevant);
  report.topics_requested = topics.size();
  report.topics_covered = topics.size();
  if (topics.empty()) throw Error("no topic is judged, described and retrieved");
  if (auto* adapters = dynamic_cast<const AdapterJudgeTrainer*>(trainer)) {
    for (const auto& t : topics) adapters->prepare(c.topics.at(t), truth.doc_ids(t));
  }
  const Ranked reference = rank_all(c.runs, truth, config, topics);

  struct Cell {
    InfillMethod method;
    std::optional<int> k;
  };
  std::vector<Cell> cells;
  for (auto m : config.infill) {
    if (m == InfillMethod::adapter) {
      for (int k : config.sample_sizes) cells.push_back({m, k});
    } else {
      cells.push_back({m, std::nullopt});
    }
  }

  for (double rate : config.rates) {
    // per cell: seed -> per-depth rho, or omitted
    std::vector<std::vector<std::optional<std::map<int, std::optional<double>>>>> rho(
        cells.size(), std::vector<std::optional<std::map<int, std::optional<double>>>>(config.seeds.size()));
    std::vector<std::vector<ClassificationMetrics>> held_out(cells.size());
    std::vector<std::map<std::string, std::size_t>> labeled(cells.size());

    for (std::size_t si = 0; si < config.seeds.size(); ++si) {
      const std::uint64_t seed = config.seeds[si];
      const PoolSimulation sim = subsample_runs(c.runs, rate, seed, config.pool_depth);

      for (std::size_t ci = 0; ci < cells.size(); ++ci) {
        const Cell& cell = cells[ci];
        const std::string name = shallow_approach_name(cell.method, cell.k, rate);
        std::vector<JudgmentSet> per_topic(topics.size(), JudgmentSet(truth.threshold()));
        std::vector<std::optional<ClassificationMetrics>> metrics(topics.size());
        std::vector<std::string> failure(topics.size());

        parallel_for(topics.size(), config.threads, [&](std::size_t ti) {
          const std::string& t = topics[ti];
          const Topic& topic = c.topics.at(t);
          const auto chosen_it = sim.pooled_docs.find(t);
          const std::set<std::string> empty;
          const std::set<std::string>& chosen = chosen_it == sim.pooled_docs.end() ? empty : chosen_it->second;
          JudgmentSet& out = per_topic[ti];
          JudgmentSet judged(truth.threshold());
          std::vector<std::string> unjudged;
          for (const auto& d : truth.doc_ids(t)) {
            const Judgment& j = *truth.find(t, d);
            if (chosen.count(d)) {
              judged.add(j);
              out.add(j);
            } else {
              unjudged.push_back(d);
            }
          }
          switch (cell.method) {
            case InfillMethod::zero_fill:
              for (const auto& d : unjudged) out.add_label(t, d, false, JudgmentSource::zero_fill);
              break;
            case InfillMethod::ground_truth:
              for (const auto& d : unjudged) out.add(*truth.find(t, d));
              break;
            case InfillMethod::adapter: {
              try {
                ShallowSampleSpec spec{*cell.k,
                                       derive_seed(derive_seed(derive_seed(seed, "shallow-sample"), t),
                                                   static_cast<std::uint64_t>(*cell.k)),
                                       config.relevant_share};
                const JudgmentSet sample = sample_shallow_train(judged, spec);
                auto labeler = trainer->train(topic, sample, config.modes.front(),
                                              derive_seed(seed, static_cast<std::uint64_t>(*cell.k)));
                std::vector<std::string> predict_ids;
                for (const auto& d : truth.doc_ids(t)) {
                  if (!sample.contains(t, d)) predict_ids.push_back(d);
                }
                const auto labels = labeler->label(predict_ids);
                JudgmentSet predicted(truth.threshold());
                JudgmentSet held_out_truth(truth.threshold());
                for (std::size_t d = 0; d < predict_ids.size(); ++d) {
                  predicted.add_label(t, predict_ids[d], labels[d], JudgmentSource::adapter);
                  held_out_truth.add(*truth.find(t, predict_ids[d]));
                  if (!chosen.count(predict_ids[d])) {
                    out.add_label(t, predict_ids[d], labels[d], JudgmentSource::adapter);
                  }
                }
                if (!predict_ids.empty()) metrics[ti] = classification_metrics(predicted, held_out_truth, t);
              } catch (const InsufficientPoolError& e) {
                failure[ti] = e.what();
              } catch (const StratificationError& e) {
                failure[ti] = e.what();
              }
              break;
            }
            default:
              throw ConfigError("unsupported infill method");
          }
        });

        std::string omitted;
        for (std::size_t ti = 0; ti < topics.size(); ++ti) {
          if (!failure[ti].empty()) {
            omitted = "topic " + topics[ti] + ": " + failure[ti];
            break;
          }
        }
        if (!omitted.empty()) {
          report.omissions.push_back({name + " seed " + std::to_string(seed), omitted});
          continue;
        }
        JudgmentSet merged(truth.threshold());
        for (const auto& part : per_topic) {
          for (const auto& [_, j] : part) merged.add(j);
        }
        for (const auto& m : metrics) {
          if (m) held_out[ci].push_back(*m);
        }
        labeled[ci]["total"] += merged.size();
        const Ranked ranked = rank_all(c.runs, merged, config, topics);
        std::map<int, std::optional<double>> by_depth;
        for (int d : config.metrics.ndcg_depths) {
          by_depth[d] = correlation_or_empty(ranked.by_depth.at(d), reference.by_depth.at(d));
          report.tidy.push_back({c.name, rate, std::string(to_string(cell.method)), cell.k, seed, d, by_depth[d]});
        }
        rho[ci][si] = std::move(by_depth);
      }
    }

    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
      ApproachReport row;
      row.approach = shallow_approach_name(cells[ci].method, cells[ci].k, rate);
      row.k = cells[ci].k;
      row.rate = rate;
      std::vector<std::uint64_t> seeds;
      std::map<int, std::vector<std::optional<double>>> values;
      for (std::size_t si = 0; si < config.seeds.size(); ++si) {
        if (!rho[ci][si]) continue;
        seeds.push_back(config.seeds[si]);
        for (const auto& [d, v] : *rho[ci][si]) values[d].push_back(v);
      }
      if (seeds.empty()) continue;  // every seed omitted; recorded above
      for (int d : config.metrics.ndcg_depths) {
        CorrelationStat stat;
        stat.depth = d;
        stat.seeds = seeds.size();
        try {
          const BootstrapResult b = aggregate_correlations(seeds, values[d]);
          stat.mean = b.mean;
          stat.stddev = b.stddev;
          stat.undefined = b.undefined;
        } catch (const UndefinedMetricError&) {
          stat.undefined = seeds.size();
        }
        row.rho.push_back(stat);
      }
      if (!held_out[ci].empty()) row.macro = macro_average(held_out[ci]);
      row.labeled = labeled[ci]["total"] / seeds.size();
      row.extra["seeds_used"] = seeds;
      report.approaches.push_back(std::move(row));
    }
  }
  std::vector<ApproachReport> reference_rows;
  for (int d : config.metrics.ndcg_depths) {
    ApproachReport row;
    row.approach = "ground_truth_ranking@" + std::to_string(d);
    row.system_ndcg[d] = reference.by_depth.at(d);
    reference_rows.push_back(std::move(row));
  }
  report.approaches.insert(report.approaches.begin(), reference_rows.begin(), reference_rows.end());
  return report;
}

EvalReport run_experiment_llm_compare(const ExperimentConfig& config, const Collection& c,
                                      const ExperimentHooks& hooks) {
  config.validate();
  EvalReport report;
  report.experiment = "llm_compare";
  report.config = to_json(config);
  std::unique_ptr<AdapterJudgeTrainer> owned;
  const JudgeTrainer* trainer = hooks.trainer;
  if (!trainer) trainer = (owned = default_trainer(config, c)).get();
  const auto has = [&](InfillMethod m) {
    return std::find(config.infill.begin(), config.infill.end(), m) != config.infill.end();
  };

  const Pool full_pool = build_pool(c.runs, config.pool_depth);
  const JudgmentSet truth = pool_truth(c.qrels, full_pool);
  const auto topics = eligible_topics(c, truth, config.min_relevant);
  report.topics_requested = topics.size();
  if (topics.empty()) throw Error("no topic is judged, described and retrieved");
  const int shared_k = *std::max_element(config.sample_sizes.begin(), config.sample_sizes.end());

  // The shared sample: truth for every approach, training data for the
  // adapters (nested subsamples) and the only source of few-shot examples.
  std::map<std::string, JudgmentSet> shared;
  std::vector<std::string> used;
  for (const auto& t : topics) {
    try {
      shared.emplace(t, sample_shallow_train(truth.for_topic(t),
                                             {shared_k, derive_seed(derive_seed(config.seed, "shared-sample"), t),
                                              config.relevant_share}));
      used.push_back(t);
    } catch (const Error& e) {
      report.omissions.push_back({"topic " + t, e.what()});
    }
  }
  report.topics_covered = used.size();
  if (used.empty()) throw Error("no topic has a pool large enough for the shared sample");
  const Ranked reference = rank_all(c.runs, truth, config, used);

  auto base_judgments = [&] {
    JudgmentSet j(truth.threshold());
    for (const auto& t : used) {
      for (const auto& [_, e] : shared.at(t)) j.add(e);
    }
    return j;
  };
  auto remaining = [&](const std::string& t) {
    std::vector<std::string> out;
    for (const auto& d : truth.doc_ids(t)) {
      if (!shared.at(t).contains(t, d)) out.push_back(d);
    }
    return out;
  };
  auto finish_row = [&](ApproachReport row, const JudgmentSet& judged) {
    const Ranked ranked = rank_all(c.runs, judged, config, used);
    for (int d : config.metrics.ndcg_depths) {
      CorrelationStat s;
      s.depth = d;
      s.seeds = 1;
      s.mean = correlation_or_empty(ranked.by_depth.at(d), reference.by_depth.at(d));
      s.undefined = s.mean ? 0 : 1;
      row.rho.push_back(s);
      row.system_ndcg[d] = ranked.by_depth.at(d);
    }
    try {
      row.alpha = krippendorff_alpha_nominal(truth, judged, AlphaUnits::all_overlapping);
      row.extra["alpha_predicted_only"] = krippendorff_alpha_nominal(truth, judged, AlphaUnits::predicted_only);
    } catch (const UndefinedMetricError& e) {
      row.extra["alpha_error"] = e.what();
    }
    std::vector<ClassificationMetrics> per_topic;
    for (const auto& t : used) {
      Confusion cm;
      for (const auto& d : remaining(t)) {
        const Judgment* p = judged.find(t, d);
        if (!p) continue;
        const bool y = judged.is_relevant(*p);
        const bool g = truth.is_relevant(*truth.find(t, d));
        if (g && y) ++cm.tp;
        else if (!g && y) ++cm.fp;
        else if (g && !y) ++cm.fn;
        else ++cm.tn;
      }
      if (cm.total() > 0) {
        const auto m = classification_metrics(cm);
        row.per_topic.push_back({t, m});
        per_topic.push_back(m);
      }
    }
    if (!per_topic.empty()) row.macro = macro_average(per_topic);
    report.approaches.push_back(std::move(row));
  };

  if (has(InfillMethod::adapter)) {
    for (int k : config.sample_sizes) {
      ApproachReport row;
      row.approach = "adapter(t=" + std::to_string(k) + ")";
      row.k = k;
      JudgmentSet judged = base_judgments();
      std::vector<std::string> failure(used.size());
      std::vector<JudgmentSet> parts(used.size(), JudgmentSet(truth.threshold()));
      parallel_for(used.size(), config.threads, [&](std::size_t i) {
        const std::string& t = used[i];
        try {
          const JudgmentSet& s = shared.at(t);
          const JudgmentSet sample =
              k == shared_k ? s
                            : sample_shallow_train(s, {k, derive_seed(derive_seed(config.seed, "nested-sample"), t),
                                                       config.relevant_share});
          auto labeler = trainer->train(c.topics.at(t), sample, config.modes.front(),
                                        derive_seed(config.seed, static_cast<std::uint64_t>(k)));
          const auto ids = remaining(t);
          const auto labels = labeler->label(ids);
          for (std::size_t d = 0; d < ids.size(); ++d) parts[i].add_label(t, ids[d], labels[d], JudgmentSource::adapter);
        } catch (const Error& e) {
          failure[i] = e.what();
        }
      });
      bool omitted = false;
      for (std::size_t i = 0; i < used.size(); ++i) {
        if (!failure[i].empty()) {
          report.omissions.push_back({row.approach + " topic " + used[i], failure[i]});
          omitted = true;
        }
      }
      if (omitted) continue;
      for (const auto& p : parts) {
        for (const auto& [_, j] : p) judged.add(j);
        row.labeled += p.size();
      }
      finish_row(std::move(row), judged);
    }
  }

  const bool zero = has(InfillMethod::llm_zero_shot);
  const bool few = has(InfillMethod::llm_few_shot);
  if (zero || few) {
    std::unique_ptr<ChatClient> owned_chat;
    ChatClient* chat = hooks.chat;
    if (!chat) {
      if (!config.llm.replay_dir.empty()) {
        owned_chat = std::make_unique<ReplayClient>(config.llm.replay_dir);
      } else {
        HttpChatOptions http;
        http.base_url = config.llm.base_url;
        http.api_key_env = config.llm.api_key_env;
        owned_chat = std::make_unique<HttpChatClient>(http);
      }
      chat = owned_chat.get();
    }
    std::unique_ptr<JudgmentCache> owned_cache;
    JudgmentCache* cache = hooks.cache;
    if (!cache) cache = (owned_cache = std::make_unique<JudgmentCache>(config.llm.cache_path)).get();
    const std::size_t calls_before = chat->network_calls();

    LlmJudgeOptions opts;
    opts.model_id = config.llm.model_id;
    opts.threshold = config.llm.threshold;
    opts.max_attempts = config.llm.max_attempts;
    opts.backoff_initial = std::chrono::milliseconds(config.llm.backoff_initial_ms);
    opts.backoff_max = std::chrono::milliseconds(config.llm.backoff_max_ms);
    opts.max_in_flight = config.llm.max_in_flight;
    opts.requests_per_second = config.llm.requests_per_second;
    opts.prompt.passage_token_budget = config.llm.passage_token_budget;
    opts.transcript_dir = hooks.transcript_dir;
    const std::string prompt_dir = config.llm.prompt_dir.empty() ? default_prompt_dir() : config.llm.prompt_dir;

    for (const auto& template_id : config.llm.templates) {
      const PromptTemplate tmpl = load_named_template(template_id, prompt_dir);
      for (int shots : {0, 8}) {
        if ((shots == 0 && !zero) || (shots == 8 && !few)) continue;
        ApproachReport row;
        row.approach = "llm " + template_id + (shots ? " few-shot" : " zero-shot");
        JudgmentSet judged = base_judgments();
        json abstained = json::array();
        std::size_t hits = 0;
        std::size_t requests = 0;
        for (const auto& t : used) {
          const Topic& topic = c.topics.at(t);
          std::optional<FewShotBlock> block;
          if (shots) block = sample_fewshot(shared.at(t), topic, c.docs, derive_seed(config.seed, "fewshot"));
          const auto ids = remaining(t);
          const LlmJudgeResult r = judge_pool_llm(*chat, tmpl, topic, ids, c.docs, block ? &*block : nullptr,
                                                  &shared.at(t), *cache, opts, truth.threshold());
          if (r.labels.size() + r.abstentions.size() != ids.size()) {
            throw Error("abstention accounting does not balance for topic " + t);
          }
          for (const auto& [_, j] : r.labels) judged.add(j);
          for (const auto& a : r.abstentions) {
            abstained.push_back({{"topic_id", t}, {"doc_id", a.doc_id}, {"reason", a.reason}, {"attempts", a.attempts}});
          }
          row.labeled += r.labels.size();
          row.abstentions += r.abstentions.size();
          hits += r.cache_hits;
          requests += r.requests;
        }
        row.extra["template_id"] = template_id;
        row.extra["few_shot_examples"] = shots;
        // build_prompt throws on any example outside the shared sample.
        row.extra["leakage_check"] = "passed";
        row.extra["cache_hits"] = hits;
        row.extra["requests"] = requests;
        row.extra["abstained"] = abstained;
        finish_row(std::move(row), judged);
      }
    }
    cache->save();
    const std::size_t calls = chat->network_calls() - calls_before;
    for (auto& a : report.approaches) {
      if (a.approach.rfind("llm ", 0) == 0) a.extra["network_calls_total"] = calls;
    }
  }

  if (has(InfillMethod::zero_fill)) {
    ApproachReport row;
    row.approach = "baseline(0-fill)";
    JudgmentSet judged = base_judgments();
    for (const auto& t : used) {
      for (const auto& d : remaining(t)) {
        judged.add_label(t, d, false, JudgmentSource::zero_fill);
        ++row.labeled;
      }
    }
    finish_row(std::move(row), judged);
  }
  return report;
}

EvalReport run_experiment(const ExperimentConfig& config, const Collection& collection, const ExperimentHooks& hooks) {
  switch (config.experiment) {
    case ExperimentKind::deep: return run_experiment_deep(config, collection, hooks);
    case ExperimentKind::shallow: return run_experiment_shallow(config, collection, hooks);
    case ExperimentKind::llm_compare: return run_experiment_llm_compare(config, collection, hooks);
  }
  throw ConfigError("unknown experiment kind");
}

}  // namespace judgekit
