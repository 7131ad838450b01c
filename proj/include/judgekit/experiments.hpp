#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "judgekit/config.hpp"
#include "judgekit/llm_judge.hpp"
#include "judgekit/pooling.hpp"
#include "judgekit/reference_scorer.hpp"
#include "judgekit/report.hpp"
#include "judgekit/trec_io.hpp"

namespace judgekit {

struct Collection {
  std::string name;
  DocumentStore docs;
  TopicSet topics;
  JudgmentSet qrels;
  RunSet runs;
};

Collection load_collection(const ExperimentConfig& config);

// Labels documents of one topic, learned from that topic's sample only.
class TopicLabeler {
 public:
  virtual ~TopicLabeler() = default;
  virtual std::vector<bool> label(const std::vector<std::string>& doc_ids) const = 0;
  virtual std::size_t trainable_parameters() const { return 0; }
};

// Must be safe to call concurrently for different topics.
class JudgeTrainer {
 public:
  virtual ~JudgeTrainer() = default;
  virtual std::unique_ptr<TopicLabeler> train(const Topic& topic, const JudgmentSet& sample,
                                              TrainMode mode, std::uint64_t seed) const = 0;
};

// Reference-scorer judges. Document features are computed once per
// (topic, doc) and shared by every judge of that topic.
class AdapterJudgeTrainer final : public JudgeTrainer {
 public:
  AdapterJudgeTrainer(ReferenceScorer base, TrainConfig config, const DocumentStore& docs);

  std::unique_ptr<TopicLabeler> train(const Topic& topic, const JudgmentSet& sample, TrainMode mode,
                                      std::uint64_t seed) const override;

  // Featurizes the given documents of `topic` up front.
  void prepare(const Topic& topic, const std::vector<std::string>& doc_ids) const;
  // Feature columns for `doc_ids`, featurizing any that were not prepared.
  Matrix features(const Topic& topic, const std::vector<std::string>& doc_ids) const;

  const ReferenceScorer& base() const { return base_; }

 private:
  struct TopicFeatures {
    std::map<std::string, Eigen::Index> column;
    Matrix x;
  };
  ReferenceScorer base_;
  TrainConfig config_;
  const DocumentStore& docs_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, std::shared_ptr<TopicFeatures>> cache_;
};

// Answers with the given judgments (absent = non-relevant). With the truth
// this is a perfect judge.
class OracleJudgeTrainer final : public JudgeTrainer {
 public:
  explicit OracleJudgeTrainer(JudgmentSet truth) : truth_(std::move(truth)) {}
  std::unique_ptr<TopicLabeler> train(const Topic& topic, const JudgmentSet& sample, TrainMode mode,
                                      std::uint64_t seed) const override;

 private:
  JudgmentSet truth_;
};

struct ExperimentHooks {
  const JudgeTrainer* trainer = nullptr;  // default: AdapterJudgeTrainer from the config
  ChatClient* chat = nullptr;             // default: replay dir, else HTTP
  JudgmentCache* cache = nullptr;         // default: config llm.cache_path
  std::string transcript_dir;             // live LLM transcripts; empty = none
};

// Runs fn(i) for i in [0, n) on up to `threads` threads; results must be
// written to per-index slots. The first exception is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

// Ground truth for pool-based experiments: qrels restricted to the pool of all runs.
JudgmentSet pool_truth(const JudgmentSet& qrels, const Pool& full_pool);

EvalReport run_experiment_deep(const ExperimentConfig& config, const Collection& collection,
                               const ExperimentHooks& hooks = {});
EvalReport run_experiment_shallow(const ExperimentConfig& config, const Collection& collection,
                                  const ExperimentHooks& hooks = {});
EvalReport run_experiment_llm_compare(const ExperimentConfig& config, const Collection& collection,
                                      const ExperimentHooks& hooks = {});

EvalReport run_experiment(const ExperimentConfig& config, const Collection& collection,
                          const ExperimentHooks& hooks = {});

// Approach labels used in reports.
std::string shallow_approach_name(InfillMethod method, std::optional<int> k, double rate);

}  // namespace judgekit
