#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "judgekit/adapter.hpp"
#include "judgekit/reference_scorer.hpp"
#include "judgekit/trec_io.hpp"

namespace judgekit {

enum class TrainMode { native_finetune, lora };

std::string_view to_string(TrainMode mode);
TrainMode parse_train_mode(std::string_view name);

struct TrainConfig {
  int epochs = 10;
  int batch_size = 64;
  double learning_rate = 1e-4;
  double loss_weight_relevant = 0.95;
  double loss_weight_nonrelevant = 0.05;
  int lora_rank = 64;
  double lora_alpha = 128.0;
  int max_sequence_tokens = 512;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::lora;

  void validate() const;
};

// Gradients of the batch weighted MSE. In lora mode only the adapter factors
// are reported (weight/bias stay empty: the base is frozen); in native mode
// only the dense weights and biases are.
struct ParameterGradients {
  double loss = 0.0;
  std::vector<Matrix> lora_a;
  std::vector<Matrix> lora_b;
  std::vector<Matrix> weight;
  std::vector<Vector> bias;
};

// `features` has one column per example, labels are 0/1.
// `adapter` is required in lora mode and ignored in native mode.
ParameterGradients gradient_of_loss(const ReferenceScorer& scorer,
                                    const LowRankAdapter* adapter, const Matrix& features,
                                    const Vector& labels, const TrainConfig& config);

double batch_loss(const ReferenceScorer& scorer, const LowRankAdapter* adapter,
                  const Matrix& features, const Vector& labels, const TrainConfig& config);

struct TrainedJudge {
  std::string topic_id;
  TrainMode mode = TrainMode::lora;
  std::optional<LowRankAdapter> adapter;      // lora mode
  std::optional<ReferenceScorer> finetuned;   // native mode
  // Weighted MSE over the full training set: [0] before training, [e] after epoch e.
  std::vector<double> epoch_losses;
  std::size_t trainable_parameters = 0;

  // Scorer with the topic's weights applied (adapter merged, or finetuned copy).
  ReferenceScorer effective_scorer(const ReferenceScorer& base) const;
};

TrainedJudge train_topic_judge(const ReferenceScorer& base, const Topic& topic,
                               const JudgmentSet& train, const DocumentStore& docs,
                               const TrainConfig& config);

// Same optimisation on precomputed features (one column per example, in the
// order of `labels`).
TrainedJudge train_topic_judge_on_features(const ReferenceScorer& base, const Topic& topic,
                                           const Matrix& features, const Vector& labels,
                                           const TrainConfig& config);

inline constexpr double kDecisionThreshold = 0.5;

struct Prediction {
  double score = 0.0;
  bool relevant = false;
};

Prediction predict_relevance(const PointwiseScorer& scorer, const LowRankAdapter& adapter,
                             const Topic& topic, std::string_view doc_text);
Prediction predict_relevance(const ReferenceScorer& base, const TrainedJudge& judge,
                             const Topic& topic, std::string_view doc_text);

JudgmentSet judge_pool(const PointwiseScorer& scorer, const LowRankAdapter& adapter,
                       const Topic& topic, const std::vector<std::string>& doc_ids,
                       const DocumentStore& docs, int binarization_threshold = 1);
JudgmentSet judge_pool(const ReferenceScorer& base, const TrainedJudge& judge,
                       const Topic& topic, const std::vector<std::string>& doc_ids,
                       const DocumentStore& docs, int binarization_threshold = 1);

// Trainable parameter counts of the two modes for a scorer/config pair.
std::size_t trainable_parameters(const ReferenceScorer& scorer, const TrainConfig& config);

}  // namespace judgekit
