#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "judgekit/lora.hpp"
#include "judgekit/scorer.hpp"

namespace judgekit {

struct ReferenceScorerConfig {
  int feature_dim = 256;          // hash buckets per text block
  int hidden_dim = 128;
  int ngram = 4;                  // character n-gram length
  int max_sequence_tokens = 512;  // query + document budget
  double interaction_scale = 16.0;
  std::uint64_t seed = 1;
  std::string name = "reference-ngram-mlp";
};

struct DenseLayer {
  std::string name;
  Matrix weight;  // d_out x d_in
  Vector bias;    // d_out
};

// Desk-scale pointwise scorer. Input features are the concatenation of
// hashed character n-gram bags of the query, of the document, and of their
// elementwise product; then tanh hidden layer, then a sigmoid output unit.
//
// Both linear sublayers ("hidden", "output") are adaptable. The model id
// embeds a fingerprint of the weights, so an adapter can only be attached to
// the exact base it was trained on.
class ReferenceScorer final : public PointwiseScorer {
 public:
  explicit ReferenceScorer(ReferenceScorerConfig config);

  Archetype archetype() const override { return Archetype::reference; }
  const std::string& model_id() const override { return model_id_; }
  std::vector<LayerShape> adaptable_layers() const override;

  double score(std::string_view query, std::string_view doc) const override;
  double score(std::string_view query, std::string_view doc,
               const LowRankAdapter& adapter) const override;
  // Merges the adapter once, then scores every document.
  std::vector<double> score_batch(std::string_view query,
                                  const std::vector<std::string_view>& docs,
                                  const LowRankAdapter& adapter) const override;

  const ReferenceScorerConfig& config() const { return config_; }
  int input_dim() const { return 3 * config_.feature_dim; }

  // Query and document tokens after fitting both into the token budget,
  // cutting the document tail first.
  std::pair<std::vector<std::string_view>, std::vector<std::string_view>> truncate(
      std::string_view query, std::string_view doc) const;

  Vector featurize(std::string_view query, std::string_view doc) const;
  // One column per document.
  Matrix featurize_batch(std::string_view query,
                         const std::vector<std::string_view>& docs) const;

  double forward(const Vector& x) const;
  double forward(const Vector& x, const LowRankAdapter& adapter) const;
  // Scores for each column of `features`.
  Vector forward_batch(const Matrix& features) const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  // Replacing weights (native fine-tuning, merging) re-fingerprints the model.
  void set_layers(std::vector<DenseLayer> layers);
  ReferenceScorer merged(const LowRankAdapter& adapter) const;

  std::size_t parameter_count() const;

 private:
  void refresh_model_id();

  ReferenceScorerConfig config_;
  std::vector<DenseLayer> layers_;
  std::string model_id_;
};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace judgekit
