#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace judgekit {

struct LowRankAdapter;

enum class Archetype { bi_encoder, cross_encoder, mono_decoder, reference };

std::string_view to_string(Archetype a);
Archetype parse_archetype(std::string_view name);

struct LayerShape {
  std::string name;
  int d_out = 0;
  int d_in = 0;
};

// Maps (query, document) to a relevance score in [0, 1]. Scoring is
// deterministic for fixed weights and safe to call concurrently.
class PointwiseScorer {
 public:
  virtual ~PointwiseScorer() = default;

  virtual Archetype archetype() const = 0;
  virtual const std::string& model_id() const = 0;
  virtual std::vector<LayerShape> adaptable_layers() const = 0;

  virtual double score(std::string_view query, std::string_view doc) const = 0;
  virtual double score(std::string_view query, std::string_view doc,
                       const LowRankAdapter& adapter) const = 0;

  // Scores many documents for one query; implementations may batch.
  virtual std::vector<double> score_batch(std::string_view query,
                                          const std::vector<std::string_view>& docs,
                                          const LowRankAdapter& adapter) const;
};

}  // namespace judgekit
