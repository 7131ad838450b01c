#pragma once

#include <chrono>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "judgekit/scorer.hpp"

namespace judgekit {

// Line-delimited JSON exchange with a child process:
//   request  {"id": N, "query": "...", "doc": "...", "adapter": "<ref>" | null}
//   response {"id": N, "score": s}   with s in [0, 1]
//         or {"id": N, "error": "..."}
// A late answer, a wrong id, malformed JSON, or an out-of-range score is a
// ScorerError. The child is terminated when the scorer is destroyed.
//
// Adapters for external scorers carry no layers; their `source_path` (or
// topic id when empty) is forwarded as the adapter reference.
struct ExternalScorerOptions {
  std::vector<std::string> command;
  std::string model_id;
  Archetype archetype = Archetype::mono_decoder;
  std::chrono::milliseconds timeout{30000};
};

class ExternalScorer final : public PointwiseScorer {
 public:
  explicit ExternalScorer(ExternalScorerOptions options);
  ~ExternalScorer() override;
  ExternalScorer(const ExternalScorer&) = delete;
  ExternalScorer& operator=(const ExternalScorer&) = delete;

  Archetype archetype() const override { return options_.archetype; }
  const std::string& model_id() const override { return options_.model_id; }
  std::vector<LayerShape> adaptable_layers() const override { return {}; }

  double score(std::string_view query, std::string_view doc) const override;
  double score(std::string_view query, std::string_view doc,
               const LowRankAdapter& adapter) const override;

 private:
  double request(std::string_view query, std::string_view doc,
                 const std::optional<std::string>& adapter_ref) const;
  std::string read_line() const;
  void shutdown();

  ExternalScorerOptions options_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  mutable std::mutex mutex_;
  mutable std::string buffer_;
  mutable long next_id_ = 1;
  mutable bool broken_ = false;
};

}  // namespace judgekit
