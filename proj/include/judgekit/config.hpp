#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "judgekit/llm_judge.hpp"
#include "judgekit/metrics.hpp"
#include "judgekit/reference_scorer.hpp"
#include "judgekit/synthetic.hpp"
#include "judgekit/trainer.hpp"

namespace judgekit {

inline constexpr int kConfigVersion = 1;

enum class ExperimentKind { deep, shallow, llm_compare };
enum class InfillMethod { zero_fill, adapter, llm_zero_shot, llm_few_shot, ground_truth };

std::string_view to_string(ExperimentKind k);
ExperimentKind parse_experiment_kind(std::string_view name);
std::string_view to_string(InfillMethod m);
InfillMethod parse_infill_method(std::string_view name);

// Either a synthetic generator or four collection files.
struct CollectionConfig {
  std::optional<SyntheticParams> synthetic = SyntheticParams{};
  std::uint64_t synthetic_seed = 0;
  std::string qrels;
  std::string runs;
  std::string topics;
  std::string documents;
  std::string name = "synthetic";
};

struct LlmConfig {
  std::vector<std::string> templates{"umbrela_graded", "binary_direct"};
  std::string prompt_dir;  // empty = bundled assets
  std::string model_id = "gpt-4o";
  std::string base_url = "https://api.openai.com";
  std::string api_key_env = "OPENAI_API_KEY";
  std::string replay_dir;  // set = offline replay
  std::string cache_path;
  int threshold = 1;
  int max_attempts = 3;
  int backoff_initial_ms = 500;
  int backoff_max_ms = 8000;
  int max_in_flight = 4;
  double requests_per_second = 0.0;
  int passage_token_budget = 256;
};

struct ExperimentConfig {
  int config_version = kConfigVersion;
  ExperimentKind experiment = ExperimentKind::shallow;
  std::uint64_t seed = 0;
  CollectionConfig collection;
  int binarization_threshold = 1;
  int min_relevant = 1;  // topic selection: relevant judgments needed
  double train_fraction = 0.8;
  std::vector<int> sample_sizes{64, 128, 192, 256};
  double relevant_share = 0.125;
  TrainConfig train;
  std::vector<TrainMode> modes{TrainMode::lora};
  ReferenceScorerConfig scorer;
  MetricSpec metrics;
  std::vector<InfillMethod> infill{InfillMethod::zero_fill, InfillMethod::adapter};
  std::vector<double> rates{0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0};
  std::vector<std::uint64_t> seeds = default_bootstrap_seeds();
  int pool_depth = 100;
  int threads = 1;
  LlmConfig llm;

  void validate() const;
};

// Unknown keys, wrong types and out-of-range values are ConfigErrors.
// Missing keys take the defaults above.
ExperimentConfig parse_experiment_config(std::string_view json_text);
ExperimentConfig read_experiment_config(const std::string& path);

// Fully resolved form; parse_experiment_config(to_json(c).dump()) == c.
nlohmann::json to_json(const ExperimentConfig& config);

// First 12 hex digits of sha256 of the resolved config.
std::string config_hash(const ExperimentConfig& config);

}  // namespace judgekit
