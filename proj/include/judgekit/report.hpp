#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "judgekit/metrics.hpp"

namespace judgekit {

struct CorrelationStat {
  int depth = 0;
  std::optional<double> mean;  // empty when every seed was undefined
  double stddev = 0.0;
  std::size_t seeds = 0;
  std::size_t undefined = 0;
};

struct TopicMetrics {
  std::string topic_id;
  ClassificationMetrics metrics;
};

// One evaluated approach: an infill method at a sample size and rate, a
// training mode, an LLM prompt variant, or the 0-fill baseline.
struct ApproachReport {
  std::string approach;
  std::optional<int> k;
  std::optional<double> rate;
  std::vector<TopicMetrics> per_topic;
  std::optional<MacroMetrics> macro;
  std::map<int, std::vector<SystemScore>> system_ndcg;  // depth -> ranking
  std::vector<CorrelationStat> rho;
  std::optional<double> alpha;
  std::size_t labeled = 0;
  std::size_t abstentions = 0;
  nlohmann::json extra = nlohmann::json::object();
};

struct Omission {
  std::string configuration;
  std::string reason;
};

struct TidyRow {
  std::string dataset;
  double rate = 0.0;
  std::string method;
  std::optional<int> k;
  std::uint64_t seed = 0;
  int depth = 0;
  std::optional<double> rho;
};

struct EvalReport {
  std::string experiment;
  nlohmann::json config;  // resolved, verbatim
  std::size_t topics_requested = 0;
  std::size_t topics_covered = 0;
  std::vector<ApproachReport> approaches;
  std::vector<Omission> omissions;
  std::vector<TidyRow> tidy;

  const ApproachReport* find(const std::string& approach) const;

  nlohmann::json to_json() const;
  // One row per approach and nDCG depth.
  std::string to_table() const;
  // Tab-separated long format: dataset rate method k seed depth rho.
  std::string tidy_tsv() const;
};

nlohmann::json to_json(const ClassificationMetrics& m);
nlohmann::json to_json(const MacroMetrics& m);

}  // namespace judgekit
