#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "judgekit/trec_io.hpp"

namespace judgekit {

// Per-topic set of pooled doc ids.
using Pool = std::map<std::string, std::set<std::string>>;

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  bool stratify_by_label = true;
};

struct ShallowSampleSpec {
  int k = 128;
  std::uint64_t seed = 0;
  // Target share of relevant documents; clamped by availability.
  double relevant_share = 0.125;
};

struct Split {
  JudgmentSet train;
  JudgmentSet test;
};

struct PoolSimulation {
  std::vector<std::string> chosen_runs;  // sorted
  double subsampling_rate = 1.0;
  int pool_depth = 100;
  std::uint64_t seed = 0;
  Pool pooled_docs;

  std::set<std::string> chosen_set() const {
    return {chosen_runs.begin(), chosen_runs.end()};
  }
};

// floor(x + 0.5)
long round_half_up(double x);

// Topics with at least `min_relevant` binary-relevant judgments, sorted.
std::vector<std::string> select_topics(const JudgmentSet& judgments, int min_relevant);

// `topic_judgments` must hold a single topic.
Split stratified_split(const JudgmentSet& topic_judgments, const SplitSpec& spec);

// Exactly spec.k documents, with the relevant count
// min(round(share * k), available relevant, k - 1), and at least one.
JudgmentSet sample_shallow_train(const JudgmentSet& topic_judgments,
                                 const ShallowSampleSpec& spec);

// Union over the given runs of each run's first `depth` documents per topic.
Pool build_pool(const RunSet& runs, int depth);

PoolSimulation subsample_runs(const RunSet& runs, double rate, std::uint64_t seed,
                              int depth = 100);

// Audit/replay manifest (JSON): seed, rate, depth, chosen runs, per-topic
// pool sizes and members.
std::string write_manifest(const PoolSimulation& sim);
PoolSimulation read_manifest(std::string_view json_text);

}  // namespace judgekit
