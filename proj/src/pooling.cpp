#include "judgekit/pooling.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "judgekit/errors.hpp"
#include "judgekit/rng.hpp"

namespace judgekit {
namespace {

void require_single_topic(const JudgmentSet& j) {
  if (j.topics().size() > 1) {
    throw Error("expected judgments of a single topic, got " +
                std::to_string(j.topics().size()));
  }
}

struct ByClass {
  std::vector<const Judgment*> nonrelevant;
  std::vector<const Judgment*> relevant;
};

ByClass partition(const JudgmentSet& j) {
  ByClass out;
  for (const auto& [_, entry] : j) {
    (j.is_relevant(entry) ? out.relevant : out.nonrelevant).push_back(&entry);
  }
  return out;
}

}  // namespace

long round_half_up(double x) { return static_cast<long>(std::floor(x + 0.5)); }

std::vector<std::string> select_topics(const JudgmentSet& judgments, int min_relevant) {
  if (min_relevant < 1) throw Error("min_relevant must be >= 1");
  std::vector<std::string> out;
  for (const auto& topic : judgments.topics()) {
    if (judgments.relevant_count(topic) >= static_cast<std::size_t>(min_relevant)) {
      out.push_back(topic);
    }
  }
  return out;
}

Split stratified_split(const JudgmentSet& topic_judgments, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw Error("train_fraction must lie in (0, 1)");
  }
  require_single_topic(topic_judgments);
  Rng rng(spec.seed);
  Split out{JudgmentSet(topic_judgments.threshold()),
            JudgmentSet(topic_judgments.threshold())};

  std::vector<std::vector<const Judgment*>> classes;
  if (spec.stratify_by_label) {
    auto by_class = partition(topic_judgments);
    if (by_class.nonrelevant.empty()) {
      throw StratificationError("class 'non-relevant' is empty");
    }
    if (by_class.relevant.empty()) throw StratificationError("class 'relevant' is empty");
    classes = {std::move(by_class.nonrelevant), std::move(by_class.relevant)};
  } else {
    std::vector<const Judgment*> all;
    for (const auto& [_, entry] : topic_judgments) all.push_back(&entry);
    classes = {std::move(all)};
  }

  const long total_train =
      round_half_up(spec.train_fraction * static_cast<double>(topic_judgments.size()));
  long assigned = 0;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    auto& members = classes[c];
    const long size = static_cast<long>(members.size());
    long n_train = round_half_up(spec.train_fraction * static_cast<double>(size));
    if (c + 1 == classes.size()) n_train = total_train - assigned;
    n_train = std::clamp(n_train, 0L, size);
    assigned += n_train;
    rng.shuffle(members);
    for (long i = 0; i < size; ++i) {
      (i < n_train ? out.train : out.test).add(*members[static_cast<std::size_t>(i)]);
    }
  }
  return out;
}

JudgmentSet sample_shallow_train(const JudgmentSet& topic_judgments,
                                 const ShallowSampleSpec& spec) {
  if (spec.k < 2) throw Error("shallow sample size k must be >= 2");
  require_single_topic(topic_judgments);
  if (topic_judgments.size() < static_cast<std::size_t>(spec.k)) {
    throw InsufficientPoolError("pool has " + std::to_string(topic_judgments.size()) +
                                " judged documents, need " + std::to_string(spec.k));
  }
  auto by_class = partition(topic_judgments);
  if (by_class.relevant.empty()) {
    throw StratificationError("class 'relevant' is empty; cannot sample a training set");
  }
  const long k = spec.k;
  long n_rel = round_half_up(spec.relevant_share * static_cast<double>(k));
  n_rel = std::min({n_rel, static_cast<long>(by_class.relevant.size()), k - 1});
  n_rel = std::max(n_rel, 1L);
  const long n_non = k - n_rel;
  if (static_cast<long>(by_class.nonrelevant.size()) < n_non) {
    throw InsufficientPoolError("need " + std::to_string(n_non) +
                                " non-relevant documents, pool has " +
                                std::to_string(by_class.nonrelevant.size()));
  }

  Rng rng(spec.seed);
  rng.shuffle(by_class.nonrelevant);
  rng.shuffle(by_class.relevant);
  JudgmentSet out(topic_judgments.threshold());
  for (long i = 0; i < n_non; ++i) out.add(*by_class.nonrelevant[static_cast<std::size_t>(i)]);
  for (long i = 0; i < n_rel; ++i) out.add(*by_class.relevant[static_cast<std::size_t>(i)]);
  return out;
}

Pool build_pool(const RunSet& runs, int depth) {
  if (depth < 1) throw Error("pool depth must be >= 1");
  Pool out;
  for (const auto& [_, topics] : runs.runs()) {
    for (const auto& [topic, list] : topics) {
      auto& docs = out[topic];
      const std::size_t n = std::min(list.size(), static_cast<std::size_t>(depth));
      for (std::size_t i = 0; i < n; ++i) docs.insert(list[i].doc_id);
    }
  }
  return out;
}

PoolSimulation subsample_runs(const RunSet& runs, double rate, std::uint64_t seed,
                              int depth) {
  if (!(rate > 0.0 && rate <= 1.0)) throw Error("subsampling rate must lie in (0, 1]");
  if (runs.empty()) throw Error("cannot subsample an empty run set");
  auto tags = runs.run_tags();
  const long total = static_cast<long>(tags.size());
  const long n = std::clamp(round_half_up(rate * static_cast<double>(total)), 1L, total);
  Rng rng(seed);
  rng.shuffle(tags);
  tags.resize(static_cast<std::size_t>(n));
  std::sort(tags.begin(), tags.end());

  PoolSimulation sim;
  sim.chosen_runs = tags;
  sim.subsampling_rate = rate;
  sim.pool_depth = depth;
  sim.seed = seed;
  sim.pooled_docs = build_pool(runs.restricted_to(sim.chosen_set()), depth);
  return sim;
}

std::string write_manifest(const PoolSimulation& sim) {
  nlohmann::ordered_json j;
  j["seed"] = sim.seed;
  j["subsampling_rate"] = sim.subsampling_rate;
  j["pool_depth"] = sim.pool_depth;
  j["chosen_runs"] = sim.chosen_runs;
  auto& topics = j["topics"];
  topics = nlohmann::ordered_json::object();
  for (const auto& [topic, docs] : sim.pooled_docs) {
    topics[topic] = {{"pool_size", docs.size()},
                     {"docs", std::vector<std::string>(docs.begin(), docs.end())}};
  }
  return j.dump(2) + "\n";
}

PoolSimulation read_manifest(std::string_view json_text) {
  try {
    auto j = nlohmann::json::parse(json_text);
    PoolSimulation sim;
    sim.seed = j.at("seed").get<std::uint64_t>();
    sim.subsampling_rate = j.at("subsampling_rate").get<double>();
    sim.pool_depth = j.at("pool_depth").get<int>();
    sim.chosen_runs = j.at("chosen_runs").get<std::vector<std::string>>();
    for (const auto& [topic, entry] : j.at("topics").items()) {
      auto docs = entry.at("docs").get<std::vector<std::string>>();
      if (docs.size() != entry.at("pool_size").get<std::size_t>()) {
        throw Error("manifest pool_size disagrees with docs for topic " + topic);
      }
      sim.pooled_docs[topic] = {docs.begin(), docs.end()};
    }
    return sim;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed manifest: ") + e.what());
  }
}

}  // namespace judgekit
