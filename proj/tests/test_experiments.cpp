#include <cmath>
#include <mutex>

#include "doctest.h"
#include "judgekit/config.hpp"
#include "judgekit/errors.hpp"
#include "judgekit/experiments.hpp"
#include "judgekit/synthetic.hpp"

using namespace judgekit;

namespace {

SyntheticParams tiny_params() {
  SyntheticParams p;
  p.topics = 3;
  p.systems = 6;
  p.docs_per_topic = 200;
  p.relevant_share = 0.1;
  p.run_depth = 40;
  p.background_vocab = 400;
  p.families = 2;
  return p;
}

ExperimentConfig tiny_config(ExperimentKind kind) {
  ExperimentConfig c;
  c.experiment = kind;
  c.collection.synthetic = tiny_params();
  c.collection.synthetic_seed = 3;
  c.pool_depth = 40;
  c.sample_sizes = {16, 32};
  c.rates = {0.4, 1.0};
  c.seeds = {1, 2, 3};
  c.scorer.feature_dim = 64;
  c.scorer.hidden_dim = 16;
  c.train.epochs = 3;
  c.train.batch_size = 16;
  c.train.learning_rate = 1e-3;
  c.train.lora_rank = 8;
  c.train.lora_alpha = 16;
  c.metrics.ndcg_depths = {5, 10};
  c.llm.backoff_initial_ms = 1;
  c.llm.backoff_max_ms = 2;
  return c;
}

class CountingChat final : public ChatClient {
 public:
  ChatResponse complete(const ChatRequest& r) override {
    std::lock_guard lock(mutex_);
    ++calls_;
    // Deterministic verdict from the prompt length; every 7th prompt is unparsable.
    const std::size_t h = r.prompt.size() + r.template_id.size();
    if (h % 7 == 0) return {"I am unsure.", "{}"};
    if (r.template_id == "binary_direct") return {h % 2 ? "Yes" : "No", "{}"};
    return {"Score: " + std::to_string(h % 4), "{}"};
  }
  std::size_t network_calls() const override { return calls_; }

 private:
  std::mutex mutex_;
  std::size_t calls_ = 0;
};

}  // namespace

TEST_CASE("synthetic collections are deterministic and planted") {
  const auto a = generate_synthetic_collection(tiny_params(), 5);
  const auto b = generate_synthetic_collection(tiny_params(), 5);
  CHECK(write_qrels(a.qrels) == write_qrels(b.qrels));
  CHECK(write_run(a.runs) == write_run(b.runs));
  CHECK(write_documents(a.docs) == write_documents(b.docs));
  CHECK_FALSE(write_run(generate_synthetic_collection(tiny_params(), 6).runs) == write_run(a.runs));
  CHECK(a.runs.run_count() == 6);
  CHECK(a.topics.size() == 3);
  CHECK(a.runs.run_tags().front() == synthetic_run_tag(0));
  for (const auto& t : a.qrels.topics()) CHECK(a.qrels.relevant_count(t) == 20);
  for (std::size_t i = 1; i < a.system_noise.size(); ++i) CHECK(a.system_noise[i] > a.system_noise[i - 1]);

  auto exact = tiny_params();
  exact.noise_min = 0.0;
  exact.family_noise = 0.0;
  const auto e = generate_synthetic_collection(exact, 1);
  const auto ranking = rank_systems(e.runs, e.qrels, 10);
  for (const auto& s : ranking)
    if (s.run_tag == synthetic_run_tag(0)) CHECK(s.mean == 1.0);
  CHECK(ranking.front().run_tag == synthetic_run_tag(0));

  auto bad = tiny_params();
  bad.docs_per_topic = 10;
  CHECK_THROWS_AS(generate_synthetic_collection(bad, 1), ConfigError);
}

TEST_CASE("config parsing") {
  const auto c = parse_experiment_config(R"({"config_version": 1, "experiment": "deep", "seed": 4,
      "train": {"epochs": 2}})");
  CHECK(c.experiment == ExperimentKind::deep);
  CHECK(c.train.epochs == 2);
  CHECK(c.train.seed == 4);
  CHECK(c.collection.synthetic.has_value());
  CHECK(parse_experiment_config(to_json(c).dump()).train.epochs == 2);
  CHECK(to_json(parse_experiment_config(to_json(c).dump())) == to_json(c));
  CHECK(config_hash(c).size() == 12);

  CHECK_THROWS_AS(parse_experiment_config(R"({"experiment": "deep"})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"config_version": 1, "epochs": 3})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"config_version": 1, "train": {"epoch": 3}})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"config_version": 1, "seed": "x"})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"config_version": 2})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"config_version": 1, "rates": [1.5]})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"config_version": 1, "train": {"max_sequence_tokens": 100}})"),
                  ConfigError);
}

TEST_CASE("bundled configs parse, file collections carry no generator") {
  for (const char* name : {"shallow_desk.json", "deep_desk.json", "llm_compare.json"})
    CHECK_NOTHROW(read_experiment_config(std::string(JUDGEKIT_SOURCE_DIR) + "/configs/" + name));
  const auto files = parse_experiment_config(R"({"config_version": 1, "collection": {"qrels": "q",
      "runs": "r", "topics": "t", "documents": "d", "name": "c"}})");
  CHECK_FALSE(files.collection.synthetic.has_value());
  CHECK(ExperimentConfig{}.collection.synthetic.has_value());
  CHECK_THROWS_AS(parse_experiment_config(R"({"config_version": 1, "collection": {"qrels": "q",
      "synthetic": {}}})"), ConfigError);
}

TEST_CASE("shallow pipeline: ground truth infill is a fixed point") {
  auto config = tiny_config(ExperimentKind::shallow);
  config.infill = {InfillMethod::ground_truth, InfillMethod::zero_fill};
  const auto col = load_collection(config);
  const auto report = run_experiment_shallow(config, col);
  const auto* gt = report.find(shallow_approach_name(InfillMethod::ground_truth, std::nullopt, 0.4));
  REQUIRE(gt != nullptr);
  for (const auto& s : gt->rho) CHECK(*s.mean == 1.0);
  for (const auto& row : report.tidy)
    if (row.method == "ground_truth") CHECK(*row.rho == 1.0);
  const auto* zf = report.find(shallow_approach_name(InfillMethod::zero_fill, std::nullopt, 1.0));
  REQUIRE(zf != nullptr);
  CHECK(*zf->rho.front().mean == 1.0);
  CHECK(report.approaches.front().approach == "ground_truth_ranking@5");
  CHECK(report.tidy_tsv().rfind("dataset\trate\tmethod", 0) == 0);
  CHECK_FALSE(report.to_table().empty());
  CHECK(report.to_json().at("approaches").size() == report.approaches.size());
}

TEST_CASE("shallow pipeline: oracle labeler equals ground truth, omissions are recorded") {
  auto config = tiny_config(ExperimentKind::shallow);
  config.infill = {InfillMethod::adapter};
  config.sample_sizes = {16, 4000};
  const auto col = load_collection(config);
  const Pool full = build_pool(col.runs, config.pool_depth);
  const OracleJudgeTrainer oracle(pool_truth(col.qrels, full));
  ExperimentHooks hooks;
  hooks.trainer = &oracle;
  const auto report = run_experiment_shallow(config, col, hooks);
  const auto* row = report.find(shallow_approach_name(InfillMethod::adapter, 16, 0.4));
  REQUIRE(row != nullptr);
  for (const auto& s : row->rho) CHECK(*s.mean == 1.0);
  REQUIRE(row->macro.has_value());
  CHECK(*row->macro->f1 == 1.0);
  CHECK(report.find(shallow_approach_name(InfillMethod::adapter, 4000, 0.4)) == nullptr);
  CHECK(report.omissions.size() == 2 * config.seeds.size());
}

TEST_CASE("shallow pipeline runs with trained adapters and is reproducible") {
  auto config = tiny_config(ExperimentKind::shallow);
  config.rates = {0.4};
  config.seeds = {1};
  const auto col = load_collection(config);
  const auto a = run_experiment_shallow(config, col).to_json();
  const auto b = run_experiment_shallow(config, col).to_json();
  CHECK(a == b);
  config.infill = {InfillMethod::llm_zero_shot};
  CHECK_THROWS_AS(run_experiment_shallow(config, col), ConfigError);
}

TEST_CASE("deep pipeline reports per-topic metrics for both modes") {
  auto config = tiny_config(ExperimentKind::deep);
  config.modes = {TrainMode::lora, TrainMode::native_finetune};
  const auto col = load_collection(config);
  const auto report = run_experiment_deep(config, col);
  REQUIRE(report.approaches.size() == 2);
  CHECK(report.topics_covered == 3);
  const auto* lora = report.find("lora");
  const auto* native = report.find("native_finetune");
  REQUIRE(lora);
  REQUIRE(native);
  CHECK(lora->per_topic.size() == 3);
  CHECK(lora->extra.at("trainable_parameters").get<std::size_t>() <
        native->extra.at("trainable_parameters").get<std::size_t>());
  // Test splits hold 20% of the 200 judged docs of each topic.
  CHECK(lora->labeled == 3 * 40);
}

TEST_CASE("llm comparison emits the full table") {
  auto config = tiny_config(ExperimentKind::llm_compare);
  config.collection.synthetic->topics = 2;
  config.sample_sizes = {16, 24, 32, 40};
  config.infill = {InfillMethod::adapter, InfillMethod::llm_zero_shot, InfillMethod::llm_few_shot,
                   InfillMethod::zero_fill};
  const auto col = load_collection(config);
  CountingChat chat;
  JudgmentCache cache;
  ExperimentHooks hooks;
  hooks.chat = &chat;
  hooks.cache = &cache;
  const auto report = run_experiment_llm_compare(config, col, hooks);
  CHECK(report.approaches.size() == 9);
  CHECK(report.find("adapter(t=16)"));
  CHECK(report.find("baseline(0-fill)"));
  const auto* few = report.find("llm umbrela_graded few-shot");
  REQUIRE(few);
  CHECK(few->extra.at("leakage_check") == "passed");
  CHECK(few->alpha.has_value());
  const std::size_t calls = chat.network_calls();
  CHECK(calls > 0);

  const auto again = run_experiment_llm_compare(config, col, hooks);
  CHECK(chat.network_calls() == calls);
  CHECK(again.find("llm binary_direct zero-shot")->extra.at("network_calls_total") == 0);
  for (const auto& row : report.approaches) {
    const auto* warm = again.find(row.approach);
    REQUIRE(warm);
    CHECK(warm->alpha == row.alpha);
    CHECK(warm->labeled == row.labeled);
    CHECK(warm->abstentions == row.abstentions);
  }
}

TEST_CASE("parallel_for covers every index and rethrows") {
  std::vector<int> hit(50, 0);
  parallel_for(hit.size(), 4, [&](std::size_t i) { hit[i] += 1; });
  for (int h : hit) CHECK(h == 1);
  CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
                    if (i == 7) throw Error("boom");
                  }),
                  Error);
}
