#include "judgekit/cli.hpp"

#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "judgekit/adapter.hpp"
#include "judgekit/errors.hpp"
#include "judgekit/experiments.hpp"
#include "judgekit/external_scorer.hpp"
#include "judgekit/pooling.hpp"
#include "judgekit/rng.hpp"
#include "judgekit/synthetic.hpp"
#include "judgekit/trainer.hpp"

namespace judgekit {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Common {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "experiment config (JSON)");
  cmd->add_option("--out", c.out, "output file or directory");
  cmd->add_option("--seed", c.seed, "base seed, overrides the config");
}

ExperimentConfig resolve_config(const Common& c) {
  ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig{} : read_experiment_config(c.config_path);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.train.seed = *c.seed;
  }
  cfg.validate();
  return cfg;
}

std::string utc_stamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

fs::path make_run_dir(const std::string& out, const ExperimentConfig& cfg) {
  const fs::path root = out.empty() ? fs::path("runs") : fs::path(out);
  fs::path dir = root / (std::string(to_string(cfg.experiment)) + "-" + config_hash(cfg) + "-" + utc_stamp());
  for (int i = 2; fs::exists(dir); ++i) {
    dir = root / (std::string(to_string(cfg.experiment)) + "-" + config_hash(cfg) + "-" + utc_stamp() + "-" +
                  std::to_string(i));
  }
  fs::create_directories(dir);
  return dir;
}

void write_report(const fs::path& dir, const EvalReport& report, const ExperimentConfig& cfg) {
  write_text_file((dir / "config.json").string(), to_json(cfg).dump(2) + "\n");
  write_text_file((dir / "report.json").string(), report.to_json().dump(2) + "\n");
  write_text_file((dir / "report.txt").string(), report.to_table());
  if (!report.tidy.empty()) write_text_file((dir / "correlations.tsv").string(), report.tidy_tsv());
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::vector<std::string> split_command(const std::string& command) {
  std::istringstream ss(command);
  std::vector<std::string> out;
  for (std::string w; ss >> w;) out.push_back(w);
  return out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"judgekit: topic-specific relevance judges for pooled test collections"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  // synth
  Common synth_c;
  auto* synth = app.add_subcommand("synth", "write a synthetic collection (qrels, runs, topics, documents)");
  add_common(synth, synth_c);

  // train
  Common train_c;
  std::string topics_path, docs_path, qrels_path, topic_id, mode_name = "lora";
  int sample_size = 0;
  auto* train = app.add_subcommand("train", "train one topic's judge adapter from its judgments");
  add_common(train, train_c);
  train->add_option("--topics", topics_path, "topics TSV")->required();
  train->add_option("--docs", docs_path, "documents TSV")->required();
  train->add_option("--qrels", qrels_path, "qrels with the topic's judgments")->required();
  train->add_option("--topic", topic_id, "topic id")->required();
  train->add_option("--sample-size", sample_size, "train on a shallow sample of this size (0 = all judgments)");

  // predict
  Common predict_c;
  std::string adapter_path, doc_ids_path, external_command, external_model;
  auto* predict = app.add_subcommand("predict", "score documents with a judge adapter");
  add_common(predict, predict_c);
  predict->add_option("--adapter", adapter_path, "adapter file")->required();
  predict->add_option("--topics", topics_path, "topics TSV")->required();
  predict->add_option("--docs", docs_path, "documents TSV")->required();
  predict->add_option("--doc-ids", doc_ids_path, "file with one doc id per line (default: every document)");
  predict->add_option("--external-command", external_command, "external scorer command line");
  predict->add_option("--external-model-id", external_model, "model id of the external scorer");

  // augment
  Common augment_c;
  std::vector<std::string> adapter_paths;
  std::string run_path;
  int depth = 100;
  auto* augment = app.add_subcommand("augment", "label unjudged pooled documents and write augmented qrels");
  add_common(augment, augment_c);
  augment->add_option("--qrels", qrels_path, "existing qrels")->required();
  augment->add_option("--runs", run_path, "run file whose pool is judged")->required();
  augment->add_option("--adapter", adapter_paths, "adapter file (repeatable, one per topic)")->required();
  augment->add_option("--topics", topics_path, "topics TSV")->required();
  augment->add_option("--docs", docs_path, "documents TSV")->required();
  augment->add_option("--depth", depth, "pool depth");

  // evaluate
  Common eval_c;
  std::string truth_path, predicted_path;
  auto* evaluate = app.add_subcommand("evaluate", "compare system rankings under two qrels");
  add_common(evaluate, eval_c);
  evaluate->add_option("--truth", truth_path, "reference qrels")->required();
  evaluate->add_option("--predicted", predicted_path, "qrels to evaluate")->required();
  evaluate->add_option("--runs", run_path, "run file")->required();

  // simulate
  Common sim_c;
  auto* simulate = app.add_subcommand("simulate", "run the deep or shallow pool experiment from a config");
  add_common(simulate, sim_c);

  // compare
  Common cmp_c;
  std::string replay_dir;
  auto* compare = app.add_subcommand("compare", "run the adapter vs LLM judge comparison");
  add_common(compare, cmp_c);
  compare->add_option("--replay", replay_dir, "answer LLM requests from this transcript directory");

  // inspect-adapter
  Common inspect_c;
  std::string inspect_path;
  auto* inspect = app.add_subcommand("inspect-adapter", "print an adapter's provenance");
  add_common(inspect, inspect_c);
  inspect->add_option("adapter", inspect_path, "adapter file")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (synth->parsed()) {
      ExperimentConfig cfg = resolve_config(synth_c);
      if (synth_c.out.empty()) throw Error("synth needs --out");
      const SyntheticParams params = cfg.collection.synthetic.value_or(SyntheticParams{});
      const std::uint64_t seed = synth_c.seed ? *synth_c.seed : cfg.collection.synthetic_seed;
      const SyntheticCollection c = generate_synthetic_collection(params, seed);
      fs::create_directories(synth_c.out);
      const fs::path dir(synth_c.out);
      write_text_file((dir / "qrels.txt").string(), write_qrels(c.qrels));
      write_text_file((dir / "runs.txt").string(), write_run(c.runs));
      write_text_file((dir / "topics.tsv").string(), write_topics(c.topics));
      write_text_file((dir / "documents.tsv").string(), write_documents(c.docs));
      out << "wrote " << c.topics.size() << " topics, " << c.docs.size() << " documents, " << c.runs.run_count()
          << " runs to " << dir.string() << "\n";
      return 0;
    }

    if (train->parsed()) {
      ExperimentConfig cfg = resolve_config(train_c);
      if (train_c.out.empty()) throw Error("train needs --out (adapter file)");
      const TopicSet topics = read_topics_file(topics_path);
      const DocumentStore docs = read_documents_file(docs_path);
      const JudgmentSet qrels = read_qrels_file(qrels_path, cfg.binarization_threshold);
      const Topic& topic = topics.at(topic_id);
      JudgmentSet train_set = qrels.for_topic(topic_id);
      if (sample_size > 0) {
        train_set = sample_shallow_train(train_set, {sample_size, derive_seed(cfg.seed, topic_id), cfg.relevant_share});
      }
      TrainConfig tc = cfg.train;
      tc.mode = TrainMode::lora;
      const ReferenceScorer base(cfg.scorer);
      const TrainedJudge judge = train_topic_judge(base, topic, train_set, docs, tc);
      save_adapter_file(*judge.adapter, train_c.out);
      out << "topic " << topic_id << ": trained on " << train_set.size() << " judgments, loss "
          << judge.epoch_losses.front() << " -> " << judge.epoch_losses.back() << ", " << judge.trainable_parameters
          << " trainable parameters; wrote " << train_c.out << "\n";
      return 0;
    }

    if (predict->parsed()) {
      ExperimentConfig cfg = resolve_config(predict_c);
      const LowRankAdapter adapter = load_adapter_file(adapter_path);
      const TopicSet topics = read_topics_file(topics_path);
      const DocumentStore docs = read_documents_file(docs_path);
      const Topic& topic = topics.at(adapter.topic_id);
      const std::vector<std::string> ids = doc_ids_path.empty() ? docs.ids() : read_lines(doc_ids_path);
      std::unique_ptr<PointwiseScorer> scorer;
      if (!external_command.empty()) {
        scorer = std::make_unique<ExternalScorer>(
            ExternalScorerOptions{split_command(external_command), external_model, Archetype::mono_decoder,
                                  std::chrono::milliseconds(30000)});
      } else {
        scorer = std::make_unique<ReferenceScorer>(cfg.scorer);
      }
      std::ostringstream body;
      for (const auto& id : ids) {
        const Prediction p = predict_relevance(*scorer, adapter, topic, docs.at(id));
        body << topic.topic_id << '\t' << id << '\t' << p.score << '\t' << (p.relevant ? 1 : 0) << '\n';
      }
      if (predict_c.out.empty()) out << body.str();
      else write_text_file(predict_c.out, body.str());
      return 0;
    }

    if (augment->parsed()) {
      ExperimentConfig cfg = resolve_config(augment_c);
      const JudgmentSet ground = read_qrels_file(qrels_path, cfg.binarization_threshold);
      const RunSet runs = read_run_file(run_path);
      const TopicSet topics = read_topics_file(topics_path);
      const DocumentStore docs = read_documents_file(docs_path);
      const ReferenceScorer base(cfg.scorer);
      const Pool pool = build_pool(runs, depth);
      JudgmentSet predicted(ground.threshold());
      for (const auto& path : adapter_paths) {
        const LowRankAdapter adapter = load_adapter_file(path);
        auto it = pool.find(adapter.topic_id);
        if (it == pool.end()) continue;
        std::vector<std::string> unjudged;
        for (const auto& d : it->second) {
          if (!ground.contains(adapter.topic_id, d)) unjudged.push_back(d);
        }
        const JudgmentSet labels =
            judge_pool(base, adapter, topics.at(adapter.topic_id), unjudged, docs, ground.threshold());
        for (const auto& [_, j] : labels) predicted.add(j);
      }
      const std::string text = write_qrels(merge_judgments(ground, predicted));
      if (augment_c.out.empty()) out << text;
      else write_text_file(augment_c.out, text);
      err << "added " << predicted.size() << " predicted judgments\n";
      return 0;
    }

    if (evaluate->parsed()) {
      ExperimentConfig cfg = resolve_config(eval_c);
      const JudgmentSet truth = read_qrels_file(truth_path, cfg.binarization_threshold);
      const JudgmentSet predicted = read_qrels_file(predicted_path, cfg.binarization_threshold);
      const RunSet runs = read_run_file(run_path);
      json result = {{"spearman_rho", json::object()}};
      std::ostringstream text;
      for (int d : cfg.metrics.ndcg_depths) {
        const auto a = rank_systems(runs, truth, d, cfg.metrics.gain);
        const auto b = rank_systems(runs, predicted, d, cfg.metrics.gain, truth.topics());
        try {
          const double rho = ranking_correlation(b, a);
          result["spearman_rho"][std::to_string(d)] = rho;
          text << "nDCG@" << d << " spearman_rho " << rho << "\n";
        } catch (const UndefinedMetricError& e) {
          result["spearman_rho"][std::to_string(d)] = nullptr;
          text << "nDCG@" << d << " spearman_rho undefined (" << e.what() << ")\n";
        }
      }
      try {
        const double alpha = krippendorff_alpha_nominal(truth, predicted);
        result["krippendorff_alpha"] = alpha;
        text << "krippendorff_alpha " << alpha << "\n";
      } catch (const UndefinedMetricError& e) {
        result["krippendorff_alpha"] = nullptr;
        text << "krippendorff_alpha undefined (" << e.what() << ")\n";
      }
      out << text.str();
      if (!eval_c.out.empty()) write_text_file(eval_c.out, result.dump(2) + "\n");
      return 0;
    }

    if (simulate->parsed() || compare->parsed()) {
      const Common& c = simulate->parsed() ? sim_c : cmp_c;
      ExperimentConfig cfg = resolve_config(c);
      if (compare->parsed()) {
        cfg.experiment = ExperimentKind::llm_compare;
        if (!replay_dir.empty()) cfg.llm.replay_dir = replay_dir;
      } else if (cfg.experiment == ExperimentKind::llm_compare) {
        throw ConfigError("simulate runs deep or shallow experiments; use compare for llm_compare");
      }
      const Collection collection = load_collection(cfg);
      const fs::path dir = make_run_dir(c.out, cfg);
      ExperimentHooks hooks;
      if (cfg.experiment == ExperimentKind::llm_compare && cfg.llm.replay_dir.empty()) {
        hooks.transcript_dir = (dir / "transcripts").string();
      }
      if (cfg.experiment == ExperimentKind::shallow) {
        fs::create_directories(dir / "manifests");
        for (double rate : cfg.rates) {
          for (auto seed : cfg.seeds) {
            const PoolSimulation sim = subsample_runs(collection.runs, rate, seed, cfg.pool_depth);
            char name[64];
            std::snprintf(name, sizeof name, "rate%g-seed%llu.json", rate, static_cast<unsigned long long>(seed));
            write_text_file((dir / "manifests" / name).string(), write_manifest(sim));
          }
        }
      }
      const EvalReport report = run_experiment(cfg, collection, hooks);
      write_report(dir, report, cfg);
      out << report.to_table() << "wrote " << dir.string() << "\n";
      return 0;
    }

    if (inspect->parsed()) {
      const LowRankAdapter a = load_adapter_file(inspect_path);
      const json j = {{"topic_id", a.topic_id},
                      {"base_model_id", a.base_model_id},
                      {"rank", a.rank},
                      {"alpha", a.alpha},
                      {"layers", a.layer_names},
                      {"parameters", a.parameter_count()},
                      {"provenance",
                       {{"seed", a.provenance.seed},
                        {"train_size", a.provenance.train_size},
                        {"train_relevant", a.provenance.train_relevant},
                        {"loss_weight_relevant", a.provenance.loss_weight_relevant},
                        {"loss_weight_nonrelevant", a.provenance.loss_weight_nonrelevant},
                        {"epochs", a.provenance.epochs},
                        {"batch_size", a.provenance.batch_size},
                        {"learning_rate", a.provenance.learning_rate}}},
                      {"usage_restriction", a.usage_restriction}};
      out << j.dump(2) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace judgekit
