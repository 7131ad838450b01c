#include "judgekit/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "judgekit/errors.hpp"
#include "judgekit/hashing.hpp"

namespace judgekit {
namespace {

using nlohmann::json;

// Reads the keys of one JSON object and rejects any it was not asked about.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be an object");
  }

  const json* find(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void get(const char* key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) fail(key, "an integer");
      const auto x = v->get<long long>();
      if (x < INT32_MIN || x > INT32_MAX) fail(key, "a 32-bit integer");
      out = static_cast<int>(x);
    }
  }
  void get(const char* key, std::uint64_t& out) {
    if (const json* v = find(key)) out = as_u64(*v, key);
  }
  void get(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(key, "a number");
      out = v->get<double>();
    }
  }
  void get(const char* key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(key, "a string");
      out = v->get<std::string>();
    }
  }
  template <class T>
  void get(const char* key, std::vector<T>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(key, "an array");
      std::vector<T> items;
      for (const auto& e : *v) items.push_back(element<T>(e, key));
      out = std::move(items);
    }
  }
  template <class E, class Parse>
  void get_enum(const char* key, E& out, Parse parse) {
    std::string name;
    get(key, name);
    if (find(key)) out = wrap(key, [&] { return parse(name); });
  }
  template <class E, class Parse>
  void get_enum_list(const char* key, std::vector<E>& out, Parse parse) {
    std::vector<std::string> names;
    get(key, names);
    if (!find(key)) return;
    out.clear();
    for (const auto& n : names) out.push_back(wrap(key, [&] { return parse(n); }));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(where_ + ": unknown key \"" + it.key() + "\"");
    }
  }

  std::string where(const char* key) const { return where_ + "." + key; }

 private:
  [[noreturn]] void fail(const char* key, const char* what) const {
    throw ConfigError(where_ + "." + key + " must be " + what);
  }
  std::uint64_t as_u64(const json& v, const char* key) const {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
      fail(key, "a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }
  template <class T>
  T element(const json& e, const char* key) const {
    if constexpr (std::is_same_v<T, int>) {
      if (!e.is_number_integer()) fail(key, "an array of integers");
      return e.get<int>();
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      return as_u64(e, key);
    } else if constexpr (std::is_same_v<T, double>) {
      if (!e.is_number()) fail(key, "an array of numbers");
      return e.get<double>();
    } else {
      if (!e.is_string()) fail(key, "an array of strings");
      return e.get<std::string>();
    }
  }
  template <class F>
  auto wrap(const char* key, F f) const {
    try {
      return f();
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

SyntheticParams read_synthetic(const json& j, std::uint64_t& seed) {
  SyntheticParams p;
  Fields f(j, "collection.synthetic");
  f.get("seed", seed);
  f.get("topics", p.topics);
  f.get("systems", p.systems);
  f.get("docs_per_topic", p.docs_per_topic);
  f.get("relevant_share", p.relevant_share);
  f.get("run_depth", p.run_depth);
  f.get("background_vocab", p.background_vocab);
  f.get("signal_vocab", p.signal_vocab);
  f.get("query_words", p.query_words);
  f.get("doc_length_min", p.doc_length_min);
  f.get("doc_length_max", p.doc_length_max);
  f.get("signal_rate", p.signal_rate);
  f.get("signal_width", p.signal_width);
  f.get("noise_min", p.noise_min);
  f.get("noise_max", p.noise_max);
  f.get("families", p.families);
  f.get("family_noise", p.family_noise);
  f.finish();
  return p;
}

json synthetic_json(const SyntheticParams& p, std::uint64_t seed) {
  return {{"seed", seed},
          {"topics", p.topics},
          {"systems", p.systems},
          {"docs_per_topic", p.docs_per_topic},
          {"relevant_share", p.relevant_share},
          {"run_depth", p.run_depth},
          {"background_vocab", p.background_vocab},
          {"signal_vocab", p.signal_vocab},
          {"query_words", p.query_words},
          {"doc_length_min", p.doc_length_min},
          {"doc_length_max", p.doc_length_max},
          {"signal_rate", p.signal_rate},
          {"signal_width", p.signal_width},
          {"noise_min", p.noise_min},
          {"noise_max", p.noise_max},
          {"families", p.families},
          {"family_noise", p.family_noise}};
}

}  // namespace

std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::deep: return "deep";
    case ExperimentKind::shallow: return "shallow";
    case ExperimentKind::llm_compare: return "llm_compare";
  }
  return "?";
}

ExperimentKind parse_experiment_kind(std::string_view name) {
  if (name == "deep") return ExperimentKind::deep;
  if (name == "shallow") return ExperimentKind::shallow;
  if (name == "llm_compare") return ExperimentKind::llm_compare;
  throw ConfigError("unknown experiment: " + std::string(name));
}

std::string_view to_string(InfillMethod m) {
  switch (m) {
    case InfillMethod::zero_fill: return "zero_fill";
    case InfillMethod::adapter: return "adapter";
    case InfillMethod::llm_zero_shot: return "llm_zero_shot";
    case InfillMethod::llm_few_shot: return "llm_few_shot";
    case InfillMethod::ground_truth: return "ground_truth";
  }
  return "?";
}

InfillMethod parse_infill_method(std::string_view name) {
  if (name == "zero_fill") return InfillMethod::zero_fill;
  if (name == "adapter") return InfillMethod::adapter;
  if (name == "llm_zero_shot") return InfillMethod::llm_zero_shot;
  if (name == "llm_few_shot") return InfillMethod::llm_few_shot;
  if (name == "ground_truth") return InfillMethod::ground_truth;
  throw ConfigError("unknown infill method: " + std::string(name));
}

void ExperimentConfig::validate() const {
  if (config_version != kConfigVersion) {
    throw ConfigError("unsupported config_version " + std::to_string(config_version));
  }
  if (collection.synthetic) {
    collection.synthetic->validate();
  } else if (collection.qrels.empty() || collection.runs.empty() || collection.topics.empty() ||
             collection.documents.empty()) {
    throw ConfigError("collection needs either synthetic parameters or qrels, runs, topics and documents");
  }
  if (binarization_threshold < 0) throw ConfigError("binarization_threshold must be >= 0");
  if (min_relevant < 0) throw ConfigError("min_relevant must be >= 0");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
  if (sample_sizes.empty()) throw ConfigError("sample_sizes is empty");
  for (int k : sample_sizes) {
    if (k < 2) throw ConfigError("sample sizes must be >= 2");
  }
  if (!(relevant_share > 0.0 && relevant_share < 1.0)) throw ConfigError("relevant_share must lie in (0, 1)");
  train.validate();
  if (train.max_sequence_tokens != scorer.max_sequence_tokens) {
    throw ConfigError("train.max_sequence_tokens must equal scorer.max_sequence_tokens");
  }
  if (modes.empty()) throw ConfigError("modes is empty");
  metrics.validate();
  if (infill.empty()) throw ConfigError("infill is empty");
  if (rates.empty()) throw ConfigError("rates is empty");
  for (double r : rates) {
    if (!(r > 0.0 && r <= 1.0)) throw ConfigError("rates must lie in (0, 1]");
  }
  if (seeds.empty()) throw ConfigError("seeds is empty");
  if (pool_depth < 1) throw ConfigError("pool_depth must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (llm.templates.empty()) throw ConfigError("llm.templates is empty");
  if (llm.threshold < 0 || llm.threshold > 3) throw ConfigError("llm.threshold must lie in [0, 3]");
  if (llm.max_attempts < 1) throw ConfigError("llm.max_attempts must be >= 1");
  if (llm.max_in_flight < 1) throw ConfigError("llm.max_in_flight must be >= 1");
  if (llm.backoff_initial_ms < 0 || llm.backoff_max_ms < llm.backoff_initial_ms) {
    throw ConfigError("llm backoff must satisfy 0 <= initial <= max");
  }
  if (llm.requests_per_second < 0.0) throw ConfigError("llm.requests_per_second must be >= 0");
  if (llm.passage_token_budget < 1) throw ConfigError("llm.passage_token_budget must be >= 1");
}

ExperimentConfig parse_experiment_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Fields top(j, "config");
  if (!top.find("config_version")) throw ConfigError("config_version is required");
  top.get("config_version", c.config_version);
  if (c.config_version != kConfigVersion) {
    throw ConfigError("unsupported config_version " + std::to_string(c.config_version));
  }
  std::string description;
  top.get("description", description);
  top.get_enum("experiment", c.experiment, parse_experiment_kind);
  top.get("seed", c.seed);

  if (const json* col = top.find("collection")) {
    Fields f(*col, "collection");
    c.collection.synthetic.reset();
    f.get("name", c.collection.name);
    if (const json* syn = f.find("synthetic")) {
      c.collection.synthetic = read_synthetic(*syn, c.collection.synthetic_seed);
    }
    f.get("qrels", c.collection.qrels);
    f.get("runs", c.collection.runs);
    f.get("topics", c.collection.topics);
    f.get("documents", c.collection.documents);
    f.finish();
    if (c.collection.synthetic && !c.collection.qrels.empty()) {
      throw ConfigError("collection: give synthetic parameters or files, not both");
    }
  }

  top.get("binarization_threshold", c.binarization_threshold);
  top.get("min_relevant", c.min_relevant);
  top.get("train_fraction", c.train_fraction);
  top.get("sample_sizes", c.sample_sizes);
  top.get("relevant_share", c.relevant_share);

  if (const json* tr = top.find("train")) {
    Fields f(*tr, "train");
    f.get("epochs", c.train.epochs);
    f.get("batch_size", c.train.batch_size);
    f.get("learning_rate", c.train.learning_rate);
    f.get("loss_weight_relevant", c.train.loss_weight_relevant);
    f.get("loss_weight_nonrelevant", c.train.loss_weight_nonrelevant);
    f.get("lora_rank", c.train.lora_rank);
    f.get("lora_alpha", c.train.lora_alpha);
    f.get("max_sequence_tokens", c.train.max_sequence_tokens);
    f.finish();
  }
  top.get_enum_list("modes", c.modes, parse_train_mode);

  if (const json* sc = top.find("scorer")) {
    Fields f(*sc, "scorer");
    f.get("name", c.scorer.name);
    f.get("feature_dim", c.scorer.feature_dim);
    f.get("hidden_dim", c.scorer.hidden_dim);
    f.get("ngram", c.scorer.ngram);
    f.get("max_sequence_tokens", c.scorer.max_sequence_tokens);
    f.get("interaction_scale", c.scorer.interaction_scale);
    f.get("seed", c.scorer.seed);
    f.finish();
  }

  if (const json* m = top.find("metrics")) {
    Fields f(*m, "metrics");
    f.get("ndcg_depths", c.metrics.ndcg_depths);
    f.get_enum("gain", c.metrics.gain, parse_gain);
    f.finish();
  }
  top.get_enum_list("infill", c.infill, parse_infill_method);
  top.get("rates", c.rates);
  top.get("seeds", c.seeds);
  top.get("pool_depth", c.pool_depth);
  top.get("threads", c.threads);

  if (const json* l = top.find("llm")) {
    Fields f(*l, "llm");
    f.get("templates", c.llm.templates);
    f.get("prompt_dir", c.llm.prompt_dir);
    f.get("model_id", c.llm.model_id);
    f.get("base_url", c.llm.base_url);
    f.get("api_key_env", c.llm.api_key_env);
    f.get("replay_dir", c.llm.replay_dir);
    f.get("cache_path", c.llm.cache_path);
    f.get("threshold", c.llm.threshold);
    f.get("max_attempts", c.llm.max_attempts);
    f.get("backoff_initial_ms", c.llm.backoff_initial_ms);
    f.get("backoff_max_ms", c.llm.backoff_max_ms);
    f.get("max_in_flight", c.llm.max_in_flight);
    f.get("requests_per_second", c.llm.requests_per_second);
    f.get("passage_token_budget", c.llm.passage_token_budget);
    f.finish();
  }
  top.finish();
  c.train.seed = c.seed;
  c.validate();
  return c;
}

ExperimentConfig read_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

json to_json(const ExperimentConfig& c) {
  json col = {{"name", c.collection.name}};
  if (c.collection.synthetic) {
    col["synthetic"] = synthetic_json(*c.collection.synthetic, c.collection.synthetic_seed);
  } else {
    col["qrels"] = c.collection.qrels;
    col["runs"] = c.collection.runs;
    col["topics"] = c.collection.topics;
    col["documents"] = c.collection.documents;
  }
  json modes = json::array();
  for (auto m : c.modes) modes.push_back(std::string(to_string(m)));
  json infill = json::array();
  for (auto m : c.infill) infill.push_back(std::string(to_string(m)));
  return {
      {"config_version", c.config_version},
      {"experiment", std::string(to_string(c.experiment))},
      {"seed", c.seed},
      {"collection", col},
      {"binarization_threshold", c.binarization_threshold},
      {"min_relevant", c.min_relevant},
      {"train_fraction", c.train_fraction},
      {"sample_sizes", c.sample_sizes},
      {"relevant_share", c.relevant_share},
      {"train",
       {{"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"learning_rate", c.train.learning_rate},
        {"loss_weight_relevant", c.train.loss_weight_relevant},
        {"loss_weight_nonrelevant", c.train.loss_weight_nonrelevant},
        {"lora_rank", c.train.lora_rank},
        {"lora_alpha", c.train.lora_alpha},
        {"max_sequence_tokens", c.train.max_sequence_tokens}}},
      {"modes", modes},
      {"scorer",
       {{"name", c.scorer.name},
        {"feature_dim", c.scorer.feature_dim},
        {"hidden_dim", c.scorer.hidden_dim},
        {"ngram", c.scorer.ngram},
        {"max_sequence_tokens", c.scorer.max_sequence_tokens},
        {"interaction_scale", c.scorer.interaction_scale},
        {"seed", c.scorer.seed}}},
      {"metrics", {{"ndcg_depths", c.metrics.ndcg_depths}, {"gain", std::string(to_string(c.metrics.gain))}}},
      {"infill", infill},
      {"rates", c.rates},
      {"seeds", c.seeds},
      {"pool_depth", c.pool_depth},
      {"threads", c.threads},
      {"llm",
       {{"templates", c.llm.templates},
        {"prompt_dir", c.llm.prompt_dir},
        {"model_id", c.llm.model_id},
        {"base_url", c.llm.base_url},
        {"api_key_env", c.llm.api_key_env},
        {"replay_dir", c.llm.replay_dir},
        {"cache_path", c.llm.cache_path},
        {"threshold", c.llm.threshold},
        {"max_attempts", c.llm.max_attempts},
        {"backoff_initial_ms", c.llm.backoff_initial_ms},
        {"backoff_max_ms", c.llm.backoff_max_ms},
        {"max_in_flight", c.llm.max_in_flight},
        {"requests_per_second", c.llm.requests_per_second},
        {"passage_token_budget", c.llm.passage_token_budget}}},
  };
}

std::string config_hash(const ExperimentConfig& config) {
  return sha256_hex(to_json(config).dump()).substr(0, 12);
}

}  // namespace judgekit
