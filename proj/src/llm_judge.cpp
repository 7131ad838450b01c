#include "judgekit/llm_judge.hpp"

#include <algorithm>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "json.hpp"
#include "judgekit/errors.hpp"
#include "judgekit/hashing.hpp"
#include "judgekit/rng.hpp"

#ifndef JUDGEKIT_ASSET_DIR
#define JUDGEKIT_ASSET_DIR "assets"
#endif

namespace judgekit {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Single left-to-right pass, so substituted text is never rescanned.
std::string substitute(std::string_view text, const std::map<std::string, std::string>& values) {
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      const std::size_t close = text.find('}', i + 1);
      if (close != std::string_view::npos) {
        auto it = values.find(std::string(text.substr(i + 1, close - i - 1)));
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(text[i++]);
  }
  return out;
}

void require_placeholder(const std::string& text, const char* name, const std::string& id) {
  if (text.find(std::string("{") + name + "}") == std::string::npos) {
    throw TemplateError("template " + id + " lacks placeholder {" + name + "}");
  }
}

std::pair<std::string, bool> truncate_tokens(std::string_view text, int budget) {
  std::string out;
  int count = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j == i) break;
    if (count == budget) return {out, true};
    if (count) out.push_back(' ');
    out.append(text.substr(i, j - i));
    ++count;
    i = j;
  }
  return {out, false};
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_atomically(const fs::path& path, const std::string& body) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << body;
  }
  fs::rename(tmp, path);
}

}  // namespace

std::string_view to_string(OutputScale s) {
  return s == OutputScale::graded_0_3 ? "graded_0_3" : "binary";
}

OutputScale parse_output_scale(std::string_view name) {
  if (name == "graded_0_3") return OutputScale::graded_0_3;
  if (name == "binary") return OutputScale::binary;
  throw TemplateError("unknown output scale: " + std::string(name));
}

void PromptTemplate::validate() const {
  if (template_id.empty()) throw TemplateError("template_id is empty");
  for (const char* p : {"query", "passage", "examples"}) require_placeholder(template_text, p, template_id);
  for (const char* p : {"query", "passage", "label"}) require_placeholder(example_text, p, template_id);
  if (label_relevant.empty() || label_nonrelevant.empty()) {
    throw TemplateError("template " + template_id + " lacks example labels");
  }
}

PromptTemplate parse_prompt_template(std::string_view json_text) {
  PromptTemplate t;
  try {
    const json j = json::parse(json_text);
    t.template_id = j.at("template_id").get<std::string>();
    t.output_scale = parse_output_scale(j.at("output_scale").get<std::string>());
    t.template_text = j.at("template_text").get<std::string>();
    t.example_text = j.at("example_text").get<std::string>();
    t.label_relevant = j.at("example_labels").at("relevant").get<std::string>();
    t.label_nonrelevant = j.at("example_labels").at("nonrelevant").get<std::string>();
  } catch (const json::exception& e) {
    throw TemplateError(std::string("malformed prompt template: ") + e.what());
  }
  t.validate();
  return t;
}

PromptTemplate load_prompt_template(const std::string& path) {
  return parse_prompt_template(read_file(path));
}

std::string default_prompt_dir() { return std::string(JUDGEKIT_ASSET_DIR) + "/prompts"; }

PromptTemplate load_named_template(const std::string& template_id, const std::string& dir) {
  PromptTemplate t = load_prompt_template(dir + "/" + template_id + ".json");
  if (t.template_id != template_id) {
    throw TemplateError("asset " + template_id + ".json declares template_id " + t.template_id);
  }
  return t;
}

FewShotBlock sample_fewshot(const JudgmentSet& training_split, const Topic& topic,
                            const DocumentStore& docs, std::uint64_t seed) {
  std::vector<std::string> rel;
  std::vector<std::string> non;
  for (const auto& [key, j] : training_split) {
    if (key.first != topic.topic_id) continue;
    (training_split.is_relevant(j) ? rel : non).push_back(key.second);
  }
  if (rel.size() < kFewShotPerClass || non.size() < kFewShotPerClass) {
    throw StratificationError("few-shot sampling needs 4 relevant and 4 non-relevant training documents for topic " +
                              topic.topic_id);
  }
  Rng rng(derive_seed(seed, topic.topic_id));
  rng.shuffle(non);
  rng.shuffle(rel);
  FewShotBlock block;
  block.order_seed = derive_seed(seed, "order");
  for (int i = 0; i < kFewShotPerClass; ++i) {
    block.examples.push_back({topic.topic_id, rel[static_cast<std::size_t>(i)], docs.at(rel[static_cast<std::size_t>(i)]), true});
    block.examples.push_back({topic.topic_id, non[static_cast<std::size_t>(i)], docs.at(non[static_cast<std::size_t>(i)]), false});
  }
  return block;
}

RenderedPrompt build_prompt(const PromptTemplate& tmpl, const Topic& topic,
                            std::string_view doc_text, const FewShotBlock* fewshot,
                            const JudgmentSet* training_split, const PromptOptions& options) {
  tmpl.validate();
  if (options.passage_token_budget < 1) throw Error("passage token budget must be >= 1");
  std::string examples;
  if (fewshot) {
    int rel = 0;
    int non = 0;
    for (const auto& ex : fewshot->examples) {
      if (!training_split) throw LeakageError("few-shot examples given without a training split");
      const Judgment* j = training_split->find(ex.topic_id, ex.doc_id);
      if (ex.topic_id != topic.topic_id || !j) {
        throw LeakageError("few-shot example " + ex.topic_id + "/" + ex.doc_id +
                           " is not in the training split of topic " + topic.topic_id);
      }
      if (training_split->is_relevant(*j) != ex.relevant) {
        throw LeakageError("few-shot example " + ex.doc_id + " disagrees with its training label");
      }
      (ex.relevant ? rel : non) += 1;
    }
    if (rel != kFewShotPerClass || non != kFewShotPerClass) {
      throw Error("few-shot block must hold exactly 4 relevant and 4 non-relevant examples, got " +
                  std::to_string(rel) + " and " + std::to_string(non));
    }
    std::vector<std::size_t> order(fewshot->examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(fewshot->order_seed);
    rng.shuffle(order);
    for (std::size_t i : order) {
      const auto& ex = fewshot->examples[i];
      examples += substitute(tmpl.example_text,
                             {{"query", topic.query_text},
                              {"passage", truncate_tokens(ex.passage, options.passage_token_budget).first},
                              {"label", ex.relevant ? tmpl.label_relevant : tmpl.label_nonrelevant}});
    }
  }
  auto [passage, truncated] = truncate_tokens(doc_text, options.passage_token_budget);
  RenderedPrompt out;
  out.truncated = truncated;
  out.text = substitute(tmpl.template_text,
                        {{"query", topic.query_text}, {"passage", passage}, {"examples", examples}});
  return out;
}

bool cast_response(std::string_view raw, OutputScale scale, int threshold) {
  const std::string text(raw);
  if (scale == OutputScale::graded_0_3) {
    static const std::regex labelled(R"((score|grade|relevance|label)\s*[:=]?\s*([0-3])(?![0-9]))",
                                     std::regex::icase);
    // Integers, not parts of decimals; a sentence-final period is fine.
    static const std::regex integer(R"((^|[^0-9.])([0-9]+)(?![0-9]|\.[0-9]))");
    std::optional<int> grade;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), labelled); it != std::sregex_iterator(); ++it) {
      grade = std::stoi((*it)[2].str());
    }
    if (!grade) {
      for (auto it = std::sregex_iterator(text.begin(), text.end(), integer); it != std::sregex_iterator(); ++it) {
        const std::string digits = (*it)[2].str();
        if (digits.size() == 1 && digits[0] <= '3') grade = digits[0] - '0';
      }
    }
    if (!grade) throw CastError("no grade 0-3 in response", text);
    return *grade >= threshold;
  }
  static const std::regex verdict(R"(\b(yes|no|true|false|1|0)\b)", std::regex::icase);
  std::optional<bool> label;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), verdict); it != std::sregex_iterator(); ++it) {
    std::string v = (*it)[1].str();
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    label = v == "yes" || v == "true" || v == "1";
  }
  if (!label) throw CastError("no yes/no verdict in response", text);
  return *label;
}

HttpChatClient::HttpChatClient(HttpChatOptions options) : options_(std::move(options)) {
  const char* key = std::getenv(options_.api_key_env.c_str());
  if (!key || !*key) throw ConfigError("environment variable " + options_.api_key_env + " is not set");
  api_key_ = key;
}

ChatResponse HttpChatClient::complete(const ChatRequest& request) {
  ++calls_;
  httplib::Client cli(options_.base_url);
  cli.set_connection_timeout(options_.timeout);
  cli.set_read_timeout(options_.timeout);
  const json body = {{"model", request.model_id},
                     {"temperature", options_.temperature},
                     {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})}};
  const httplib::Headers headers = {{"Authorization", "Bearer " + api_key_}};
  auto res = cli.Post(options_.path, headers, body.dump(), "application/json");
  if (!res) throw ChatError("request failed: " + httplib::to_string(res.error()), true);
  if (res->status == 429 || res->status >= 500) {
    throw ChatError("HTTP " + std::to_string(res->status), true);
  }
  if (res->status != 200) throw ChatError("HTTP " + std::to_string(res->status) + ": " + res->body, false);
  try {
    const json j = json::parse(res->body);
    return {j.at("choices").at(0).at("message").at("content").get<std::string>(), res->body};
  } catch (const json::exception& e) {
    throw ChatError(std::string("malformed completion body: ") + e.what(), false);
  }
}

std::string request_key(const ChatRequest& request) {
  std::string material = request.model_id;
  material.push_back('\0');
  material += request.template_id;
  material.push_back('\0');
  material += request.prompt;
  return sha256_hex(material);
}

ReplayClient::ReplayClient(const std::string& transcript_dir) {
  if (!fs::is_directory(transcript_dir)) throw Error("no transcript directory " + transcript_dir);
  for (const auto& entry : fs::directory_iterator(transcript_dir)) {
    if (entry.path().extension() != ".json") continue;
    const json t = json::parse(read_file(entry.path().string()));
    // The last attempt that produced content is what the pipeline consumed.
    for (const auto& a : t.at("attempts")) {
      if (a.contains("content")) {
        responses_[t.at("key").get<std::string>()] = {a.at("content").get<std::string>(),
                                                      a.value("raw_body", std::string())};
      }
    }
  }
}

ChatResponse ReplayClient::complete(const ChatRequest& request) {
  ++calls_;
  auto it = responses_.find(request_key(request));
  if (it == responses_.end()) throw ChatError("no transcript for request " + request_key(request), false);
  return it->second;
}

JudgmentCache::JudgmentCache(std::string path) : path_(std::move(path)) {
  if (path_.empty() || !fs::exists(path_)) return;
  const json j = json::parse(read_file(path_));
  for (const auto& [key, e] : j.at("entries").items()) {
    CacheEntry entry;
    entry.raw_response = e.at("raw_response").get<std::string>();
    if (!e.at("label").is_null()) entry.label = e.at("label").get<bool>();
    entry.timestamp = e.value("timestamp", std::string());
    entries_.emplace(key, std::move(entry));
  }
}

std::optional<CacheEntry> JudgmentCache::get(const std::string& key) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void JudgmentCache::put(const std::string& key, CacheEntry entry) {
  std::unique_lock lock(mutex_);
  entries_[key] = std::move(entry);
}

std::size_t JudgmentCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

void JudgmentCache::save() const {
  if (path_.empty()) return;
  json entries = json::object();
  {
    std::shared_lock lock(mutex_);
    for (const auto& [key, e] : entries_) {
      entries[key] = {{"raw_response", e.raw_response},
                      {"label", e.label ? json(*e.label) : json(nullptr)},
                      {"timestamp", e.timestamp}};
    }
  }
  const fs::path p(path_);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_atomically(p, json{{"version", 1}, {"entries", entries}}.dump(1) + "\n");
}

namespace {

struct DocOutcome {
  std::optional<bool> label;
  Abstention abstention;
  bool cache_hit = false;
  int attempts = 0;
};

class RateLimiter {
 public:
  explicit RateLimiter(double per_second) : per_second_(per_second) {}
  void wait() {
    if (per_second_ <= 0.0) return;
    std::chrono::steady_clock::time_point slot;
    {
      std::lock_guard lock(mutex_);
      const auto now = std::chrono::steady_clock::now();
      next_ = std::max(next_, now);
      slot = next_;
      next_ += std::chrono::duration_cast<std::chrono::steady_clock::duration>(
          std::chrono::duration<double>(1.0 / per_second_));
    }
    std::this_thread::sleep_until(slot);
  }

 private:
  double per_second_;
  std::mutex mutex_;
  std::chrono::steady_clock::time_point next_{};
};

}  // namespace

LlmJudgeResult judge_pool_llm(ChatClient& client, const PromptTemplate& tmpl, const Topic& topic,
                              const std::vector<std::string>& doc_ids_in, const DocumentStore& docs,
                              const FewShotBlock* fewshot, const JudgmentSet* training_split,
                              JudgmentCache& cache, const LlmJudgeOptions& options,
                              int binarization_threshold) {
  if (options.max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
  if (options.max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
  std::vector<std::string> doc_ids = doc_ids_in;
  std::sort(doc_ids.begin(), doc_ids.end());
  doc_ids.erase(std::unique(doc_ids.begin(), doc_ids.end()), doc_ids.end());

  LlmJudgeResult result{JudgmentSet(binarization_threshold), {}, 0, 0, 0};
  // Rendering errors (leakage, template, unknown doc) abort before any request.
  std::vector<ChatRequest> requests;
  for (const auto& id : doc_ids) {
    RenderedPrompt p = build_prompt(tmpl, topic, docs.at(id), fewshot, training_split, options.prompt);
    if (p.truncated) ++result.truncated_prompts;
    requests.push_back({options.model_id, tmpl.template_id, std::move(p.text)});
  }
  if (!options.transcript_dir.empty()) fs::create_directories(options.transcript_dir);

  std::vector<DocOutcome> outcomes(doc_ids.size());
  RateLimiter limiter(options.requests_per_second);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto judge_one = [&](std::size_t i) {
    DocOutcome& out = outcomes[i];
    out.abstention.doc_id = doc_ids[i];
    const ChatRequest& req = requests[i];
    const std::string key = request_key(req);
    if (auto hit = cache.get(key)) {
      out.cache_hit = true;
      out.label = hit->label;
      if (!hit->label) {
        out.abstention.reason = "cached response could not be cast";
        out.abstention.raw_response = hit->raw_response;
      }
      return;
    }
    json attempts = json::array();
    bool cacheable = false;
    for (int a = 1; a <= options.max_attempts; ++a) {
      out.attempts = a;
      limiter.wait();
      json record = {{"attempt", a}};
      try {
        const ChatResponse res = client.complete(req);
        record["content"] = res.content;
        record["raw_body"] = res.raw_body;
        out.abstention.raw_response = res.content;
        try {
          out.label = cast_response(res.content, tmpl.output_scale, options.threshold);
          record["status"] = "ok";
          attempts.push_back(record);
          cacheable = true;
          break;
        } catch (const CastError& e) {
          record["status"] = "cast_error";
          out.abstention.reason = e.what();
          cacheable = true;
        }
      } catch (const ChatError& e) {
        record["status"] = e.transient() ? "transient_error" : "permanent_error";
        record["error"] = e.what();
        out.abstention.reason = e.what();
        cacheable = false;
        if (!e.transient()) {
          attempts.push_back(record);
          break;
        }
      }
      attempts.push_back(record);
      if (a < options.max_attempts) {
        spdlog::warn("topic {} doc {}: attempt {} failed ({}), retrying", topic.topic_id, doc_ids[i], a,
                     out.abstention.reason);
        const std::chrono::milliseconds grown = options.backoff_initial * (1 << std::min(a - 1, 20));
        const auto delay = std::min(options.backoff_max, grown);
        std::this_thread::sleep_for(delay);
      }
    }
    if (cacheable) cache.put(key, {out.abstention.raw_response, out.label, utc_timestamp()});
    if (!options.transcript_dir.empty()) {
      const json transcript = {{"key", key},
                               {"model_id", req.model_id},
                               {"template_id", req.template_id},
                               {"topic_id", topic.topic_id},
                               {"doc_id", doc_ids[i]},
                               {"prompt", req.prompt},
                               {"attempts", attempts},
                               {"label", out.label ? json(*out.label) : json(nullptr)}};
      write_atomically(fs::path(options.transcript_dir) / (key + ".json"), transcript.dump(1) + "\n");
    }
  };

  auto worker = [&] {
    for (std::size_t i = next++; i < doc_ids.size(); i = next++) {
      try {
        judge_one(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(options.max_in_flight), doc_ids.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  for (std::size_t i = 0; i < doc_ids.size(); ++i) {
    const DocOutcome& o = outcomes[i];
    if (o.cache_hit) ++result.cache_hits;
    result.requests += static_cast<std::size_t>(o.attempts);
    if (o.label) {
      result.labels.add_label(topic.topic_id, doc_ids[i], *o.label, JudgmentSource::llm);
    } else {
      Abstention a = o.abstention;
      a.attempts = o.attempts;
      result.abstentions.push_back(std::move(a));
    }
  }
  return result;
}

}  // namespace judgekit
