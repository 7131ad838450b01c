#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "judgekit/trec_io.hpp"

namespace judgekit {

enum class OutputScale { graded_0_3, binary };

std::string_view to_string(OutputScale s);
OutputScale parse_output_scale(std::string_view name);

// Loaded from a JSON asset:
//   {"template_id", "output_scale", "template_text", "example_text",
//    "example_labels": {"relevant", "nonrelevant"}}
// template_text must contain {query}, {passage} and {examples};
// example_text must contain {query}, {passage} and {label}.
struct PromptTemplate {
  std::string template_id;
  OutputScale output_scale = OutputScale::graded_0_3;
  std::string template_text;
  std::string example_text;
  std::string label_relevant;
  std::string label_nonrelevant;

  void validate() const;
};

PromptTemplate parse_prompt_template(std::string_view json_text);
PromptTemplate load_prompt_template(const std::string& path);
std::string default_prompt_dir();
// `<dir>/<template_id>.json`
PromptTemplate load_named_template(const std::string& template_id,
                                   const std::string& dir = default_prompt_dir());

struct FewShotExample {
  std::string topic_id;
  std::string doc_id;
  std::string passage;
  bool relevant = false;
};

// Exactly four relevant and four non-relevant examples, all from one topic's
// training split; rendered in the order of a shuffle seeded by order_seed.
struct FewShotBlock {
  std::vector<FewShotExample> examples;
  std::uint64_t order_seed = 0;
};

inline constexpr int kFewShotPerClass = 4;

FewShotBlock sample_fewshot(const JudgmentSet& training_split, const Topic& topic,
                            const DocumentStore& docs, std::uint64_t seed);

struct PromptOptions {
  int passage_token_budget = 256;  // whitespace tokens per passage
};

struct RenderedPrompt {
  std::string text;
  bool truncated = false;  // the judged passage was cut to the budget
};

// Throws LeakageError when an example is not a training-split key of `topic`
// (or no split is given), TemplateError on a malformed template, and Error
// unless the block holds exactly 4 + 4 examples.
RenderedPrompt build_prompt(const PromptTemplate& tmpl, const Topic& topic,
                            std::string_view doc_text, const FewShotBlock* fewshot,
                            const JudgmentSet* training_split, const PromptOptions& options = {});

// Graded scale: the last "score|grade|relevance|label" followed by a digit
// 0-3, else the last standalone integer in 0-3; relevant iff grade >=
// threshold. Binary scale: the last yes/no/true/false/1/0 verdict.
// Throws CastError carrying the raw text otherwise.
bool cast_response(std::string_view raw, OutputScale scale, int threshold = 1);

struct ChatRequest {
  std::string model_id;
  std::string template_id;
  std::string prompt;
};

struct ChatResponse {
  std::string content;
  std::string raw_body;
};

// Implementations must be safe to call concurrently.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  // Throws ChatError; transient() says whether a retry might succeed.
  virtual ChatResponse complete(const ChatRequest& request) = 0;
  // Requests that reached the network (or its stand-in).
  virtual std::size_t network_calls() const = 0;
};

struct HttpChatOptions {
  std::string base_url = "https://api.openai.com";
  std::string path = "/v1/chat/completions";
  std::string api_key_env = "OPENAI_API_KEY";
  std::chrono::seconds timeout{60};
  double temperature = 0.0;
};

// OpenAI-style chat completion over HTTP(S). 429 and 5xx responses and
// connection failures are transient; other statuses are permanent.
class HttpChatClient final : public ChatClient {
 public:
  explicit HttpChatClient(HttpChatOptions options);
  ChatResponse complete(const ChatRequest& request) override;
  std::size_t network_calls() const override { return calls_; }

 private:
  HttpChatOptions options_;
  std::string api_key_;
  std::atomic<std::size_t> calls_{0};
};

// Content address of a request: sha256 of model id, template id and prompt.
std::string request_key(const ChatRequest& request);

// Answers from a transcript directory written by judge_pool_llm. A request
// without a transcript is a permanent ChatError.
class ReplayClient final : public ChatClient {
 public:
  explicit ReplayClient(const std::string& transcript_dir);
  ChatResponse complete(const ChatRequest& request) override;
  std::size_t network_calls() const override { return calls_; }
  std::size_t size() const { return responses_.size(); }

 private:
  std::map<std::string, ChatResponse> responses_;
  std::atomic<std::size_t> calls_{0};
};

struct CacheEntry {
  std::string raw_response;
  std::optional<bool> label;  // empty: the response could not be cast
  std::string timestamp;
};

// Concurrent readers, serialized writers. Persisted as one JSON object.
class JudgmentCache {
 public:
  JudgmentCache() = default;
  // Loads `path` if it exists; save() writes back to it.
  explicit JudgmentCache(std::string path);

  std::optional<CacheEntry> get(const std::string& key) const;
  void put(const std::string& key, CacheEntry entry);
  std::size_t size() const;
  void save() const;

 private:
  std::string path_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, CacheEntry> entries_;
};

struct LlmJudgeOptions {
  std::string model_id = "gpt-4o";
  int threshold = 1;  // graded scale: relevant iff grade >= threshold
  int max_attempts = 3;
  std::chrono::milliseconds backoff_initial{500};
  std::chrono::milliseconds backoff_max{8000};
  int max_in_flight = 4;
  double requests_per_second = 0.0;  // 0 = unlimited
  PromptOptions prompt;
  std::string transcript_dir;  // empty = no transcripts
};

struct Abstention {
  std::string doc_id;
  std::string reason;
  std::string raw_response;
  int attempts = 0;
};

struct LlmJudgeResult {
  JudgmentSet labels;  // source = llm
  std::vector<Abstention> abstentions;  // ordered by doc id
  std::size_t cache_hits = 0;
  std::size_t requests = 0;  // attempts issued to the client
  std::size_t truncated_prompts = 0;
};

// One label or one abstention per distinct doc id, assembled in doc id order.
LlmJudgeResult judge_pool_llm(ChatClient& client, const PromptTemplate& tmpl, const Topic& topic,
                              const std::vector<std::string>& doc_ids, const DocumentStore& docs,
                              const FewShotBlock* fewshot, const JudgmentSet* training_split,
                              JudgmentCache& cache, const LlmJudgeOptions& options,
                              int binarization_threshold = 1);

}  // namespace judgekit
