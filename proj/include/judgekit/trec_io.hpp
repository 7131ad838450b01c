#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace judgekit {

enum class JudgmentSource { human, adapter, llm, zero_fill };

std::string_view to_string(JudgmentSource source);
JudgmentSource parse_judgment_source(std::string_view name);

struct Topic {
  std::string topic_id;
  std::string query_text;
};

// Topics of one collection keyed by id; ids are unique and non-empty.
class TopicSet {
 public:
  void add(Topic topic);
  const Topic& at(const std::string& topic_id) const;
  bool contains(const std::string& topic_id) const;
  std::size_t size() const { return topics_.size(); }
  std::vector<Topic> list() const;

 private:
  std::map<std::string, Topic> topics_;
};

struct Judgment {
  std::string topic_id;
  std::string doc_id;
  int grade = 0;
  JudgmentSource source = JudgmentSource::human;
};

// At most one judgment per (topic, doc). A judgment is relevant iff its grade
// reaches the set's binarization threshold; predicted labels are stored with
// grade = threshold (relevant) or 0 so the rule holds for every source.
class JudgmentSet {
 public:
  using Key = std::pair<std::string, std::string>;
  using Map = std::map<Key, Judgment>;
  using const_iterator = Map::const_iterator;

  explicit JudgmentSet(int binarization_threshold = 1);

  int threshold() const { return threshold_; }

  void add(Judgment judgment);
  void add_label(const std::string& topic_id, const std::string& doc_id,
                 bool relevant, JudgmentSource source);

  const Judgment* find(const std::string& topic_id,
                       const std::string& doc_id) const;
  bool contains(const std::string& topic_id, const std::string& doc_id) const {
    return find(topic_id, doc_id) != nullptr;
  }
  bool is_relevant(const Judgment& j) const { return j.grade >= threshold_; }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const_iterator begin() const { return entries_.begin(); }
  const_iterator end() const { return entries_.end(); }

  std::vector<std::string> topics() const;
  JudgmentSet for_topic(const std::string& topic_id) const;
  std::vector<std::string> doc_ids(const std::string& topic_id) const;
  std::size_t count(const std::string& topic_id) const;
  std::size_t relevant_count(const std::string& topic_id) const;

  bool operator==(const JudgmentSet& other) const;

 private:
  int threshold_;
  Map entries_;
};

struct RankedDoc {
  std::string doc_id;
  int rank = 0;         // canonical, 1-based, after re-sorting
  int stated_rank = 0;  // as read from the file; diagnostics only
  double score = 0.0;

  // Stated ranks are not part of value identity.
  bool operator==(const RankedDoc& o) const {
    return doc_id == o.doc_id && rank == o.rank && score == o.score;
  }
};

using RankedList = std::vector<RankedDoc>;

struct Posting {
  std::string run_tag;
  std::string topic_id;
  std::string doc_id;
  int stated_rank = 0;
  double score = 0.0;
};

// Ranked lists per run and topic, always in canonical order
// (score descending, then doc_id descending) with contiguous ranks from 1.
class RunSet {
 public:
  static RunSet from_postings(std::vector<Posting> postings);

  // Adds one (run, topic) list given as (doc_id, score) pairs in any order.
  void insert_list(const std::string& run_tag, const std::string& topic_id,
                   std::vector<std::pair<std::string, double>> docs);

  const RankedList* list(const std::string& run_tag,
                         const std::string& topic_id) const;
  std::vector<std::string> run_tags() const;
  std::vector<std::string> topics() const;
  std::size_t run_count() const { return runs_.size(); }
  bool empty() const { return runs_.empty(); }
  RunSet restricted_to(const std::set<std::string>& run_tags) const;

  const std::map<std::string, std::map<std::string, RankedList>>& runs() const {
    return runs_;
  }

  bool operator==(const RunSet& other) const { return runs_ == other.runs_; }

 private:
  std::map<std::string, std::map<std::string, RankedList>> runs_;
};

class DocumentStore {
 public:
  void add(std::string doc_id, std::string text);
  const std::string* find(const std::string& doc_id) const;
  // Throws judgekit::Error when the id does not resolve.
  const std::string& at(const std::string& doc_id) const;
  std::size_t size() const { return docs_.size(); }
  std::vector<std::string> ids() const;

 private:
  std::unordered_map<std::string, std::string> docs_;
};

JudgmentSet parse_qrels(std::istream& in, int binarization_threshold = 1);
JudgmentSet parse_qrels(std::string_view text, int binarization_threshold = 1);
std::string write_qrels(const JudgmentSet& judgments);

RunSet parse_run(std::istream& in);
RunSet parse_run(std::string_view text);
std::string write_run(const RunSet& runs);

// Tab-separated `topic_id<TAB>query text`, one topic per line.
TopicSet parse_topics(std::istream& in);
std::string write_topics(const TopicSet& topics);

// Tab-separated `doc_id<TAB>text`, one document per line.
DocumentStore parse_documents(std::istream& in);
std::string write_documents(const DocumentStore& docs);

// Ground judgments win on shared keys; the result is the union of keys.
// A human-sourced predicted entry is an error unless ground shadows its key.
JudgmentSet merge_judgments(const JudgmentSet& ground,
                            const JudgmentSet& predicted);

// Replaces invalid UTF-8 sequences with U+FFFD.
std::string sanitize_utf8(std::string_view bytes);

JudgmentSet read_qrels_file(const std::string& path, int binarization_threshold = 1);
RunSet read_run_file(const std::string& path);
TopicSet read_topics_file(const std::string& path);
DocumentStore read_documents_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view text);

}  // namespace judgekit
