#include "judgekit/trec_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>
#include <unordered_set>

#include "judgekit/errors.hpp"

namespace judgekit {
namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) fields.push_back(line.substr(i, j - i));
    i = j;
  }
  return fields;
}

bool parse_int(std::string_view s, int& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

// Calls fn(line_number, line) for each line with CR stripped and invalid
// UTF-8 replaced.
template <typename Fn>
void for_each_line(std::istream& in, Fn&& fn) {
  std::string raw;
  std::size_t number = 0;
  while (std::getline(in, raw)) {
    ++number;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    fn(number, sanitize_utf8(raw));
  }
}

void sort_canonical(RankedList& list) {
  std::sort(list.begin(), list.end(), [](const RankedDoc& a, const RankedDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id > b.doc_id;
  });
  for (std::size_t i = 0; i < list.size(); ++i) list[i].rank = static_cast<int>(i + 1);
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return in;
}

}  // namespace

std::string_view to_string(JudgmentSource source) {
  switch (source) {
    case JudgmentSource::human: return "human";
    case JudgmentSource::adapter: return "adapter";
    case JudgmentSource::llm: return "llm";
    case JudgmentSource::zero_fill: return "zero_fill";
  }
  return "unknown";
}

JudgmentSource parse_judgment_source(std::string_view name) {
  if (name == "human") return JudgmentSource::human;
  if (name == "adapter") return JudgmentSource::adapter;
  if (name == "llm") return JudgmentSource::llm;
  if (name == "zero_fill") return JudgmentSource::zero_fill;
  throw Error("unknown judgment source: " + std::string(name));
}

void TopicSet::add(Topic topic) {
  if (topic.topic_id.empty()) throw Error("empty topic id");
  const std::string id = topic.topic_id;
  if (!topics_.emplace(id, std::move(topic)).second) {
    throw DuplicateError("duplicate topic " + id);
  }
}

const Topic& TopicSet::at(const std::string& topic_id) const {
  auto it = topics_.find(topic_id);
  if (it == topics_.end()) throw Error("unknown topic " + topic_id);
  return it->second;
}

bool TopicSet::contains(const std::string& topic_id) const {
  return topics_.count(topic_id) != 0;
}

std::vector<Topic> TopicSet::list() const {
  std::vector<Topic> out;
  out.reserve(topics_.size());
  for (const auto& [_, t] : topics_) out.push_back(t);
  return out;
}

JudgmentSet::JudgmentSet(int binarization_threshold)
    : threshold_(binarization_threshold) {
  if (threshold_ < 1) throw Error("binarization threshold must be >= 1");
}

void JudgmentSet::add(Judgment judgment) {
  if (judgment.grade < 0) throw Error("negative grade");
  Key key{judgment.topic_id, judgment.doc_id};
  auto [it, inserted] = entries_.emplace(std::move(key), std::move(judgment));
  if (!inserted) {
    throw DuplicateError("duplicate judgment for topic " + it->first.first +
                         " doc " + it->first.second);
  }
}

void JudgmentSet::add_label(const std::string& topic_id, const std::string& doc_id,
                            bool relevant, JudgmentSource source) {
  add(Judgment{topic_id, doc_id, relevant ? threshold_ : 0, source});
}

const Judgment* JudgmentSet::find(const std::string& topic_id,
                                  const std::string& doc_id) const {
  auto it = entries_.find(Key{topic_id, doc_id});
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<std::string> JudgmentSet::topics() const {
  std::vector<std::string> out;
  for (const auto& [key, _] : entries_) {
    if (out.empty() || out.back() != key.first) out.push_back(key.first);
  }
  return out;
}

JudgmentSet JudgmentSet::for_topic(const std::string& topic_id) const {
  JudgmentSet out(threshold_);
  for (auto it = entries_.lower_bound(Key{topic_id, ""});
       it != entries_.end() && it->first.first == topic_id; ++it) {
    out.entries_.emplace_hint(out.entries_.end(), it->first, it->second);
  }
  return out;
}

std::vector<std::string> JudgmentSet::doc_ids(const std::string& topic_id) const {
  std::vector<std::string> out;
  for (auto it = entries_.lower_bound(Key{topic_id, ""});
       it != entries_.end() && it->first.first == topic_id; ++it) {
    out.push_back(it->first.second);
  }
  return out;
}

std::size_t JudgmentSet::count(const std::string& topic_id) const {
  std::size_t n = 0;
  for (auto it = entries_.lower_bound(Key{topic_id, ""});
       it != entries_.end() && it->first.first == topic_id; ++it) {
    ++n;
  }
  return n;
}

std::size_t JudgmentSet::relevant_count(const std::string& topic_id) const {
  std::size_t n = 0;
  for (auto it = entries_.lower_bound(Key{topic_id, ""});
       it != entries_.end() && it->first.first == topic_id; ++it) {
    if (is_relevant(it->second)) ++n;
  }
  return n;
}

bool JudgmentSet::operator==(const JudgmentSet& other) const {
  if (threshold_ != other.threshold_ || entries_.size() != other.entries_.size()) {
    return false;
  }
  auto a = entries_.begin();
  auto b = other.entries_.begin();
  for (; a != entries_.end(); ++a, ++b) {
    if (a->first != b->first || a->second.grade != b->second.grade ||
        a->second.source != b->second.source) {
      return false;
    }
  }
  return true;
}

RunSet RunSet::from_postings(std::vector<Posting> postings) {
  RunSet out;
  std::unordered_set<std::string> seen;
  for (auto& p : postings) {
    std::string key = p.run_tag + '\x1f' + p.topic_id + '\x1f' + p.doc_id;
    if (!seen.insert(std::move(key)).second) {
      throw DuplicateError("duplicate posting run " + p.run_tag + " topic " +
                           p.topic_id + " doc " + p.doc_id);
    }
    out.runs_[p.run_tag][p.topic_id].push_back(
        RankedDoc{std::move(p.doc_id), 0, p.stated_rank, p.score});
  }
  for (auto& [_, topics] : out.runs_) {
    for (auto& [_, list] : topics) sort_canonical(list);
  }
  return out;
}

void RunSet::insert_list(const std::string& run_tag, const std::string& topic_id,
                         std::vector<std::pair<std::string, double>> docs) {
  auto& slot = runs_[run_tag][topic_id];
  if (!slot.empty()) {
    throw DuplicateError("list already present for run " + run_tag + " topic " + topic_id);
  }
  std::unordered_set<std::string> seen;
  RankedList list;
  list.reserve(docs.size());
  for (auto& [doc, score] : docs) {
    if (!seen.insert(doc).second) {
      throw DuplicateError("duplicate doc " + doc + " in run " + run_tag);
    }
    list.push_back(RankedDoc{std::move(doc), 0, 0, score});
  }
  sort_canonical(list);
  for (auto& d : list) d.stated_rank = d.rank;
  slot = std::move(list);
}

const RankedList* RunSet::list(const std::string& run_tag,
                               const std::string& topic_id) const {
  auto r = runs_.find(run_tag);
  if (r == runs_.end()) return nullptr;
  auto t = r->second.find(topic_id);
  return t == r->second.end() ? nullptr : &t->second;
}

std::vector<std::string> RunSet::run_tags() const {
  std::vector<std::string> out;
  for (const auto& [tag, _] : runs_) out.push_back(tag);
  return out;
}

std::vector<std::string> RunSet::topics() const {
  std::set<std::string> all;
  for (const auto& [_, topics] : runs_) {
    for (const auto& [t, _] : topics) all.insert(t);
  }
  return {all.begin(), all.end()};
}

RunSet RunSet::restricted_to(const std::set<std::string>& run_tags) const {
  RunSet out;
  for (const auto& [tag, topics] : runs_) {
    if (run_tags.count(tag)) out.runs_.emplace(tag, topics);
  }
  return out;
}

void DocumentStore::add(std::string doc_id, std::string text) {
  if (doc_id.empty()) throw Error("empty doc id");
  auto [it, inserted] = docs_.emplace(std::move(doc_id), std::move(text));
  if (!inserted) throw DuplicateError("duplicate document " + it->first);
}

const std::string* DocumentStore::find(const std::string& doc_id) const {
  auto it = docs_.find(doc_id);
  return it == docs_.end() ? nullptr : &it->second;
}

const std::string& DocumentStore::at(const std::string& doc_id) const {
  const std::string* text = find(doc_id);
  if (!text) throw Error("unresolvable document id " + doc_id);
  return *text;
}

std::vector<std::string> DocumentStore::ids() const {
  std::vector<std::string> out;
  out.reserve(docs_.size());
  for (const auto& [id, _] : docs_) out.push_back(id);
  std::sort(out.begin(), out.end());
  return out;
}

JudgmentSet parse_qrels(std::istream& in, int binarization_threshold) {
  JudgmentSet out(binarization_threshold);
  for_each_line(in, [&](std::size_t number, const std::string& line) {
    auto fields = split_ws(line);
    if (fields.empty()) return;
    if (fields.size() < 4) {
      throw ParseError("qrels line needs 4 fields, got " + std::to_string(fields.size()),
                       number);
    }
    int grade = 0;
    if (!parse_int(fields[3], grade)) {
      throw ParseError("non-integer grade '" + std::string(fields[3]) + "'", number);
    }
    if (grade < 0) throw ParseError("negative grade", number);
    Judgment j{std::string(fields[0]), std::string(fields[2]), grade,
               JudgmentSource::human};
    if (out.contains(j.topic_id, j.doc_id)) {
      throw DuplicateError("line " + std::to_string(number) + ": duplicate judgment for topic " +
                           j.topic_id + " doc " + j.doc_id);
    }
    out.add(std::move(j));
  });
  return out;
}

JudgmentSet parse_qrels(std::string_view text, int binarization_threshold) {
  std::istringstream in{std::string(text)};
  return parse_qrels(in, binarization_threshold);
}

std::string write_qrels(const JudgmentSet& judgments) {
  std::string out;
  for (const auto& [key, j] : judgments) {
    out += key.first;
    out += " 0 ";
    out += key.second;
    out += ' ';
    out += std::to_string(j.grade);
    out += '\n';
  }
  return out;
}

RunSet parse_run(std::istream& in) {
  std::vector<Posting> postings;
  for_each_line(in, [&](std::size_t number, const std::string& line) {
    auto fields = split_ws(line);
    if (fields.empty()) return;
    if (fields.size() != 6) {
      throw ParseError("run line needs 6 fields, got " + std::to_string(fields.size()),
                       number);
    }
    Posting p;
    p.topic_id = fields[0];
    p.doc_id = fields[2];
    p.run_tag = fields[5];
    if (!parse_int(fields[3], p.stated_rank)) {
      throw ParseError("non-integer rank '" + std::string(fields[3]) + "'", number);
    }
    if (!parse_double(fields[4], p.score)) {
      throw ParseError("non-numeric score '" + std::string(fields[4]) + "'", number);
    }
    postings.push_back(std::move(p));
  });
  return RunSet::from_postings(std::move(postings));
}

RunSet parse_run(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_run(in);
}

std::string write_run(const RunSet& runs) {
  std::string out;
  for (const auto& [tag, topics] : runs.runs()) {
    for (const auto& [topic, list] : topics) {
      for (const auto& d : list) {
        out += topic;
        out += " Q0 ";
        out += d.doc_id;
        out += ' ';
        out += std::to_string(d.rank);
        out += ' ';
        out += format_double(d.score);
        out += ' ';
        out += tag;
        out += '\n';
      }
    }
  }
  return out;
}

TopicSet parse_topics(std::istream& in) {
  TopicSet out;
  for_each_line(in, [&](std::size_t number, const std::string& line) {
    if (line.empty()) return;
    auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw ParseError("topic line needs `id<TAB>query`", number);
    }
    try {
      out.add(Topic{line.substr(0, tab), line.substr(tab + 1)});
    } catch (const DuplicateError& e) {
      throw DuplicateError("line " + std::to_string(number) + ": " + e.what());
    }
  });
  return out;
}

std::string write_topics(const TopicSet& topics) {
  std::string out;
  for (const auto& t : topics.list()) {
    out += t.topic_id;
    out += '\t';
    out += t.query_text;
    out += '\n';
  }
  return out;
}

DocumentStore parse_documents(std::istream& in) {
  DocumentStore out;
  for_each_line(in, [&](std::size_t number, const std::string& line) {
    if (line.empty()) return;
    auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw ParseError("document line needs `id<TAB>text`", number);
    }
    try {
      out.add(line.substr(0, tab), line.substr(tab + 1));
    } catch (const DuplicateError& e) {
      throw DuplicateError("line " + std::to_string(number) + ": " + e.what());
    }
  });
  return out;
}

std::string write_documents(const DocumentStore& docs) {
  std::string out;
  for (const auto& id : docs.ids()) {
    out += id;
    out += '\t';
    out += docs.at(id);
    out += '\n';
  }
  return out;
}

JudgmentSet merge_judgments(const JudgmentSet& ground, const JudgmentSet& predicted) {
  if (ground.threshold() != predicted.threshold()) {
    throw Error("cannot merge judgment sets with different binarization thresholds");
  }
  JudgmentSet out = ground;
  for (const auto& [key, j] : predicted) {
    // A human entry is tolerated only where it is shadowed by ground anyway.
    if (j.source == JudgmentSource::human && !out.contains(key.first, key.second)) {
      throw Error("predicted judgment for topic " + key.first + " doc " + key.second +
                  " is labeled as human");
    }
    if (!out.contains(key.first, key.second)) out.add(j);
  }
  return out;
}

std::string sanitize_utf8(std::string_view in) {
  std::string out;
  out.reserve(in.size());
  static constexpr char kReplacement[] = "\xEF\xBF\xBD";
  std::size_t i = 0;
  while (i < in.size()) {
    const auto c = static_cast<unsigned char>(in[i]);
    std::size_t len = 0;
    std::uint32_t min = 0;
    if (c < 0x80) {
      out.push_back(static_cast<char>(c));
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2; min = 0x80;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3; min = 0x800;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4; min = 0x10000;
    }
    bool ok = len != 0 && i + len <= in.size();
    std::uint32_t cp = 0;
    if (ok) {
      cp = c & (0xFF >> (len + 1));
      for (std::size_t k = 1; k < len; ++k) {
        const auto cc = static_cast<unsigned char>(in[i + k]);
        if ((cc & 0xC0) != 0x80) { ok = false; break; }
        cp = (cp << 6) | (cc & 0x3F);
      }
    }
    if (ok && (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))) ok = false;
    if (ok) {
      out.append(in.substr(i, len));
      i += len;
    } else {
      out += kReplacement;
      ++i;
    }
  }
  return out;
}

JudgmentSet read_qrels_file(const std::string& path, int binarization_threshold) {
  auto in = open_input(path);
  return parse_qrels(in, binarization_threshold);
}

RunSet read_run_file(const std::string& path) {
  auto in = open_input(path);
  return parse_run(in);
}

TopicSet read_topics_file(const std::string& path) {
  auto in = open_input(path);
  return parse_topics(in);
}

DocumentStore read_documents_file(const std::string& path) {
  auto in = open_input(path);
  return parse_documents(in);
}

void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error("write failed for " + path);
}

}  // namespace judgekit
