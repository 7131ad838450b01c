#include "judgekit/report.hpp"

#include <cstdio>

namespace judgekit {
namespace {

using nlohmann::json;

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string num(const std::optional<double>& v, const char* fmt = "%.4f") {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, fmt, *v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace

json to_json(const ClassificationMetrics& m) {
  return {{"tp", m.counts.tp},       {"fp", m.counts.fp},   {"fn", m.counts.fn},
          {"tn", m.counts.tn},       {"precision", opt(m.precision)},
          {"recall", opt(m.recall)}, {"f1", opt(m.f1)},     {"accuracy", m.accuracy}};
}

json to_json(const MacroMetrics& m) {
  return {{"precision", opt(m.precision)},
          {"recall", opt(m.recall)},
          {"f1", opt(m.f1)},
          {"accuracy", opt(m.accuracy)},
          {"topics", m.topics},
          {"undefined_precision", m.undefined_precision},
          {"undefined_recall", m.undefined_recall},
          {"undefined_f1", m.undefined_f1}};
}

const ApproachReport* EvalReport::find(const std::string& approach) const {
  for (const auto& a : approaches) {
    if (a.approach == approach) return &a;
  }
  return nullptr;
}

json EvalReport::to_json() const {
  json approaches_json = json::array();
  for (const auto& a : approaches) {
    json per_topic = json::array();
    for (const auto& t : a.per_topic) {
      json row = judgekit::to_json(t.metrics);
      row["topic_id"] = t.topic_id;
      per_topic.push_back(row);
    }
    json systems = json::object();
    for (const auto& [depth, ranking] : a.system_ndcg) {
      json rows = json::array();
      for (const auto& s : ranking) rows.push_back({{"run_tag", s.run_tag}, {"ndcg", s.mean}});
      systems[std::to_string(depth)] = rows;
    }
    json rho = json::array();
    for (const auto& r : a.rho) {
      rho.push_back({{"depth", r.depth},
                     {"mean", opt(r.mean)},
                     {"stddev", r.stddev},
                     {"seeds", r.seeds},
                     {"undefined", r.undefined}});
    }
    json row = {{"approach", a.approach},
                {"k", a.k ? json(*a.k) : json(nullptr)},
                {"rate", opt(a.rate)},
                {"per_topic", per_topic},
                {"macro", a.macro ? judgekit::to_json(*a.macro) : json(nullptr)},
                {"system_ndcg", systems},
                {"spearman_rho", rho},
                {"krippendorff_alpha", opt(a.alpha)},
                {"labeled", a.labeled},
                {"abstentions", a.abstentions}};
    if (!a.extra.empty()) row["extra"] = a.extra;
    approaches_json.push_back(row);
  }
  json omitted = json::array();
  for (const auto& o : omissions) omitted.push_back({{"configuration", o.configuration}, {"reason", o.reason}});
  return {{"experiment", experiment},
          {"config", config},
          {"coverage", {{"topics_requested", topics_requested}, {"topics_covered", topics_covered}}},
          {"approaches", approaches_json},
          {"omissions", omitted}};
}

std::string EvalReport::to_table() const {
  std::size_t width = 8;
  for (const auto& a : approaches) width = std::max(width, a.approach.size());
  width += 2;
  std::string out = pad("approach", width) + "depth  rho      std      seeds  alpha    F1       abstain\n";
  for (const auto& a : approaches) {
    const std::optional<double> f1 = a.macro ? a.macro->f1 : std::nullopt;
    if (a.rho.empty()) {
      out += pad(a.approach, width) + pad("-", 7) + pad("n/a", 9) + pad("", 9) + pad("", 7) +
             pad(num(a.alpha), 9) + pad(num(f1), 9) + std::to_string(a.abstentions) + "\n";
      continue;
    }
    for (const auto& r : a.rho) {
      out += pad(a.approach, width) + pad(std::to_string(r.depth), 7) + pad(num(r.mean), 9) +
             pad(num(r.stddev), 9) + pad(std::to_string(r.seeds - r.undefined), 7) + pad(num(a.alpha), 9) +
             pad(num(f1), 9) + std::to_string(a.abstentions) + "\n";
    }
  }
  for (const auto& o : omissions) out += "omitted " + o.configuration + ": " + o.reason + "\n";
  return out;
}

std::string EvalReport::tidy_tsv() const {
  std::string out = "dataset\trate\tmethod\tk\tseed\tdepth\trho\n";
  for (const auto& r : tidy) {
    out += r.dataset + "\t" + num(r.rate, "%g") + "\t" + r.method + "\t" +
           (r.k ? std::to_string(*r.k) : std::string("-")) + "\t" + std::to_string(r.seed) + "\t" +
           std::to_string(r.depth) + "\t" + num(r.rho, "%.6f") + "\n";
  }
  return out;
}

}  // namespace judgekit
