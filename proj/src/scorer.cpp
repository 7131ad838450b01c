#include "judgekit/scorer.hpp"

#include "judgekit/errors.hpp"

namespace judgekit {

std::string_view to_string(Archetype a) {
  switch (a) {
    case Archetype::bi_encoder: return "bi_encoder";
    case Archetype::cross_encoder: return "cross_encoder";
    case Archetype::mono_decoder: return "mono_decoder";
    case Archetype::reference: return "reference";
  }
  return "unknown";
}

Archetype parse_archetype(std::string_view name) {
  if (name == "bi_encoder") return Archetype::bi_encoder;
  if (name == "cross_encoder") return Archetype::cross_encoder;
  if (name == "mono_decoder") return Archetype::mono_decoder;
  if (name == "reference") return Archetype::reference;
  throw Error("unknown archetype: " + std::string(name));
}

std::vector<double> PointwiseScorer::score_batch(std::string_view query,
                                                 const std::vector<std::string_view>& docs,
                                                 const LowRankAdapter& adapter) const {
  std::vector<double> out;
  out.reserve(docs.size());
  for (auto d : docs) out.push_back(score(query, d, adapter));
  return out;
}

}  // namespace judgekit
