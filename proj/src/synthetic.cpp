#include "judgekit/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "judgekit/errors.hpp"
#include "judgekit/pooling.hpp"
#include "judgekit/rng.hpp"

namespace judgekit {
namespace {

constexpr const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r",
                                   "s", "t", "v", "z", "br", "tr", "st", "pl", "kr", "sh"};
constexpr const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou", "y"};

std::string pseudo_word(Rng& rng) {
  std::string w;
  const int syllables = 2 + static_cast<int>(rng.below(3));
  for (int i = 0; i < syllables; ++i) {
    w += kOnsets[rng.below(std::size(kOnsets))];
    w += kVowels[rng.below(std::size(kVowels))];
  }
  if (rng.bernoulli(0.5)) w += kOnsets[rng.below(std::size(kOnsets))];
  return w;
}

std::vector<std::string> fresh_words(Rng& rng, int n, std::set<std::string>& taken) {
  std::vector<std::string> out;
  while (static_cast<int>(out.size()) < n) {
    std::string w = pseudo_word(rng);
    if (taken.insert(w).second) out.push_back(std::move(w));
  }
  return out;
}

std::string fmt(const char* pattern, int value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, pattern, value);
  return buf;
}

}  // namespace

std::string synthetic_run_tag(int index) { return fmt("sys%02d", index); }

void SyntheticParams::validate() const {
  if (topics < 2) throw ConfigError("synthetic: need at least 2 topics");
  if (systems < 2) throw ConfigError("synthetic: need at least 2 systems");
  if (systems > 100) throw ConfigError("synthetic: at most 100 systems");
  if (docs_per_topic < 200) throw ConfigError("synthetic: need at least 200 docs per topic");
  if (!(relevant_share > 0.0 && relevant_share < 1.0)) {
    throw ConfigError("synthetic: relevant_share must lie in (0, 1)");
  }
  if (run_depth < 1 || run_depth > docs_per_topic) {
    throw ConfigError("synthetic: run_depth must lie in [1, docs_per_topic]");
  }
  if (background_vocab < 10 || signal_vocab < 1) throw ConfigError("synthetic: vocabulary too small");
  if (query_words < 1 || query_words > signal_vocab) {
    throw ConfigError("synthetic: query_words must lie in [1, signal_vocab]");
  }
  if (doc_length_min < 1 || doc_length_max < doc_length_min) {
    throw ConfigError("synthetic: invalid document length range");
  }
  if (!(signal_rate >= 0.0 && signal_rate <= 1.0)) throw ConfigError("synthetic: signal_rate must lie in [0, 1]");
  if (!(signal_width > 0.0)) throw ConfigError("synthetic: signal_width must be positive");
  if (!(noise_min >= 0.0 && noise_max > noise_min)) {
    throw ConfigError("synthetic: need 0 <= noise_min < noise_max");
  }
  if (families < 1 || families > systems) throw ConfigError("synthetic: families must lie in [1, systems]");
  if (!(family_noise >= 0.0)) throw ConfigError("synthetic: family_noise must be >= 0");
}

SyntheticCollection generate_synthetic_collection(const SyntheticParams& params,
                                                  std::uint64_t seed) {
  params.validate();
  SyntheticCollection c;
  c.params = params;
  c.seed = seed;

  Rng vocab_rng(derive_seed(seed, "vocabulary"));
  std::set<std::string> taken;
  const auto background = fresh_words(vocab_rng, params.background_vocab, taken);

  for (int s = 0; s < params.systems; ++s) {
    const double t = static_cast<double>(s) / static_cast<double>(params.systems - 1);
    c.system_noise.push_back(params.noise_min + t * (params.noise_max - params.noise_min));
  }

  const auto n_docs = static_cast<std::size_t>(params.docs_per_topic);
  const auto n_rel = static_cast<std::size_t>(std::clamp(
      round_half_up(params.relevant_share * static_cast<double>(n_docs)), 1L,
      static_cast<long>(n_docs) - 1));

  for (int ti = 0; ti < params.topics; ++ti) {
    const std::string topic_id = fmt("T%03d", ti + 1);
    Rng rng(derive_seed(seed, topic_id));
    const auto signal = fresh_words(vocab_rng, params.signal_vocab, taken);

    std::string query;
    for (int q = 0; q < params.query_words; ++q) {
      if (q) query += ' ';
      query += signal[static_cast<std::size_t>(q)];
    }
    c.topics.add({topic_id, query});

    // Affinities: evenly spread ranks, shuffled, with jitter, so the cut is
    // exact and no two documents tie.
    std::vector<double> affinity(n_docs);
    for (std::size_t i = 0; i < n_docs; ++i) {
      affinity[i] = (static_cast<double>(i) + rng.uniform(0.05, 0.95)) / static_cast<double>(n_docs);
    }
    rng.shuffle(affinity);
    const double cut = static_cast<double>(n_docs - n_rel) / static_cast<double>(n_docs);

    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n_docs; ++i) {
      const std::string doc_id = topic_id + "-" + fmt("D%04d", static_cast<int>(i) + 1);
      const double a = affinity[i];
      const double share = params.signal_rate / (1.0 + std::exp(-(a - cut) / params.signal_width));
      const int len = params.doc_length_min +
                      static_cast<int>(rng.below(static_cast<std::uint64_t>(
                          params.doc_length_max - params.doc_length_min + 1)));
      std::string text;
      for (int w = 0; w < len; ++w) {
        if (w) text += ' ';
        if (rng.bernoulli(share)) text += signal[rng.below(signal.size())];
        else text += background[rng.below(background.size())];
      }
      c.docs.add(doc_id, std::move(text));
      c.qrels.add({topic_id, doc_id, a >= cut ? 1 : 0, JudgmentSource::human});
      c.affinity[doc_id] = a;
      ids.push_back(doc_id);
    }

    std::vector<std::vector<double>> bias(static_cast<std::size_t>(params.families), std::vector<double>(n_docs));
    for (int f = 0; f < params.families; ++f) {
      Rng frng(derive_seed(derive_seed(seed, topic_id + "/family"), static_cast<std::uint64_t>(f)));
      for (auto& b : bias[static_cast<std::size_t>(f)]) b = frng.normal(0.0, params.family_noise);
    }

    for (int s = 0; s < params.systems; ++s) {
      const auto& family_bias = bias[static_cast<std::size_t>(s % params.families)];
      Rng srng(derive_seed(derive_seed(seed, topic_id), static_cast<std::uint64_t>(s)));
      std::vector<std::pair<std::string, double>> scored;
      scored.reserve(n_docs);
      for (std::size_t i = 0; i < n_docs; ++i) {
        scored.emplace_back(ids[i], affinity[i] + family_bias[i] +
                                        srng.normal(0.0, c.system_noise[static_cast<std::size_t>(s)]));
      }
      std::sort(scored.begin(), scored.end(),
                [](const auto& x, const auto& y) { return x.second > y.second; });
      scored.resize(static_cast<std::size_t>(params.run_depth));
      c.runs.insert_list(synthetic_run_tag(s), topic_id, std::move(scored));
    }
  }
  return c;
}

}  // namespace judgekit
