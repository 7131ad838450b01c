#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "judgekit/trec_io.hpp"

namespace judgekit {

// Desk-scale stand-in for a pooled test collection. Every document belongs to
// one topic and carries a latent affinity in [0, 1]; the oracle grade is 1 iff
// the affinity reaches the topic's cut, which is placed so that
// `relevant_share` of the topic's documents are relevant. Document text mixes
// background pseudo-words with the topic's signal words at a rate that rises
// steeply around the cut.
//
// System s ranks by affinity + family bias + N(0, noise_s). Noise levels are
// strictly increasing in s, so the planted quality order is the index order.
// Systems of one family (index mod `families`) share a per-document bias
// N(0, family_noise) and so retrieve similar documents whatever their quality.
struct SyntheticParams {
  int topics = 16;
  int systems = 20;
  int docs_per_topic = 1000;
  // Share of each topic's documents that is relevant. Runs concentrate the
  // relevant documents in their top 100, so with the other defaults about
  // 12.5% of the depth-100 pool is relevant.
  double relevant_share = 0.07;
  int run_depth = 100;
  int background_vocab = 3000;
  int signal_vocab = 40;  // signal words per topic
  int query_words = 4;    // drawn from the signal words
  int doc_length_min = 30;
  int doc_length_max = 90;
  double signal_rate = 0.4;    // signal token share well above the cut
  double signal_width = 0.01;  // share = rate * logistic((affinity - cut) / width)
  double noise_min = 0.1;
  double noise_max = 0.4;
  int families = 5;
  double family_noise = 0.4;

  void validate() const;
};

struct SyntheticCollection {
  SyntheticParams params;
  std::uint64_t seed = 0;
  DocumentStore docs;
  TopicSet topics;
  JudgmentSet qrels;
  RunSet runs;
  // Indexed like runs.run_tags(), i.e. by planted quality, best first.
  std::vector<double> system_noise;
  std::map<std::string, double> affinity;  // doc id -> latent affinity
};

SyntheticCollection generate_synthetic_collection(const SyntheticParams& params,
                                                  std::uint64_t seed);

// Run tag of system index i (zero-padded so lexical order = index order).
std::string synthetic_run_tag(int index);

}  // namespace judgekit
