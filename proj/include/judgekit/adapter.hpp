#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "judgekit/lora.hpp"
#include "judgekit/scorer.hpp"

namespace judgekit {

inline constexpr std::uint32_t kAdapterFormatVersion = 1;

struct AdapterProvenance {
  std::uint64_t seed = 0;
  int train_size = 0;
  int train_relevant = 0;
  double loss_weight_relevant = 0.0;
  double loss_weight_nonrelevant = 0.0;
  int epochs = 0;
  int batch_size = 0;
  double learning_rate = 0.0;
};

// A trained per-topic judge: low-rank deltas for every adaptable sublayer of
// one specific base scorer. Adapters never share parameters with each other.
struct LowRankAdapter {
  std::string topic_id;
  std::string base_model_id;
  int rank = 0;          // configured rank; a layer may use less (min(d_in, d_out))
  double alpha = 0.0;
  std::vector<std::string> layer_names;
  std::vector<LoraLayer> layers;
  AdapterProvenance provenance;
  std::string usage_restriction;
  // Where the adapter was loaded from, if anywhere. Not serialized.
  std::string source_path;

  std::size_t parameter_count() const;
};

std::string usage_restriction_notice(const std::string& topic_id);

// Zero-delta adapter for `scorer`: one layer per adaptable sublayer with rank
// r_l = min(rank, d_in, d_out) and alpha * r_l / rank, so every layer's
// delta is scaled by alpha / rank.
LowRankAdapter create_adapter(const PointwiseScorer& scorer, const std::string& topic_id,
                              int rank, double alpha, std::uint64_t seed);

// Throws AttachError unless the adapter was built for this exact base model and
// its layer shapes match.
void check_attach(const PointwiseScorer& scorer, const LowRankAdapter& adapter);

// Binary container, all integers and floats little-endian:
//   8 bytes  magic "JKADAPT\0"
//   u32      format version
//   u32      header length N
//   N bytes  UTF-8 JSON header (base_model_id, topic_id, rank, alpha,
//            provenance, usage_restriction, layers[{name, rank, d_out, d_in}])
//   per layer: A as rank*d_in f64 row-major, then B as d_out*rank f64 row-major
//   64 bytes lowercase hex SHA-256 of everything before it
std::string save_adapter(const LowRankAdapter& adapter);
LowRankAdapter load_adapter(std::string_view bytes);

void save_adapter_file(const LowRankAdapter& adapter, const std::string& path);
LowRankAdapter load_adapter_file(const std::string& path);

}  // namespace judgekit
