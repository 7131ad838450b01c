#include "judgekit/adapter.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "judgekit/errors.hpp"
#include "judgekit/hashing.hpp"
#include "judgekit/rng.hpp"

namespace judgekit {
namespace {

constexpr char kMagic[8] = {'J', 'K', 'A', 'D', 'A', 'P', 'T', '\0'};
constexpr std::size_t kDigestLength = 64;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw AdapterFormatError("truncated adapter payload");
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint32_t u32() {
    auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }
  double f64() {
    auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    return std::bit_cast<double>(v);
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

void put_matrix(std::string& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) put_f64(out, m(i, j));
  }
}

Matrix get_matrix(Reader& in, long rows, long cols) {
  Matrix m(rows, cols);
  for (long i = 0; i < rows; ++i) {
    for (long j = 0; j < cols; ++j) m(i, j) = in.f64();
  }
  return m;
}

}  // namespace

std::size_t LowRankAdapter::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.a.size() + l.b.size());
  return n;
}

std::string usage_restriction_notice(const std::string& topic_id) {
  return "Restricted use: this judge adapter is valid only for labeling unjudged documents "
         "of topic " + topic_id + " in the collection whose judgments it was trained on. "
         "Applying it to any other topic (including similar ones), using it as a ranking "
         "component, or using it as a distillation source yields invalid evaluations.";
}

LowRankAdapter create_adapter(const PointwiseScorer& scorer, const std::string& topic_id,
                              int rank, double alpha, std::uint64_t seed) {
  if (rank < 1) throw DimensionError("adapter rank must be >= 1");
  const auto shapes = scorer.adaptable_layers();
  if (shapes.empty()) throw AttachError("scorer " + scorer.model_id() + " exposes no adaptable layers");
  LowRankAdapter adapter;
  adapter.topic_id = topic_id;
  adapter.base_model_id = scorer.model_id();
  adapter.rank = rank;
  adapter.alpha = alpha;
  adapter.usage_restriction = usage_restriction_notice(topic_id);
  Rng rng(derive_seed(seed, topic_id));
  for (const auto& s : shapes) {
    const int r = std::min({rank, s.d_in, s.d_out});
    adapter.layer_names.push_back(s.name);
    // Per-layer alpha keeps every layer at the configured scale alpha / rank.
    const double layer_alpha = alpha * static_cast<double>(r) / static_cast<double>(rank);
    adapter.layers.push_back(LoraLayer::fresh(s.d_out, s.d_in, r, layer_alpha, rng));
  }
  return adapter;
}

void check_attach(const PointwiseScorer& scorer, const LowRankAdapter& adapter) {
  if (adapter.base_model_id != scorer.model_id()) {
    throw AttachError("adapter was trained on base model '" + adapter.base_model_id +
                      "', cannot attach to '" + scorer.model_id() + "'");
  }
  const auto shapes = scorer.adaptable_layers();
  if (shapes.size() != adapter.layers.size()) {
    throw AttachError("adapter has " + std::to_string(adapter.layers.size()) +
                      " layers, scorer has " + std::to_string(shapes.size()));
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& l = adapter.layers[i];
    if (adapter.layer_names[i] != shapes[i].name || l.d_in() != shapes[i].d_in ||
        l.d_out() != shapes[i].d_out || l.a.rows() != l.b.cols()) {
      throw AttachError("adapter layer " + adapter.layer_names[i] +
                        " does not match scorer layer " + shapes[i].name);
    }
  }
}

std::string save_adapter(const LowRankAdapter& adapter) {
  nlohmann::ordered_json header;
  header["format_version"] = kAdapterFormatVersion;
  header["base_model_id"] = adapter.base_model_id;
  header["topic_id"] = adapter.topic_id;
  header["rank"] = adapter.rank;
  header["alpha"] = adapter.alpha;
  const auto& p = adapter.provenance;
  header["provenance"] = {{"seed", p.seed},
                          {"train_size", p.train_size},
                          {"train_relevant", p.train_relevant},
                          {"loss_weight_relevant", p.loss_weight_relevant},
                          {"loss_weight_nonrelevant", p.loss_weight_nonrelevant},
                          {"epochs", p.epochs},
                          {"batch_size", p.batch_size},
                          {"learning_rate", p.learning_rate}};
  header["usage_restriction"] = adapter.usage_restriction;
  auto& layers = header["layers"];
  layers = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < adapter.layers.size(); ++i) {
    const auto& l = adapter.layers[i];
    layers.push_back({{"name", adapter.layer_names.at(i)},
                      {"rank", l.rank()},
                      {"alpha", l.alpha},
                      {"d_out", l.d_out()},
                      {"d_in", l.d_in()}});
  }
  const std::string header_text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, kAdapterFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(header_text.size()));
  out += header_text;
  for (const auto& l : adapter.layers) {
    put_matrix(out, l.a);
    put_matrix(out, l.b);
  }
  out += sha256_hex(out);
  return out;
}

LowRankAdapter load_adapter(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic))) {
    throw AdapterFormatError("not a judge adapter (bad magic)");
  }
  const std::uint32_t version = in.u32();
  if (version != kAdapterFormatVersion) {
    throw AdapterFormatError("unsupported adapter format version " + std::to_string(version) +
                             " (expected " + std::to_string(kAdapterFormatVersion) + ")");
  }
  if (bytes.size() < kDigestLength) throw AdapterFormatError("truncated adapter payload");
  const auto body = bytes.substr(0, bytes.size() - kDigestLength);
  if (sha256_hex(body) != bytes.substr(bytes.size() - kDigestLength)) {
    throw AdapterFormatError("adapter checksum mismatch");
  }

  Reader body_in(body);
  body_in.take(sizeof(kMagic) + 4);
  const std::uint32_t header_len = body_in.u32();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(body_in.take(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw AdapterFormatError(std::string("malformed adapter header: ") + e.what());
  }

  LowRankAdapter adapter;
  try {
    adapter.base_model_id = header.at("base_model_id").get<std::string>();
    adapter.topic_id = header.at("topic_id").get<std::string>();
    adapter.rank = header.at("rank").get<int>();
    adapter.alpha = header.at("alpha").get<double>();
    adapter.usage_restriction = header.at("usage_restriction").get<std::string>();
    const auto& p = header.at("provenance");
    adapter.provenance.seed = p.at("seed").get<std::uint64_t>();
    adapter.provenance.train_size = p.at("train_size").get<int>();
    adapter.provenance.train_relevant = p.at("train_relevant").get<int>();
    adapter.provenance.loss_weight_relevant = p.at("loss_weight_relevant").get<double>();
    adapter.provenance.loss_weight_nonrelevant = p.at("loss_weight_nonrelevant").get<double>();
    adapter.provenance.epochs = p.at("epochs").get<int>();
    adapter.provenance.batch_size = p.at("batch_size").get<int>();
    adapter.provenance.learning_rate = p.at("learning_rate").get<double>();
    for (const auto& l : header.at("layers")) {
      const long rank = l.at("rank").get<long>();
      const long d_out = l.at("d_out").get<long>();
      const long d_in = l.at("d_in").get<long>();
      if (rank < 1 || d_out < 1 || d_in < 1) throw AdapterFormatError("bad layer shape");
      LoraLayer layer;
      layer.alpha = l.at("alpha").get<double>();
      layer.a = get_matrix(body_in, rank, d_in);
      layer.b = get_matrix(body_in, d_out, rank);
      adapter.layer_names.push_back(l.at("name").get<std::string>());
      adapter.layers.push_back(std::move(layer));
    }
  } catch (const nlohmann::json::exception& e) {
    throw AdapterFormatError(std::string("malformed adapter header: ") + e.what());
  }
  if (body_in.remaining() != 0) throw AdapterFormatError("trailing bytes in adapter payload");
  return adapter;
}

void save_adapter_file(const LowRankAdapter& adapter, const std::string& path) {
  const std::string bytes = save_adapter(adapter);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path);
}

LowRankAdapter load_adapter_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  auto adapter = load_adapter(buf.str());
  adapter.source_path = path;
  return adapter;
}

}  // namespace judgekit
