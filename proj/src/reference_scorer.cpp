#include "judgekit/reference_scorer.hpp"

#include <bit>
#include <cmath>
#include <cstdio>

#include "judgekit/adapter.hpp"
#include "judgekit/errors.hpp"
#include "judgekit/hashing.hpp"
#include "judgekit/rng.hpp"

namespace judgekit {
namespace {

std::vector<std::string_view> tokenize(std::string_view text) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) tokens.push_back(text.substr(i, j - i));
    i = j;
  }
  return tokens;
}

constexpr std::uint64_t kWordBasis = 0x84222325cbf29ce4ULL;

void add_token_features(std::string_view token, int ngram, std::vector<double>& counts) {
  const auto dim = static_cast<std::uint64_t>(counts.size());
  std::string padded;
  padded.reserve(token.size() + 2);
  padded.push_back('#');
  for (char c : token) padded.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  padded.push_back('#');
  counts[fnv1a64(padded, kWordBasis) % dim] += 1.0;
  const auto n = static_cast<std::size_t>(ngram);
  if (padded.size() <= n) {
    counts[fnv1a64(padded) % dim] += 1.0;
    return;
  }
  for (std::size_t i = 0; i + n <= padded.size(); ++i) {
    counts[fnv1a64(std::string_view(padded).substr(i, n)) % dim] += 1.0;
  }
}

Vector bag(const std::vector<std::string_view>& tokens, int dim, int ngram) {
  std::vector<double> counts(static_cast<std::size_t>(dim), 0.0);
  for (auto t : tokens) add_token_features(t, ngram, counts);
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = std::log1p(counts[static_cast<std::size_t>(i)]);
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

Matrix glorot(int rows, int cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
  }
  return m;
}

double hidden_forward(const std::vector<DenseLayer>& layers, const Vector& x) {
  const Vector h = (layers[0].weight * x + layers[0].bias).array().tanh().matrix();
  const double z = layers[1].weight.row(0).dot(h) + layers[1].bias(0);
  return sigmoid(z);
}

}  // namespace

ReferenceScorer::ReferenceScorer(ReferenceScorerConfig config) : config_(std::move(config)) {
  if (config_.feature_dim < 1 || config_.hidden_dim < 1 || config_.ngram < 1 ||
      config_.max_sequence_tokens < 1) {
    throw Error("reference scorer dimensions must be positive");
  }
  Rng rng(config_.seed);
  DenseLayer hidden{"hidden", glorot(config_.hidden_dim, input_dim(), rng),
                    Vector::Zero(config_.hidden_dim)};
  DenseLayer output{"output", glorot(1, config_.hidden_dim, rng), Vector::Zero(1)};
  layers_ = {std::move(hidden), std::move(output)};
  refresh_model_id();
}

std::vector<LayerShape> ReferenceScorer::adaptable_layers() const {
  std::vector<LayerShape> out;
  for (const auto& l : layers_) {
    out.push_back({l.name, static_cast<int>(l.weight.rows()), static_cast<int>(l.weight.cols())});
  }
  return out;
}

std::pair<std::vector<std::string_view>, std::vector<std::string_view>> ReferenceScorer::truncate(
    std::string_view query, std::string_view doc) const {
  auto q = tokenize(query);
  auto d = tokenize(doc);
  const auto budget = static_cast<std::size_t>(config_.max_sequence_tokens);
  if (q.size() >= budget) {
    q.resize(budget);
    d.clear();
  } else if (q.size() + d.size() > budget) {
    d.resize(budget - q.size());
  }
  return {std::move(q), std::move(d)};
}

Vector ReferenceScorer::featurize(std::string_view query, std::string_view doc) const {
  const auto [q_tokens, d_tokens] = truncate(query, doc);
  const int dim = config_.feature_dim;
  const Vector q = bag(q_tokens, dim, config_.ngram);
  const Vector d = bag(d_tokens, dim, config_.ngram);
  Vector x(3 * dim);
  x.segment(0, dim) = q;
  x.segment(dim, dim) = d;
  x.segment(2 * dim, dim) = config_.interaction_scale * q.cwiseProduct(d);
  return x;
}

Matrix ReferenceScorer::featurize_batch(std::string_view query,
                                        const std::vector<std::string_view>& docs) const {
  Matrix out(input_dim(), static_cast<Eigen::Index>(docs.size()));
  for (std::size_t i = 0; i < docs.size(); ++i) {
    out.col(static_cast<Eigen::Index>(i)) = featurize(query, docs[i]);
  }
  return out;
}

double ReferenceScorer::forward(const Vector& x) const {
  if (x.size() != input_dim()) throw DimensionError("feature vector has wrong dimension");
  return hidden_forward(layers_, x);
}

double ReferenceScorer::forward(const Vector& x, const LowRankAdapter& adapter) const {
  check_attach(*this, adapter);
  if (x.size() != input_dim()) throw DimensionError("feature vector has wrong dimension");
  const Vector u = lora_forward(layers_[0].weight, adapter.layers[0], x) + layers_[0].bias;
  const Vector h = u.array().tanh().matrix();
  const Vector z = lora_forward(layers_[1].weight, adapter.layers[1], h) + layers_[1].bias;
  return sigmoid(z(0));
}

Vector ReferenceScorer::forward_batch(const Matrix& features) const {
  if (features.rows() != input_dim()) throw DimensionError("feature matrix has wrong dimension");
  Matrix u = layers_[0].weight * features;
  u.colwise() += layers_[0].bias;
  const Matrix h = u.array().tanh().matrix();
  Vector z = (layers_[1].weight * h).row(0).transpose();
  z.array() += layers_[1].bias(0);
  return z.unaryExpr([](double v) { return sigmoid(v); });
}

double ReferenceScorer::score(std::string_view query, std::string_view doc) const {
  return forward(featurize(query, doc));
}

double ReferenceScorer::score(std::string_view query, std::string_view doc,
                              const LowRankAdapter& adapter) const {
  return forward(featurize(query, doc), adapter);
}

std::vector<double> ReferenceScorer::score_batch(std::string_view query,
                                                 const std::vector<std::string_view>& docs,
                                                 const LowRankAdapter& adapter) const {
  if (docs.empty()) return {};
  const ReferenceScorer adapted = merged(adapter);
  const Vector scores = adapted.forward_batch(featurize_batch(query, docs));
  return {scores.data(), scores.data() + scores.size()};
}

void ReferenceScorer::set_layers(std::vector<DenseLayer> layers) {
  if (layers.size() != layers_.size()) throw DimensionError("layer count mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].weight.rows() != layers_[i].weight.rows() ||
        layers[i].weight.cols() != layers_[i].weight.cols() ||
        layers[i].bias.size() != layers_[i].bias.size()) {
      throw DimensionError("layer " + layers_[i].name + " shape mismatch");
    }
  }
  layers_ = std::move(layers);
  refresh_model_id();
}

ReferenceScorer ReferenceScorer::merged(const LowRankAdapter& adapter) const {
  check_attach(*this, adapter);
  ReferenceScorer out = *this;
  for (std::size_t i = 0; i < out.layers_.size(); ++i) {
    out.layers_[i].weight = merge_adapter(layers_[i].weight, adapter.layers[i]);
  }
  out.refresh_model_id();
  return out;
}

std::size_t ReferenceScorer::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

void ReferenceScorer::refresh_model_id() {
  std::uint64_t h = fnv1a64(config_.name);
  auto mix_in = [&h](std::uint64_t v) {
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&v), sizeof(v)), h);
  };
  mix_in(static_cast<std::uint64_t>(config_.feature_dim));
  mix_in(static_cast<std::uint64_t>(config_.hidden_dim));
  mix_in(static_cast<std::uint64_t>(config_.ngram));
  mix_in(static_cast<std::uint64_t>(config_.max_sequence_tokens));
  mix_in(std::bit_cast<std::uint64_t>(config_.interaction_scale));
  for (const auto& l : layers_) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) mix_in(std::bit_cast<std::uint64_t>(l.weight.data()[i]));
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) mix_in(std::bit_cast<std::uint64_t>(l.bias.data()[i]));
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  model_id_ = config_.name + "-" + buf;
}

}  // namespace judgekit
