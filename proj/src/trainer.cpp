#include "judgekit/trainer.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "judgekit/errors.hpp"
#include "judgekit/rng.hpp"

namespace judgekit {
namespace {

// Forward and backward pass over a batch. `base_pre`, when given, holds the
// frozen hidden-layer pre-activation W1 X + b1 for the batch.
ParameterGradients forward_backward(const std::vector<DenseLayer>& layers,
                                    const LowRankAdapter* adapter, const Matrix& x,
                                    const Matrix* base_pre, const Vector& labels,
                                    const TrainConfig& config, bool with_gradients) {
  const auto n = x.cols();
  if (n == 0) throw Error("empty batch");
  if (labels.size() != n) throw DimensionError("labels and features differ in length");
  const bool lora = config.mode == TrainMode::lora;
  if (lora && adapter == nullptr) throw Error("lora mode needs an adapter");
  const DenseLayer& l1 = layers[0];
  const DenseLayer& l2 = layers[1];

  Matrix u;
  Matrix ax;
  if (base_pre) {
    u = *base_pre;
  } else {
    u = l1.weight * x;
    u.colwise() += l1.bias;
  }
  if (lora) {
    const LoraLayer& a1 = adapter->layers[0];
    ax = a1.a * x;
    u.noalias() += a1.scale() * (a1.b * ax);
  }
  const Matrix h = u.array().tanh().matrix();
  Matrix a2h;
  Matrix z = l2.weight * h;
  if (lora) {
    const LoraLayer& a2 = adapter->layers[1];
    a2h = a2.a * h;
    z.noalias() += a2.scale() * (a2.b * a2h);
  }
  z.array() += l2.bias(0);

  ParameterGradients g;
  Eigen::RowVectorXd dz(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = sigmoid(z(0, i));
    const double y = labels(i);
    const double w = y == 1.0 ? config.loss_weight_relevant : config.loss_weight_nonrelevant;
    const double r = p - y;
    loss += w * r * r;
    dz(i) = 2.0 * inv_n * w * r * p * (1.0 - p);
  }
  g.loss = loss * inv_n;
  if (!with_gradients) return g;

  if (lora) {
    const LoraLayer& a1 = adapter->layers[0];
    const LoraLayer& a2 = adapter->layers[1];
    const double s1 = a1.scale();
    const double s2 = a2.scale();
    const Matrix bt_dz = a2.b.transpose() * dz;  // r2 x n
    Matrix db2 = s2 * dz * a2h.transpose();
    Matrix da2 = s2 * bt_dz * h.transpose();
    Matrix dh = l2.weight.transpose() * dz;
    dh.noalias() += s2 * (a2.a.transpose() * bt_dz);
    const Matrix du = dh.cwiseProduct((1.0 - h.array().square()).matrix());
    const Matrix bt_du = a1.b.transpose() * du;  // r1 x n
    Matrix db1 = s1 * du * ax.transpose();
    Matrix da1 = s1 * bt_du * x.transpose();
    g.lora_a = {std::move(da1), std::move(da2)};
    g.lora_b = {std::move(db1), std::move(db2)};
  } else {
    Matrix dw2 = dz * h.transpose();
    Vector db2 = Vector::Constant(1, dz.sum());
    const Matrix dh = l2.weight.transpose() * dz;
    const Matrix du = dh.cwiseProduct((1.0 - h.array().square()).matrix());
    Matrix dw1 = du * x.transpose();
    Vector db1 = du.rowwise().sum();
    g.weight = {std::move(dw1), std::move(dw2)};
    g.bias = {std::move(db1), std::move(db2)};
  }
  return g;
}

struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr;
  long step = 0;
  std::vector<Vector> m;
  std::vector<Vector> v;

  explicit Adam(double learning_rate) : lr(learning_rate) {}

  // Parameters and gradients are passed as flat views in a fixed order.
  void update(std::vector<Eigen::Map<Vector>>& params,
              const std::vector<Eigen::Map<const Vector>>& grads) {
    if (m.empty()) {
      for (const auto& p : params) {
        m.push_back(Vector::Zero(p.size()));
        v.push_back(Vector::Zero(p.size()));
      }
    }
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i].cwiseProduct(grads[i]);
      params[i].array() -= lr * (m[i].array() / c1) / ((v[i].array() / c2).sqrt() + eps);
    }
  }
};

template <typename M>
Eigen::Map<Vector> flat(M& m) {
  return Eigen::Map<Vector>(m.data(), m.size());
}

template <typename M>
Eigen::Map<const Vector> flat_const(const M& m) {
  return Eigen::Map<const Vector>(m.data(), m.size());
}

Matrix gather_columns(const Matrix& src, const std::vector<Eigen::Index>& idx,
                      std::size_t begin, std::size_t end) {
  Matrix out(src.rows(), static_cast<Eigen::Index>(end - begin));
  for (std::size_t i = begin; i < end; ++i) {
    out.col(static_cast<Eigen::Index>(i - begin)) = src.col(idx[i]);
  }
  return out;
}

Vector gather(const Vector& src, const std::vector<Eigen::Index>& idx, std::size_t begin,
              std::size_t end) {
  Vector out(static_cast<Eigen::Index>(end - begin));
  for (std::size_t i = begin; i < end; ++i) out(static_cast<Eigen::Index>(i - begin)) = src(idx[i]);
  return out;
}

void check_topic(const LowRankAdapter& adapter, const Topic& topic) {
  if (adapter.topic_id != topic.topic_id) {
    throw UsageRestrictionError("adapter for topic " + adapter.topic_id +
                                " cannot judge topic " + topic.topic_id);
  }
}

void check_topic(const TrainedJudge& judge, const Topic& topic) {
  if (judge.topic_id != topic.topic_id) {
    throw UsageRestrictionError("judge for topic " + judge.topic_id +
                                " cannot judge topic " + topic.topic_id);
  }
}

std::vector<std::string> unique_sorted(const std::vector<std::string>& ids) {
  std::vector<std::string> out(ids);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

std::string_view to_string(TrainMode mode) {
  return mode == TrainMode::lora ? "lora" : "native_finetune";
}

TrainMode parse_train_mode(std::string_view name) {
  if (name == "lora") return TrainMode::lora;
  if (name == "native_finetune" || name == "native") return TrainMode::native_finetune;
  throw Error("unknown train mode: " + std::string(name));
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(loss_weight_relevant > 0.0) || !(loss_weight_nonrelevant > 0.0)) {
    throw ConfigError("loss weights must be positive");
  }
  if (lora_rank < 1) throw ConfigError("lora_rank must be >= 1");
  if (max_sequence_tokens < 1) throw ConfigError("max_sequence_tokens must be >= 1");
}

ParameterGradients gradient_of_loss(const ReferenceScorer& scorer,
                                    const LowRankAdapter* adapter, const Matrix& features,
                                    const Vector& labels, const TrainConfig& config) {
  if (config.mode == TrainMode::lora) {
    if (!adapter) throw Error("lora mode needs an adapter");
    check_attach(scorer, *adapter);
  }
  return forward_backward(scorer.layers(), adapter, features, nullptr, labels, config, true);
}

double batch_loss(const ReferenceScorer& scorer, const LowRankAdapter* adapter,
                  const Matrix& features, const Vector& labels, const TrainConfig& config) {
  return forward_backward(scorer.layers(), config.mode == TrainMode::lora ? adapter : nullptr,
                          features, nullptr, labels, config, false)
      .loss;
}

ReferenceScorer TrainedJudge::effective_scorer(const ReferenceScorer& base) const {
  if (mode == TrainMode::lora) {
    if (!adapter) throw Error("judge has no adapter");
    return base.merged(*adapter);
  }
  if (!finetuned) throw Error("judge has no finetuned weights");
  return *finetuned;
}

std::size_t trainable_parameters(const ReferenceScorer& scorer, const TrainConfig& config) {
  if (config.mode == TrainMode::native_finetune) return scorer.parameter_count();
  std::size_t n = 0;
  for (const auto& s : scorer.adaptable_layers()) {
    const auto r = static_cast<std::size_t>(std::min({config.lora_rank, s.d_in, s.d_out}));
    n += r * static_cast<std::size_t>(s.d_in + s.d_out);
  }
  return n;
}

TrainedJudge train_topic_judge_on_features(const ReferenceScorer& base, const Topic& topic,
                                           const Matrix& features, const Vector& labels,
                                           const TrainConfig& config) {
  config.validate();
  if (features.cols() == 0) throw Error("empty training set for topic " + topic.topic_id);
  if (features.cols() != labels.size()) throw DimensionError("features and labels differ in length");
  const auto positives = (labels.array() == 1.0).count();
  const auto negatives = (labels.array() == 0.0).count();
  if (positives + negatives != labels.size()) throw Error("labels must be 0 or 1");
  if (positives == 0 || negatives == 0) {
    throw StratificationError("training set for topic " + topic.topic_id +
                              " has a single class; the weighted loss degenerates");
  }

  TrainedJudge judge;
  judge.topic_id = topic.topic_id;
  judge.mode = config.mode;
  const bool lora = config.mode == TrainMode::lora;

  std::vector<DenseLayer> layers = base.layers();
  LowRankAdapter adapter;
  Matrix base_pre;
  if (lora) {
    adapter = create_adapter(base, topic.topic_id, config.lora_rank, config.lora_alpha, config.seed);
    base_pre = layers[0].weight * features;
    base_pre.colwise() += layers[0].bias;
  }

  std::vector<Eigen::Map<Vector>> params;
  if (lora) {
    for (auto& l : adapter.layers) {
      params.push_back(flat(l.a));
      params.push_back(flat(l.b));
    }
  } else {
    for (auto& l : layers) {
      params.push_back(flat(l.weight));
      params.push_back(flat(l.bias));
    }
  }
  judge.trainable_parameters = 0;
  for (const auto& p : params) judge.trainable_parameters += static_cast<std::size_t>(p.size());

  auto full_loss = [&] {
    return forward_backward(layers, lora ? &adapter : nullptr, features,
                            lora ? &base_pre : nullptr, labels, config, false)
        .loss;
  };
  judge.epoch_losses.push_back(full_loss());

  Adam adam(config.learning_rate);
  const auto n = static_cast<std::size_t>(features.cols());
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto batch = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(derive_seed(derive_seed(config.seed, topic.topic_id), static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(n, start + batch);
      const Matrix xb = gather_columns(features, order, start, end);
      const Vector yb = gather(labels, order, start, end);
      Matrix pre_b;
      if (lora) pre_b = gather_columns(base_pre, order, start, end);
      const auto g = forward_backward(layers, lora ? &adapter : nullptr, xb,
                                      lora ? &pre_b : nullptr, yb, config, true);
      std::vector<Eigen::Map<const Vector>> grads;
      if (lora) {
        for (std::size_t l = 0; l < g.lora_a.size(); ++l) {
          grads.push_back(flat_const(g.lora_a[l]));
          grads.push_back(flat_const(g.lora_b[l]));
        }
      } else {
        for (std::size_t l = 0; l < g.weight.size(); ++l) {
          grads.push_back(flat_const(g.weight[l]));
          grads.push_back(flat_const(g.bias[l]));
        }
      }
      adam.update(params, grads);
    }
    judge.epoch_losses.push_back(full_loss());
  }

  if (lora) {
    auto& p = adapter.provenance;
    p.seed = config.seed;
    p.train_size = static_cast<int>(n);
    p.train_relevant = static_cast<int>(positives);
    p.loss_weight_relevant = config.loss_weight_relevant;
    p.loss_weight_nonrelevant = config.loss_weight_nonrelevant;
    p.epochs = config.epochs;
    p.batch_size = config.batch_size;
    p.learning_rate = config.learning_rate;
    judge.adapter = std::move(adapter);
  } else {
    ReferenceScorer tuned = base;
    tuned.set_layers(std::move(layers));
    judge.finetuned = std::move(tuned);
  }
  return judge;
}

TrainedJudge train_topic_judge(const ReferenceScorer& base, const Topic& topic,
                               const JudgmentSet& train, const DocumentStore& docs,
                               const TrainConfig& config) {
  config.validate();
  if (config.max_sequence_tokens != base.config().max_sequence_tokens) {
    throw ConfigError("train config token budget differs from the scorer's");
  }
  if (train.empty()) throw Error("empty training set for topic " + topic.topic_id);
  std::vector<std::string_view> texts;
  Vector labels(static_cast<Eigen::Index>(train.size()));
  Eigen::Index i = 0;
  for (const auto& [key, j] : train) {
    if (key.first != topic.topic_id) {
      throw Error("training set for topic " + topic.topic_id + " contains a judgment of topic " +
                  key.first);
    }
    texts.push_back(docs.at(key.second));
    labels(i++) = train.is_relevant(j) ? 1.0 : 0.0;
  }
  const Matrix features = base.featurize_batch(topic.query_text, texts);
  return train_topic_judge_on_features(base, topic, features, labels, config);
}

Prediction predict_relevance(const PointwiseScorer& scorer, const LowRankAdapter& adapter,
                             const Topic& topic, std::string_view doc_text) {
  check_topic(adapter, topic);
  check_attach(scorer, adapter);
  const double s = scorer.score(topic.query_text, doc_text, adapter);
  return {s, s >= kDecisionThreshold};
}

Prediction predict_relevance(const ReferenceScorer& base, const TrainedJudge& judge,
                             const Topic& topic, std::string_view doc_text) {
  check_topic(judge, topic);
  if (judge.mode == TrainMode::lora) return predict_relevance(base, *judge.adapter, topic, doc_text);
  const double s = judge.finetuned->score(topic.query_text, doc_text);
  return {s, s >= kDecisionThreshold};
}

JudgmentSet judge_pool(const PointwiseScorer& scorer, const LowRankAdapter& adapter,
                       const Topic& topic, const std::vector<std::string>& doc_ids,
                       const DocumentStore& docs, int binarization_threshold) {
  check_topic(adapter, topic);
  check_attach(scorer, adapter);
  JudgmentSet out(binarization_threshold);
  const auto ids = unique_sorted(doc_ids);
  std::vector<std::string_view> texts;
  texts.reserve(ids.size());
  for (const auto& id : ids) texts.push_back(docs.at(id));
  const auto scores = scorer.score_batch(topic.query_text, texts, adapter);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out.add_label(topic.topic_id, ids[i], scores[i] >= kDecisionThreshold, JudgmentSource::adapter);
  }
  return out;
}

JudgmentSet judge_pool(const ReferenceScorer& base, const TrainedJudge& judge,
                       const Topic& topic, const std::vector<std::string>& doc_ids,
                       const DocumentStore& docs, int binarization_threshold) {
  check_topic(judge, topic);
  if (judge.mode == TrainMode::lora) {
    return judge_pool(base, *judge.adapter, topic, doc_ids, docs, binarization_threshold);
  }
  JudgmentSet out(binarization_threshold);
  const auto ids = unique_sorted(doc_ids);
  if (ids.empty()) return out;
  std::vector<std::string_view> texts;
  for (const auto& id : ids) texts.push_back(docs.at(id));
  const Vector scores = judge.finetuned->forward_batch(judge.finetuned->featurize_batch(topic.query_text, texts));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out.add_label(topic.topic_id, ids[i], scores(static_cast<Eigen::Index>(i)) >= kDecisionThreshold,
                  JudgmentSource::adapter);
  }
  return out;
}

}  // namespace judgekit
