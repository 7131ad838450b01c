#include "judgekit/lora.hpp"

#include <cmath>
#include <string>

#include "judgekit/errors.hpp"
#include "judgekit/rng.hpp"

namespace judgekit {
namespace {

void check_shapes(const Matrix& w, const LoraLayer& layer) {
  if (layer.a.rows() != layer.b.cols()) {
    throw DimensionError("adapter A has " + std::to_string(layer.a.rows()) +
                         " rows but B has " + std::to_string(layer.b.cols()) + " columns");
  }
  if (layer.a.rows() == 0) throw DimensionError("adapter rank is zero");
  if (w.cols() != layer.a.cols() || w.rows() != layer.b.rows()) {
    throw DimensionError("weight is " + std::to_string(w.rows()) + "x" +
                         std::to_string(w.cols()) + " but adapter expects " +
                         std::to_string(layer.b.rows()) + "x" + std::to_string(layer.a.cols()));
  }
}

}  // namespace

LoraLayer LoraLayer::fresh(int d_out, int d_in, int rank, double alpha, Rng& rng) {
  if (rank < 1 || rank > std::min(d_in, d_out)) {
    throw DimensionError("rank " + std::to_string(rank) + " outside [1, min(" +
                         std::to_string(d_in) + ", " + std::to_string(d_out) + ")]");
  }
  LoraLayer layer;
  layer.alpha = alpha;
  layer.a.resize(rank, d_in);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
  for (Eigen::Index i = 0; i < layer.a.rows(); ++i) {
    for (Eigen::Index j = 0; j < layer.a.cols(); ++j) layer.a(i, j) = rng.uniform(-bound, bound);
  }
  layer.b = Matrix::Zero(d_out, rank);
  return layer;
}

Vector lora_forward(const Matrix& w, const LoraLayer& layer, const Vector& x) {
  check_shapes(w, layer);
  if (x.size() != w.cols()) {
    throw DimensionError("input has " + std::to_string(x.size()) + " entries, weight expects " +
                         std::to_string(w.cols()));
  }
  Vector out = w * x;
  if (layer.alpha != 0.0) out.noalias() += layer.scale() * (layer.b * (layer.a * x));
  return out;
}

Matrix merge_adapter(const Matrix& w, const LoraLayer& layer) {
  check_shapes(w, layer);
  Matrix out = w;
  if (layer.alpha != 0.0) out.noalias() += layer.scale() * (layer.b * layer.a);
  return out;
}

double weighted_mse(std::span<const double> predictions, std::span<const double> labels,
                    double w_pos, double w_neg) {
  if (predictions.size() != labels.size()) {
    throw DimensionError("predictions and labels differ in length");
  }
  if (predictions.empty()) throw Error("weighted_mse of an empty batch");
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double y = labels[i];
    if (y != 0.0 && y != 1.0) throw Error("labels must be 0 or 1");
    const double r = predictions[i] - y;
    sum += (y == 1.0 ? w_pos : w_neg) * r * r;
  }
  return sum / static_cast<double>(predictions.size());
}

}  // namespace judgekit
