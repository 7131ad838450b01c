#pragma once

#include <Eigen/Dense>
#include <span>

namespace judgekit {

class Rng;

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// One adapted sublayer: delta W = (alpha / rank) * B * A, with
// A of shape (rank x d_in) and B of shape (d_out x rank).
struct LoraLayer {
  Matrix a;
  Matrix b;
  double alpha = 0.0;

  int rank() const { return static_cast<int>(a.rows()); }
  int d_in() const { return static_cast<int>(a.cols()); }
  int d_out() const { return static_cast<int>(b.rows()); }
  double scale() const { return alpha / static_cast<double>(rank()); }

  // A uniform in +-1/sqrt(d_in), B zero: the delta starts at exactly zero.
  static LoraLayer fresh(int d_out, int d_in, int rank, double alpha, Rng& rng);
};

// W x + (alpha / r) B (A x)
Vector lora_forward(const Matrix& w, const LoraLayer& layer, const Vector& x);

// W + (alpha / r) B A
Matrix merge_adapter(const Matrix& w, const LoraLayer& layer);

// mean_i w(y_i) (p_i - y_i)^2  with w(1) = w_pos, w(0) = w_neg.
double weighted_mse(std::span<const double> predictions, std::span<const double> labels,
                    double w_pos, double w_neg);

}  // namespace judgekit
