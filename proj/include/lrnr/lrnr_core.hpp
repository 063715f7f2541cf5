#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lrnr/numerics.hpp"

namespace lrnr {

class Rng;

enum class Activation { Relu, Tanh };

std::string to_string(Activation a);
Activation parse_activation(const std::string& name);

inline double activate(Activation a, double y) {
  if (a == Activation::Relu) return y > 0.0 ? y : 0.0;
  return std::tanh(y);
}

/// Derivative expressed through the pre-activation; the ReLU subgradient at 0 is 0.
inline double activate_derivative(Activation a, double y) {
  if (a == Activation::Relu) return y > 0.0 ? 1.0 : 0.0;
  const double th = std::tanh(y);
  return 1.0 - th * th;
}

/// Per-layer weight ranks r1 and bias ranks r2. Layers are indexed from 0
/// internally; layer L-1 is the output layer.
struct RankSpec {
  std::vector<std::size_t> weight_ranks;
  std::vector<std::size_t> bias_ranks;

  std::size_t depth() const { return weight_ranks.size(); }
  /// n = ||r||_1.
  std::size_t total() const;
  /// Offset of s1 for layer l in the canonical flattening [s1^0, s2^0, s1^1, ...].
  std::size_t weight_offset(std::size_t layer) const;
  std::size_t bias_offset(std::size_t layer) const;
  void validate() const;

  /// Same weight rank and bias rank for every layer; the output layer's bias rank
  /// is output_bias_rank (0 by default, the output bias is then b_out only).
  static RankSpec uniform(std::size_t depth, std::size_t rank, std::size_t output_bias_rank = 0);

  friend bool operator==(const RankSpec&, const RankSpec&) = default;
};

/// Coefficient vector s with its block structure.
class CoeffVector {
 public:
  CoeffVector() = default;
  explicit CoeffVector(RankSpec ranks);
  static CoeffVector unflatten(const RankSpec& ranks, std::span<const double> flat);

  const RankSpec& ranks() const { return ranks_; }
  std::span<double> weight(std::size_t layer);
  std::span<const double> weight(std::size_t layer) const;
  std::span<double> bias(std::size_t layer);
  std::span<const double> bias(std::size_t layer) const;

  const Vector& flat() const { return values_; }
  Vector& flat() { return values_; }
  Vector flatten() const { return values_; }

  friend bool operator==(const CoeffVector&, const CoeffVector&) = default;

 private:
  RankSpec ranks_;
  Vector values_;
};

struct LayerFactors {
  Matrix u;  // M_l x r1
  Matrix v;  // M_{l-1} x r1
  Matrix b;  // M_l x r2 (may have zero columns)

  friend bool operator==(const LayerFactors&, const LayerFactors&) = default;
};

/// The s-independent LRNR parameters.
struct LrnrFactors {
  std::vector<std::size_t> widths;  // M_0 = d, ..., M_L = output dim
  std::vector<LayerFactors> layers;
  Vector output_bias;  // b_out, added at the output layer
  Activation activation = Activation::Relu;

  std::size_t depth() const { return layers.size(); }
  std::size_t input_dim() const { return widths.front(); }
  std::size_t output_dim() const { return widths.back(); }
  /// Largest hidden width.
  std::size_t width() const;
  RankSpec ranks() const;
  void validate() const;

  /// Zero factors with widths [d, M, ..., M, m].
  static LrnrFactors zeros(std::size_t input_dim, std::size_t hidden_width, std::size_t output_dim,
                           const RankSpec& ranks, Activation activation = Activation::Relu);

  friend bool operator==(const LrnrFactors&, const LrnrFactors&) = default;
};

/// Uniform entries scaled so every column has unit expected norm.
LrnrFactors init_factors(std::size_t input_dim, std::size_t hidden_width, std::size_t output_dim,
                         const RankSpec& ranks, Activation activation, Rng& rng);

struct LayerAffine {
  Matrix weight;
  Vector bias;
};

/// W^l(s) = U diag(s1) V^T and b^l(s) = B s2 (+ b_out at the output layer).
LayerAffine assemble_layer(const LrnrFactors& f, const CoeffVector& s, std::size_t layer);

struct ForwardTrace {
  std::vector<Vector> pre;     // y^l for hidden layers
  std::vector<Vector> hidden;  // z^l = sigma(y^l)
  Vector output;               // z^L
};

Vector forward(const LrnrFactors& f, const CoeffVector& s, std::span<const double> x);
ForwardTrace forward_trace(const LrnrFactors& f, const CoeffVector& s, std::span<const double> x);

/// Forward pass over a batch of points stored as columns of a d x P matrix;
/// returns the m x P outputs.
Matrix forward_batch(const LrnrFactors& f, const CoeffVector& s, const Matrix& points);

/// Spatial Jacobian d output / d x (m x d) by forward-mode differentiation.
Matrix forward_jacobian(const LrnrFactors& f, const CoeffVector& s, std::span<const double> x);

/// Gradient of output component `component` with respect to the input at
/// every column of `points`, by a batched reverse sweep; returns d x P.
Matrix input_gradient_batch(const LrnrFactors& f, const CoeffVector& s, const Matrix& points,
                            std::size_t component = 0);

}  // namespace lrnr
