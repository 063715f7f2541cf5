#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lrnr/lrnr_core.hpp"
#include "lrnr/numerics.hpp"

namespace lrnr {

class Rng;

/// Maps problem time onto [0, 1] before it enters the hypernetwork.
struct TimeNormalizer {
  double t0 = 0.0;
  double t1 = 1.0;

  double normalize(double t) const { return (t - t0) / (t1 - t0); }
  bool contains(double t) const { return t >= t0 && t <= t1; }
  void validate() const;

  friend bool operator==(const TimeNormalizer&, const TimeNormalizer&) = default;
};

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// f_hyper: normalized time -> coefficient vector s. The last layer is linear.
struct HyperNetParams {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::Tanh;

  std::size_t depth() const { return layers.size(); }
  std::size_t output_dim() const { return layers.back().weight.rows(); }
  void validate() const;

  friend bool operator==(const HyperNetParams&, const HyperNetParams&) = default;
};

/// Fan-in scaled uniform initialization. The output layer is shaped so that
/// within each coefficient block the i-th initial coefficient scales like
/// decay^i, which starts training close to the decaying regime that the
/// sparsity regularizer rewards.
HyperNetParams init_hypernet(std::size_t width, std::size_t depth, const RankSpec& ranks,
                             Activation activation, Rng& rng, double decay = 0.9);

struct HyperTrace {
  std::vector<Vector> pre;    // pre-activations of every layer
  std::vector<Vector> input;  // input to every layer
  Vector output;
};

/// Raw flattened output for an already-normalized time.
Vector hyper_forward_normalized(const HyperNetParams& p, double tn);
HyperTrace hyper_forward_trace(const HyperNetParams& p, double tn);

CoeffVector hyper_forward(const HyperNetParams& p, const TimeNormalizer& norm,
                          const RankSpec& ranks, double t);

/// LRNR factors plus hypernetwork: the trainable meta-network.
struct MetaModel {
  LrnrFactors factors;
  HyperNetParams hyper;
  TimeNormalizer normalizer;

  RankSpec ranks() const { return factors.ranks(); }
  CoeffVector coefficients(double t) const;
  /// Times outside [t0, t1] are temporal extrapolation.
  bool extrapolates(double t) const { return !normalizer.contains(t); }
  void validate() const;

  friend bool operator==(const MetaModel&, const MetaModel&) = default;
};

struct MetaShape {
  std::size_t input_dim = 1;
  std::size_t output_dim = 1;
  std::size_t width = 64;
  RankSpec ranks;
  Activation activation = Activation::Relu;
  std::size_t hyper_width = 10;
  std::size_t hyper_depth = 3;
  Activation hyper_activation = Activation::Tanh;
};

MetaModel init_meta_model(const MetaShape& shape, const TimeNormalizer& normalizer, Rng& rng);

Vector meta_forward(const MetaModel& model, std::span<const double> x, double t);

}  // namespace lrnr
