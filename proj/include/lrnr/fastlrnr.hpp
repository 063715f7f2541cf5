#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lrnr/hypermodes.hpp"
#include "lrnr/hypernet.hpp"
#include "lrnr/lrnr_core.hpp"
#include "lrnr/numerics.hpp"

namespace lrnr {

/// Multiply-add counter filled in by the instrumented evaluation paths.
struct OpCounter {
  std::uint64_t madds = 0;
};

/// Hidden states z^l at one anchor set, one column per (time, anchor).
Matrix hidden_snapshots(const MetaModel& model, const Matrix& anchors, const Vector& times, std::size_t layer,
                        const HypermodeBasis* projector = nullptr);

struct HiddenBasisLayer {
  Matrix xi;           // M x rhat, orthonormal columns
  Vector singular_values;
  std::vector<std::size_t> indices;  // EIM rows, 0-based
  double condition = 1.0;            // of P^T Xi

  std::size_t rank() const { return xi.cols(); }

  friend bool operator==(const HiddenBasisLayer&, const HiddenBasisLayer&) = default;
};

/// Left singular vectors with sigma_i / sigma_1 >= tol, at most max_rank of
/// them when max_rank > 0. Indices are left empty.
HiddenBasisLayer build_hidden_basis(const Matrix& z, double tol = 1e-8, std::size_t max_rank = 0);

/// Greedy DEIM row selection; ties go to the lowest row.
std::vector<std::size_t> eim_select(const Matrix& xi);

struct FastLayer {
  Matrix u_hat;  // rows x r1: P^T U (full U on the output layer)
  Matrix v_hat;  // inputs x r1: stores Vhat, so Vhat^T z is a transposed product
  Matrix b_hat;  // rows x r2

  friend bool operator==(const FastLayer&, const FastLayer&) = default;
};

struct FastLrnrModel {
  std::vector<FastLayer> layers;
  std::vector<HiddenBasisLayer> hidden;  // one per hidden layer
  Vector output_bias;
  Activation activation = Activation::Relu;
  RankSpec ranks;
  std::size_t full_width = 0;  // M of the source model, for reporting
  Matrix anchors;              // d x A
  HyperNetParams hyper;
  TimeNormalizer normalizer;
  std::optional<Matrix> projector;  // Phi_hat when coefficients are reduced
  std::vector<std::string> warnings;

  std::size_t input_dim() const { return layers.front().v_hat.rows(); }
  std::size_t output_dim() const { return layers.back().u_hat.rows(); }
  std::vector<std::size_t> hidden_ranks() const;
  /// Coefficients fed to the fast path: reduced when a projector is stored.
  CoeffVector coefficients(double t) const;
  void validate() const;

  friend bool operator==(const FastLrnrModel&, const FastLrnrModel&) = default;
};

struct CompressOptions {
  double tol = 1e-8;
  std::size_t max_rank = 0;  // 0: keep every mode above tol
  double warn_condition = 1e10;
};

/// Snapshots, SVD bases, EIM rows and compressed factors for every hidden
/// layer. With a hypermode basis the reduced coefficients drive both the
/// snapshots and later evaluations.
FastLrnrModel compress(const MetaModel& model, const Matrix& anchors, const Vector& times,
                       const CompressOptions& options = {}, const HypermodeBasis* projector = nullptr);

/// Compression with caller-supplied bases and rows.
FastLrnrModel compress_with_basis(const MetaModel& model, std::vector<HiddenBasisLayer> hidden,
                                  const Matrix& anchors, const HypermodeBasis* projector = nullptr,
                                  double warn_condition = 1e10);

/// z = sigma(Uhat diag(s1) Vhat^T z + Bhat s2) per hidden layer and
/// U diag(s1) Vhat^T z + B s2 + b_out at the output layer.
Vector fast_forward(const FastLrnrModel& fast, const CoeffVector& s, std::span<const double> x,
                    OpCounter* ops = nullptr);
Vector fast_forward(const FastLrnrModel& fast, double t, std::span<const double> x, OpCounter* ops = nullptr);

/// Full-width reference paths with the same instrumentation. The dense path
/// multiplies the materialized M x M layer matrices; the factored path uses
/// the rank factors directly.
Vector full_forward_dense(const LrnrFactors& f, const CoeffVector& s, std::span<const double> x,
                          OpCounter* ops = nullptr);
Vector full_forward_factored(const LrnrFactors& f, const CoeffVector& s, std::span<const double> x,
                             OpCounter* ops = nullptr);

struct FastEvalSeries {
  Vector times;
  std::vector<Vector> fast_values;
  std::vector<Vector> full_values;
  double rel_error = 0.0;
  std::uint64_t fast_ops = 0;      // per evaluation
  std::uint64_t full_ops = 0;      // dense path, per evaluation
  std::uint64_t factored_ops = 0;  // factored path, per evaluation
};

/// Evaluates both paths at x over the times. The full model uses the same
/// coefficient source as the fast model.
FastEvalSeries fast_eval_series(const FastLrnrModel& fast, const MetaModel& full, std::span<const double> x,
                                const Vector& times);

struct RankSweepRow {
  std::size_t rank = 0;
  double rel_error = 0.0;
  std::uint64_t fast_ops = 0;
  std::uint64_t full_ops = 0;
};

/// Compresses with hidden ranks capped at 1, 2, ..., max_rank and reports the
/// anchored evaluation error at each cap.
std::vector<RankSweepRow> rank_sweep(const MetaModel& model, const Matrix& anchors, const Vector& times,
                                     std::size_t max_rank, double tol = 1e-8,
                                     const HypermodeBasis* projector = nullptr);

}  // namespace lrnr
