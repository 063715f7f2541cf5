#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lrnr/hypernet.hpp"
#include "lrnr/lrnr_core.hpp"
#include "lrnr/numerics.hpp"

namespace lrnr {

/// S = Phi D Psi^T for the coefficient snapshot matrix.
struct HypermodeBasis {
  Matrix phi;              // n x k hypermodes
  Vector singular_values;  // k, nonincreasing
  Matrix psi;              // N x k temporal modes
  std::size_t rbar = 0;
  Vector times;

  /// The leading rbar hypermodes.
  Matrix leading() const { return phi.left_cols(rbar); }
  void validate() const;

  friend bool operator==(const HypermodeBasis&, const HypermodeBasis&) = default;
};

/// Column k holds the flattened hypernetwork output at times[k].
Matrix coeff_snapshots(const MetaModel& model, const Vector& times);

/// Smallest k whose leading singular values hold at least 1 - energy_tol of
/// the squared energy.
std::size_t energy_rank(std::span<const double> singular_values, double energy_tol);

HypermodeBasis compute_hypermodes(const Matrix& snapshots, double energy_tol = 1e-8, Vector times = {});

/// Phi_k D_k Psi_k^T.
Matrix low_rank_reconstruction(const HypermodeBasis& basis, std::size_t k);

struct TruncationReport {
  std::vector<std::size_t> weight_ranks;  // original
  std::vector<std::size_t> bias_ranks;
  std::vector<std::size_t> weight_kept;
  std::vector<std::size_t> bias_kept;
  std::size_t rbar = 0;
  double threshold = 5e-5;
};

/// After scaling S to unit max-abs entry, coefficient i of a block is kept
/// when max_t |S(i, t)| >= threshold.
TruncationReport truncate_coeffs(const Matrix& snapshots, const RankSpec& ranks, double threshold = 5e-5,
                                 double energy_tol = 1e-8);

/// Phi_hat Phi_hat^T v.
Vector project_onto_modes(const HypermodeBasis& basis, std::span<const double> v);

CoeffVector reduced_hyper_forward(const MetaModel& model, const HypermodeBasis& basis, double t);

struct HypermodeCoords {
  Vector c;
  Vector dc;  // empty unless requested
};

/// c(t) = Phi_hat^T s(t); c'(t) by a central difference of step (T - t0)/1000.
HypermodeCoords hypermode_coords(const MetaModel& model, const HypermodeBasis& basis, double t,
                                 bool with_derivative = true, double step = 0.0);

/// A fixed coefficient vector bound to a copy of the factors.
struct FieldSampler {
  LrnrFactors factors;
  CoeffVector coefficients;

  Vector operator()(std::span<const double> x) const { return forward(factors, coefficients, x); }
  Matrix batch(const Matrix& points) const { return forward_batch(factors, coefficients, points); }
};

struct PerturbOptions {
  /// Scale eta by ||c(t)||.
  bool normalized = false;
};

/// Coefficients Phi_hat c(t) + eta phi_i; mode is 0-based and must be < rbar.
CoeffVector tangent_coefficients(const MetaModel& model, const HypermodeBasis& basis, double t,
                                 std::size_t mode, double eta, const PerturbOptions& opts = {});
/// Coefficients Phi_hat c(t) + eta phi_i c_i'(t).
CoeffVector extrapolation_coefficients(const MetaModel& model, const HypermodeBasis& basis, double t,
                                       std::size_t mode, double eta, const PerturbOptions& opts = {});

FieldSampler perturb_tangent(const MetaModel& model, const HypermodeBasis& basis, double t, std::size_t mode,
                             double eta, const PerturbOptions& opts = {});
FieldSampler extrapolate_hypermode(const MetaModel& model, const HypermodeBasis& basis, double t,
                                   std::size_t mode, double eta, const PerturbOptions& opts = {});

struct TemporalFit {
  std::vector<ChebyshevFit> modes;  // one per leading temporal mode
  double max_residual = 0.0;
  double t_min = 0.0;
  double t_max = 1.0;
};

/// Chebyshev fits of the first rbar columns of Psi over times mapped to [-1, 1].
TemporalFit fit_temporal_modes(const HypermodeBasis& basis, std::size_t degree);

/// Layer weights and bias from hypermode coordinates through the third-order
/// tensor T(:, :, i) = U diag(phi_i restricted to s1) V^T.
LayerAffine assemble_layer_from_coords(const LrnrFactors& f, const HypermodeBasis& basis,
                                       std::span<const double> c, std::size_t layer);

}  // namespace lrnr
