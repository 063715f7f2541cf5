#include "lrnr/hypermodes.hpp"

#include <algorithm>
#include <cmath>

#include "lrnr/errors.hpp"

namespace lrnr {

void HypermodeBasis::validate() const {
  const std::size_t k = singular_values.size();
  if (phi.cols() != k || psi.cols() != k) throw InvalidInput("HypermodeBasis: inconsistent mode counts");
  if (rbar > k) throw InvalidInput("HypermodeBasis: rbar exceeds the number of modes");
  if (!times.empty() && times.size() != psi.rows()) throw InvalidInput("HypermodeBasis: times/psi mismatch");
  for (std::size_t i = 1; i < k; ++i)
    if (singular_values[i] > singular_values[i - 1]) throw InvalidInput("HypermodeBasis: singular values not sorted");
}

Matrix coeff_snapshots(const MetaModel& model, const Vector& times) {
  if (times.size() < 2) throw InvalidInput("coeff_snapshots: need at least two times");
  const std::size_t n = model.ranks().total();
  Matrix s(n, times.size());
  for (std::size_t k = 0; k < times.size(); ++k)
    s.set_col(k, hyper_forward_normalized(model.hyper, model.normalizer.normalize(times[k])));
  return s;
}

std::size_t energy_rank(std::span<const double> sv, double energy_tol) {
  double total = 0.0;
  for (double s : sv) total += s * s;
  if (total == 0.0) return 0;
  double tail = total;
  for (std::size_t k = 0; k < sv.size(); ++k) {
    tail -= sv[k] * sv[k];
    if (tail <= energy_tol * total) return k + 1;
  }
  return sv.size();
}

HypermodeBasis compute_hypermodes(const Matrix& snapshots, double energy_tol, Vector times) {
  if (!(energy_tol >= 0.0)) throw InvalidInput("compute_hypermodes: energy_tol must be >= 0");
  if (!times.empty() && times.size() != snapshots.cols())
    throw InvalidInput("compute_hypermodes: times do not match snapshot columns");
  SvdResult svd = thin_svd(snapshots);
  HypermodeBasis b;
  b.phi = std::move(svd.left);
  b.singular_values = std::move(svd.singular_values);
  b.psi = std::move(svd.right);
  b.rbar = energy_rank(b.singular_values, energy_tol);
  b.times = std::move(times);
  return b;
}

Matrix low_rank_reconstruction(const HypermodeBasis& basis, std::size_t k) {
  if (k > basis.singular_values.size()) throw InvalidInput("low_rank_reconstruction: rank too large");
  const Vector d(basis.singular_values.begin(), basis.singular_values.begin() + static_cast<std::ptrdiff_t>(k));
  return scaled_outer_sum(basis.phi.left_cols(k), d, basis.psi.left_cols(k));
}

TruncationReport truncate_coeffs(const Matrix& snapshots, const RankSpec& ranks, double threshold,
                                 double energy_tol) {
  if (snapshots.rows() != ranks.total()) throw InvalidInput("truncate_coeffs: snapshot rows differ from ||r||_1");
  const double scale = max_abs(snapshots.values());
  if (!(scale > 0.0)) throw InvalidInput("truncate_coeffs: snapshot matrix is zero");
  TruncationReport rep;
  rep.threshold = threshold;
  rep.weight_ranks = ranks.weight_ranks;
  rep.bias_ranks = ranks.bias_ranks;
  auto kept = [&](std::size_t off, std::size_t len) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < len; ++i)
      if (max_abs(snapshots.row(off + i)) / scale >= threshold) ++count;
    return count;
  };
  for (std::size_t l = 0; l < ranks.depth(); ++l) {
    rep.weight_kept.push_back(kept(ranks.weight_offset(l), ranks.weight_ranks[l]));
    rep.bias_kept.push_back(kept(ranks.bias_offset(l), ranks.bias_ranks[l]));
  }
  rep.rbar = energy_rank(thin_svd(snapshots).singular_values, energy_tol);
  return rep;
}

namespace {

void require_modes(const HypermodeBasis& basis, std::size_t n) {
  if (basis.rbar < 1) throw InvalidInput("hypermode basis has no retained modes");
  if (basis.phi.rows() != n) throw InvalidInput("hypermode basis does not match the coefficient dimension");
}

Vector coords_of(const HypermodeBasis& basis, std::span<const double> s) {
  Vector c(basis.rbar, 0.0);
  for (std::size_t i = 0; i < basis.phi.rows(); ++i) {
    const auto row = basis.phi.row(i);
    for (std::size_t k = 0; k < basis.rbar; ++k) c[k] += row[k] * s[i];
  }
  return c;
}

Vector expand(const HypermodeBasis& basis, std::span<const double> c) {
  Vector v(basis.phi.rows(), 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto row = basis.phi.row(i);
    double acc = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) acc += row[k] * c[k];
    v[i] = acc;
  }
  return v;
}

}  // namespace

Vector project_onto_modes(const HypermodeBasis& basis, std::span<const double> v) {
  require_modes(basis, v.size());
  const Vector c = coords_of(basis, v);
  return expand(basis, c);
}

CoeffVector reduced_hyper_forward(const MetaModel& model, const HypermodeBasis& basis, double t) {
  const CoeffVector s = model.coefficients(t);
  return CoeffVector::unflatten(s.ranks(), project_onto_modes(basis, s.flat()));
}

HypermodeCoords hypermode_coords(const MetaModel& model, const HypermodeBasis& basis, double t,
                                 bool with_derivative, double step) {
  require_modes(basis, model.ranks().total());
  HypermodeCoords out;
  out.c = coords_of(basis, model.coefficients(t).flat());
  if (with_derivative) {
    const double h = step > 0.0 ? step : (model.normalizer.t1 - model.normalizer.t0) / 1000.0;
    const Vector cp = coords_of(basis, model.coefficients(t + h).flat());
    const Vector cm = coords_of(basis, model.coefficients(t - h).flat());
    out.dc.resize(out.c.size());
    for (std::size_t k = 0; k < out.c.size(); ++k) out.dc[k] = (cp[k] - cm[k]) / (2.0 * h);
  }
  return out;
}

namespace {

CoeffVector shifted(const MetaModel& model, const HypermodeBasis& basis, double t, std::size_t mode, double eta,
                    bool extrapolate, const PerturbOptions& opts) {
  require_modes(basis, model.ranks().total());
  if (mode >= basis.rbar) throw InvalidInput("hypermode index exceeds the retained rank rbar");
  const HypermodeCoords hc = hypermode_coords(model, basis, t, extrapolate);
  double scale = eta;
  if (opts.normalized) scale *= norm2(hc.c);
  if (extrapolate) scale *= hc.dc[mode];
  Vector s = expand(basis, hc.c);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] += scale * basis.phi(i, mode);
  return CoeffVector::unflatten(model.ranks(), s);
}

}  // namespace

CoeffVector tangent_coefficients(const MetaModel& model, const HypermodeBasis& basis, double t, std::size_t mode,
                                 double eta, const PerturbOptions& opts) {
  return shifted(model, basis, t, mode, eta, false, opts);
}

CoeffVector extrapolation_coefficients(const MetaModel& model, const HypermodeBasis& basis, double t,
                                       std::size_t mode, double eta, const PerturbOptions& opts) {
  return shifted(model, basis, t, mode, eta, true, opts);
}

FieldSampler perturb_tangent(const MetaModel& model, const HypermodeBasis& basis, double t, std::size_t mode,
                             double eta, const PerturbOptions& opts) {
  return {model.factors, tangent_coefficients(model, basis, t, mode, eta, opts)};
}

FieldSampler extrapolate_hypermode(const MetaModel& model, const HypermodeBasis& basis, double t,
                                   std::size_t mode, double eta, const PerturbOptions& opts) {
  return {model.factors, extrapolation_coefficients(model, basis, t, mode, eta, opts)};
}

TemporalFit fit_temporal_modes(const HypermodeBasis& basis, std::size_t degree) {
  if (basis.times.size() != basis.psi.rows()) throw InvalidInput("fit_temporal_modes: basis carries no sample times");
  TemporalFit fit;
  fit.t_min = *std::min_element(basis.times.begin(), basis.times.end());
  fit.t_max = *std::max_element(basis.times.begin(), basis.times.end());
  if (!(fit.t_max > fit.t_min)) throw InvalidInput("fit_temporal_modes: degenerate time range");
  Vector tau(basis.times.size());
  for (std::size_t k = 0; k < tau.size(); ++k)
    tau[k] = 2.0 * (basis.times[k] - fit.t_min) / (fit.t_max - fit.t_min) - 1.0;
  for (std::size_t i = 0; i < basis.rbar; ++i) {
    fit.modes.push_back(poly_fit(tau, basis.psi.col(i), degree));
    fit.max_residual = std::max(fit.max_residual, fit.modes.back().max_residual);
  }
  return fit;
}

LayerAffine assemble_layer_from_coords(const LrnrFactors& f, const HypermodeBasis& basis,
                                       std::span<const double> c, std::size_t layer) {
  const RankSpec ranks = f.ranks();
  require_modes(basis, ranks.total());
  if (c.size() != basis.rbar) throw InvalidInput("assemble_layer_from_coords: coordinate length differs from rbar");
  if (layer >= f.depth()) throw InvalidInput("assemble_layer_from_coords: layer index out of range");
  const auto& lf = f.layers[layer];
  const std::size_t off1 = ranks.weight_offset(layer), off2 = ranks.bias_offset(layer);
  LayerAffine out{Matrix(lf.u.rows(), lf.v.rows()), Vector(lf.u.rows(), 0.0)};
  Vector d(ranks.weight_ranks[layer]), e(ranks.bias_ranks[layer]);
  for (std::size_t i = 0; i < basis.rbar; ++i) {
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = basis.phi(off1 + k, i);
    Matrix slice = scaled_outer_sum(lf.u, d, lf.v);
    slice *= c[i];
    out.weight += slice;
    if (!e.empty()) {
      for (std::size_t k = 0; k < e.size(); ++k) e[k] = basis.phi(off2 + k, i);
      const Vector bias = matvec(lf.b, e);
      for (std::size_t r = 0; r < bias.size(); ++r) out.bias[r] += c[i] * bias[r];
    }
  }
  if (layer + 1 == f.depth())
    for (std::size_t r = 0; r < out.bias.size(); ++r) out.bias[r] += f.output_bias[r];
  return out;
}

}  // namespace lrnr
