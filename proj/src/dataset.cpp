#include "lrnr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "lrnr/errors.hpp"
#include "lrnr/rng.hpp"

namespace lrnr {

std::size_t UniformGrid::point_count() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

double UniformGrid::cell_volume() const {
  double v = 1.0;
  for (double h : spacing) v *= h;
  return v;
}

double UniformGrid::domain_volume() const {
  double v = 1.0;
  for (std::size_t a = 0; a < shape.size(); ++a) v *= spacing[a] * static_cast<double>(shape[a]);
  return v;
}

void WaveDataset::validate() const {
  if (snapshots.empty()) throw InvalidInput("dataset: no snapshots");
  if (spatial_dim < 1 || output_dim < 1) throw InvalidInput("dataset: dimensions must be >= 1");
  if (times.size() != snapshots.size()) throw Error(ErrorKind::ShapeMismatch, "dataset: times/snapshots count mismatch");
  if (!all_finite(times)) throw InvalidInput("dataset: non-finite time");
  if (grid_kind == GridKind::Uniform) {
    if (!grid) throw InvalidInput("dataset: uniform dataset without grid description");
    if (grid->shape.size() != spatial_dim || grid->spacing.size() != spatial_dim ||
        grid->origin.size() != spatial_dim)
      throw Error(ErrorKind::ShapeMismatch, "dataset: grid rank differs from spatial dimension");
    for (double h : grid->spacing)
      if (!(h > 0.0)) throw InvalidInput("dataset: grid spacing must be positive");
  }
  for (std::size_t k = 0; k < snapshots.size(); ++k) {
    const auto& s = snapshots[k];
    const std::size_t p = s.weights.size();
    if (s.points.rows() != spatial_dim || s.points.cols() != p || s.values.rows() != output_dim ||
        s.values.cols() != p) {
      std::ostringstream msg;
      msg << "dataset: snapshot " << k << " has inconsistent shapes";
      throw Error(ErrorKind::ShapeMismatch, msg.str());
    }
    if (grid && p != grid->point_count())
      throw Error(ErrorKind::ShapeMismatch, "dataset: snapshot size differs from grid point count");
    for (double w : s.weights)
      if (!(w > 0.0) || !std::isfinite(w)) throw InvalidInput("dataset: quadrature weights must be positive");
    if (!s.points.all_finite() || !s.values.all_finite()) throw InvalidInput("dataset: non-finite entries");
  }
}

Matrix grid_points(const UniformGrid& grid) {
  const std::size_t d = grid.shape.size();
  const std::size_t n = grid.point_count();
  Matrix pts(d, n);
  for (std::size_t p = 0; p < n; ++p) {
    std::size_t rem = p;
    for (std::size_t a = 0; a < d; ++a) {
      const std::size_t i = rem % grid.shape[a];
      rem /= grid.shape[a];
      pts(a, p) = grid.origin[a] + (static_cast<double>(i) + 0.5) * grid.spacing[a];
    }
  }
  return pts;
}

Snapshot sample_on_grid(const UniformGrid& grid, std::size_t output_dim,
                        const std::function<double(std::span<const double>)>& field) {
  if (output_dim != 1) throw InvalidInput("sample_on_grid: scalar fields only");
  Snapshot s;
  s.points = grid_points(grid);
  const std::size_t n = s.points.cols();
  s.values = Matrix(1, n);
  s.weights.assign(n, grid.cell_volume());
  for (std::size_t p = 0; p < n; ++p) s.values(0, p) = field(s.points.col(p));
  return s;
}

std::shared_ptr<const WaveDataset> mollified_view(std::shared_ptr<const WaveDataset> ds, double w) {
  if (!ds) throw InvalidInput("mollified_view: null dataset");
  if (!(w >= 0.0)) throw InvalidInput("mollified_view: radius must be >= 0");
  if (w == 0.0) return ds;
  if (ds->grid_kind != GridKind::Uniform || !ds->grid)
    throw UnsupportedOperation("mollification is only defined on uniform-grid datasets");
  const UniformGrid& g = *ds->grid;
  const BoundaryRule rule = g.periodic ? BoundaryRule::Periodic : BoundaryRule::ConstantExtension;
  auto out = std::make_shared<WaveDataset>(*ds);
  for (auto& snap : out->snapshots) {
    for (std::size_t c = 0; c < snap.values.rows(); ++c) {
      auto row = snap.values.row(c);
      Vector smoothed;
      if (g.shape.size() == 1) {
        smoothed = box_convolve(row, g.spacing[0], w, rule);
      } else if (g.shape.size() == 2) {
        Matrix grid_values(g.shape[1], g.shape[0]);
        std::copy(row.begin(), row.end(), grid_values.data());
        const Matrix m = box_convolve_2d(grid_values, g.spacing[0], g.spacing[1], w, rule);
        smoothed.assign(m.values().begin(), m.values().end());
      } else {
        throw UnsupportedOperation("mollification supports 1d and 2d grids only");
      }
      std::copy(smoothed.begin(), smoothed.end(), row.begin());
    }
  }
  return out;
}

std::vector<std::vector<std::size_t>> sample_batch(std::size_t snapshot_count, std::size_t batch, Rng& rng) {
  if (batch < 1 || batch > snapshot_count) throw InvalidInput("sample_batch: require 1 <= batch <= N");
  std::vector<std::size_t> perm(snapshot_count);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(perm));
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < snapshot_count; i += batch)
    out.emplace_back(perm.begin() + i, perm.begin() + std::min(snapshot_count, i + batch));
  return out;
}

}  // namespace lrnr
