#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "lrnr/numerics.hpp"

namespace lrnr {

class Rng;

enum class GridKind { Uniform, Adaptive };

/// Cell-centred tensor grid: point i along axis a sits at
/// origin[a] + (i + 1/2) * spacing[a]; the first axis varies fastest.
struct UniformGrid {
  Vector origin;
  Vector spacing;
  std::vector<std::size_t> shape;
  bool periodic = true;

  std::size_t point_count() const;
  double cell_volume() const;
  double domain_volume() const;

  friend bool operator==(const UniformGrid&, const UniformGrid&) = default;
};

struct Snapshot {
  Matrix points;   // d x P
  Matrix values;   // m x P
  Vector weights;  // P quadrature weights

  std::size_t size() const { return weights.size(); }

  friend bool operator==(const Snapshot&, const Snapshot&) = default;
};

struct WaveDataset {
  std::size_t spatial_dim = 1;
  std::size_t output_dim = 1;
  GridKind grid_kind = GridKind::Uniform;
  Vector times;
  std::vector<Snapshot> snapshots;
  std::optional<UniformGrid> grid;  // present iff grid_kind == Uniform

  std::size_t size() const { return snapshots.size(); }
  void validate() const;

  friend bool operator==(const WaveDataset&, const WaveDataset&) = default;
};

/// Points of a uniform grid as a d x P matrix.
Matrix grid_points(const UniformGrid& grid);

/// Snapshot on a uniform grid with cell-volume weights.
Snapshot sample_on_grid(const UniformGrid& grid, std::size_t output_dim,
                        const std::function<double(std::span<const double>)>& field);

/// Replaces values by their box-mollified version of radius w. Radius 0
/// returns the same object.
std::shared_ptr<const WaveDataset> mollified_view(std::shared_ptr<const WaveDataset> ds, double w);

/// Snapshot indices of one epoch, split into batches of the given size (the
/// last batch may be shorter). Uniform without replacement within an epoch.
std::vector<std::vector<std::size_t>> sample_batch(std::size_t snapshot_count, std::size_t batch,
                                                   Rng& rng);

}  // namespace lrnr
