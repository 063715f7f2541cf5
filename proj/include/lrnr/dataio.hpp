#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lrnr/dataset.hpp"
#include "lrnr/fastlrnr.hpp"
#include "lrnr/hypermodes.hpp"
#include "lrnr/hypernet.hpp"
#include "lrnr/training.hpp"

namespace lrnr {

// File layout shared by datasets ("LRNRD 1") and checkpoints ("LRNRC 1"):
//   line 1: magic and version
//   line 2: JSON manifest
//   rest:   payload of little-endian float64 values; manifest offsets count
//           bytes from the start of the payload.

inline constexpr int kDatasetVersion = 1;
inline constexpr int kCheckpointVersion = 1;

void save_dataset(const WaveDataset& ds, const std::string& path);
WaveDataset load_dataset(const std::string& path);

struct Checkpoint {
  MetaModel model;
  std::optional<TrainState> train_state;
  std::string history_path;
  std::string config_json;  // the run configuration, stored verbatim
  std::optional<HypermodeBasis> hypermodes;
  std::optional<FastLrnrModel> fast;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Reads one whitespace-separated text table per snapshot with rows
/// "x_1 .. x_d u_1 .. u_m w" ('#' starts a comment). The weight column is the
/// cell volume of the finest patch covering the point.
WaveDataset ingest_amr_tables(const std::vector<std::pair<double, std::string>>& snapshots,
                              std::size_t spatial_dim, std::size_t output_dim);

/// Writes `bytes` to path through a temporary file and a rename.
void write_file_atomic(const std::string& path, const std::string& bytes);

}  // namespace lrnr
