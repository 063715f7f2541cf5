#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lrnr/dataset.hpp"
#include "lrnr/hypernet.hpp"
#include "lrnr/training.hpp"

namespace lrnr {

enum class ProblemKind { Advection1d, Wave1d, Wave2dPlanar, Burgers1dRiemann };

ProblemKind parse_problem_kind(const std::string& name);
std::string to_string(ProblemKind kind);

/// Parameters of the analytic data generators.
struct ProblemSpec {
  ProblemKind kind = ProblemKind::Advection1d;
  std::size_t cells = 0;  // per axis; 0 picks 128 (1d) or 64 (2d)
  std::size_t n_times = 81;
  double t0 = 0.0;
  double t1 = 1.0;
  double lo = -1.0;
  double hi = 1.0;
  double speed = 0.5;  // advection velocity or wave speed c
  std::string profile = "gaussian";
  double center = -0.4;
  double width = 0.1;
  double height = 1.0;
  std::size_t atoms = 1;  // wave problems: atoms per part
  std::uint64_t seed = 0;
  double u_left = 1.0;
  double u_right = 0.0;
  double x0 = 0.0;

  std::size_t spatial_dim() const { return kind == ProblemKind::Wave2dPlanar ? 2 : 1; }
  std::size_t resolved_cells() const;
};

WaveDataset generate_problem(const ProblemSpec& spec);

struct GradcheckSpec {
  double h = 1e-6;
  double floor = 1e-3;
  double margin = 1e-4;
  double tolerance = 1e-6;
  std::size_t snapshots = 2;
};

/// Everything a run needs. Model fields follow the usual hyperparameter
/// table names: M, r, L, M_hyper, L_hyper.
struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t M = 64;
  std::size_t L = 3;
  RankSpec ranks = RankSpec::uniform(3, 8);
  Activation activation = Activation::Relu;
  std::size_t M_hyper = 10;
  std::size_t L_hyper = 3;
  Activation hyper_activation = Activation::Tanh;
  TrainConfig train;
  ProblemSpec problem;
  GradcheckSpec gradcheck;
  std::string data_path;
  std::string checkpoint_path;
  std::string history_path;

  MetaShape shape(std::size_t input_dim, std::size_t output_dim) const;
};

/// Strict parse: unknown keys and wrong types are ConfigError.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string to_json(const RunConfig& config);

/// The small meta-network used by the gradient audit when no config is given.
RunConfig small_gradcheck_config();

/// Runs one command line; returns the process exit code.
int run_cli(int argc, const char* const* argv);

}  // namespace lrnr
