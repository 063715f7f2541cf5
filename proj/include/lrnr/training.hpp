#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lrnr/dataset.hpp"
#include "lrnr/hypernet.hpp"
#include "lrnr/lrnr_core.hpp"
#include "lrnr/rng.hpp"

namespace lrnr {

struct TrainConfig {
  double lambda_sparse = 0.0;
  double lambda_ortho = 1e-2;
  double gamma = 1.0;
  double w0 = 0.0;             // initial mollifier radius
  std::size_t n_epc = 1000;    // allocated epochs (drives the mollifier schedule)
  double tau = 5e-4;           // misfit-switch threshold
  double lr0 = 1e-3;
  double plateau_factor = 0.98;
  std::size_t plateau_patience = 10;
  double plateau_threshold = 1e-3;
  std::size_t batch = 16;
  std::uint64_t seed = 0;
  /// Stop early once the relative l2 error on the unmollified data drops
  /// below this value (0 disables). Checked every check_every epochs.
  double target_rel_l2 = 0.0;
  std::size_t check_every = 50;

  void validate() const;
};

/// Gradients with the same shapes as the trainable parameters.
struct GradientBundle {
  LrnrFactors factors;
  HyperNetParams hyper;

  static GradientBundle zeros_like(const MetaModel& model);
};

/// Named views of every trainable array in a fixed order.
struct ParamBlock {
  std::string name;
  std::span<double> values;
};
std::vector<ParamBlock> parameter_blocks(MetaModel& model);
std::vector<ParamBlock> parameter_blocks(GradientBundle& grads);
std::size_t parameter_count(const MetaModel& model);

struct AdamState {
  Vector m;
  Vector v;
  std::uint64_t step = 0;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

struct PlateauState {
  double best = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs = 0;

  friend bool operator==(const PlateauState&, const PlateauState&) = default;
};

struct PlateauConfig {
  double factor = 0.98;
  std::size_t patience = 10;
  double threshold = 1e-3;
};

struct TrainState {
  std::size_t epoch = 0;  // epochs completed
  AdamState adam;
  double lr = 1e-3;
  int alpha = 0;
  PlateauState plateau;
  double radius = 0.0;
  Rng::State rng;

  static TrainState initial(const MetaModel& model, const TrainConfig& config);

  friend bool operator==(const TrainState&, const TrainState&) = default;
};

// ---------------------------------------------------------------- losses

/// ||yhat - y||_q^q / ||y||_q^q under the weighted norm sum_j w_j |y_j|^q.
/// Values are m x P, weights have length P.
double misfit(const Matrix& yhat, const Matrix& y, std::span<const double> weights, int q);
double misfit_blend(const Matrix& yhat, const Matrix& y, std::span<const double> weights, int alpha);

double reg_sparse(const CoeffVector& s, double gamma);
/// Subgradient of reg_sparse; the kink at zero takes 0.
Vector reg_sparse_gradient(const CoeffVector& s, double gamma);

double reg_ortho(const LrnrFactors& f);
/// Adds scale * d reg_ortho / d factors into grads.
void add_reg_ortho_gradient(const LrnrFactors& f, double scale, LrnrFactors& grads);

struct BatchItem {
  double t = 0.0;
  const Snapshot* snapshot = nullptr;
};

struct LossBreakdown {
  double misfit = 0.0;      // batch mean
  double reg_sparse = 0.0;  // batch mean
  double reg_ortho = 0.0;
  double total = 0.0;
};

LossBreakdown total_loss(const MetaModel& model, std::span<const BatchItem> batch,
                         const TrainConfig& config, int alpha);

struct BackpropResult {
  LossBreakdown loss;
  GradientBundle grads;
};

BackpropResult backprop(const MetaModel& model, std::span<const BatchItem> batch,
                        const TrainConfig& config, int alpha);

// ---------------------------------------------------------------- optimizer

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr);
void adam_step(MetaModel& model, GradientBundle& grads, AdamState& state, double lr);

/// Reduce-on-plateau in relative mode: an epoch counts as an improvement when
/// loss < best * (1 - threshold). After `patience` consecutive non-improving
/// epochs the rate is multiplied by `factor` and the counter restarts.
double plateau_lr(PlateauState& state, double epoch_loss, double lr, const PlateauConfig& config = {});

double mollifier_radius(std::size_t epoch, double w0, std::size_t n_epc);

// ---------------------------------------------------------------- loop

struct HistoryRow {
  std::size_t epoch = 0;
  double misfit = 0.0;
  double reg_sparse = 0.0;
  double reg_ortho = 0.0;
  double total = 0.0;
  int alpha = 0;
  double lr = 0.0;
  double radius = 0.0;

  friend bool operator==(const HistoryRow&, const HistoryRow&) = default;
};

std::string history_csv_header();
std::string history_csv_row(const HistoryRow& row);
void write_history_csv(const std::vector<HistoryRow>& rows, const std::string& path);

struct TrainOptions {
  /// Stop after this many epochs in this call (0 = run to n_epc).
  std::size_t stop_after = 0;
  std::function<void(const HistoryRow&)> on_epoch;
  /// Called with the last good model/state before a numeric failure propagates.
  std::function<void(const MetaModel&, const TrainState&)> on_abort;
};

struct TrainResult {
  MetaModel model;
  TrainState state;
  std::vector<HistoryRow> history;
  double rel_l2 = 0.0;  // against the unmollified data
  bool reached_target = false;
};

/// Relative l2 error sqrt(sum w |yhat - y|^2 / sum w |y|^2) over every snapshot.
double relative_l2_error(const MetaModel& model, const WaveDataset& ds);

TrainResult train_loop(MetaModel model, std::shared_ptr<const WaveDataset> data,
                       const TrainConfig& config, const TrainState* resume = nullptr,
                       const TrainOptions& options = {});

// ---------------------------------------------------------------- audit

struct GradcheckReport {
  double max_rel_error = 0.0;
  std::string worst_block;
  std::size_t checked = 0;
};

/// Compares backprop against central differences at every parameter.
/// The error of one entry is |g - g_fd| / max(|g| + |g_fd|, floor * max|g|);
/// the floor keeps exactly-zero entries from comparing against pure rounding
/// noise of the differenced loss.
GradcheckReport gradcheck(const MetaModel& model, std::span<const BatchItem> batch,
                          const TrainConfig& config, int alpha, double h = 1e-6,
                          double floor = 1e-3);

/// Removes points whose hidden ReLU pre-activations come within `margin` of
/// the kink at time t, so finite differences stay on one side of it.
Snapshot drop_near_kinks(const MetaModel& model, double t, const Snapshot& snap, double margin);

}  // namespace lrnr
