#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lrnr/dataset.hpp"
#include "lrnr/lrnr_core.hpp"
#include "lrnr/numerics.hpp"

namespace lrnr {

class Rng;

/// One ridge feature a * sigma(w . x + b) with a unit direction w.
struct PlanarAtom {
  double a = 0.0;
  Vector w;
  double b = 0.0;

  friend bool operator==(const PlanarAtom&, const PlanarAtom&) = default;
};

/// Initial data of the wave equation as ridge sums: the displacement is
/// sum a_i relu(w_i . x + b_i) over value atoms and the velocity is
/// sum a_i H(w_i . x + b_i) over velocity atoms (H the unit step).
struct PlanarAtomSet {
  std::size_t dim = 1;
  std::vector<PlanarAtom> value_atoms;
  std::vector<PlanarAtom> velocity_atoms;
  double c = 1.0;

  void validate() const;

  friend bool operator==(const PlanarAtomSet&, const PlanarAtomSet&) = default;
};

using Profile = std::function<double(double)>;

double dalembert_1d(const Profile& f, const Profile& g, double c, double x, double t);

double planar_wave_solution(const PlanarAtomSet& atoms, std::span<const double> x, double t);
/// Spatial gradient (a.e.; the step is taken as 0 at the kink).
Vector planar_wave_gradient(const PlanarAtomSet& atoms, std::span<const double> x, double t);
double planar_wave_time_derivative(const PlanarAtomSet& atoms, std::span<const double> x, double t);

/// A fixed LRNR together with its closed-form coefficient rule s(t).
struct ExplicitLrnr {
  LrnrFactors factors;
  std::function<CoeffVector(double)> coefficients;

  Vector operator()(std::span<const double> x, double t) const;
};

/// Depth-2 ReLU LRNR of rank (d, 2; 1, 0) reproducing planar_wave_solution.
/// Every atom contributes the two rows w . x + b -/+ c t; s_2^1(t) = (1, t).
ExplicitLrnr build_wave_lrnr(const PlanarAtomSet& atoms);

/// sum a_i relu(w_i . x + b_i - (w_i . v) t): the transported ridge sum.
double planar_advection_solution(const std::vector<PlanarAtom>& atoms, std::span<const double> velocity,
                                 std::span<const double> x, double t);
Vector planar_advection_gradient(const std::vector<PlanarAtom>& atoms, std::span<const double> velocity,
                                 std::span<const double> x, double t);
/// Same construction for advection with one hidden row per atom and
/// B^1 = [b | -(w . v)].
ExplicitLrnr build_advection_lrnr(std::size_t dim, const std::vector<PlanarAtom>& atoms,
                                  std::span<const double> velocity);

enum class SamplingScheme { Iid, Stratified };

/// Maurey sampling of m atoms from a finite mixture: atom i is drawn with
/// probability |a_i| / ||a||_1 and carries amplitude sign(a_i) ||a||_1 / m.
/// The stratified scheme orders the atoms along a space-filling curve in
/// (direction, offset) and draws one systematic sample per stratum of the
/// cumulative weight.
std::vector<PlanarAtom> maurey_sample(const std::vector<PlanarAtom>& target, std::size_t dim, std::size_t m,
                                      Rng& rng, SamplingScheme scheme = SamplingScheme::Iid);
PlanarAtomSet maurey_sample(const PlanarAtomSet& target, std::size_t m_value, std::size_t m_velocity, Rng& rng,
                            SamplingScheme scheme = SamplingScheme::Iid);

/// Index of (x, y) in [0, 2^order)^2 along the Hilbert curve.
std::uint64_t hilbert_index(unsigned order, std::uint64_t x, std::uint64_t y);

/// Smooth reference mixture of `count` atoms per part on [-1, 1]^dim.
PlanarAtomSet reference_mixture(std::size_t dim, std::size_t count, Rng& rng, double c = 1.0);

double advection_exact(const std::function<double(std::span<const double>)>& u0, std::span<const double> a,
                       std::span<const double> x, double t);

struct RiemannSpec {
  double u_left = 1.0;
  double u_right = 0.0;
  double x0 = 0.0;
};

/// Entropy solution of u_t + (u^2/2)_x = 0 with a single jump at x0.
double burgers_riemann(const RiemannSpec& spec, double x, double t);

/// Energy of the planar solution over the ball of radius r0 - c t around
/// `center`, by midpoint quadrature with n cells per axis.
double wave_energy(const PlanarAtomSet& atoms, std::span<const double> center, double r0, double t,
                   std::size_t n);

enum class RateProblem { Wave1d, Wave2d, Advection1d };
RateProblem parse_rate_problem(const std::string& name);
std::string to_string(RateProblem p);

struct RateStudyOptions {
  std::size_t reference_atoms = 1000;
  std::size_t grid_cells = 0;  // per axis; 0 picks 4000 in 1d and 200 in 2d
  Vector times{0.0, 0.25, 0.5, 0.75, 1.0};
  double advection_speed = 0.5;
  SamplingScheme scheme = SamplingScheme::Stratified;
  std::uint64_t reference_seed = 123;
};

struct RateRow {
  std::size_t width = 0;
  std::size_t seed = 0;
  double error = 0.0;
};

struct RateStudyResult {
  std::vector<RateRow> rows;
  std::vector<std::size_t> widths;
  Vector mean_log_error;  // per width
  double slope = 0.0;     // least-squares slope of log error against log width
};

/// For each width M: Maurey-sample the reference, build the exact LRNR and
/// record its worst-over-time H^1 error against the reference solution on
/// [-1, 1]^d. Wave problems split M into M/4 value and M/4 velocity atoms
/// (two hidden rows each); advection uses M atoms.
RateStudyResult rate_study(RateProblem problem, const std::vector<std::size_t>& widths, std::size_t seeds,
                           std::uint64_t base_seed, const RateStudyOptions& options = {});

// ---------------------------------------------------------------- generators

/// t0, ..., t1 in n equal steps; a degenerate range gives one time.
Vector time_grid(double t0, double t1, std::size_t n);

UniformGrid cube_grid(std::size_t dim, std::size_t cells, double lo, double hi, bool periodic);

WaveDataset generate_dataset(const UniformGrid& grid, const Vector& times,
                             const std::function<double(std::span<const double>, double)>& field);

struct AdvectionProfile {
  std::string kind = "gaussian";  // gaussian | step
  double center = -0.4;
  double width = 0.1;
  double height = 1.0;
};

double advection_profile(const AdvectionProfile& p, double x);

}  // namespace lrnr
