#include "lrnr/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "lrnr/errors.hpp"
#include "lrnr/rng.hpp"

namespace lrnr {

namespace {

inline double relu(double z) { return z > 0.0 ? z : 0.0; }
inline double step(double z) { return z > 0.0 ? 1.0 : 0.0; }

double ridge(const PlanarAtom& atom, std::span<const double> x) {
  double z = atom.b;
  for (std::size_t k = 0; k < x.size(); ++k) z += atom.w[k] * x[k];
  return z;
}

void check_atoms(const std::vector<PlanarAtom>& atoms, std::size_t dim) {
  for (const auto& a : atoms) {
    if (a.w.size() != dim) throw InvalidInput("planar atom direction has the wrong dimension");
    if (std::abs(norm2(a.w) - 1.0) > 1e-12) throw InvalidInput("planar atom direction is not a unit vector");
    if (!std::isfinite(a.a) || !std::isfinite(a.b)) throw InvalidInput("planar atom has non-finite parameters");
  }
}

}  // namespace

void PlanarAtomSet::validate() const {
  if (dim < 1) throw InvalidInput("PlanarAtomSet: dimension must be >= 1");
  if (!(c > 0.0)) throw InvalidInput("PlanarAtomSet: wave speed must be > 0");
  check_atoms(value_atoms, dim);
  check_atoms(velocity_atoms, dim);
}

double dalembert_1d(const Profile& f, const Profile& g, double c, double x, double t) {
  return f(x - c * t) + g(x + c * t);
}

double planar_wave_solution(const PlanarAtomSet& atoms, std::span<const double> x, double t) {
  if (x.size() != atoms.dim) throw InvalidInput("planar_wave_solution: point dimension mismatch");
  const double ct = atoms.c * t;
  double u = 0.0;
  for (const auto& atom : atoms.value_atoms) {
    const double z = ridge(atom, x);
    u += 0.5 * atom.a * (relu(z - ct) + relu(z + ct));
  }
  for (const auto& atom : atoms.velocity_atoms) {
    const double z = ridge(atom, x);
    u += atom.a / (2.0 * atoms.c) * (relu(z + ct) - relu(z - ct));
  }
  return u;
}

Vector planar_wave_gradient(const PlanarAtomSet& atoms, std::span<const double> x, double t) {
  if (x.size() != atoms.dim) throw InvalidInput("planar_wave_gradient: point dimension mismatch");
  const double ct = atoms.c * t;
  Vector g(atoms.dim, 0.0);
  auto add = [&](const PlanarAtom& atom, double coef) {
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += coef * atom.w[k];
  };
  for (const auto& atom : atoms.value_atoms) {
    const double z = ridge(atom, x);
    add(atom, 0.5 * atom.a * (step(z - ct) + step(z + ct)));
  }
  for (const auto& atom : atoms.velocity_atoms) {
    const double z = ridge(atom, x);
    add(atom, atom.a / (2.0 * atoms.c) * (step(z + ct) - step(z - ct)));
  }
  return g;
}

double planar_wave_time_derivative(const PlanarAtomSet& atoms, std::span<const double> x, double t) {
  if (x.size() != atoms.dim) throw InvalidInput("planar_wave_time_derivative: point dimension mismatch");
  const double ct = atoms.c * t;
  double ut = 0.0;
  for (const auto& atom : atoms.value_atoms) {
    const double z = ridge(atom, x);
    ut += 0.5 * atom.a * atoms.c * (step(z + ct) - step(z - ct));
  }
  for (const auto& atom : atoms.velocity_atoms) {
    const double z = ridge(atom, x);
    ut += 0.5 * atom.a * (step(z + ct) + step(z - ct));
  }
  return ut;
}

Vector ExplicitLrnr::operator()(std::span<const double> x, double t) const {
  return forward(factors, coefficients(t), x);
}

namespace {

// Depth-2 ReLU family: hidden rows w_j . x + b_j + beta_j t, output sum_j v_j relu(.).
ExplicitLrnr ridge_lrnr(std::size_t dim, const Matrix& dirs, const Vector& offsets, const Vector& rates,
                        const Vector& out_weights) {
  const std::size_t rows = dirs.rows();
  RankSpec ranks{{dim, 1}, {2, 0}};
  ExplicitLrnr net;
  net.factors = LrnrFactors::zeros(dim, rows, 1, ranks, Activation::Relu);
  auto& l1 = net.factors.layers[0];
  auto& l2 = net.factors.layers[1];
  l1.u = dirs;
  l1.v = Matrix::identity(dim);
  for (std::size_t j = 0; j < rows; ++j) {
    l1.b(j, 0) = offsets[j];
    l1.b(j, 1) = rates[j];
    l2.v(j, 0) = out_weights[j];
  }
  l2.u(0, 0) = 1.0;
  net.coefficients = [ranks, dim](double t) {
    CoeffVector s(ranks);
    for (double& v : s.weight(0)) v = 1.0;
    s.bias(0)[0] = 1.0;
    s.bias(0)[1] = t;
    s.weight(1)[0] = 1.0;
    return s;
  };
  return net;
}

}  // namespace

ExplicitLrnr build_wave_lrnr(const PlanarAtomSet& atoms) {
  atoms.validate();
  const std::size_t d = atoms.dim;
  const std::size_t rows = 2 * (atoms.value_atoms.size() + atoms.velocity_atoms.size());
  Matrix dirs(rows, d);
  Vector offsets(rows), rates(rows), out(rows);
  std::size_t j = 0;
  auto emit = [&](const PlanarAtom& atom, double w_minus, double w_plus) {
    for (int branch = 0; branch < 2; ++branch, ++j) {
      for (std::size_t k = 0; k < d; ++k) dirs(j, k) = atom.w[k];
      offsets[j] = atom.b;
      rates[j] = branch == 0 ? -atoms.c : atoms.c;
      out[j] = branch == 0 ? w_minus : w_plus;
    }
  };
  for (const auto& atom : atoms.value_atoms) emit(atom, 0.5 * atom.a, 0.5 * atom.a);
  for (const auto& atom : atoms.velocity_atoms) {
    const double w = atom.a / (2.0 * atoms.c);
    emit(atom, -w, w);
  }
  return ridge_lrnr(d, dirs, offsets, rates, out);
}

double planar_advection_solution(const std::vector<PlanarAtom>& atoms, std::span<const double> velocity,
                                 std::span<const double> x, double t) {
  double u = 0.0;
  for (const auto& atom : atoms) u += atom.a * relu(ridge(atom, x) - dot(atom.w, velocity) * t);
  return u;
}

Vector planar_advection_gradient(const std::vector<PlanarAtom>& atoms, std::span<const double> velocity,
                                 std::span<const double> x, double t) {
  Vector g(x.size(), 0.0);
  for (const auto& atom : atoms) {
    const double h = atom.a * step(ridge(atom, x) - dot(atom.w, velocity) * t);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += h * atom.w[k];
  }
  return g;
}

ExplicitLrnr build_advection_lrnr(std::size_t dim, const std::vector<PlanarAtom>& atoms,
                                  std::span<const double> velocity) {
  if (velocity.size() != dim) throw InvalidInput("build_advection_lrnr: velocity dimension mismatch");
  check_atoms(atoms, dim);
  const std::size_t rows = atoms.size();
  Matrix dirs(rows, dim);
  Vector offsets(rows), rates(rows), out(rows);
  for (std::size_t j = 0; j < rows; ++j) {
    for (std::size_t k = 0; k < dim; ++k) dirs(j, k) = atoms[j].w[k];
    offsets[j] = atoms[j].b;
    rates[j] = -dot(atoms[j].w, velocity);
    out[j] = atoms[j].a;
  }
  return ridge_lrnr(dim, dirs, offsets, rates, out);
}

// ---------------------------------------------------------------- sampling

std::uint64_t hilbert_index(unsigned order, std::uint64_t x, std::uint64_t y) {
  const std::uint64_t n = std::uint64_t{1} << order;
  std::uint64_t d = 0;
  for (std::uint64_t s = n / 2; s > 0; s /= 2) {
    const std::uint64_t rx = (x & s) ? 1 : 0;
    const std::uint64_t ry = (y & s) ? 1 : 0;
    d += s * s * ((3 * rx) ^ ry);
    if (ry == 0) {
      if (rx == 1) {
        x = n - 1 - x;
        y = n - 1 - y;
      }
      std::swap(x, y);
    }
  }
  return d;
}

namespace {

std::vector<std::size_t> stratification_order(const std::vector<PlanarAtom>& atoms, std::size_t dim) {
  std::vector<std::size_t> idx(atoms.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (dim == 2) {
    double bmin = 0.0, bmax = 0.0;
    if (!atoms.empty()) {
      auto [lo, hi] = std::minmax_element(atoms.begin(), atoms.end(),
                                          [](const PlanarAtom& p, const PlanarAtom& q) { return p.b < q.b; });
      bmin = lo->b;
      bmax = hi->b;
    }
    constexpr unsigned order = 16;
    const double cells = static_cast<double>((1u << order) - 1);
    std::vector<std::uint64_t> key(atoms.size());
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      double theta = std::atan2(atoms[i].w[1], atoms[i].w[0]);
      if (theta < 0.0) theta += 2.0 * std::numbers::pi;
      const double u = theta / (2.0 * std::numbers::pi);
      const double v = bmax > bmin ? (atoms[i].b - bmin) / (bmax - bmin) : 0.0;
      key[i] = hilbert_index(order, static_cast<std::uint64_t>(std::clamp(u, 0.0, 1.0) * cells),
                             static_cast<std::uint64_t>(std::clamp(v, 0.0, 1.0) * cells));
    }
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t p, std::size_t q) { return key[p] < key[q]; });
  } else {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t p, std::size_t q) {
      if (atoms[p].w != atoms[q].w) return atoms[p].w < atoms[q].w;
      return atoms[p].b < atoms[q].b;
    });
  }
  return idx;
}

}  // namespace

std::vector<PlanarAtom> maurey_sample(const std::vector<PlanarAtom>& target, std::size_t dim, std::size_t m,
                                      Rng& rng, SamplingScheme scheme) {
  if (m == 0) return {};
  if (target.empty()) throw InvalidInput("maurey_sample: empty target mixture");
  check_atoms(target, dim);
  const std::vector<std::size_t> order =
      scheme == SamplingScheme::Stratified ? stratification_order(target, dim) : [&] {
        std::vector<std::size_t> idx(target.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        return idx;
      }();
  Vector cdf(order.size());
  double total = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    total += std::abs(target[order[i]].a);
    cdf[i] = total;
  }
  if (!(total > 0.0)) throw InvalidInput("maurey_sample: target has zero total amplitude");
  const double amp = total / static_cast<double>(m);
  const double offset = scheme == SamplingScheme::Stratified ? rng.uniform() : 0.0;
  std::vector<PlanarAtom> out;
  out.reserve(m);
  for (std::size_t k = 0; k < m; ++k) {
    const double u = scheme == SamplingScheme::Stratified
                         ? (static_cast<double>(k) + offset) / static_cast<double>(m)
                         : rng.uniform();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u * total);
    const std::size_t pos = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
    PlanarAtom atom = target[order[pos]];
    atom.a = atom.a > 0.0 ? amp : -amp;
    out.push_back(std::move(atom));
  }
  return out;
}

PlanarAtomSet maurey_sample(const PlanarAtomSet& target, std::size_t m_value, std::size_t m_velocity, Rng& rng,
                            SamplingScheme scheme) {
  target.validate();
  PlanarAtomSet out{target.dim, {}, {}, target.c};
  out.value_atoms = maurey_sample(target.value_atoms, target.dim, m_value, rng, scheme);
  out.velocity_atoms = maurey_sample(target.velocity_atoms, target.dim, m_velocity, rng, scheme);
  return out;
}

PlanarAtomSet reference_mixture(std::size_t dim, std::size_t count, Rng& rng, double c) {
  if (dim != 1 && dim != 2) throw InvalidInput("reference_mixture: dimension must be 1 or 2");
  PlanarAtomSet set{dim, {}, {}, c};
  const double n = static_cast<double>(count);
  auto draw = [&](std::vector<PlanarAtom>& atoms) {
    for (std::size_t i = 0; i < count; ++i) {
      PlanarAtom atom;
      if (dim == 1) {
        const double w = rng.uniform() < 0.5 ? -1.0 : 1.0;
        atom.w = {w};
        atom.b = rng.uniform(-1.5, 1.5);
        atom.a = w * (1.0 + 0.5 * std::cos(2.0 * atom.b)) / n;
      } else {
        const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
        atom.w = {std::cos(theta), std::sin(theta)};
        atom.b = rng.uniform(-1.5, 1.5);
        const double sign = std::cos(theta) + 0.3 > 0.0 ? 1.0 : -1.0;
        atom.a = sign * (1.0 + 0.5 * std::cos(2.0 * atom.b) * std::cos(theta)) / n;
      }
      atoms.push_back(std::move(atom));
    }
  };
  draw(set.value_atoms);
  draw(set.velocity_atoms);
  return set;
}

// ---------------------------------------------------------------- exact solutions

double advection_exact(const std::function<double(std::span<const double>)>& u0, std::span<const double> a,
                       std::span<const double> x, double t) {
  if (a.size() != x.size()) throw InvalidInput("advection_exact: velocity dimension mismatch");
  if (!all_finite(a)) throw InvalidInput("advection_exact: non-finite velocity");
  Vector y(x.begin(), x.end());
  for (std::size_t k = 0; k < y.size(); ++k) y[k] -= a[k] * t;
  return u0(y);
}

double burgers_riemann(const RiemannSpec& spec, double x, double t) {
  if (!std::isfinite(spec.u_left) || !std::isfinite(spec.u_right)) throw InvalidInput("burgers_riemann: non-finite states");
  if (t < 0.0) throw InvalidInput("burgers_riemann: t must be >= 0");
  const double xi = x - spec.x0;
  if (t == 0.0) return xi < 0.0 ? spec.u_left : spec.u_right;
  if (spec.u_left > spec.u_right) {
    const double speed = 0.5 * (spec.u_left + spec.u_right);
    return xi < speed * t ? spec.u_left : spec.u_right;
  }
  const double r = xi / t;
  if (r <= spec.u_left) return spec.u_left;
  if (r >= spec.u_right) return spec.u_right;
  return r;
}

double wave_energy(const PlanarAtomSet& atoms, std::span<const double> center, double r0, double t,
                   std::size_t n) {
  if (center.size() != atoms.dim) throw InvalidInput("wave_energy: center dimension mismatch");
  if (atoms.dim > 2) throw UnsupportedOperation("wave_energy: 1d and 2d only");
  const double r = r0 - atoms.c * t;
  if (r <= 0.0) return 0.0;
  const double h = 2.0 * r / static_cast<double>(n);
  double e = 0.0;
  Vector x(atoms.dim);
  const std::size_t ny = atoms.dim == 2 ? n : 1;
  for (std::size_t iy = 0; iy < ny; ++iy) {
    for (std::size_t ix = 0; ix < n; ++ix) {
      x[0] = center[0] - r + (static_cast<double>(ix) + 0.5) * h;
      if (atoms.dim == 2) {
        x[1] = center[1] - r + (static_cast<double>(iy) + 0.5) * h;
        const double dx = x[0] - center[0], dy = x[1] - center[1];
        if (dx * dx + dy * dy > r * r) continue;
      }
      const Vector g = planar_wave_gradient(atoms, x, t);
      const double ut = planar_wave_time_derivative(atoms, x, t);
      e += dot(g, g) + ut * ut;
    }
  }
  return e * std::pow(h, static_cast<double>(atoms.dim));
}

// ---------------------------------------------------------------- rate study

RateProblem parse_rate_problem(const std::string& name) {
  if (name == "wave1d") return RateProblem::Wave1d;
  if (name == "wave2d") return RateProblem::Wave2d;
  if (name == "advection1d") return RateProblem::Advection1d;
  throw InvalidInput("unknown rate-study problem '" + name + "' (expected wave1d, wave2d or advection1d)");
}

std::string to_string(RateProblem p) {
  switch (p) {
    case RateProblem::Wave1d: return "wave1d";
    case RateProblem::Wave2d: return "wave2d";
    case RateProblem::Advection1d: return "advection1d";
  }
  return "?";
}

namespace {

struct FieldSample {
  Vector value;  // P
  Matrix grad;   // d x P
};

// Values and gradients of ridge sums with time shifts, on all grid points.
FieldSample reference_field(RateProblem problem, const PlanarAtomSet& atoms, std::span<const double> velocity,
                            const Matrix& pts, double t) {
  const std::size_t d = pts.rows(), p = pts.cols();
  FieldSample out{Vector(p, 0.0), Matrix(d, p)};
  Vector z(p);
  auto accumulate = [&](const PlanarAtom& atom, double shift, double coef) {
    for (std::size_t j = 0; j < p; ++j) z[j] = atom.b + shift;
    for (std::size_t k = 0; k < d; ++k) {
      const auto row = pts.row(k);
      for (std::size_t j = 0; j < p; ++j) z[j] += atom.w[k] * row[j];
    }
    for (std::size_t j = 0; j < p; ++j) {
      if (z[j] > 0.0) {
        out.value[j] += coef * z[j];
        for (std::size_t k = 0; k < d; ++k) out.grad(k, j) += coef * atom.w[k];
      }
    }
  };
  if (problem == RateProblem::Advection1d) {
    for (const auto& atom : atoms.value_atoms) accumulate(atom, -dot(atom.w, velocity) * t, atom.a);
    return out;
  }
  const double ct = atoms.c * t;
  for (const auto& atom : atoms.value_atoms) {
    accumulate(atom, -ct, 0.5 * atom.a);
    accumulate(atom, ct, 0.5 * atom.a);
  }
  for (const auto& atom : atoms.velocity_atoms) {
    const double w = atom.a / (2.0 * atoms.c);
    accumulate(atom, -ct, -w);
    accumulate(atom, ct, w);
  }
  return out;
}

}  // namespace

RateStudyResult rate_study(RateProblem problem, const std::vector<std::size_t>& widths, std::size_t seeds,
                           std::uint64_t base_seed, const RateStudyOptions& options) {
  if (widths.size() < 2) throw InvalidInput("rate_study: need at least two widths");
  if (seeds < 1) throw InvalidInput("rate_study: need at least one seed");
  if (options.times.empty()) throw InvalidInput("rate_study: no evaluation times");
  const std::size_t dim = problem == RateProblem::Wave2d ? 2 : 1;
  for (std::size_t m : widths) {
    if (problem == RateProblem::Advection1d ? m < 1 : m < 4)
      throw InvalidInput("rate_study: width too small for the problem");
  }
  Rng ref_rng(options.reference_seed);
  const PlanarAtomSet reference = reference_mixture(dim, options.reference_atoms, ref_rng);
  const std::size_t cells = options.grid_cells ? options.grid_cells : (dim == 1 ? 4000 : 200);
  const UniformGrid grid = cube_grid(dim, cells, -1.0, 1.0, false);
  const Matrix pts = grid_points(grid);
  const double vol = grid.cell_volume();
  const Vector velocity(dim, options.advection_speed);

  std::vector<FieldSample> ref;
  for (double t : options.times) ref.push_back(reference_field(problem, reference, velocity, pts, t));

  RateStudyResult res;
  res.widths = widths;
  Vector xs, ys;
  for (std::size_t wi = 0; wi < widths.size(); ++wi) {
    const std::size_t width = widths[wi];
    double log_sum = 0.0;
    for (std::size_t seed = 0; seed < seeds; ++seed) {
      Rng rng = Rng::stream(base_seed, wi * seeds + seed);
      ExplicitLrnr net;
      if (problem == RateProblem::Advection1d) {
        net = build_advection_lrnr(dim, maurey_sample(reference.value_atoms, dim, width, rng, options.scheme),
                                   velocity);
      } else {
        net = build_wave_lrnr(maurey_sample(reference, width / 4, width / 4, rng, options.scheme));
      }
      double worst = 0.0;
      for (std::size_t ti = 0; ti < options.times.size(); ++ti) {
        const CoeffVector s = net.coefficients(options.times[ti]);
        const Matrix u = forward_batch(net.factors, s, pts);
        const Matrix g = input_gradient_batch(net.factors, s, pts);
        double e2 = 0.0;
        for (std::size_t j = 0; j < pts.cols(); ++j) {
          const double du = u(0, j) - ref[ti].value[j];
          e2 += du * du;
          for (std::size_t k = 0; k < dim; ++k) {
            const double dg = g(k, j) - ref[ti].grad(k, j);
            e2 += dg * dg;
          }
        }
        worst = std::max(worst, std::sqrt(e2 * vol));
      }
      res.rows.push_back({width, seed, worst});
      xs.push_back(std::log(static_cast<double>(width)));
      ys.push_back(std::log(worst));
      log_sum += std::log(worst);
    }
    res.mean_log_error.push_back(log_sum / static_cast<double>(seeds));
  }
  res.slope = fit_slope(xs, ys);
  return res;
}

// ---------------------------------------------------------------- generators

Vector time_grid(double t0, double t1, std::size_t n) {
  if (!std::isfinite(t0) || !std::isfinite(t1) || t1 < t0) throw InvalidInput("time_grid: require t0 <= t1");
  if (n < 1) throw InvalidInput("time_grid: need at least one time");
  if (t1 == t0 || n == 1) return {t0};
  Vector t(n);
  for (std::size_t k = 0; k < n; ++k)
    t[k] = k + 1 == n ? t1 : t0 + (t1 - t0) * static_cast<double>(k) / static_cast<double>(n - 1);
  return t;
}

UniformGrid cube_grid(std::size_t dim, std::size_t cells, double lo, double hi, bool periodic) {
  if (dim < 1 || cells < 1 || !(hi > lo)) throw InvalidInput("cube_grid: invalid extent");
  UniformGrid g;
  g.origin.assign(dim, lo);
  g.spacing.assign(dim, (hi - lo) / static_cast<double>(cells));
  g.shape.assign(dim, cells);
  g.periodic = periodic;
  return g;
}

WaveDataset generate_dataset(const UniformGrid& grid, const Vector& times,
                             const std::function<double(std::span<const double>, double)>& field) {
  WaveDataset ds;
  ds.spatial_dim = grid.shape.size();
  ds.output_dim = 1;
  ds.grid_kind = GridKind::Uniform;
  ds.grid = grid;
  ds.times = times;
  for (double t : times)
    ds.snapshots.push_back(sample_on_grid(grid, 1, [&](std::span<const double> x) { return field(x, t); }));
  ds.validate();
  return ds;
}

double advection_profile(const AdvectionProfile& p, double x) {
  if (p.kind == "gaussian") {
    const double z = (x - p.center) / p.width;
    return p.height * std::exp(-0.5 * z * z);
  }
  if (p.kind == "step") return x < p.center ? p.height : 0.0;
  throw InvalidInput("unknown advection profile '" + p.kind + "' (expected gaussian or step)");
}

}  // namespace lrnr
