#include "lrnr/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lrnr/analytic.hpp"
#include "lrnr/dataio.hpp"
#include "lrnr/errors.hpp"
#include "lrnr/fastlrnr.hpp"
#include "lrnr/hypermodes.hpp"
#include "lrnr/rng.hpp"

namespace lrnr {

using json = nlohmann::json;

namespace {

Error config_error(const std::string& msg) { return Error(ErrorKind::ConfigError, msg); }

}  // namespace

ProblemKind parse_problem_kind(const std::string& name) {
  if (name == "advection1d") return ProblemKind::Advection1d;
  if (name == "wave1d") return ProblemKind::Wave1d;
  if (name == "wave2d-planar") return ProblemKind::Wave2dPlanar;
  if (name == "burgers1d-riemann") return ProblemKind::Burgers1dRiemann;
  throw config_error("unknown problem '" + name + "' (advection1d, wave1d, wave2d-planar, burgers1d-riemann)");
}

std::string to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::Advection1d: return "advection1d";
    case ProblemKind::Wave1d: return "wave1d";
    case ProblemKind::Wave2dPlanar: return "wave2d-planar";
    case ProblemKind::Burgers1dRiemann: return "burgers1d-riemann";
  }
  return "advection1d";
}

std::size_t ProblemSpec::resolved_cells() const {
  if (cells > 0) return cells;
  return spatial_dim() == 2 ? 64 : 128;
}

WaveDataset generate_problem(const ProblemSpec& spec) {
  if (!(spec.hi > spec.lo)) throw InvalidInput("problem: need lo < hi");
  if (spec.n_times < 1) throw InvalidInput("problem: n_times must be >= 1");
  if (spec.t1 < spec.t0) throw InvalidInput("problem: need t0 <= t1");
  const std::size_t d = spec.spatial_dim();
  const Vector times = time_grid(spec.t0, spec.t1, spec.n_times);
  switch (spec.kind) {
    case ProblemKind::Advection1d: {
      AdvectionProfile prof{spec.profile, spec.center, spec.width, spec.height};
      if (prof.kind != "gaussian" && prof.kind != "step") throw InvalidInput("problem: profile must be gaussian or step");
      const double len = spec.hi - spec.lo;
      auto grid = cube_grid(1, spec.resolved_cells(), spec.lo, spec.hi, true);
      return generate_dataset(grid, times, [&](std::span<const double> x, double t) {
        double y = std::fmod(x[0] - spec.speed * t - spec.lo, len);
        if (y < 0.0) y += len;
        return advection_profile(prof, spec.lo + y);
      });
    }
    case ProblemKind::Wave1d:
    case ProblemKind::Wave2dPlanar: {
      if (spec.atoms < 1) throw InvalidInput("problem: atoms must be >= 1");
      Rng rng(spec.seed);
      const PlanarAtomSet atoms = reference_mixture(d, spec.atoms, rng, spec.speed);
      auto grid = cube_grid(d, spec.resolved_cells(), spec.lo, spec.hi, false);
      return generate_dataset(grid, times, [&](std::span<const double> x, double t) {
        return planar_wave_solution(atoms, x, t);
      });
    }
    case ProblemKind::Burgers1dRiemann: {
      const RiemannSpec rs{spec.u_left, spec.u_right, spec.x0};
      auto grid = cube_grid(1, spec.resolved_cells(), spec.lo, spec.hi, false);
      return generate_dataset(grid, times, [&](std::span<const double> x, double t) {
        return burgers_riemann(rs, x[0], t);
      });
    }
  }
  throw InvalidInput("problem: unknown kind");
}

MetaShape RunConfig::shape(std::size_t input_dim, std::size_t output_dim) const {
  MetaShape s;
  s.input_dim = input_dim;
  s.output_dim = output_dim;
  s.width = M;
  s.ranks = ranks;
  s.activation = activation;
  s.hyper_width = M_hyper;
  s.hyper_depth = L_hyper;
  s.hyper_activation = hyper_activation;
  return s;
}

// ---------------------------------------------------------------- config

namespace {

class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw config_error(where_ + " must be an object");
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    const std::string at = where_ + "." + key;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw config_error(at + " must be a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_unsigned()) throw config_error(at + " must be a non-negative integer");
      out = v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw config_error(at + " must be a number");
      out = v.get<T>();
    } else {
      if (!v.is_string()) throw config_error(at + " must be a string");
      out = v.get<std::string>();
    }
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw config_error("unknown key " + where_ + "." + it.key());
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

std::vector<std::size_t> rank_list(const json& j, const std::string& at) {
  if (!j.is_array()) throw config_error(at + " must be an array of ranks");
  std::vector<std::size_t> out;
  for (const auto& v : j) {
    if (!v.is_number_unsigned()) throw config_error(at + " entries must be non-negative integers");
    out.push_back(v.get<std::size_t>());
  }
  return out;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw config_error(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Section top(root, "config");
  top.get("seed", c.seed);

  if (const json* mj = top.child("model")) {
    Section m(*mj, "model");
    m.get("M", c.M);
    m.get("L", c.L);
    m.get("M_hyper", c.M_hyper);
    m.get("L_hyper", c.L_hyper);
    std::string act = to_string(c.activation), hact = to_string(c.hyper_activation);
    m.get("activation", act);
    m.get("hyper_activation", hact);
    try {
      c.activation = parse_activation(act);
      c.hyper_activation = parse_activation(hact);
    } catch (const Error& e) {
      throw config_error(std::string("model: ") + e.what());
    }
    std::size_t out_bias = 0;
    m.get("r_bias_out", out_bias);
    const json* rj = m.child("r");
    if (!rj) {
      c.ranks = RankSpec::uniform(c.L, 8, out_bias);
    } else if (rj->is_number_unsigned()) {
      c.ranks = RankSpec::uniform(c.L, rj->get<std::size_t>(), out_bias);
    } else if (rj->is_object()) {
      Section rs(*rj, "model.r");
      const json* w = rs.child("weight");
      const json* b = rs.child("bias");
      rs.finish();
      if (!w || !b) throw config_error("model.r needs both weight and bias lists");
      if (mj->contains("r_bias_out"))
        throw config_error("model.r_bias_out only applies to a scalar r");
      c.ranks = RankSpec{rank_list(*w, "model.r.weight"), rank_list(*b, "model.r.bias")};
    } else {
      throw config_error("model.r must be an integer or {weight: [...], bias: [...]}");
    }
    m.finish();
  }

  if (const json* tj = top.child("train")) {
    Section t(*tj, "train");
    TrainConfig& tc = c.train;
    t.get("batch", tc.batch);
    t.get("lambda_sparse", tc.lambda_sparse);
    t.get("lambda_ortho", tc.lambda_ortho);
    t.get("gamma", tc.gamma);
    t.get("w0", tc.w0);
    t.get("n_epc", tc.n_epc);
    t.get("tau", tc.tau);
    t.get("lr0", tc.lr0);
    t.get("plateau_factor", tc.plateau_factor);
    t.get("plateau_patience", tc.plateau_patience);
    t.get("plateau_threshold", tc.plateau_threshold);
    t.get("target_rel_l2", tc.target_rel_l2);
    t.get("check_every", tc.check_every);
    t.finish();
  }

  if (const json* pj = top.child("problem")) {
    Section p(*pj, "problem");
    ProblemSpec& ps = c.problem;
    std::string name = to_string(ps.kind);
    p.get("name", name);
    ps.kind = parse_problem_kind(name);
    p.get("cells", ps.cells);
    p.get("n_times", ps.n_times);
    p.get("t0", ps.t0);
    p.get("t1", ps.t1);
    p.get("lo", ps.lo);
    p.get("hi", ps.hi);
    p.get("speed", ps.speed);
    p.get("profile", ps.profile);
    p.get("center", ps.center);
    p.get("width", ps.width);
    p.get("height", ps.height);
    p.get("atoms", ps.atoms);
    p.get("seed", ps.seed);
    p.get("u_left", ps.u_left);
    p.get("u_right", ps.u_right);
    p.get("x0", ps.x0);
    p.finish();
  }

  if (const json* gj = top.child("gradcheck")) {
    Section g(*gj, "gradcheck");
    g.get("h", c.gradcheck.h);
    g.get("floor", c.gradcheck.floor);
    g.get("margin", c.gradcheck.margin);
    g.get("tolerance", c.gradcheck.tolerance);
    g.get("snapshots", c.gradcheck.snapshots);
    g.finish();
  }

  if (const json* pj = top.child("paths")) {
    Section p(*pj, "paths");
    p.get("data", c.data_path);
    p.get("checkpoint", c.checkpoint_path);
    p.get("history", c.history_path);
    p.finish();
  }
  top.finish();

  c.train.seed = c.seed;
  try {
    c.ranks.validate();
    c.train.validate();
  } catch (const Error& e) {
    throw config_error(e.what());
  }
  if (c.ranks.depth() != c.L) throw config_error("model.r lists must have L entries");
  if (c.M == 0 || c.L == 0 || c.M_hyper == 0 || c.L_hyper == 0)
    throw config_error("model: M, L, M_hyper and L_hyper must be positive");
  if (!(c.gradcheck.h > 0.0) || c.gradcheck.snapshots == 0)
    throw config_error("gradcheck: h and snapshots must be positive");
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot read config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string to_json(const RunConfig& c) {
  const TrainConfig& t = c.train;
  const ProblemSpec& p = c.problem;
  json j;
  j["seed"] = c.seed;
  j["model"] = {{"M", c.M},
                {"L", c.L},
                {"r", {{"weight", c.ranks.weight_ranks}, {"bias", c.ranks.bias_ranks}}},
                {"activation", to_string(c.activation)},
                {"M_hyper", c.M_hyper},
                {"L_hyper", c.L_hyper},
                {"hyper_activation", to_string(c.hyper_activation)}};
  j["train"] = {{"batch", t.batch},
                {"lambda_sparse", t.lambda_sparse},
                {"lambda_ortho", t.lambda_ortho},
                {"gamma", t.gamma},
                {"w0", t.w0},
                {"n_epc", t.n_epc},
                {"tau", t.tau},
                {"lr0", t.lr0},
                {"plateau_factor", t.plateau_factor},
                {"plateau_patience", t.plateau_patience},
                {"plateau_threshold", t.plateau_threshold},
                {"target_rel_l2", t.target_rel_l2},
                {"check_every", t.check_every}};
  j["problem"] = {{"name", to_string(p.kind)}, {"cells", p.cells},     {"n_times", p.n_times}, {"t0", p.t0},
                  {"t1", p.t1},                {"lo", p.lo},           {"hi", p.hi},           {"speed", p.speed},
                  {"profile", p.profile},      {"center", p.center},   {"width", p.width},     {"height", p.height},
                  {"atoms", p.atoms},          {"seed", p.seed},       {"u_left", p.u_left},   {"u_right", p.u_right},
                  {"x0", p.x0}};
  j["gradcheck"] = {{"h", c.gradcheck.h},
                    {"floor", c.gradcheck.floor},
                    {"margin", c.gradcheck.margin},
                    {"tolerance", c.gradcheck.tolerance},
                    {"snapshots", c.gradcheck.snapshots}};
  j["paths"] = {{"data", c.data_path}, {"checkpoint", c.checkpoint_path}, {"history", c.history_path}};
  return j.dump(2);
}

RunConfig small_gradcheck_config() {
  RunConfig c;
  c.M = 8;
  c.L = 3;
  c.ranks = RankSpec{{2, 2, 2}, {2, 2, 0}};
  c.M_hyper = 5;
  c.L_hyper = 2;
  c.train.lambda_sparse = 1e-3;
  c.train.lambda_ortho = 1e-2;
  c.problem.cells = 32;
  c.problem.n_times = 5;
  return c;
}

// ---------------------------------------------------------------- commands

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4e", v);
  return buf;
}

void ensure_parent(const std::string& path) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

void write_text(const std::string& path, const std::string& text) {
  ensure_parent(path);
  write_file_atomic(path, text);
}

MetaModel fresh_model(const RunConfig& c, std::size_t d, std::size_t m, const TimeNormalizer& norm) {
  Rng rng = Rng::stream(c.seed, 0);
  return init_meta_model(c.shape(d, m), norm, rng);
}

TimeNormalizer normalizer_for(const WaveDataset& ds) {
  const auto [lo, hi] = std::minmax_element(ds.times.begin(), ds.times.end());
  TimeNormalizer n{*lo, *hi};
  if (!(n.t1 > n.t0)) n.t1 = n.t0 + 1.0;
  return n;
}

Matrix parse_anchors(const std::vector<std::string>& specs, std::size_t d) {
  Matrix a(d, specs.size());
  for (std::size_t k = 0; k < specs.size(); ++k) {
    std::stringstream ss(specs[k]);
    std::string tok;
    std::size_t i = 0;
    while (std::getline(ss, tok, ',')) {
      if (i >= d) throw InvalidInput("anchor '" + specs[k] + "' has more than " + std::to_string(d) + " coordinates");
      try {
        a(i++, k) = std::stod(tok);
      } catch (const std::exception&) {
        throw InvalidInput("anchor '" + specs[k] + "' is not numeric");
      }
    }
    if (i != d) throw InvalidInput("anchor '" + specs[k] + "' needs " + std::to_string(d) + " coordinates");
  }
  return a;
}

struct GridOpts {
  std::size_t cells = 128;
  double lo = -1.0;
  double hi = 1.0;
};

void add_grid_options(CLI::App* cmd, GridOpts& g) {
  cmd->add_option("--cells", g.cells, "cells per axis")->capture_default_str();
  cmd->add_option("--lo", g.lo, "grid lower bound per axis")->capture_default_str();
  cmd->add_option("--hi", g.hi, "grid upper bound per axis")->capture_default_str();
}

HypermodeBasis basis_for(const Checkpoint& ck, std::size_t n, double tol) {
  if (ck.hypermodes) return *ck.hypermodes;
  const Vector times = time_grid(ck.model.normalizer.t0, ck.model.normalizer.t1, n);
  return compute_hypermodes(coeff_snapshots(ck.model, times), tol, times);
}

// gen

struct GenArgs {
  ProblemSpec spec;
  std::string problem = "advection1d";
  std::string out;
};

void cmd_gen(GenArgs a) {
  a.spec.kind = parse_problem_kind(a.problem);
  const WaveDataset ds = generate_problem(a.spec);
  ensure_parent(a.out);
  save_dataset(ds, a.out);
  std::cout << "wrote " << a.out << ": " << ds.size() << " snapshots, " << ds.snapshots.front().size()
            << " points each\n";
}

// train

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::string history;
  std::string resume;
  std::size_t epochs = 0;
  std::size_t log_every = 0;
};

void cmd_train(const TrainArgs& a) {
  std::optional<Checkpoint> prev;
  if (!a.resume.empty()) {
    prev = load_checkpoint(a.resume);
    if (!prev->train_state) throw InvalidInput(a.resume + " carries no training state to resume from");
  }
  RunConfig cfg;
  if (!a.config.empty()) cfg = load_run_config(a.config);
  else if (prev && !prev->config_json.empty()) cfg = parse_run_config(prev->config_json);
  const std::string data_path = a.data.empty() ? cfg.data_path : a.data;
  const std::string out = a.out.empty() ? cfg.checkpoint_path : a.out;
  if (out.empty()) throw config_error("no checkpoint path: pass --out or set paths.checkpoint");
  std::string history = a.history.empty() ? cfg.history_path : a.history;
  if (history.empty()) history = out + ".history.csv";

  auto data = std::make_shared<const WaveDataset>(data_path.empty() ? generate_problem(cfg.problem)
                                                                    : load_dataset(data_path));
  MetaModel model = prev ? prev->model : fresh_model(cfg, data->spatial_dim, data->output_dim, normalizer_for(*data));
  const std::string cfg_json = to_json(cfg);

  auto save = [&](const MetaModel& m, const TrainState& st) {
    Checkpoint ck;
    ck.model = m;
    ck.train_state = st;
    ck.history_path = history;
    ck.config_json = cfg_json;
    ensure_parent(out);
    save_checkpoint(ck, out);
  };

  TrainOptions opts;
  opts.stop_after = a.epochs;
  std::vector<HistoryRow> rows;
  opts.on_epoch = [&](const HistoryRow& r) {
    rows.push_back(r);
    if (a.log_every > 0 && r.epoch % a.log_every == 0)
      std::cout << "epoch " << r.epoch << " misfit " << short_fmt(r.misfit) << " total " << short_fmt(r.total)
                << " alpha " << r.alpha << " lr " << short_fmt(r.lr) << "\n";
  };
  auto write_history = [&] {
    std::string text;
    if (prev && std::filesystem::exists(history)) {
      std::ifstream in(history);
      std::ostringstream ss;
      ss << in.rdbuf();
      text = ss.str();
    } else {
      text = history_csv_header() + "\n";
    }
    for (const auto& r : rows) text += history_csv_row(r) + "\n";
    write_text(history, text);
  };
  opts.on_abort = [&](const MetaModel& m, const TrainState& st) {
    save(m, st);
    write_history();
    std::cerr << "numeric failure; last good state saved to " << out << "\n";
  };
  const TrainResult res =
      train_loop(std::move(model), data, cfg.train, prev ? &*prev->train_state : nullptr, opts);
  save(res.model, res.state);
  write_history();
  std::cout << "epochs " << res.state.epoch << " rel_l2 " << short_fmt(res.rel_l2) << " alpha " << res.state.alpha
            << (res.reached_target ? " (target reached)" : "") << "\nwrote " << out << " and " << history << "\n";
}

// eval

struct EvalArgs {
  std::string ckpt;
  std::vector<double> times;
  GridOpts grid;
  std::string data;
  std::string out;
};

void cmd_eval(const EvalArgs& a) {
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const MetaModel& model = ck.model;
  WaveDataset out;
  out.spatial_dim = model.factors.input_dim();
  out.output_dim = model.factors.output_dim();
  if (!a.data.empty()) {
    const WaveDataset ds = load_dataset(a.data);
    if (ds.spatial_dim != out.spatial_dim || ds.output_dim != out.output_dim)
      throw Error(ErrorKind::ShapeMismatch, "dataset dimensions do not match the model");
    out.grid_kind = ds.grid_kind;
    out.grid = ds.grid;
    for (std::size_t k = 0; k < ds.size(); ++k) {
      const Snapshot& s = ds.snapshots[k];
      out.times.push_back(ds.times[k]);
      out.snapshots.push_back({s.points, forward_batch(model.factors, model.coefficients(ds.times[k]), s.points),
                               s.weights});
    }
    std::cout << "rel_l2 " << fmt(relative_l2_error(model, ds)) << "\n";
  } else {
    if (a.times.empty()) throw InvalidInput("eval: pass --t or --data");
    const UniformGrid grid = cube_grid(out.spatial_dim, a.grid.cells, a.grid.lo, a.grid.hi, false);
    const Matrix pts = grid_points(grid);
    out.grid = grid;
    for (double t : a.times) {
      if (model.extrapolates(t)) std::cerr << "note: t = " << t << " lies outside the training time range\n";
      out.times.push_back(t);
      out.snapshots.push_back({pts, forward_batch(model.factors, model.coefficients(t), pts),
                               Vector(grid.point_count(), grid.cell_volume())});
    }
  }
  ensure_parent(a.out);
  save_dataset(out, a.out);
  std::cout << "wrote " << a.out << "\n";
}

// hypermodes

struct HypermodeArgs {
  std::string ckpt;
  std::size_t n = 81;
  double tol = 1e-6;
  double threshold = 5e-5;
  std::size_t degree = 30;
  std::string out_dir = ".";
  std::string out_ckpt;
};

void cmd_hypermodes(const HypermodeArgs& a) {
  Checkpoint ck = load_checkpoint(a.ckpt);
  const MetaModel& model = ck.model;
  const Vector times = time_grid(model.normalizer.t0, model.normalizer.t1, a.n);
  const Matrix S = coeff_snapshots(model, times);
  const HypermodeBasis basis = compute_hypermodes(S, a.tol, times);
  const TruncationReport rep = truncate_coeffs(S, model.ranks(), a.threshold, a.tol);
  const std::filesystem::path dir(a.out_dir);
  std::filesystem::create_directories(dir);

  std::string sv = "index,sigma,sigma_rel,tail_energy_fraction\n";
  double total = 0.0;
  for (double s : basis.singular_values) total += s * s;
  double tail = total;
  for (std::size_t i = 0; i < basis.singular_values.size(); ++i) {
    const double s = basis.singular_values[i];
    tail -= s * s;
    sv += std::to_string(i + 1) + "," + fmt(s) + "," + fmt(s / basis.singular_values[0]) + "," +
          fmt(total > 0.0 ? std::max(tail, 0.0) / total : 0.0) + "\n";
  }
  write_text((dir / "singular_values.csv").string(), sv);

  std::string psi = "t";
  for (std::size_t i = 0; i < basis.rbar; ++i) psi += ",psi_" + std::to_string(i + 1);
  psi += "\n";
  for (std::size_t k = 0; k < times.size(); ++k) {
    psi += fmt(times[k]);
    for (std::size_t i = 0; i < basis.rbar; ++i) psi += "," + fmt(basis.psi(k, i));
    psi += "\n";
  }
  write_text((dir / "temporal_modes.csv").string(), psi);

  std::string tr = "layer,weight_rank,weight_kept,bias_rank,bias_kept\n";
  for (std::size_t l = 0; l < rep.weight_ranks.size(); ++l)
    tr += std::to_string(l + 1) + "," + std::to_string(rep.weight_ranks[l]) + "," +
          std::to_string(rep.weight_kept[l]) + "," + std::to_string(rep.bias_ranks[l]) + "," +
          std::to_string(rep.bias_kept[l]) + "\n";
  write_text((dir / "truncation.csv").string(), tr);

  std::string fit = "degree,max_residual\n";
  double best = 0.0;
  const std::size_t max_degree = std::min(a.degree, times.size() - 1);
  for (std::size_t deg = 0; deg <= max_degree && basis.rbar > 0; ++deg) {
    best = fit_temporal_modes(basis, deg).max_residual;
    fit += std::to_string(deg) + "," + fmt(best) + "\n";
  }
  write_text((dir / "temporal_fit.csv").string(), fit);

  std::cout << "rbar " << basis.rbar << " (energy_tol " << a.tol << ")\n";
  std::cout << "kept coefficients per layer (weight/bias):";
  for (std::size_t l = 0; l < rep.weight_kept.size(); ++l)
    std::cout << " " << rep.weight_kept[l] << "/" << rep.bias_kept[l];
  std::cout << "\nchebyshev degree " << max_degree << " max residual " << short_fmt(best) << "\n";
  if (!a.out_ckpt.empty()) {
    ck.hypermodes = basis;
    save_checkpoint(ck, a.out_ckpt);
    std::cout << "wrote " << a.out_ckpt << "\n";
  }
}

// perturb / extrap

struct PerturbArgs {
  std::string ckpt;
  double t = 0.0;
  std::size_t mode = 1;
  double eta = 0.1;
  bool normalized = false;
  GridOpts grid;
  std::size_t n = 81;
  double tol = 1e-6;
  std::string out;
  std::string csv;
};

void cmd_perturb(const PerturbArgs& a, bool extrapolate) {
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const MetaModel& model = ck.model;
  if (a.mode < 1) throw InvalidInput("--mode counts from 1");
  const HypermodeBasis basis = basis_for(ck, a.n, a.tol);
  const PerturbOptions opts{a.normalized};
  const CoeffVector s = extrapolate ? extrapolation_coefficients(model, basis, a.t, a.mode - 1, a.eta, opts)
                                    : tangent_coefficients(model, basis, a.t, a.mode - 1, a.eta, opts);
  const std::size_t d = model.factors.input_dim();
  const UniformGrid grid = cube_grid(d, a.grid.cells, a.grid.lo, a.grid.hi, false);
  const Matrix pts = grid_points(grid);
  const Matrix base = forward_batch(model.factors, model.coefficients(a.t), pts);
  const Matrix moved = forward_batch(model.factors, s, pts);
  WaveDataset field;
  field.spatial_dim = d;
  field.output_dim = moved.rows();
  field.grid = grid;
  field.times = {a.t};
  field.snapshots.push_back({pts, moved, Vector(grid.point_count(), grid.cell_volume())});
  ensure_parent(a.out);
  save_dataset(field, a.out);
  if (!a.csv.empty()) {
    std::string csv;
    for (std::size_t k = 0; k < d; ++k) csv += (k ? ",x" : "x") + std::to_string(k + 1);
    for (std::size_t i = 0; i < base.rows(); ++i)
      csv += ",u" + std::to_string(i + 1) + ",u" + std::to_string(i + 1) + "_perturbed";
    csv += "\n";
    for (std::size_t j = 0; j < pts.cols(); ++j) {
      for (std::size_t k = 0; k < d; ++k) csv += (k ? "," : "") + fmt(pts(k, j));
      for (std::size_t i = 0; i < base.rows(); ++i) csv += "," + fmt(base(i, j)) + "," + fmt(moved(i, j));
      csv += "\n";
    }
    write_text(a.csv, csv);
  }
  std::cout << (extrapolate ? "extrapolated" : "perturbed") << " along hypermode " << a.mode << " of " << basis.rbar
            << "; wrote " << a.out << "\n";
}

// compress

struct CompressArgs {
  std::string ckpt;
  std::vector<std::string> anchors;
  std::size_t n = 81;
  double tol = 1e-8;
  std::size_t max_rank = 0;
  bool use_hypermodes = false;
  std::string out;
  std::string sweep;
  std::size_t sweep_max_rank = 0;
};

void cmd_compress(const CompressArgs& a) {
  Checkpoint ck = load_checkpoint(a.ckpt);
  const MetaModel& model = ck.model;
  const Matrix anchors = parse_anchors(a.anchors, model.factors.input_dim());
  const Vector times = time_grid(model.normalizer.t0, model.normalizer.t1, a.n);
  if (a.use_hypermodes && !ck.hypermodes)
    throw InvalidInput(a.ckpt + " has no hypermode section; run the hypermodes command with --out-ckpt first");
  const HypermodeBasis* proj = a.use_hypermodes ? &*ck.hypermodes : nullptr;
  const FastLrnrModel fast = compress(model, anchors, times, {a.tol, a.max_rank, 1e10}, proj);
  for (const auto& w : fast.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "hidden ranks";
  for (std::size_t r : fast.hidden_ranks()) std::cout << " " << r;
  std::cout << " (full width " << fast.full_width << ")\n";
  if (!a.sweep.empty()) {
    std::size_t top = a.sweep_max_rank;
    if (top == 0)
      for (std::size_t r : fast.hidden_ranks()) top = std::max(top, r);
    const auto rows = rank_sweep(model, anchors, times, top, a.tol, proj);
    std::string csv = "rank,rel_error,fast_ops,full_ops\n";
    for (const auto& r : rows)
      csv += std::to_string(r.rank) + "," + fmt(r.rel_error) + "," + std::to_string(r.fast_ops) + "," +
             std::to_string(r.full_ops) + "\n";
    write_text(a.sweep, csv);
    std::cout << "wrote " << a.sweep << "\n";
  }
  ck.fast = fast;
  ck.train_state.reset();
  ensure_parent(a.out);
  save_checkpoint(ck, a.out);
  std::cout << "wrote " << a.out << "\n";
}

// fast-eval

struct FastEvalArgs {
  std::string ckpt;
  std::size_t anchor = 0;
  std::size_t n = 81;
  std::optional<double> t0, t1;
  std::string out;
};

void cmd_fast_eval(const FastEvalArgs& a) {
  const Checkpoint ck = load_checkpoint(a.ckpt);
  if (!ck.fast) throw InvalidInput(a.ckpt + " has no FastLRNR section; run compress first");
  const FastLrnrModel& fast = *ck.fast;
  if (a.anchor >= fast.anchors.cols()) throw InvalidInput("--anchor index out of range");
  const Vector x = fast.anchors.col(a.anchor);
  const Vector times = time_grid(a.t0.value_or(ck.model.normalizer.t0), a.t1.value_or(ck.model.normalizer.t1), a.n);
  const FastEvalSeries series = fast_eval_series(fast, ck.model, x, times);
  const std::size_t m = fast.output_dim();
  std::string csv = "t";
  for (std::size_t i = 0; i < m; ++i) {
    const std::string k = std::to_string(i + 1);
    csv += ",fast_u" + k + ",full_u" + k + ",abs_error_u" + k;
  }
  csv += "\n";
  for (std::size_t j = 0; j < times.size(); ++j) {
    csv += fmt(times[j]);
    for (std::size_t i = 0; i < m; ++i)
      csv += "," + fmt(series.fast_values[j][i]) + "," + fmt(series.full_values[j][i]) + "," +
             fmt(std::abs(series.fast_values[j][i] - series.full_values[j][i]));
    csv += "\n";
  }
  write_text(a.out, csv);
  std::cout << "rel_error " << short_fmt(series.rel_error) << " madds/eval fast " << series.fast_ops << " dense "
            << series.full_ops << " factored " << series.factored_ops << "\nwrote " << a.out << "\n";
}

// rate-study

struct RateArgs {
  std::string problem = "wave1d";
  std::vector<std::size_t> widths{32, 64, 128, 256, 512};
  std::size_t seeds = 5;
  std::uint64_t seed = 0;
  std::string out;
};

void cmd_rate_study(const RateArgs& a) {
  RateProblem problem;
  try {
    problem = parse_rate_problem(a.problem);
  } catch (const Error& e) {
    throw config_error(e.what());
  }
  const RateStudyResult r = rate_study(problem, a.widths, a.seeds, a.seed);
  std::string csv = "width,seed,h1_error,slope\n";
  for (const auto& row : r.rows)
    csv += std::to_string(row.width) + "," + std::to_string(row.seed) + "," + fmt(row.error) + "," + fmt(r.slope) + "\n";
  write_text(a.out, csv);
  std::cout << to_string(problem) << " slope " << fmt(r.slope) << "\nwrote " << a.out << "\n";
}

// gradcheck

struct GradcheckArgs {
  std::string config;
  std::size_t seeds = 10;
  std::optional<double> tolerance;
};

bool cmd_gradcheck(const GradcheckArgs& a) {
  const RunConfig cfg = a.config.empty() ? small_gradcheck_config() : load_run_config(a.config);
  const double tol = a.tolerance.value_or(cfg.gradcheck.tolerance);
  const WaveDataset ds = generate_problem(cfg.problem);
  const std::size_t ns = std::min(cfg.gradcheck.snapshots, ds.size());
  double worst = 0.0;
  for (std::size_t k = 0; k < a.seeds; ++k) {
    RunConfig c = cfg;
    c.seed = cfg.seed + k;
    const MetaModel model = fresh_model(c, ds.spatial_dim, ds.output_dim, normalizer_for(ds));
    std::vector<Snapshot> kept;
    kept.reserve(ns);
    std::vector<BatchItem> batch;
    for (std::size_t i = 0; i < ns; ++i) {
      const std::size_t idx = ns == 1 ? ds.size() / 2 : i * (ds.size() - 1) / (ns - 1);
      kept.push_back(drop_near_kinks(model, ds.times[idx], ds.snapshots[idx], cfg.gradcheck.margin));
      batch.push_back({ds.times[idx], &kept.back()});
    }
    for (int alpha = 0; alpha < 2; ++alpha) {
      const GradcheckReport rep = gradcheck(model, batch, c.train, alpha, cfg.gradcheck.h, cfg.gradcheck.floor);
      worst = std::max(worst, rep.max_rel_error);
      std::cout << "seed " << c.seed << " alpha " << alpha << " params " << rep.checked << " max_rel_error "
                << short_fmt(rep.max_rel_error) << " (" << rep.worst_block << ")\n";
    }
  }
  const bool ok = worst < tol;
  std::cout << (ok ? "PASS" : "FAIL") << " max_rel_error " << short_fmt(worst) << " tolerance " << tol << "\n";
  return ok;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Low-rank neural representations of wave data"};
  app.require_subcommand(1);
  std::function<bool()> action;

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "generate an analytic dataset");
  g->add_option("--problem", gen.problem, "advection1d | wave1d | wave2d-planar | burgers1d-riemann")
      ->capture_default_str();
  g->add_option("--out", gen.out, "dataset path")->required();
  g->add_option("--cells", gen.spec.cells, "cells per axis (0: 128 in 1d, 64 in 2d)")->capture_default_str();
  g->add_option("--times", gen.spec.n_times, "number of snapshots")->capture_default_str();
  g->add_option("--t0", gen.spec.t0)->capture_default_str();
  g->add_option("--t1", gen.spec.t1)->capture_default_str();
  g->add_option("--lo", gen.spec.lo)->capture_default_str();
  g->add_option("--hi", gen.spec.hi)->capture_default_str();
  g->add_option("--speed", gen.spec.speed, "advection velocity or wave speed")->capture_default_str();
  g->add_option("--profile", gen.spec.profile, "advection profile: gaussian | step")->capture_default_str();
  g->add_option("--center", gen.spec.center)->capture_default_str();
  g->add_option("--width", gen.spec.width)->capture_default_str();
  g->add_option("--height", gen.spec.height)->capture_default_str();
  g->add_option("--atoms", gen.spec.atoms, "wave atoms per part")->capture_default_str();
  g->add_option("--seed", gen.spec.seed)->capture_default_str();
  g->add_option("--ul", gen.spec.u_left)->capture_default_str();
  g->add_option("--ur", gen.spec.u_right)->capture_default_str();
  g->add_option("--x0", gen.spec.x0)->capture_default_str();
  g->callback([&] { action = [&] { cmd_gen(gen); return true; }; });

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a meta-network");
  t->add_option("--config", tr.config, "JSON run config");
  t->add_option("--data", tr.data, "dataset (default: paths.data, else generated from the problem section)");
  t->add_option("--out", tr.out, "checkpoint path");
  t->add_option("--history", tr.history, "history CSV (default: <out>.history.csv)");
  t->add_option("--resume", tr.resume, "continue from this checkpoint");
  t->add_option("--epochs", tr.epochs, "stop after this many epochs in this run");
  t->add_option("--log-every", tr.log_every, "print every n-th epoch");
  t->callback([&] { action = [&] { cmd_train(tr); return true; }; });

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint on a grid or on dataset points");
  e->add_option("--ckpt", ev.ckpt)->required();
  e->add_option("--t", ev.times, "evaluation times");
  add_grid_options(e, ev.grid);
  e->add_option("--data", ev.data, "evaluate at this dataset's points and times");
  e->add_option("--out", ev.out, "dataset path")->required();
  e->callback([&] { action = [&] { cmd_eval(ev); return true; }; });

  HypermodeArgs hm;
  auto* h = app.add_subcommand("hypermodes", "coefficient snapshot SVD and temporal fits");
  h->add_option("--ckpt", hm.ckpt)->required();
  h->add_option("--n", hm.n, "snapshot times")->capture_default_str();
  h->add_option("--tol", hm.tol, "energy tolerance")->capture_default_str();
  h->add_option("--threshold", hm.threshold, "truncation threshold")->capture_default_str();
  h->add_option("--degree", hm.degree, "largest Chebyshev degree")->capture_default_str();
  h->add_option("--out-dir", hm.out_dir)->capture_default_str();
  h->add_option("--out-ckpt", hm.out_ckpt, "write a checkpoint with the hypermode section");
  h->callback([&] { action = [&] { cmd_hypermodes(hm); return true; }; });

  PerturbArgs pt;
  bool extrap = false;
  auto add_perturb = [&](const char* name, const char* help, bool is_extrap) {
    auto* p = app.add_subcommand(name, help);
    p->add_option("--ckpt", pt.ckpt)->required();
    p->add_option("--t", pt.t)->required();
    p->add_option("--mode", pt.mode, "hypermode index, from 1")->capture_default_str();
    p->add_option("--eta", pt.eta)->capture_default_str();
    p->add_flag("--normalized", pt.normalized, "scale eta by the coordinate norm");
    add_grid_options(p, pt.grid);
    p->add_option("--n", pt.n, "snapshot times when the checkpoint has no hypermodes")->capture_default_str();
    p->add_option("--tol", pt.tol, "energy tolerance when computing hypermodes")->capture_default_str();
    p->add_option("--out", pt.out, "dataset path for the perturbed field")->required();
    p->add_option("--csv", pt.csv, "also write x, base and perturbed values as CSV");
    p->callback([&, is_extrap] {
      extrap = is_extrap;
      action = [&] { cmd_perturb(pt, extrap); return true; };
    });
  };
  add_perturb("perturb", "field perturbed along a hypermode tangent", false);
  add_perturb("extrap", "field extrapolated along a hypermode", true);

  CompressArgs cp;
  auto* c = app.add_subcommand("compress", "build a FastLRNR at anchor points");
  c->add_option("--ckpt", cp.ckpt)->required();
  c->add_option("--anchor", cp.anchors, "anchor point, comma separated coordinates")->required();
  c->add_option("--n", cp.n, "snapshot times")->capture_default_str();
  c->add_option("--tol", cp.tol, "relative singular value cutoff")->capture_default_str();
  c->add_option("--max-rank", cp.max_rank, "cap on hidden ranks (0: none)")->capture_default_str();
  c->add_flag("--hypermodes", cp.use_hypermodes, "drive the model with reduced coefficients");
  c->add_option("--out", cp.out, "checkpoint path")->required();
  c->add_option("--sweep", cp.sweep, "rank sweep CSV");
  c->add_option("--sweep-max-rank", cp.sweep_max_rank)->capture_default_str();
  c->callback([&] { action = [&] { cmd_compress(cp); return true; }; });

  FastEvalArgs fe;
  auto* f = app.add_subcommand("fast-eval", "point evaluation series with the compressed model");
  f->add_option("--ckpt", fe.ckpt)->required();
  f->add_option("--anchor", fe.anchor, "anchor index")->capture_default_str();
  f->add_option("--n", fe.n, "number of times")->capture_default_str();
  f->add_option("--t0", fe.t0);
  f->add_option("--t1", fe.t1);
  f->add_option("--out", fe.out, "CSV path")->required();
  f->callback([&] { action = [&] { cmd_fast_eval(fe); return true; }; });

  RateArgs rs;
  auto* r = app.add_subcommand("rate-study", "empirical approximation rates of the exact constructions");
  r->add_option("--problem", rs.problem, "wave1d | wave2d | advection1d")->capture_default_str();
  r->add_option("--widths", rs.widths)->delimiter(',')->capture_default_str();
  r->add_option("--seeds", rs.seeds)->capture_default_str();
  r->add_option("--seed", rs.seed)->capture_default_str();
  r->add_option("--out", rs.out, "CSV path")->required();
  r->callback([&] { action = [&] { cmd_rate_study(rs); return true; }; });

  GradcheckArgs gc;
  auto* gcc = app.add_subcommand("gradcheck", "finite-difference audit of the gradients");
  gcc->add_option("--config", gc.config, "JSON run config (default: small built-in network)");
  gcc->add_option("--seeds", gc.seeds)->capture_default_str();
  gcc->add_option("--tol", gc.tolerance, "overrides gradcheck.tolerance");
  gcc->callback([&] { action = [&] { return cmd_gradcheck(gc); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : 1;
  }
  try {
    return action() ? 0 : 3;
  } catch (const Error& err) {
    std::cerr << "error [" << to_string(err.kind()) << "]: " << err.what() << "\n";
    return exit_code_for(err.kind());
  } catch (const std::filesystem::filesystem_error& err) {
    std::cerr << "error [io-error]: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
}

}  // namespace lrnr
