#include "lrnr/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "lrnr/errors.hpp"

namespace lrnr {

void TrainConfig::validate() const {
  auto nonneg = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidInput(std::string("config: ") + name + " must be >= 0");
  };
  nonneg(lambda_sparse, "lambda_sparse");
  nonneg(lambda_ortho, "lambda_ortho");
  nonneg(w0, "w0");
  nonneg(target_rel_l2, "target_rel_l2");
  if (!(gamma > 0.0)) throw InvalidInput("config: gamma must be > 0");
  if (!(tau > 0.0)) throw InvalidInput("config: tau must be > 0");
  if (!(lr0 > 0.0)) throw InvalidInput("config: lr0 must be > 0");
  if (!(plateau_factor > 0.0 && plateau_factor <= 1.0))
    throw InvalidInput("config: plateau_factor must lie in (0, 1]");
  if (plateau_patience < 1) throw InvalidInput("config: plateau_patience must be >= 1");
  nonneg(plateau_threshold, "plateau_threshold");
  if (n_epc < 1) throw InvalidInput("config: n_epc must be >= 1");
  if (batch < 1) throw InvalidInput("config: batch must be >= 1");
  if (check_every < 1) throw InvalidInput("config: check_every must be >= 1");
}

// ---------------------------------------------------------------- parameters

GradientBundle GradientBundle::zeros_like(const MetaModel& model) {
  GradientBundle g{model.factors, model.hyper};
  for (auto& layer : g.factors.layers) {
    layer.u.fill(0.0);
    layer.v.fill(0.0);
    layer.b.fill(0.0);
  }
  std::fill(g.factors.output_bias.begin(), g.factors.output_bias.end(), 0.0);
  for (auto& layer : g.hyper.layers) {
    layer.weight.fill(0.0);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
  return g;
}

namespace {

std::vector<ParamBlock> blocks_of(LrnrFactors& f, HyperNetParams& h) {
  std::vector<ParamBlock> out;
  for (std::size_t l = 0; l < f.layers.size(); ++l) {
    const std::string n = std::to_string(l + 1);
    out.push_back({"U" + n, f.layers[l].u.values()});
    out.push_back({"V" + n, f.layers[l].v.values()});
    out.push_back({"B" + n, f.layers[l].b.values()});
  }
  out.push_back({"b_out", f.output_bias});
  for (std::size_t l = 0; l < h.layers.size(); ++l) {
    const std::string n = std::to_string(l + 1);
    out.push_back({"hyper.W" + n, h.layers[l].weight.values()});
    out.push_back({"hyper.b" + n, h.layers[l].bias});
  }
  return out;
}

}  // namespace

std::vector<ParamBlock> parameter_blocks(MetaModel& model) { return blocks_of(model.factors, model.hyper); }
std::vector<ParamBlock> parameter_blocks(GradientBundle& grads) { return blocks_of(grads.factors, grads.hyper); }

std::size_t parameter_count(const MetaModel& model) {
  std::size_t n = model.factors.output_bias.size();
  for (const auto& l : model.factors.layers) n += l.u.size() + l.v.size() + l.b.size();
  for (const auto& l : model.hyper.layers) n += l.weight.size() + l.bias.size();
  return n;
}

TrainState TrainState::initial(const MetaModel& model, const TrainConfig& config) {
  TrainState st;
  const std::size_t n = parameter_count(model);
  st.adam.m.assign(n, 0.0);
  st.adam.v.assign(n, 0.0);
  st.lr = config.lr0;
  st.radius = config.w0;
  st.rng = Rng::stream(config.seed, 1).state();
  return st;
}

// ---------------------------------------------------------------- losses

namespace {

void check_misfit_shapes(const Matrix& yhat, const Matrix& y, std::span<const double> w) {
  if (yhat.rows() != y.rows() || yhat.cols() != y.cols() || y.cols() != w.size())
    throw InvalidInput("misfit: shape mismatch between prediction, reference and weights");
}

double weighted_power_sum(const Matrix& m, std::span<const double> w, int q) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    for (std::size_t j = 0; j < r.size(); ++j)
      s += w[j] * (q == 1 ? std::abs(r[j]) : r[j] * r[j]);
  }
  return s;
}

}  // namespace

double misfit(const Matrix& yhat, const Matrix& y, std::span<const double> weights, int q) {
  if (q != 1 && q != 2) throw InvalidInput("misfit: q must be 1 or 2");
  check_misfit_shapes(yhat, y, weights);
  const double ref = weighted_power_sum(y, weights, q);
  if (!(ref > 0.0)) throw InvalidInput("misfit: reference has zero weighted norm");
  return weighted_power_sum(yhat - y, weights, q) / ref;
}

double misfit_blend(const Matrix& yhat, const Matrix& y, std::span<const double> weights, int alpha) {
  if (alpha != 0 && alpha != 1) throw InvalidInput("misfit_blend: alpha must be 0 or 1");
  return alpha == 1 ? misfit(yhat, y, weights, 1) : misfit(yhat, y, weights, 2);
}

namespace {

template <class Fn>
void for_each_block(const RankSpec& r, Fn fn) {
  for (std::size_t l = 0; l < r.depth(); ++l) {
    fn(r.weight_offset(l), r.weight_ranks[l]);
    fn(r.bias_offset(l), r.bias_ranks[l]);
  }
}

}  // namespace

double reg_sparse(const CoeffVector& s, double gamma) {
  const auto& v = s.flat();
  double total = 0.0;
  for_each_block(s.ranks(), [&](std::size_t off, std::size_t len) {
    for (std::size_t j = 0; j + 1 < len; ++j)
      total += std::max(0.0, gamma * v[off + j + 1] - v[off + j]);
  });
  return total;
}

Vector reg_sparse_gradient(const CoeffVector& s, double gamma) {
  const auto& v = s.flat();
  Vector g(v.size(), 0.0);
  for_each_block(s.ranks(), [&](std::size_t off, std::size_t len) {
    for (std::size_t j = 0; j + 1 < len; ++j) {
      if (gamma * v[off + j + 1] - v[off + j] > 0.0) {
        g[off + j + 1] += gamma;
        g[off + j] -= 1.0;
      }
    }
  });
  return g;
}

namespace {

// ||X^T X - I||_F^2 / #X, and optionally 4 X (X^T X - I) / #X.
double ortho_term(const Matrix& x, Matrix* grad, double scale) {
  if (x.size() == 0) return 0.0;
  Matrix gram = matmul_tn(x, x);
  for (std::size_t i = 0; i < gram.rows(); ++i) gram(i, i) -= 1.0;
  const double count = static_cast<double>(x.size());
  double s = 0.0;
  for (double v : gram.values()) s += v * v;
  if (grad) {
    Matrix g = matmul(x, gram);
    g *= 4.0 * scale / count;
    *grad += g;
  }
  return s / count;
}

}  // namespace

double reg_ortho(const LrnrFactors& f) {
  double total = 0.0;
  for (const auto& l : f.layers)
    total += ortho_term(l.u, nullptr, 0.0) + ortho_term(l.v, nullptr, 0.0) + ortho_term(l.b, nullptr, 0.0);
  return total;
}

void add_reg_ortho_gradient(const LrnrFactors& f, double scale, LrnrFactors& grads) {
  for (std::size_t l = 0; l < f.layers.size(); ++l) {
    ortho_term(f.layers[l].u, &grads.layers[l].u, scale);
    ortho_term(f.layers[l].v, &grads.layers[l].v, scale);
    ortho_term(f.layers[l].b, &grads.layers[l].b, scale);
  }
}

namespace {

void check_batch(const MetaModel& model, std::span<const BatchItem> batch) {
  if (batch.empty()) throw InvalidInput("empty batch");
  for (const auto& item : batch) {
    if (!item.snapshot) throw InvalidInput("batch item without snapshot");
    if (item.snapshot->points.rows() != model.factors.input_dim() ||
        item.snapshot->values.rows() != model.factors.output_dim())
      throw InvalidInput("snapshot dimensions do not match the model");
  }
}

}  // namespace

LossBreakdown total_loss(const MetaModel& model, std::span<const BatchItem> batch,
                         const TrainConfig& config, int alpha) {
  check_batch(model, batch);
  LossBreakdown out;
  const RankSpec ranks = model.ranks();
  for (const auto& item : batch) {
    const CoeffVector s = model.coefficients(item.t);
    const Matrix yhat = forward_batch(model.factors, s, item.snapshot->points);
    out.misfit += misfit_blend(yhat, item.snapshot->values, item.snapshot->weights, alpha);
    out.reg_sparse += reg_sparse(s, config.gamma);
  }
  const double k = static_cast<double>(batch.size());
  out.misfit /= k;
  out.reg_sparse /= k;
  out.reg_ortho = reg_ortho(model.factors);
  out.total = out.misfit + config.lambda_sparse * out.reg_sparse + config.lambda_ortho * out.reg_ortho;
  return out;
}

// ---------------------------------------------------------------- backprop

namespace {

struct LayerCache {
  Matrix a;     // V^T z
  Matrix zeta;  // s1 .* a
  Matrix y;     // pre-activation
};

// Accumulates gradients of `scale * misfit_blend` for one snapshot into g and
// returns the misfit value together with dL/ds.
double snapshot_backward(const LrnrFactors& f, const CoeffVector& s, const Snapshot& snap, int alpha,
                         double scale, LrnrFactors& g, Vector& ds) {
  const std::size_t depth = f.depth();
  const std::size_t npts = snap.size();
  std::vector<Matrix> zin(depth);
  std::vector<LayerCache> cache(depth);
  zin[0] = snap.points;
  for (std::size_t l = 0; l < depth; ++l) {
    const auto& layer = f.layers[l];
    auto& c = cache[l];
    c.a = matmul_tn(layer.v, zin[l]);
    c.zeta = c.a;
    const auto s1 = s.weight(l);
    for (std::size_t k = 0; k < c.zeta.rows(); ++k)
      for (double& v : c.zeta.row(k)) v *= s1[k];
    c.y = matmul(layer.u, c.zeta);
    Vector bias = layer.b.cols() > 0 ? matvec(layer.b, s.bias(l)) : Vector(c.y.rows(), 0.0);
    const bool last = l + 1 == depth;
    if (last)
      for (std::size_t i = 0; i < bias.size(); ++i) bias[i] += f.output_bias[i];
    for (std::size_t i = 0; i < c.y.rows(); ++i)
      for (double& v : c.y.row(i)) v += bias[i];
    if (!c.y.all_finite()) {
      std::ostringstream msg;
      msg << "non-finite value in layer " << l + 1 << " of the forward pass";
      throw NumericOverflow(msg.str());
    }
    if (!last) {
      Matrix z = c.y;
      for (double& v : z.values()) v = activate(f.activation, v);
      zin[l + 1] = std::move(z);
    }
  }

  // Output sensitivity of the normalized misfit.
  const Matrix& yhat = cache[depth - 1].y;
  const Matrix& y = snap.values;
  const std::span<const double> w = snap.weights;
  const int q = alpha == 1 ? 1 : 2;
  const double ref = weighted_power_sum(y, w, q);
  if (!(ref > 0.0)) throw InvalidInput("misfit: reference has zero weighted norm");
  Matrix grad(yhat.rows(), npts);
  double num = 0.0;
  for (std::size_t i = 0; i < yhat.rows(); ++i) {
    for (std::size_t j = 0; j < npts; ++j) {
      const double e = yhat(i, j) - y(i, j);
      if (q == 2) {
        num += w[j] * e * e;
        grad(i, j) = scale * 2.0 * w[j] * e / ref;
      } else {
        num += w[j] * std::abs(e);
        grad(i, j) = scale * w[j] * (e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0)) / ref;
      }
    }
  }

  for (std::size_t l = depth; l-- > 0;) {
    const auto& layer = f.layers[l];
    auto& gl = g.layers[l];
    auto& c = cache[l];
    if (l + 1 < depth) {
      for (std::size_t i = 0; i < grad.rows(); ++i) {
        auto gr = grad.row(i);
        const auto yr = c.y.row(i);
        for (std::size_t j = 0; j < npts; ++j) gr[j] *= activate_derivative(f.activation, yr[j]);
      }
    }
    Vector rowsum(grad.rows(), 0.0);
    for (std::size_t i = 0; i < grad.rows(); ++i)
      for (double v : grad.row(i)) rowsum[i] += v;

    gl.u += matmul_nt(grad, c.zeta);
    Matrix dzeta = matmul_tn(layer.u, grad);
    const auto s1 = s.weight(l);
    const std::size_t off1 = s.ranks().weight_offset(l);
    for (std::size_t k = 0; k < dzeta.rows(); ++k) {
      ds[off1 + k] += dot(dzeta.row(k), c.a.row(k));
      for (double& v : dzeta.row(k)) v *= s1[k];
    }
    gl.v += matmul_nt(zin[l], dzeta);
    if (layer.b.cols() > 0) {
      const auto s2 = s.bias(l);
      const std::size_t off2 = s.ranks().bias_offset(l);
      for (std::size_t i = 0; i < layer.b.rows(); ++i)
        for (std::size_t k = 0; k < layer.b.cols(); ++k) gl.b(i, k) += rowsum[i] * s2[k];
      const Vector db = matvec_t(layer.b, rowsum);
      for (std::size_t k = 0; k < db.size(); ++k) ds[off2 + k] += db[k];
    }
    if (l + 1 == depth)
      for (std::size_t i = 0; i < rowsum.size(); ++i) g.output_bias[i] += rowsum[i];
    if (l > 0) grad = matmul(layer.v, dzeta);
  }
  return num / ref;
}

void hyper_backward(const HyperNetParams& p, const HyperTrace& trace, const Vector& dout,
                    HyperNetParams& g) {
  Vector delta = dout;
  for (std::size_t l = p.layers.size(); l-- > 0;) {
    auto& gl = g.layers[l];
    const Vector& in = trace.input[l];
    for (std::size_t i = 0; i < delta.size(); ++i) {
      auto row = gl.weight.row(i);
      for (std::size_t j = 0; j < in.size(); ++j) row[j] += delta[i] * in[j];
      gl.bias[i] += delta[i];
    }
    if (l == 0) break;
    Vector prev = matvec_t(p.layers[l].weight, delta);
    const Vector& pre = trace.pre[l - 1];
    for (std::size_t j = 0; j < prev.size(); ++j) prev[j] *= activate_derivative(p.activation, pre[j]);
    delta = std::move(prev);
  }
}

}  // namespace

BackpropResult backprop(const MetaModel& model, std::span<const BatchItem> batch,
                        const TrainConfig& config, int alpha) {
  if (alpha != 0 && alpha != 1) throw InvalidInput("backprop: alpha must be 0 or 1");
  check_batch(model, batch);
  BackpropResult out{{}, GradientBundle::zeros_like(model)};
  const RankSpec ranks = model.ranks();
  const double k = static_cast<double>(batch.size());
  for (const auto& item : batch) {
    const HyperTrace trace = hyper_forward_trace(model.hyper, model.normalizer.normalize(item.t));
    const CoeffVector s = CoeffVector::unflatten(ranks, trace.output);
    Vector ds(ranks.total(), 0.0);
    out.loss.misfit +=
        snapshot_backward(model.factors, s, *item.snapshot, alpha, 1.0 / k, out.grads.factors, ds);
    out.loss.reg_sparse += reg_sparse(s, config.gamma);
    if (config.lambda_sparse > 0.0) {
      const Vector gs = reg_sparse_gradient(s, config.gamma);
      for (std::size_t i = 0; i < ds.size(); ++i) ds[i] += config.lambda_sparse / k * gs[i];
    }
    hyper_backward(model.hyper, trace, ds, out.grads.hyper);
  }
  out.loss.misfit /= k;
  out.loss.reg_sparse /= k;
  out.loss.reg_ortho = reg_ortho(model.factors);
  if (config.lambda_ortho > 0.0) add_reg_ortho_gradient(model.factors, config.lambda_ortho, out.grads.factors);
  out.loss.total =
      out.loss.misfit + config.lambda_sparse * out.loss.reg_sparse + config.lambda_ortho * out.loss.reg_ortho;
  for (const auto& block : parameter_blocks(out.grads)) {
    if (!all_finite(block.values))
      throw NumericOverflow("non-finite gradient in parameter block " + block.name);
  }
  return out;
}

// ---------------------------------------------------------------- optimizer

namespace {

void adam_update(std::span<double> p, std::span<const double> g, double* m, double* v, double lr,
                 double c1, double c2) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
    v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
  }
}

}  // namespace

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw InvalidInput("adam_step: moment shapes differ from parameters");
  ++state.step;
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
  adam_update(params, grads, state.m.data(), state.v.data(), lr, c1, c2);
}

void adam_step(MetaModel& model, GradientBundle& grads, AdamState& state, double lr) {
  auto pb = parameter_blocks(model);
  auto gb = parameter_blocks(grads);
  std::size_t total = 0;
  for (std::size_t i = 0; i < pb.size(); ++i) {
    if (pb[i].values.size() != gb[i].values.size())
      throw InvalidInput("adam_step: gradient block " + gb[i].name + " has the wrong shape");
    total += pb[i].values.size();
  }
  if (state.m.size() != total || state.v.size() != total)
    throw InvalidInput("adam_step: moment shapes differ from parameters");
  ++state.step;
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
  std::size_t off = 0;
  for (std::size_t i = 0; i < pb.size(); ++i) {
    adam_update(pb[i].values, gb[i].values, state.m.data() + off, state.v.data() + off, lr, c1, c2);
    off += pb[i].values.size();
  }
}

double plateau_lr(PlateauState& state, double epoch_loss, double lr, const PlateauConfig& config) {
  if (epoch_loss < state.best * (1.0 - config.threshold)) {
    state.best = epoch_loss;
    state.bad_epochs = 0;
    return lr;
  }
  if (++state.bad_epochs >= config.patience) {
    state.bad_epochs = 0;
    return lr * config.factor;
  }
  return lr;
}

double mollifier_radius(std::size_t epoch, double w0, std::size_t n_epc) {
  if (n_epc == 0) throw InvalidInput("mollifier_radius: n_epc must be >= 1");
  if (epoch > n_epc) throw InvalidInput("mollifier_radius: epoch beyond the allocated schedule");
  if (2 * epoch >= n_epc) return 0.0;
  const double n = static_cast<double>(n_epc);
  return w0 * ((n - 2.0 * static_cast<double>(epoch)) / n);
}

// ---------------------------------------------------------------- loop

std::string history_csv_header() { return "epoch,misfit,reg_sparse,reg_ortho,total,alpha,lr,radius"; }

std::string history_csv_row(const HistoryRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%d,%.17g,%.17g", r.epoch, r.misfit,
                r.reg_sparse, r.reg_ortho, r.total, r.alpha, r.lr, r.radius);
  return buf;
}

void write_history_csv(const std::vector<HistoryRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write history file " + path);
  out << history_csv_header() << '\n';
  for (const auto& r : rows) out << history_csv_row(r) << '\n';
  if (!out) throw Error(ErrorKind::IoError, "failed writing history file " + path);
}

double relative_l2_error(const MetaModel& model, const WaveDataset& ds) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < ds.size(); ++k) {
    const auto& snap = ds.snapshots[k];
    const Matrix yhat = forward_batch(model.factors, model.coefficients(ds.times[k]), snap.points);
    for (std::size_t i = 0; i < yhat.rows(); ++i) {
      for (std::size_t j = 0; j < snap.size(); ++j) {
        const double e = yhat(i, j) - snap.values(i, j);
        num += snap.weights[j] * e * e;
        den += snap.weights[j] * snap.values(i, j) * snap.values(i, j);
      }
    }
  }
  if (!(den > 0.0)) throw InvalidInput("relative_l2_error: data has zero norm");
  return std::sqrt(num / den);
}

TrainResult train_loop(MetaModel model, std::shared_ptr<const WaveDataset> data, const TrainConfig& config,
                       const TrainState* resume, const TrainOptions& options) {
  config.validate();
  model.validate();
  if (!data || data->size() == 0) throw InvalidInput("train_loop: empty dataset");
  data->validate();
  if (data->spatial_dim != model.factors.input_dim() || data->output_dim != model.factors.output_dim())
    throw InvalidInput("train_loop: dataset dimensions do not match the model");
  if (config.batch > data->size()) throw InvalidInput("train_loop: batch exceeds the number of snapshots");

  TrainState start = resume ? *resume : TrainState::initial(model, config);
  TrainResult res{std::move(model), std::move(start), {}, 0.0, false};
  TrainState& st = res.state;
  if (st.adam.m.size() != parameter_count(res.model)) throw InvalidInput("train_loop: resume state does not match model");
  Rng rng;
  rng.set_state(st.rng);
  const PlateauConfig plateau{config.plateau_factor, config.plateau_patience, config.plateau_threshold};

  std::size_t end = config.n_epc;
  if (options.stop_after > 0) end = std::min(end, st.epoch + options.stop_after);

  std::shared_ptr<const WaveDataset> view;
  double view_radius = -1.0;
  MetaModel last_model = res.model;
  TrainState last_state = st;
  const std::size_t n = data->size();

  while (st.epoch < end) {
    const double radius = mollifier_radius(st.epoch, config.w0, config.n_epc);
    if (!view || radius != view_radius) {
      view = mollified_view(data, radius);
      view_radius = radius;
    }
    st.radius = radius;
    HistoryRow row;
    row.epoch = st.epoch;
    try {
      const auto batches = sample_batch(n, config.batch, rng);
      double ortho_sum = 0.0;
      for (const auto& idx : batches) {
        std::vector<BatchItem> items;
        items.reserve(idx.size());
        for (std::size_t k : idx) items.push_back({view->times[k], &view->snapshots[k]});
        BackpropResult br = backprop(res.model, items, config, st.alpha);
        adam_step(res.model, br.grads, st.adam, st.lr);
        const double kk = static_cast<double>(idx.size());
        row.misfit += br.loss.misfit * kk;
        row.reg_sparse += br.loss.reg_sparse * kk;
        ortho_sum += br.loss.reg_ortho;
      }
      row.misfit /= static_cast<double>(n);
      row.reg_sparse /= static_cast<double>(n);
      row.reg_ortho = ortho_sum / static_cast<double>(batches.size());
      row.total = row.misfit + config.lambda_sparse * row.reg_sparse + config.lambda_ortho * row.reg_ortho;
      if (!std::isfinite(row.total)) throw NumericOverflow("training loss became non-finite");
    } catch (const NumericOverflow&) {
      if (options.on_abort) options.on_abort(last_model, last_state);
      throw;
    }

    if (st.alpha == 0 && row.misfit < config.tau) {
      st.alpha = 1;
      st.lr = config.lr0;
      st.plateau = PlateauState{};
    } else {
      st.lr = plateau_lr(st.plateau, row.total, st.lr, plateau);
    }
    ++st.epoch;
    st.rng = rng.state();
    row.alpha = st.alpha;
    row.lr = st.lr;
    row.radius = radius;
    res.history.push_back(row);
    if (options.on_epoch) options.on_epoch(row);
    last_model = res.model;
    last_state = st;

    if (config.target_rel_l2 > 0.0 && (st.epoch % config.check_every == 0 || st.epoch == config.n_epc)) {
      if (relative_l2_error(res.model, *data) < config.target_rel_l2) {
        res.reached_target = true;
        break;
      }
    }
  }
  res.rel_l2 = relative_l2_error(res.model, *data);
  if (config.target_rel_l2 > 0.0 && res.rel_l2 < config.target_rel_l2) res.reached_target = true;
  return res;
}

// ---------------------------------------------------------------- audit

GradcheckReport gradcheck(const MetaModel& model, std::span<const BatchItem> batch, const TrainConfig& config,
                          int alpha, double h, double floor) {
  GradcheckReport rep;
  BackpropResult br = backprop(model, batch, config, alpha);
  MetaModel probe = model;
  auto pb = parameter_blocks(probe);
  auto gb = parameter_blocks(br.grads);
  double gmax = 0.0;
  for (const auto& blk : gb) gmax = std::max(gmax, max_abs(blk.values));
  const double denom_floor = std::max(floor * gmax, std::numeric_limits<double>::min());
  for (std::size_t b = 0; b < pb.size(); ++b) {
    for (std::size_t i = 0; i < pb[b].values.size(); ++i) {
      double& theta = pb[b].values[i];
      const double saved = theta;
      const double step = h * std::max(1.0, std::abs(saved));
      theta = saved + step;
      const double lp = total_loss(probe, batch, config, alpha).total;
      theta = saved - step;
      const double lm = total_loss(probe, batch, config, alpha).total;
      theta = saved;
      const double fd = (lp - lm) / (2.0 * step);
      const double g = gb[b].values[i];
      const double err = std::abs(g - fd) / std::max(std::abs(g) + std::abs(fd), denom_floor);
      ++rep.checked;
      if (err > rep.max_rel_error) {
        rep.max_rel_error = err;
        rep.worst_block = pb[b].name;
      }
    }
  }
  return rep;
}

Snapshot drop_near_kinks(const MetaModel& model, double t, const Snapshot& snap, double margin) {
  if (model.factors.activation != Activation::Relu) return snap;
  const CoeffVector s = model.coefficients(t);
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < snap.size(); ++j) {
    const ForwardTrace tr = forward_trace(model.factors, s, snap.points.col(j));
    bool ok = true;
    for (const auto& pre : tr.pre)
      for (double v : pre) ok = ok && std::abs(v) >= margin;
    if (ok) keep.push_back(j);
  }
  Snapshot out{Matrix(snap.points.rows(), keep.size()), Matrix(snap.values.rows(), keep.size()), {}};
  for (std::size_t c = 0; c < keep.size(); ++c) {
    out.points.set_col(c, snap.points.col(keep[c]));
    out.values.set_col(c, snap.values.col(keep[c]));
    out.weights.push_back(snap.weights[keep[c]]);
  }
  return out;
}

}  // namespace lrnr
