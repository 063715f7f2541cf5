#include "lrnr/fastlrnr.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "lrnr/errors.hpp"

namespace lrnr {

namespace {

Vector project(const Matrix& phi, std::span<const double> v) {
  const Vector c = matvec_t(phi, v);
  return matvec(phi, c);
}

CoeffVector source_coefficients(const MetaModel& model, const Matrix* phi, double t) {
  CoeffVector s = model.coefficients(t);
  if (phi) s.flat() = project(*phi, s.flat());
  return s;
}

Matrix select_rows(const Matrix& a, const std::vector<std::size_t>& rows) {
  Matrix out(rows.size(), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = a.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

void count(OpCounter* ops, std::uint64_t n) {
  if (ops) ops->madds += n;
}

}  // namespace

Matrix hidden_snapshots(const MetaModel& model, const Matrix& anchors, const Vector& times, std::size_t layer,
                        const HypermodeBasis* projector) {
  if (layer + 1 >= model.factors.depth()) throw InvalidInput("hidden_snapshots: layer is not a hidden layer");
  if (anchors.rows() != model.factors.input_dim() || anchors.cols() == 0)
    throw InvalidInput("hidden_snapshots: anchors must be a nonempty d x A matrix");
  if (times.empty()) throw InvalidInput("hidden_snapshots: no times");
  const Matrix phi = projector ? projector->leading() : Matrix();
  const std::size_t width = model.factors.widths[layer + 1];
  Matrix z(width, times.size() * anchors.cols());
  std::size_t col = 0;
  for (double t : times) {
    const CoeffVector s = source_coefficients(model, projector ? &phi : nullptr, t);
    for (std::size_t a = 0; a < anchors.cols(); ++a, ++col)
      z.set_col(col, forward_trace(model.factors, s, anchors.col(a)).hidden[layer]);
  }
  return z;
}

HiddenBasisLayer build_hidden_basis(const Matrix& z, double tol, std::size_t max_rank) {
  if (z.empty()) throw InvalidInput("build_hidden_basis: empty snapshot matrix");
  if (!z.all_finite()) throw InvalidInput("build_hidden_basis: non-finite snapshots");
  SvdResult svd = thin_svd(z);
  if (svd.singular_values.empty() || !(svd.singular_values[0] > 0.0))
    throw InvalidInput("build_hidden_basis: snapshot matrix is zero");
  const double s1 = svd.singular_values[0];
  std::size_t r = 0;
  while (r < svd.singular_values.size() && svd.singular_values[r] / s1 >= tol) ++r;
  if (max_rank > 0) r = std::min(r, max_rank);
  HiddenBasisLayer out;
  out.xi = svd.left.left_cols(r);
  out.singular_values = std::move(svd.singular_values);
  return out;
}

std::vector<std::size_t> eim_select(const Matrix& xi) {
  const std::size_t m = xi.rows(), r = xi.cols();
  if (r == 0 || r > m) throw InvalidInput("eim_select: basis must have 1 <= columns <= rows");
  auto argmax = [](std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
      if (std::abs(v[i]) > std::abs(v[best])) best = i;
    return best;
  };
  std::vector<std::size_t> idx;
  const Vector first = xi.col(0);
  if (max_abs(first) == 0.0) throw DegenerateBasis("eim_select: first basis vector is zero");
  idx.push_back(argmax(first));
  for (std::size_t k = 1; k < r; ++k) {
    Matrix pt(k, k);
    Matrix rhs(k, 1);
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) pt(i, j) = xi(idx[i], j);
      rhs(i, 0) = xi(idx[i], k);
    }
    Matrix c;
    try {
      c = solve_square(pt, rhs, std::numeric_limits<double>::infinity());
    } catch (const SingularSystem&) {
      throw DegenerateBasis("eim_select: interpolation matrix became singular");
    }
    Vector res = xi.col(k);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < k; ++j) res[i] -= xi(i, j) * c(j, 0);
    if (max_abs(res) <= 1e-14) {
      std::ostringstream msg;
      msg << "eim_select: residual vanished at step " << k + 1 << " of " << r;
      throw DegenerateBasis(msg.str());
    }
    idx.push_back(argmax(res));
  }
  return idx;
}

std::vector<std::size_t> FastLrnrModel::hidden_ranks() const {
  std::vector<std::size_t> r;
  for (const auto& h : hidden) r.push_back(h.rank());
  return r;
}

CoeffVector FastLrnrModel::coefficients(double t) const {
  CoeffVector s = CoeffVector::unflatten(ranks, hyper_forward_normalized(hyper, normalizer.normalize(t)));
  if (projector) s.flat() = project(*projector, s.flat());
  return s;
}

void FastLrnrModel::validate() const {
  if (layers.size() < 2 || hidden.size() + 1 != layers.size())
    throw InvalidInput("FastLrnrModel: layer/basis count mismatch");
  if (ranks.depth() != layers.size()) throw InvalidInput("FastLrnrModel: rank spec depth mismatch");
  std::size_t in = layers.front().v_hat.rows();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& f = layers[l];
    const std::size_t r1 = ranks.weight_ranks[l];
    if (f.v_hat.rows() != in || f.v_hat.cols() != r1 || f.u_hat.cols() != r1 ||
        f.b_hat.cols() != ranks.bias_ranks[l] || f.b_hat.rows() != f.u_hat.rows())
      throw InvalidInput("FastLrnrModel: compressed factor shapes are inconsistent");
    if (l + 1 < layers.size() && f.u_hat.rows() != hidden[l].rank())
      throw InvalidInput("FastLrnrModel: hidden rank mismatch");
    in = f.u_hat.rows();
  }
  if (output_bias.size() != output_dim()) throw InvalidInput("FastLrnrModel: output bias length mismatch");
  if (projector && projector->rows() != ranks.total()) throw InvalidInput("FastLrnrModel: projector shape mismatch");
}

FastLrnrModel compress_with_basis(const MetaModel& model, std::vector<HiddenBasisLayer> hidden,
                                  const Matrix& anchors, const HypermodeBasis* projector, double warn_condition) {
  model.validate();
  const LrnrFactors& f = model.factors;
  const std::size_t depth = f.depth();
  if (hidden.size() + 1 != depth) throw InvalidInput("compress: need one basis per hidden layer");
  FastLrnrModel fast;
  fast.activation = f.activation;
  fast.ranks = f.ranks();
  fast.full_width = f.width();
  fast.output_bias = f.output_bias;
  fast.anchors = anchors;
  fast.hyper = model.hyper;
  fast.normalizer = model.normalizer;
  if (projector) fast.projector = projector->leading();

  std::vector<Matrix> sampled_inverse_t(hidden.size());  // solves with (P^T Xi)^T
  for (std::size_t l = 0; l < hidden.size(); ++l) {
    auto& h = hidden[l];
    if (h.xi.rows() != f.widths[l + 1] || h.indices.size() != h.rank() || h.rank() == 0)
      throw InvalidInput("compress: hidden basis shape mismatch");
    const Matrix pxi = select_rows(h.xi, h.indices);
    h.condition = condition_number_1(pxi);
    if (!(h.condition <= warn_condition)) {
      std::ostringstream msg;
      msg << "hidden layer " << l + 1 << ": condition of P^T Xi is " << h.condition;
      fast.warnings.push_back(msg.str());
    }
    sampled_inverse_t[l] = pxi.transpose();
  }

  for (std::size_t l = 0; l < depth; ++l) {
    const auto& lf = f.layers[l];
    FastLayer out;
    if (l == 0) {
      out.v_hat = lf.v;
    } else {
      const auto& h = hidden[l - 1];
      out.v_hat = solve_square(sampled_inverse_t[l - 1], matmul_tn(h.xi, lf.v),
                               std::numeric_limits<double>::infinity());
    }
    if (l + 1 < depth) {
      out.u_hat = select_rows(lf.u, hidden[l].indices);
      out.b_hat = select_rows(lf.b, hidden[l].indices);
    } else {
      out.u_hat = lf.u;
      out.b_hat = lf.b;
    }
    fast.layers.push_back(std::move(out));
  }
  fast.hidden = std::move(hidden);
  fast.validate();
  return fast;
}

FastLrnrModel compress(const MetaModel& model, const Matrix& anchors, const Vector& times,
                       const CompressOptions& options, const HypermodeBasis* projector) {
  std::vector<HiddenBasisLayer> hidden;
  for (std::size_t l = 0; l + 1 < model.factors.depth(); ++l) {
    HiddenBasisLayer h =
        build_hidden_basis(hidden_snapshots(model, anchors, times, l, projector), options.tol, options.max_rank);
    h.indices = eim_select(h.xi);
    hidden.push_back(std::move(h));
  }
  return compress_with_basis(model, std::move(hidden), anchors, projector, options.warn_condition);
}

namespace {

// One factored layer: U diag(s1) Vhat^T z + B s2.
Vector factored_layer(const Matrix& u, const Matrix& v, const Matrix& b, std::span<const double> s1,
                      std::span<const double> s2, std::span<const double> z, OpCounter* ops) {
  Vector a = matvec_t(v, z);
  count(ops, v.rows() * v.cols());
  for (std::size_t k = 0; k < a.size(); ++k) a[k] *= s1[k];
  count(ops, a.size());
  Vector y = matvec(u, a);
  count(ops, u.rows() * u.cols());
  if (b.cols() > 0) {
    const Vector by = matvec(b, s2);
    count(ops, b.rows() * b.cols());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += by[i];
  }
  return y;
}

}  // namespace

Vector fast_forward(const FastLrnrModel& fast, const CoeffVector& s, std::span<const double> x, OpCounter* ops) {
  if (s.ranks() != fast.ranks) throw InvalidInput("fast_forward: coefficient ranks do not match");
  if (x.size() != fast.input_dim()) throw InvalidInput("fast_forward: input dimension mismatch");
  Vector z(x.begin(), x.end());
  for (std::size_t l = 0; l < fast.layers.size(); ++l) {
    const auto& fl = fast.layers[l];
    Vector y = factored_layer(fl.u_hat, fl.v_hat, fl.b_hat, s.weight(l), s.bias(l), z, ops);
    if (l + 1 < fast.layers.size()) {
      for (double& v : y) v = activate(fast.activation, v);
    } else {
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += fast.output_bias[i];
      count(ops, y.size());
    }
    z = std::move(y);
  }
  return z;
}

Vector fast_forward(const FastLrnrModel& fast, double t, std::span<const double> x, OpCounter* ops) {
  return fast_forward(fast, fast.coefficients(t), x, ops);
}

Vector full_forward_dense(const LrnrFactors& f, const CoeffVector& s, std::span<const double> x, OpCounter* ops) {
  Vector z(x.begin(), x.end());
  for (std::size_t l = 0; l < f.depth(); ++l) {
    const LayerAffine layer = assemble_layer(f, s, l);
    Vector y = matvec(layer.weight, z);
    count(ops, layer.weight.rows() * layer.weight.cols());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += layer.bias[i];
    count(ops, y.size());
    if (l + 1 < f.depth())
      for (double& v : y) v = activate(f.activation, v);
    z = std::move(y);
  }
  return z;
}

Vector full_forward_factored(const LrnrFactors& f, const CoeffVector& s, std::span<const double> x,
                             OpCounter* ops) {
  Vector z(x.begin(), x.end());
  for (std::size_t l = 0; l < f.depth(); ++l) {
    const auto& lf = f.layers[l];
    Vector y = factored_layer(lf.u, lf.v, lf.b, s.weight(l), s.bias(l), z, ops);
    if (l + 1 < f.depth()) {
      for (double& v : y) v = activate(f.activation, v);
    } else {
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += f.output_bias[i];
      count(ops, y.size());
    }
    z = std::move(y);
  }
  return z;
}

FastEvalSeries fast_eval_series(const FastLrnrModel& fast, const MetaModel& full, std::span<const double> x,
                                const Vector& times) {
  if (times.empty()) throw InvalidInput("fast_eval_series: no times");
  FastEvalSeries out;
  out.times = times;
  const Matrix* phi = fast.projector ? &*fast.projector : nullptr;
  double num = 0.0, den = 0.0;
  for (double t : times) {
    OpCounter fo, dense, factored;
    Vector yf = fast_forward(fast, t, x, &fo);
    const CoeffVector s = source_coefficients(full, phi, t);
    Vector yd = full_forward_dense(full.factors, s, x, &dense);
    full_forward_factored(full.factors, s, x, &factored);
    for (std::size_t i = 0; i < yd.size(); ++i) {
      num += (yf[i] - yd[i]) * (yf[i] - yd[i]);
      den += yd[i] * yd[i];
    }
    out.fast_ops = fo.madds;
    out.full_ops = dense.madds;
    out.factored_ops = factored.madds;
    out.fast_values.push_back(std::move(yf));
    out.full_values.push_back(std::move(yd));
  }
  out.rel_error = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
  return out;
}

std::vector<RankSweepRow> rank_sweep(const MetaModel& model, const Matrix& anchors, const Vector& times,
                                     std::size_t max_rank, double tol, const HypermodeBasis* projector) {
  if (max_rank < 1) throw InvalidInput("rank_sweep: max_rank must be >= 1");
  std::vector<RankSweepRow> rows;
  const Vector x = anchors.col(0);
  for (std::size_t k = 1; k <= max_rank; ++k) {
    CompressOptions opts;
    opts.tol = tol;
    opts.max_rank = k;
    const FastLrnrModel fast = compress(model, anchors, times, opts, projector);
    const FastEvalSeries series = fast_eval_series(fast, model, x, times);
    rows.push_back({k, series.rel_error, series.fast_ops, series.full_ops});
  }
  return rows;
}

}  // namespace lrnr
