#include "lrnr/lrnr_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "lrnr/errors.hpp"
#include "lrnr/rng.hpp"

namespace lrnr {

std::string to_string(Activation a) { return a == Activation::Relu ? "relu" : "tanh"; }

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  throw InvalidInput("unknown activation '" + name + "' (expected relu or tanh)");
}

// ---------------------------------------------------------------- RankSpec

std::size_t RankSpec::total() const {
  return std::accumulate(weight_ranks.begin(), weight_ranks.end(), std::size_t{0}) +
         std::accumulate(bias_ranks.begin(), bias_ranks.end(), std::size_t{0});
}

std::size_t RankSpec::weight_offset(std::size_t layer) const {
  std::size_t off = 0;
  for (std::size_t l = 0; l < layer; ++l) off += weight_ranks[l] + bias_ranks[l];
  return off;
}

std::size_t RankSpec::bias_offset(std::size_t layer) const {
  return weight_offset(layer) + weight_ranks[layer];
}

void RankSpec::validate() const {
  if (weight_ranks.size() != bias_ranks.size())
    throw InvalidInput("RankSpec: weight and bias rank lists differ in length");
  if (weight_ranks.size() < 2) throw InvalidInput("RankSpec: depth must be at least 2");
  for (std::size_t r : weight_ranks)
    if (r < 1) throw InvalidInput("RankSpec: weight ranks must be >= 1");
}

RankSpec RankSpec::uniform(std::size_t depth, std::size_t rank, std::size_t output_bias_rank) {
  RankSpec r{std::vector<std::size_t>(depth, rank), std::vector<std::size_t>(depth, rank)};
  if (depth > 0) r.bias_ranks.back() = output_bias_rank;
  return r;
}

// ---------------------------------------------------------------- CoeffVector

CoeffVector::CoeffVector(RankSpec ranks) : ranks_(std::move(ranks)), values_(ranks_.total(), 0.0) {}

CoeffVector CoeffVector::unflatten(const RankSpec& ranks, std::span<const double> flat) {
  if (flat.size() != ranks.total()) {
    std::ostringstream msg;
    msg << "CoeffVector::unflatten: expected " << ranks.total() << " coefficients, got " << flat.size();
    throw InvalidInput(msg.str());
  }
  CoeffVector s(ranks);
  std::copy(flat.begin(), flat.end(), s.values_.begin());
  return s;
}

std::span<double> CoeffVector::weight(std::size_t layer) {
  return {values_.data() + ranks_.weight_offset(layer), ranks_.weight_ranks[layer]};
}
std::span<const double> CoeffVector::weight(std::size_t layer) const {
  return {values_.data() + ranks_.weight_offset(layer), ranks_.weight_ranks[layer]};
}
std::span<double> CoeffVector::bias(std::size_t layer) {
  return {values_.data() + ranks_.bias_offset(layer), ranks_.bias_ranks[layer]};
}
std::span<const double> CoeffVector::bias(std::size_t layer) const {
  return {values_.data() + ranks_.bias_offset(layer), ranks_.bias_ranks[layer]};
}

// ---------------------------------------------------------------- factors

std::size_t LrnrFactors::width() const {
  std::size_t m = 0;
  for (std::size_t l = 1; l + 1 < widths.size(); ++l) m = std::max(m, widths[l]);
  return m;
}

RankSpec LrnrFactors::ranks() const {
  RankSpec r;
  for (const auto& layer : layers) {
    r.weight_ranks.push_back(layer.u.cols());
    r.bias_ranks.push_back(layer.b.cols());
  }
  return r;
}

void LrnrFactors::validate() const {
  if (widths.size() != layers.size() + 1) throw InvalidInput("LrnrFactors: widths/layers mismatch");
  ranks().validate();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& f = layers[l];
    const std::size_t r1 = f.u.cols();
    if (f.u.rows() != widths[l + 1] || f.v.rows() != widths[l] || f.v.cols() != r1 ||
        f.b.rows() != widths[l + 1]) {
      std::ostringstream msg;
      msg << "LrnrFactors: inconsistent factor shapes at layer " << l + 1;
      throw InvalidInput(msg.str());
    }
    if (!f.u.all_finite() || !f.v.all_finite() || !f.b.all_finite())
      throw InvalidInput("LrnrFactors: non-finite factor entries");
  }
  if (output_bias.size() != output_dim()) throw InvalidInput("LrnrFactors: output bias length mismatch");
}

LrnrFactors LrnrFactors::zeros(std::size_t input_dim, std::size_t hidden_width,
                               std::size_t output_dim, const RankSpec& ranks, Activation activation) {
  ranks.validate();
  LrnrFactors f;
  f.activation = activation;
  const std::size_t depth = ranks.depth();
  f.widths.assign(depth + 1, hidden_width);
  f.widths.front() = input_dim;
  f.widths.back() = output_dim;
  for (std::size_t l = 0; l < depth; ++l) {
    f.layers.push_back({Matrix(f.widths[l + 1], ranks.weight_ranks[l]),
                        Matrix(f.widths[l], ranks.weight_ranks[l]),
                        Matrix(f.widths[l + 1], ranks.bias_ranks[l])});
  }
  f.output_bias.assign(output_dim, 0.0);
  return f;
}

LrnrFactors init_factors(std::size_t input_dim, std::size_t hidden_width, std::size_t output_dim,
                         const RankSpec& ranks, Activation activation, Rng& rng) {
  LrnrFactors f = LrnrFactors::zeros(input_dim, hidden_width, output_dim, ranks, activation);
  auto fill = [&rng](Matrix& m) {
    if (m.rows() == 0) return;
    const double a = std::sqrt(3.0 / static_cast<double>(m.rows()));
    for (double& v : m.values()) v = rng.uniform(-a, a);
  };
  for (auto& layer : f.layers) {
    fill(layer.u);
    fill(layer.v);
    fill(layer.b);
  }
  return f;
}

// ---------------------------------------------------------------- forward

namespace {

void check_coefficients(const LrnrFactors& f, const CoeffVector& s) {
  if (s.ranks() != f.ranks()) throw InvalidInput("coefficient vector does not match factor ranks");
}

void check_finite_layer(std::span<const double> v, std::size_t layer) {
  if (!all_finite(v)) {
    std::ostringstream msg;
    msg << "non-finite value in layer " << layer + 1 << " of the forward pass";
    throw NumericOverflow(msg.str());
  }
}

// y = U (s1 .* V^T z) + B s2 (+ b_out on the output layer).
Vector affine(const LrnrFactors& f, const CoeffVector& s, std::size_t l, std::span<const double> z) {
  const auto& layer = f.layers[l];
  Vector zeta = matvec_t(layer.v, z);
  const auto s1 = s.weight(l);
  for (std::size_t k = 0; k < zeta.size(); ++k) zeta[k] *= s1[k];
  Vector y = matvec(layer.u, zeta);
  if (layer.b.cols() > 0) {
    const Vector by = matvec(layer.b, s.bias(l));
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += by[i];
  }
  if (l + 1 == f.depth())
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += f.output_bias[i];
  return y;
}

}  // namespace

LayerAffine assemble_layer(const LrnrFactors& f, const CoeffVector& s, std::size_t layer) {
  if (layer >= f.depth()) throw InvalidInput("assemble_layer: layer index out of range");
  check_coefficients(f, s);
  const auto& lf = f.layers[layer];
  LayerAffine out;
  out.weight = scaled_outer_sum(lf.u, s.weight(layer), lf.v);
  out.bias = lf.b.cols() > 0 ? matvec(lf.b, s.bias(layer)) : Vector(lf.u.rows(), 0.0);
  if (layer + 1 == f.depth())
    for (std::size_t i = 0; i < out.bias.size(); ++i) out.bias[i] += f.output_bias[i];
  return out;
}

ForwardTrace forward_trace(const LrnrFactors& f, const CoeffVector& s, std::span<const double> x) {
  check_coefficients(f, s);
  if (x.size() != f.input_dim()) throw InvalidInput("forward: input dimension mismatch");
  if (!all_finite(x)) throw InvalidInput("forward: non-finite input point");
  ForwardTrace trace;
  Vector z(x.begin(), x.end());
  for (std::size_t l = 0; l + 1 < f.depth(); ++l) {
    Vector y = affine(f, s, l, z);
    check_finite_layer(y, l);
    z.resize(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) z[i] = activate(f.activation, y[i]);
    trace.pre.push_back(std::move(y));
    trace.hidden.push_back(z);
  }
  trace.output = affine(f, s, f.depth() - 1, z);
  check_finite_layer(trace.output, f.depth() - 1);
  return trace;
}

Vector forward(const LrnrFactors& f, const CoeffVector& s, std::span<const double> x) {
  check_coefficients(f, s);
  if (x.size() != f.input_dim()) throw InvalidInput("forward: input dimension mismatch");
  if (!all_finite(x)) throw InvalidInput("forward: non-finite input point");
  Vector z(x.begin(), x.end());
  for (std::size_t l = 0; l + 1 < f.depth(); ++l) {
    Vector y = affine(f, s, l, z);
    check_finite_layer(y, l);
    for (double& v : y) v = activate(f.activation, v);
    z = std::move(y);
  }
  Vector out = affine(f, s, f.depth() - 1, z);
  check_finite_layer(out, f.depth() - 1);
  return out;
}

Matrix forward_batch(const LrnrFactors& f, const CoeffVector& s, const Matrix& points) {
  check_coefficients(f, s);
  if (points.rows() != f.input_dim()) throw InvalidInput("forward_batch: input dimension mismatch");
  Matrix z = points;
  for (std::size_t l = 0; l < f.depth(); ++l) {
    const auto& layer = f.layers[l];
    Matrix a = matmul_tn(layer.v, z);
    const auto s1 = s.weight(l);
    for (std::size_t k = 0; k < a.rows(); ++k)
      for (double& v : a.row(k)) v *= s1[k];
    Matrix y = matmul(layer.u, a);
    Vector bias = layer.b.cols() > 0 ? matvec(layer.b, s.bias(l)) : Vector(y.rows(), 0.0);
    const bool last = l + 1 == f.depth();
    if (last)
      for (std::size_t i = 0; i < bias.size(); ++i) bias[i] += f.output_bias[i];
    for (std::size_t i = 0; i < y.rows(); ++i) {
      for (double& v : y.row(i)) {
        v += bias[i];
        if (!last) v = activate(f.activation, v);
      }
    }
    check_finite_layer(y.values(), l);
    z = std::move(y);
  }
  return z;
}

Matrix forward_jacobian(const LrnrFactors& f, const CoeffVector& s, std::span<const double> x) {
  check_coefficients(f, s);
  if (x.size() != f.input_dim()) throw InvalidInput("forward_jacobian: input dimension mismatch");
  Vector z(x.begin(), x.end());
  Matrix jac = Matrix::identity(x.size());  // d z / d x
  for (std::size_t l = 0; l < f.depth(); ++l) {
    const auto& layer = f.layers[l];
    Matrix a = matmul_tn(layer.v, jac);
    const auto s1 = s.weight(l);
    for (std::size_t k = 0; k < a.rows(); ++k)
      for (double& v : a.row(k)) v *= s1[k];
    jac = matmul(layer.u, a);
    Vector y = affine(f, s, l, z);
    if (l + 1 < f.depth()) {
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double g = activate_derivative(f.activation, y[i]);
        for (double& v : jac.row(i)) v *= g;
        y[i] = activate(f.activation, y[i]);
      }
    }
    z = std::move(y);
  }
  return jac;
}

Matrix input_gradient_batch(const LrnrFactors& f, const CoeffVector& s, const Matrix& points,
                            std::size_t component) {
  check_coefficients(f, s);
  if (points.rows() != f.input_dim()) throw InvalidInput("input_gradient_batch: input dimension mismatch");
  if (component >= f.output_dim()) throw InvalidInput("input_gradient_batch: output component out of range");
  const std::size_t depth = f.depth();
  std::vector<Matrix> pre(depth);
  Matrix z = points;
  for (std::size_t l = 0; l + 1 < depth; ++l) {
    const auto& layer = f.layers[l];
    Matrix a = matmul_tn(layer.v, z);
    const auto s1 = s.weight(l);
    for (std::size_t k = 0; k < a.rows(); ++k)
      for (double& v : a.row(k)) v *= s1[k];
    Matrix y = matmul(layer.u, a);
    const Vector bias = layer.b.cols() > 0 ? matvec(layer.b, s.bias(l)) : Vector(y.rows(), 0.0);
    for (std::size_t i = 0; i < y.rows(); ++i)
      for (double& v : y.row(i)) v += bias[i];
    z = y;
    for (double& v : z.values()) v = activate(f.activation, v);
    pre[l] = std::move(y);
  }
  Matrix g(f.output_dim(), points.cols());
  for (double& v : g.row(component)) v = 1.0;
  for (std::size_t l = depth; l-- > 0;) {
    const auto& layer = f.layers[l];
    if (l + 1 < depth) {
      for (std::size_t i = 0; i < g.rows(); ++i) {
        auto gr = g.row(i);
        const auto yr = pre[l].row(i);
        for (std::size_t j = 0; j < gr.size(); ++j) gr[j] *= activate_derivative(f.activation, yr[j]);
      }
    }
    Matrix a = matmul_tn(layer.u, g);
    const auto s1 = s.weight(l);
    for (std::size_t k = 0; k < a.rows(); ++k)
      for (double& v : a.row(k)) v *= s1[k];
    g = matmul(layer.v, a);
  }
  return g;
}

}  // namespace lrnr
