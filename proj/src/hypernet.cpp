#include "lrnr/hypernet.hpp"

#include <cmath>
#include <sstream>

#include "lrnr/errors.hpp"
#include "lrnr/rng.hpp"

namespace lrnr {

void TimeNormalizer::validate() const {
  if (!(t1 > t0)) throw InvalidInput("TimeNormalizer: require T > t0");
}

void HyperNetParams::validate() const {
  if (layers.empty()) throw InvalidInput("HyperNetParams: no layers");
  std::size_t in = 1;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.weight.cols() != in || layer.bias.size() != layer.weight.rows()) {
      std::ostringstream msg;
      msg << "HyperNetParams: inconsistent shapes at layer " << l + 1;
      throw InvalidInput(msg.str());
    }
    if (!layer.weight.all_finite() || !all_finite(layer.bias))
      throw InvalidInput("HyperNetParams: non-finite parameters");
    in = layer.weight.rows();
  }
}

HyperNetParams init_hypernet(std::size_t width, std::size_t depth, const RankSpec& ranks,
                             Activation activation, Rng& rng, double decay) {
  if (depth < 1) throw InvalidInput("init_hypernet: depth must be >= 1");
  if (depth > 1 && width < 1) throw InvalidInput("init_hypernet: width must be >= 1");
  HyperNetParams p;
  p.activation = activation;
  std::size_t in = 1;
  for (std::size_t l = 0; l < depth; ++l) {
    const bool last = l + 1 == depth;
    const std::size_t out = last ? ranks.total() : width;
    DenseLayer layer{Matrix(out, in), Vector(out, 0.0)};
    const double a = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : layer.weight.values()) v = rng.uniform(-a, a);
    for (double& v : layer.bias) v = rng.uniform(-a, a);
    if (last) {
      // Decaying magnitudes within every block.
      auto shape_block = [&](std::size_t offset, std::size_t len) {
        double scale = 1.0;
        for (std::size_t i = 0; i < len; ++i, scale *= decay) {
          for (double& v : layer.weight.row(offset + i)) v *= scale;
          layer.bias[offset + i] = scale;
        }
      };
      for (std::size_t l2 = 0; l2 < ranks.depth(); ++l2) {
        shape_block(ranks.weight_offset(l2), ranks.weight_ranks[l2]);
        shape_block(ranks.bias_offset(l2), ranks.bias_ranks[l2]);
      }
    }
    p.layers.push_back(std::move(layer));
    in = out;
  }
  return p;
}

HyperTrace hyper_forward_trace(const HyperNetParams& p, double tn) {
  HyperTrace trace;
  Vector z{tn};
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    Vector y = matvec(layer.weight, z);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += layer.bias[i];
    trace.input.push_back(std::move(z));
    z = y;
    if (l + 1 < p.layers.size())
      for (double& v : z) v = activate(p.activation, v);
    trace.pre.push_back(std::move(y));
  }
  if (!all_finite(z)) throw NumericOverflow("hypernetwork produced non-finite coefficients");
  trace.output = std::move(z);
  return trace;
}

Vector hyper_forward_normalized(const HyperNetParams& p, double tn) {
  Vector z{tn};
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    Vector y = matvec(layer.weight, z);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += layer.bias[i];
    if (l + 1 < p.layers.size())
      for (double& v : y) v = activate(p.activation, v);
    z = std::move(y);
  }
  if (!all_finite(z)) throw NumericOverflow("hypernetwork produced non-finite coefficients");
  return z;
}

CoeffVector hyper_forward(const HyperNetParams& p, const TimeNormalizer& norm,
                          const RankSpec& ranks, double t) {
  return CoeffVector::unflatten(ranks, hyper_forward_normalized(p, norm.normalize(t)));
}

CoeffVector MetaModel::coefficients(double t) const {
  return hyper_forward(hyper, normalizer, factors.ranks(), t);
}

void MetaModel::validate() const {
  factors.validate();
  hyper.validate();
  normalizer.validate();
  if (hyper.output_dim() != factors.ranks().total())
    throw InvalidInput("MetaModel: hypernetwork output dimension differs from ||r||_1");
}

MetaModel init_meta_model(const MetaShape& shape, const TimeNormalizer& normalizer, Rng& rng) {
  normalizer.validate();
  MetaModel m;
  m.factors = init_factors(shape.input_dim, shape.width, shape.output_dim, shape.ranks, shape.activation, rng);
  m.hyper = init_hypernet(shape.hyper_width, shape.hyper_depth, shape.ranks, shape.hyper_activation, rng);
  m.normalizer = normalizer;
  return m;
}

Vector meta_forward(const MetaModel& model, std::span<const double> x, double t) {
  return forward(model.factors, model.coefficients(t), x);
}

}  // namespace lrnr
