#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <memory>

#include "doctest.h"
#include "lrnr/cli.hpp"
#include "lrnr/errors.hpp"
#include "lrnr/training.hpp"
#include "oracles.hpp"

using namespace lrnr;

namespace {

long double misfit_ref(const Matrix& yhat, const Matrix& y, const Vector& w, int q) {
  long double num = 0.0L, den = 0.0L;
  for (std::size_t j = 0; j < w.size(); ++j)
    for (std::size_t i = 0; i < y.rows(); ++i) {
      const long double d = std::fabs(static_cast<long double>(yhat(i, j)) - y(i, j));
      const long double r = std::fabs(static_cast<long double>(y(i, j)));
      num += w[j] * (q == 1 ? d : d * d);
      den += w[j] * (q == 1 ? r : r * r);
    }
  return num / den;
}

long double sparse_ref(const CoeffVector& s, double gamma) {
  long double acc = 0.0L;
  const auto& r = s.ranks();
  for (std::size_t l = 0; l < r.depth(); ++l)
    for (const auto block : {s.weight(l), s.bias(l)})
      for (std::size_t j = 0; j + 1 < block.size(); ++j)
        acc += std::max(0.0L, static_cast<long double>(gamma) * block[j + 1] - block[j]);
  return acc;
}

long double gram_term(const Matrix& x) {
  if (x.size() == 0) return 0.0L;
  long double acc = 0.0L;
  for (std::size_t a = 0; a < x.cols(); ++a)
    for (std::size_t b = 0; b < x.cols(); ++b) {
      long double g = 0.0L;
      for (std::size_t r = 0; r < x.rows(); ++r) g += static_cast<long double>(x(r, a)) * x(r, b);
      if (a == b) g -= 1.0L;
      acc += g * g;
    }
  return acc / static_cast<long double>(x.size());
}

long double ortho_ref(const LrnrFactors& f) {
  long double acc = 0.0L;
  for (const auto& l : f.layers) acc += gram_term(l.u) + gram_term(l.v) + gram_term(l.b);
  return acc;
}

struct Small {
  RunConfig cfg;
  WaveDataset data;
  MetaModel model;
};

Small small_setup(std::uint64_t seed) {
  Small s;
  s.cfg = small_gradcheck_config();
  s.cfg.seed = seed;
  s.cfg.train.seed = seed;
  s.data = generate_problem(s.cfg.problem);
  Rng rng = Rng::stream(seed, 0);
  s.model = init_meta_model(s.cfg.shape(1, 1), {s.data.times.front(), s.data.times.back()}, rng);
  return s;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("misfit of identical and doubled predictions") {
  oracle::Gen g(1);
  const Matrix y = g.matrix(2, 30);
  const Vector w = g.vector(30, 0.1, 1.0);
  CHECK(misfit(y, y, w, 2) == 0.0);
  CHECK(misfit(y, y, w, 1) == 0.0);
  CHECK(misfit(2.0 * y, y, w, 2) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(misfit(y, Matrix(2, 30), w, 2), InvalidInput);
  CHECK_THROWS_AS(misfit(y, y, w, 3), InvalidInput);
}

TEST_CASE("misfit matches a scalar loop with nonuniform weights") {
  oracle::Gen g(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto m = g.integer(1, 3), p = g.integer(1, 60);
    const Matrix y = g.matrix(m, p), yh = g.matrix(m, p);
    const Vector w = g.vector(p, 1e-3, 2.0);
    for (int q : {1, 2}) {
      const double ref = static_cast<double>(misfit_ref(yh, y, w, q));
      CHECK(std::abs(misfit(yh, y, w, q) - ref) <= 1e-14 * std::max(1.0, ref));
    }
  }
}

TEST_CASE("misfit is invariant to a common scale") {
  oracle::Gen g(5);
  for (int trial = 0; trial < 500; ++trial) {
    const auto p = g.integer(1, 40);
    const Matrix y = g.matrix(1, p), yh = g.matrix(1, p);
    const Vector w = g.vector(p, 0.01, 1.0);
    double lambda = std::pow(10.0, g.uniform(-3.0, 3.0));
    if (g.uniform() < 0) lambda = -lambda;
    for (int q : {1, 2}) {
      const double a = misfit(yh, y, w, q), b = misfit(lambda * yh, lambda * y, w, q);
      CHECK(std::abs(a - b) <= 1e-14 * std::max(1.0, a));
    }
  }
}

TEST_CASE("misfit blend selects the norm and handles a jump mismatch") {
  // a unit jump at x = 0 against a prediction whose jump sits at x = 0.25
  const std::size_t p = 200;
  Matrix y(1, p), yh(1, p);
  const Vector w(p, 2.0 / p);
  for (std::size_t j = 0; j < p; ++j) {
    const double x = -1.0 + (j + 0.5) * 2.0 / p;
    y(0, j) = x < 0.0 ? 1.0 : 0.0;
    yh(0, j) = x < 0.25 ? 1.0 : 0.0;
  }
  const double l2 = misfit_blend(yh, y, w, 0), l1 = misfit_blend(yh, y, w, 1);
  CHECK(l2 == misfit(yh, y, w, 2));
  CHECK(l1 == misfit(yh, y, w, 1));
  CHECK(std::isfinite(l1));
  CHECK(std::isfinite(l2));
  // 25 mismatched points of size one against 100 unit points: 0.25 in both norms
  CHECK(l1 == doctest::Approx(static_cast<double>(misfit_ref(yh, y, w, 1))).epsilon(1e-14));
  CHECK(l2 == doctest::Approx(0.25).epsilon(1e-14));
  CHECK_THROWS_AS(misfit_blend(yh, y, w, 2), InvalidInput);
}

TEST_CASE("reg_sparse hand values") {
  const RankSpec r{{2, 1}, {0, 0}};
  CHECK(reg_sparse(CoeffVector::unflatten(r, Vector{1, 1, 5}), 1.0) == 0.0);
  CHECK(reg_sparse(CoeffVector::unflatten(r, Vector{0, 1, 5}), 1.0) == 1.0);
  // blocks of length one contribute nothing
  CHECK(reg_sparse(CoeffVector::unflatten(RankSpec{{1, 1}, {1, 0}}, Vector{-3, 9, 4}), 2.0) == 0.0);
}

TEST_CASE("reg_sparse vanishes on geometric blocks with exact ratios") {
  for (double gamma : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    const RankSpec r{{6, 6}, {6, 0}};
    Vector v(r.total());
    for (std::size_t l = 0, off = 0; off < v.size(); ++l)
      for (std::size_t j = 0; j < 6; ++j) v[off++] = std::ldexp(1.0, -static_cast<int>(j) * std::ilogb(gamma)) * (l + 1);
    CHECK(reg_sparse(CoeffVector::unflatten(r, v), gamma) == 0.0);
  }
}

TEST_CASE("reg_sparse is zero exactly when every block decays") {
  oracle::Gen g(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto r = g.ranks(g.integer(2, 4), 6);
    const double gamma = std::exp(g.uniform(-1.0, 1.0));
    Vector v(r.total());
    // build s_{j+1} = s_j / gamma minus a slack (zero for a third of the steps),
    // stepping down an ulp where rounding would land on the growth side
    for (std::size_t l = 0; l < r.depth(); ++l)
      for (auto [off, len] : {std::pair{r.weight_offset(l), r.weight_ranks[l]}, std::pair{r.bias_offset(l), r.bias_ranks[l]}}) {
        if (len == 0) continue;
        v[off] = g.uniform(-2.0, 2.0);
        for (std::size_t j = 1; j < len; ++j) {
          const double slack = g.uniform() < -0.33 ? 0.0 : g.uniform(0.0, 1.0);
          double next = (v[off + j - 1] - slack) / gamma;
          while (gamma * next - v[off + j - 1] > 0.0) next = std::nextafter(next, -INFINITY);
          v[off + j] = next;
        }
      }
    const auto s = CoeffVector::unflatten(r, v);
    CHECK(reg_sparse(s, gamma) == 0.0);
    // break one pair
    std::vector<std::size_t> cand;
    for (std::size_t l = 0; l < r.depth(); ++l) {
      for (std::size_t j = 0; j + 1 < r.weight_ranks[l]; ++j) cand.push_back(r.weight_offset(l) + j);
      for (std::size_t j = 0; j + 1 < r.bias_ranks[l]; ++j) cand.push_back(r.bias_offset(l) + j);
    }
    if (cand.empty()) continue;
    const std::size_t k = cand[g.integer(0, cand.size() - 1)];
    Vector bad = v;
    bad[k + 1] = (bad[k] + g.uniform(1e-6, 1.0)) / gamma;
    while (!(gamma * bad[k + 1] - bad[k] > 0.0)) bad[k + 1] = std::nextafter(bad[k + 1], INFINITY);
    const auto sb = CoeffVector::unflatten(r, bad);
    CHECK(reg_sparse(sb, gamma) > 0.0);
    CHECK(reg_sparse(sb, gamma) == doctest::Approx(static_cast<double>(sparse_ref(sb, gamma))).epsilon(1e-12));
  }
}

TEST_CASE("reg_sparse matches the block oracle on random vectors") {
  oracle::Gen g(9);
  for (int trial = 0; trial < 300; ++trial) {
    const auto r = g.ranks(g.integer(2, 5), 8);
    const auto s = g.coeffs(r);
    const double gamma = g.uniform(0.5, 1.5);
    CHECK(reg_sparse(s, gamma) == doctest::Approx(static_cast<double>(sparse_ref(s, gamma))).epsilon(1e-13));
  }
}

TEST_CASE("reg_ortho hand value and exact zero on orthonormal factors") {
  const std::size_t M = 5;
  LrnrFactors f = LrnrFactors::zeros(1, M, 1, RankSpec{{1, 1}, {0, 0}});
  f.layers[0].u(0, 0) = 1.0;
  f.layers[0].v(0, 0) = 1.0;
  f.layers[1].u(0, 0) = 1.0;
  f.layers[1].v(3, 0) = 1.0;
  CHECK(reg_ortho(f) == 0.0);
  // hidden U with two identical unit columns: Gram [[1,1],[1,1]], defect 2 over 2M
  // entries; the 1 x 2 V = [1 0] adds a defect of 1 over 2 entries
  f = LrnrFactors::zeros(1, M, 1, RankSpec{{2, 1}, {0, 0}});
  f.layers[0].u(2, 0) = f.layers[0].u(2, 1) = 1.0;
  f.layers[0].v(0, 0) = 1.0;
  f.layers[1].u(0, 0) = 1.0;
  f.layers[1].v(0, 0) = 1.0;
  CHECK(reg_ortho(f) == doctest::Approx(2.0 / (2.0 * M) + 0.5).epsilon(1e-15));

  oracle::Gen g(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t widths[] = {4, 16, 64, 7, 9};
    const std::size_t width = widths[g.integer(0, 4)];
    const std::size_t depth = g.integer(2, 4);
    LrnrFactors of;
    of.widths.assign(depth + 1, width);
    for (std::size_t l = 0; l < depth; ++l) {
      const std::size_t r1 = g.integer(1, 4), r2 = g.integer(0, 4);
      of.layers.push_back({oracle::exact_orthonormal(g, width, r1), oracle::exact_orthonormal(g, width, r1), oracle::exact_orthonormal(g, width, r2)});
    }
    of.output_bias = Vector(width, 0.0);
    CHECK(reg_ortho(of) == 0.0);
  }
}

TEST_CASE("reg_ortho matches the Gram oracle and vanishes to rounding on svd factors") {
  oracle::Gen g(13);
  for (int trial = 0; trial < 200; ++trial) {
    const auto r = g.ranks(g.integer(2, 4), 4);
    const auto f = g.factors(g.integer(1, 3), g.integer(4, 12), 1, r, Activation::Relu);
    CHECK(reg_ortho(f) == doctest::Approx(static_cast<double>(ortho_ref(f))).epsilon(1e-12));
    LrnrFactors q = f;
    for (auto& l : q.layers) {
      l.u = thin_svd(l.u).left;
      l.v = thin_svd(l.v).left;
      if (l.b.cols() > 0 && l.b.cols() <= l.b.rows()) l.b = thin_svd(l.b).left;
    }
    bool tall = true;
    for (const auto& l : q.layers) tall = tall && l.u.cols() <= l.u.rows() && l.v.cols() <= l.v.rows() && l.b.cols() <= l.b.rows();
    if (tall) CHECK(reg_ortho(q) < 1e-28);
  }
}

TEST_CASE("reg_ortho gradient vanishes on orthonormal factors") {
  oracle::Gen g(15);
  LrnrFactors f;
  f.widths = {16, 16, 16};
  for (int l = 0; l < 2; ++l) f.layers.push_back({oracle::exact_orthonormal(g, 16, 3), oracle::exact_orthonormal(g, 16, 3), oracle::exact_orthonormal(g, 16, 2)});
  f.output_bias = Vector(16, 0.0);
  LrnrFactors grads = f;
  for (auto& l : grads.layers) l.u.fill(0.0), l.v.fill(0.0), l.b.fill(0.0);
  add_reg_ortho_gradient(f, 1.0, grads);
  for (const auto& l : grads.layers) {
    CHECK(max_abs(l.u.values()) == 0.0);
    CHECK(max_abs(l.v.values()) == 0.0);
    CHECK(max_abs(l.b.values()) == 0.0);
  }
}

TEST_CASE("total loss is the sum of its parts") {
  auto s = small_setup(2);
  TrainConfig cfg;
  cfg.lambda_sparse = 3.65e-18;
  cfg.lambda_ortho = 7.76e-3;
  cfg.gamma = 1.0005;
  CHECK_NOTHROW(cfg.validate());
  for (std::size_t n : {1u, 3u}) {
    std::vector<BatchItem> batch;
    for (std::size_t k = 0; k < n; ++k) batch.push_back({s.data.times[k], &s.data.snapshots[k]});
    for (int alpha : {0, 1}) {
      long double mis = 0.0L, sp = 0.0L;
      for (const auto& item : batch) {
        const auto coeff = CoeffVector::unflatten(
            s.model.ranks(), oracle::dense_hyper(s.model.hyper, s.model.normalizer.normalize(item.t)));
        Matrix yh(1, item.snapshot->size());
        for (std::size_t j = 0; j < yh.cols(); ++j)
          yh(0, j) = oracle::dense_forward(s.model.factors, coeff, item.snapshot->points.col(j))[0];
        mis += misfit_ref(yh, item.snapshot->values, item.snapshot->weights, alpha == 1 ? 1 : 2);
        sp += sparse_ref(coeff, cfg.gamma);
      }
      mis /= n;
      sp /= n;
      const long double orth = ortho_ref(s.model.factors);
      const auto lb = total_loss(s.model, batch, cfg, alpha);
      CHECK(lb.misfit == doctest::Approx(static_cast<double>(mis)).epsilon(1e-12));
      CHECK(lb.reg_sparse == doctest::Approx(static_cast<double>(sp)).epsilon(1e-12));
      CHECK(lb.reg_ortho == doctest::Approx(static_cast<double>(orth)).epsilon(1e-12));
      const long double total = mis + static_cast<long double>(cfg.lambda_sparse) * sp + static_cast<long double>(cfg.lambda_ortho) * orth;
      CHECK(lb.total == doctest::Approx(static_cast<double>(total)).epsilon(1e-12));
      if (n == 1) CHECK(lb.total == lb.misfit + cfg.lambda_sparse * lb.reg_sparse + cfg.lambda_ortho * lb.reg_ortho);
    }
  }
}

TEST_CASE("perfect fit without regularizers has zero loss") {
  auto s = small_setup(3);
  // data generated by the model itself
  Snapshot snap = s.data.snapshots[0];
  const double t = s.data.times[0];
  snap.values = forward_batch(s.model.factors, s.model.coefficients(t), snap.points);
  TrainConfig cfg;
  cfg.lambda_ortho = 0.0;
  const BatchItem item{t, &snap};
  CHECK(total_loss(s.model, std::span(&item, 1), cfg, 0).total == 0.0);
  CHECK(total_loss(s.model, std::span(&item, 1), cfg, 1).total == 0.0);
}

TEST_CASE("constant model gradient with respect to the output bias") {
  auto s = small_setup(4);
  for (auto& l : s.model.hyper.layers.back().weight.values()) l = 0.0;
  for (auto& b : s.model.hyper.layers.back().bias) b = 0.0;
  s.model.factors.output_bias = {0.7};
  const double target = 1.9;
  Snapshot snap{Matrix(1, 1, 0.1), Matrix(1, 1, target), Vector{1.0}};
  TrainConfig cfg;
  cfg.lambda_ortho = 0.0;
  const BatchItem item{0.5, &snap};
  const auto br = backprop(s.model, std::span(&item, 1), cfg, 0);
  CHECK(br.loss.misfit == doctest::Approx((0.7 - target) * (0.7 - target) / (target * target)).epsilon(1e-14));
  CHECK(br.grads.factors.output_bias[0] == doctest::Approx(2.0 * (0.7 - target) / (target * target)).epsilon(1e-14));
}

TEST_CASE("backprop agrees with independent central differences") {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    auto s = small_setup(seed);
    std::vector<Snapshot> kept;
    kept.reserve(2);
    std::vector<BatchItem> batch;
    for (std::size_t idx : {std::size_t{0}, s.data.size() - 1}) {
      kept.push_back(drop_near_kinks(s.model, s.data.times[idx], s.data.snapshots[idx], 1e-4));
      batch.push_back({s.data.times[idx], &kept.back()});
    }
    for (int alpha : {0, 1}) {
      auto br = backprop(s.model, batch, s.cfg.train, alpha);
      MetaModel probe = s.model;
      auto pb = parameter_blocks(probe);
      auto gb = parameter_blocks(br.grads);
      REQUIRE(pb.size() == gb.size());
      double gmax = 0.0;
      for (const auto& b : gb) gmax = std::max(gmax, max_abs(b.values));
      const double h = 1e-6;
      for (std::size_t b = 0; b < pb.size(); ++b) {
        REQUIRE(pb[b].values.size() == gb[b].values.size());
        for (std::size_t i = 0; i < pb[b].values.size(); ++i) {
          const double saved = pb[b].values[i];
          pb[b].values[i] = saved + h;
          const double lp = total_loss(probe, batch, s.cfg.train, alpha).total;
          pb[b].values[i] = saved - h;
          const double lm = total_loss(probe, batch, s.cfg.train, alpha).total;
          pb[b].values[i] = saved;
          const double fd = (lp - lm) / (2.0 * h);
          const double g = gb[b].values[i];
          // scaled per parameter, with a floor relative to the largest entry
          const double err = std::abs(g - fd) / std::max(std::abs(g) + std::abs(fd), 1e-3 * gmax);
          worst = std::max(worst, err);
        }
      }
      const auto rep = gradcheck(s.model, batch, s.cfg.train, alpha);
      CHECK(rep.max_rel_error < 1e-6);
      CHECK(rep.checked == parameter_count(s.model));
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("gradcheck catches a wrong gradient") {
  // perturbing the model between backprop and differencing must show up
  auto s = small_setup(1);
  std::vector<BatchItem> batch{{s.data.times[1], &s.data.snapshots[1]}};
  const auto good = gradcheck(s.model, batch, s.cfg.train, 0);
  TrainConfig other = s.cfg.train;
  other.lambda_ortho = 0.0;
  // gradient from one objective, differences from another
  auto br = backprop(s.model, batch, other, 0);
  MetaModel probe = s.model;
  auto pb = parameter_blocks(probe);
  auto gb = parameter_blocks(br.grads);
  double worst = 0.0;
  for (std::size_t b = 0; b < pb.size(); ++b)
    for (std::size_t i = 0; i < pb[b].values.size(); ++i) {
      const double saved = pb[b].values[i];
      pb[b].values[i] = saved + 1e-6;
      const double lp = total_loss(probe, batch, s.cfg.train, 0).total;
      pb[b].values[i] = saved - 1e-6;
      const double lm = total_loss(probe, batch, s.cfg.train, 0).total;
      pb[b].values[i] = saved;
      const double fd = (lp - lm) / 2e-6;
      worst = std::max(worst, std::abs(gb[b].values[i] - fd) / std::max(std::abs(gb[b].values[i]) + std::abs(fd), 1e-12));
    }
  CHECK(good.max_rel_error < 1e-6);
  CHECK(worst > 1e-3);
}

TEST_CASE("adam first step moves by lr against the gradient sign") {
  for (double g : {3.0, -0.002, 1e4}) {
    Vector p{1.0};
    AdamState st;
    st.m = {0.0};
    st.v = {0.0};
    const Vector grad{g};
    adam_step(p, grad, st, 0.01);
    CHECK(p[0] - 1.0 == doctest::Approx(-0.01 * (g > 0 ? 1 : -1)).epsilon(1e-5));
  }
  Vector p{2.0, -1.0};
  AdamState st{{0.0, 0.0}, {0.0, 0.0}, 0};
  adam_step(p, Vector{0.0, 0.0}, st, 0.1);
  CHECK(p == Vector{2.0, -1.0});
}

TEST_CASE("adam trajectory on a quadratic matches the reference") {
  oracle::Gen g(17);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = g.integer(1, 6);
    const Vector target = g.vector(n), curv = g.vector(n, 0.1, 5.0);
    Vector p = g.vector(n);
    std::vector<double> q(p.begin(), p.end());
    AdamState st{Vector(n, 0.0), Vector(n, 0.0), 0};
    oracle::AdamRef ref;
    for (int step = 0; step < 3; ++step) {
      Vector grad(n);
      std::vector<double> gq(n);
      for (std::size_t i = 0; i < n; ++i) {
        grad[i] = curv[i] * (p[i] - target[i]);
        gq[i] = curv[i] * (q[i] - target[i]);
      }
      adam_step(p, grad, st, 0.05);
      ref.step(q, gq, 0.05);
      for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(p[i] - q[i]) < 1e-12);
    }
    CHECK(st.step == 3);
  }
}

TEST_CASE("plateau scheduler") {
  SUBCASE("improving losses keep the rate") {
    PlateauState st;
    double lr = 1e-3;
    for (int i = 0; i < 100; ++i) lr = plateau_lr(st, 1.0 / (i + 1.0), lr);
    CHECK(lr == 1e-3);
  }
  SUBCASE("ten flat epochs decay once, twenty twice") {
    PlateauState st;
    double lr = 1.0;
    lr = plateau_lr(st, 1.0, lr);  // sets best
    for (int i = 0; i < 10; ++i) lr = plateau_lr(st, 1.0, lr);
    CHECK(lr == 0.98);
    for (int i = 0; i < 10; ++i) lr = plateau_lr(st, 1.0, lr);
    CHECK(lr == 0.98 * 0.98);
  }
  SUBCASE("mixed traces follow the state machine") {
    oracle::Gen g(19);
    for (int trial = 0; trial < 200; ++trial) {
      PlateauState st;
      double lr = 1e-3;
      oracle::PlateauRef ref(1e-3);
      double loss = 1.0;
      for (int e = 0; e < 300; ++e) {
        const double u = g.uniform(0.0, 1.0);
        loss *= u < 0.3 ? 0.99 : (u < 0.4 ? 0.9995 : 1.01);
        lr = plateau_lr(st, loss, lr);
        ref.epoch(loss);
        REQUIRE(lr == ref.lr);
        REQUIRE(st.bad_epochs == static_cast<std::size_t>(ref.bad));
      }
    }
  }
}

TEST_CASE("mollifier radius schedule") {
  const double w0 = 0.3;
  CHECK(mollifier_radius(0, w0, 1000) == w0);
  CHECK(mollifier_radius(250, w0, 1000) == w0 / 2);
  CHECK(mollifier_radius(500, w0, 1000) == 0.0);
  CHECK(mollifier_radius(999, w0, 1000) == 0.0);
  CHECK_THROWS_AS(mollifier_radius(1001, w0, 1000), InvalidInput);
  oracle::Gen g(21);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = g.integer(1, 500);
    const double w = g.uniform(0.0, 1.0);
    double prev = INFINITY;
    for (std::size_t i = 0; i <= n; ++i) {
      const double r = mollifier_radius(i, w, n);
      CHECK(r <= prev);
      if (2 * i >= n) CHECK(r == 0.0);
      CHECK(r == w * std::max(0.0, (static_cast<double>(n) - 2.0 * static_cast<double>(i)) / static_cast<double>(n)));
      prev = r;
    }
  }
}

TEST_CASE("history rows serialize in the documented column order") {
  CHECK(history_csv_header() == "epoch,misfit,reg_sparse,reg_ortho,total,alpha,lr,radius");
  HistoryRow r{3, 0.5, 0.25, 0.125, 1.0, 1, 0.001, 0.0};
  CHECK(history_csv_row(r).rfind("3,0.5,0.25,0.125,1,1,0.001,0", 0) == 0);
}

TEST_CASE("split training runs match a single run bit for bit") {
  auto s = small_setup(8);
  auto data = std::make_shared<const WaveDataset>(s.data);
  TrainConfig cfg = s.cfg.train;
  cfg.batch = 2;  // 5 snapshots: batches of 2, 2, 1
  cfg.n_epc = 20;
  cfg.w0 = 0.2;
  const auto full = train_loop(s.model, data, cfg);
  TrainOptions opt;
  opt.stop_after = 10;
  const auto first = train_loop(s.model, data, cfg, nullptr, opt);
  CHECK(first.state.epoch == 10);
  const auto second = train_loop(first.model, data, cfg, &first.state);
  CHECK(second.state.epoch == 20);
  CHECK(second.model == full.model);
  CHECK(second.state == full.state);
  auto joined = first.history;
  joined.insert(joined.end(), second.history.begin(), second.history.end());
  CHECK(joined == full.history);
  for (const auto& row : full.history) CHECK(row.radius == mollifier_radius(row.epoch, 0.2, 20));
}

TEST_CASE("numeric blow-up hands back the last good state") {
  auto s = small_setup(9);
  auto data = std::make_shared<const WaveDataset>(s.data);
  TrainConfig cfg = s.cfg.train;
  cfg.lr0 = 1e300;
  cfg.batch = 2;
  cfg.n_epc = 5;
  bool called = false;
  TrainOptions opt;
  opt.on_abort = [&](const MetaModel& m, const TrainState& st) {
    called = true;
    CHECK(m == s.model);
    CHECK(st.epoch == 0);
  };
  CHECK_THROWS_AS(train_loop(s.model, data, cfg, nullptr, opt), NumericOverflow);
  CHECK(called);
}

TEST_CASE("default advection run: accuracy, determinism and the misfit switch") {
  RunConfig rc;
  const auto data = std::make_shared<const WaveDataset>(generate_problem(rc.problem));
  REQUIRE(data->size() == 81);
  Rng rng = Rng::stream(rc.seed, 0);
  const MetaModel init = init_meta_model(rc.shape(1, 1), {0.0, 1.0}, rng);
  TrainOptions opt;
  opt.stop_after = 200;
  const auto a = train_loop(init, data, rc.train, nullptr, opt);
  const auto b = train_loop(init, data, rc.train, nullptr, opt);
  CHECK(a.rel_l2 < 1e-1);
  CHECK(a.history == b.history);
  CHECK(a.model == b.model);
  for (const auto& row : a.history) CHECK(row.radius == 0.0);  // w0 = 0

  // continuing past the point where the MSE misfit first drops below tau
  opt.stop_after = 20;
  const auto c = train_loop(a.model, data, rc.train, &a.state, opt);
  auto hist = a.history;
  hist.insert(hist.end(), c.history.begin(), c.history.end());
  std::size_t flips = 0, flip_at = 0;
  for (std::size_t i = 0; i < hist.size(); ++i) {
    const int prev = i == 0 ? 0 : hist[i - 1].alpha;
    CHECK(hist[i].alpha >= prev);
    if (hist[i].alpha == 1 && prev == 0) ++flips, flip_at = i;
  }
  REQUIRE(flips == 1);
  CHECK(hist[flip_at].misfit < rc.train.tau);
  for (std::size_t i = 0; i < flip_at; ++i) CHECK(hist[i].misfit >= rc.train.tau);
  CHECK(hist[flip_at].lr == rc.train.lr0);
}

}  // TEST_SUITE
