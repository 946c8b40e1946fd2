#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "trade/errors.hpp"
#include "trade/numkit/adam.hpp"
#include "trade/numkit/kernels.hpp"
#include "trade/numkit/ops.hpp"
#include "trade/numkit/tape.hpp"

namespace nk = trade::numkit;
using nk::Shape;
using nk::Tape;
using nk::Tensor;
using nk::Var;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(shape);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (double& x : t.storage()) x = u(rng);
  return t;
}

// Builds a scalar from the given inputs, checks every input's analytic
// gradient against central differences.
void check_gradient(std::vector<Tensor> inputs, const std::function<Var(Tape&, const std::vector<Var>&)>& f,
                    double tol = 1e-6) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.variable(t));
  Var out = f(tape, vars);
  tape.backward(out);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor* g = tape.grad_if_any(vars[k]);
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      auto eval = [&](double delta) {
        std::vector<Tensor> shifted = inputs;
        shifted[k][i] += delta;
        Tape t2;
        std::vector<Var> v2;
        for (const auto& t : shifted) v2.push_back(t2.variable(t));
        return f(t2, v2).item();
      };
      const double h = 1e-6;
      const double numeric = (eval(h) - eval(-h)) / (2 * h);
      const double analytic = g ? (*g)[i] : 0.0;
      EXPECT_NEAR(analytic, numeric, tol * std::max(1.0, std::abs(numeric))) << "input " << k << " entry " << i;
    }
  }
}

}  // namespace

TEST(Tensor, ShapesAndFactories) {
  auto m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_EQ(m.at(1, 2), 6.0);
  EXPECT_EQ(m.row(1)[0], 4.0);
  EXPECT_EQ(Tensor::scalar(2.5).item(), 2.5);
  EXPECT_THROW(Tensor::matrix(2, 2, {1, 2, 3}), trade::ShapeError);
  EXPECT_THROW(Tensor::vector({1, 2}).item(), trade::ShapeError);
  Tensor z = Tensor::zeros_like(m);
  EXPECT_EQ(z.shape(), m.shape());
  EXPECT_TRUE(z.all_finite());
  z[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(z.all_finite());
}

TEST(Kernels, SerialAndParallelAgreeBitwise) {
  std::mt19937_64 rng(3);
  for (std::size_t rows : {1u, 7u, 300u}) {
    for (std::size_t cols : {1u, 5u, 257u}) {
      Tensor w = random_tensor({rows, cols}, rng), x = random_tensor({cols}, rng), g = random_tensor({rows}, rng);
      std::vector<double> y1(rows), y2(rows), t1(cols, 0.5), t2(cols, 0.5);
      nk::kernels::serial::matvec(w.storage(), rows, cols, x.storage(), y1);
      nk::kernels::parallel::matvec(w.storage(), rows, cols, x.storage(), y2);
      EXPECT_EQ(y1, y2);
      nk::kernels::serial::matvec_transposed_acc(w.storage(), rows, cols, g.storage(), t1);
      nk::kernels::parallel::matvec_transposed_acc(w.storage(), rows, cols, g.storage(), t2);
      EXPECT_EQ(t1, t2);
      Tensor w1 = w, w2 = w;
      nk::kernels::serial::outer_acc(w1.storage(), rows, cols, g.storage(), x.storage());
      nk::kernels::parallel::outer_acc(w2.storage(), rows, cols, g.storage(), x.storage());
      EXPECT_EQ(w1, w2);
      std::vector<double> a1(cols, 1.0), a2(cols, 1.0);
      nk::kernels::serial::axpy(0.3, x.storage(), a1);
      nk::kernels::parallel::axpy(0.3, x.storage(), a2);
      EXPECT_EQ(a1, a2);
    }
  }
}

TEST(Kernels, MatvecMatchesNaiveLoop) {
  std::mt19937_64 rng(4);
  Tensor w = random_tensor({4, 3}, rng), x = random_tensor({3}, rng);
  std::vector<double> y(4);
  nk::kernels::matvec(w.storage(), 4, 3, x.storage(), y);
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 3; ++c) s += w.at(r, c) * x[c];
    EXPECT_DOUBLE_EQ(y[r], s);
  }
}

TEST(Kernels, ThresholdIsAdjustable) {
  const auto saved = nk::kernels::parallel_threshold();
  nk::kernels::set_parallel_threshold(1);
  EXPECT_EQ(nk::kernels::parallel_threshold(), 1u);
  nk::kernels::set_parallel_threshold(saved);
  EXPECT_GE(nk::kernels::max_threads(), 1);
}

TEST(Softmax, MatchesNaiveFormulaAndIsShiftInvariant) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor v = random_tensor({9}, rng, 5.0);
    auto p = nk::softmax(v.storage());
    double z = 0;
    for (double x : v.storage()) z += std::exp(x);
    double total = 0;
    for (std::size_t i = 0; i < 9; ++i) {
      EXPECT_NEAR(p[i], std::exp(v[i]) / z, 1e-14);
      total += p[i];
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    std::vector<double> shifted = v.storage();
    for (double& x : shifted) x += 1000.0;
    auto q = nk::softmax(shifted);
    for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(p[i], q[i], 1e-12);
  }
  std::vector<double> bad = {0.0, std::numeric_limits<double>::infinity()};
  EXPECT_THROW(nk::softmax(bad), trade::NumericError);
  EXPECT_THROW(nk::softmax(std::vector<double>{}), trade::ShapeError);
}

TEST(Sigmoid, StableAtExtremes) {
  EXPECT_EQ(nk::sigmoid(0.0), 0.5);
  EXPECT_NEAR(nk::sigmoid(800.0), 1.0, 1e-15);
  EXPECT_NEAR(nk::sigmoid(-800.0), 0.0, 1e-15);
  EXPECT_TRUE(std::isfinite(nk::sigmoid(-800.0)));
}

TEST(Autodiff, ElementwiseOps) {
  std::mt19937_64 rng(6);
  Tensor a = random_tensor({5}, rng), b = random_tensor({5}, rng);
  check_gradient({a, b}, [](Tape&, const std::vector<Var>& v) { return nk::sum_elements(nk::mul(nk::add(v[0], v[1]), nk::sub(v[0], v[1]))); });
  check_gradient({a}, [](Tape&, const std::vector<Var>& v) { return nk::sum_elements(nk::sigmoid(nk::scale(v[0], 3.0))); });
  check_gradient({a}, [](Tape&, const std::vector<Var>& v) { return nk::sum_elements(nk::tanh(nk::one_minus(v[0]))); });
  check_gradient({a, b}, [](Tape&, const std::vector<Var>& v) { return nk::dot(v[0], v[1]); });
  Tensor m = Tensor::vector({1, 0, 2, 0, 1});
  check_gradient({a}, [m](Tape&, const std::vector<Var>& v) { return nk::sum_elements(nk::mask(nk::tanh(v[0]), m)); });
  check_gradient({a, Tensor::scalar(0.3)},
                 [](Tape&, const std::vector<Var>& v) { return nk::dot(nk::mul_scalar(v[0], v[1]), v[0]); });
}

TEST(Autodiff, SoftmaxAndNegLog) {
  std::mt19937_64 rng(7);
  Tensor a = random_tensor({6}, rng, 2.0);
  for (std::size_t k = 0; k < 6; ++k) {
    check_gradient({a}, [k](Tape&, const std::vector<Var>& v) { return nk::neg_log(nk::pick(nk::softmax(v[0]), k)); });
  }
}

TEST(Autodiff, NegLogClampCountsAndStopsGradient) {
  Tape tape;
  int clamped = 0;
  Var x = tape.variable(Tensor::scalar(0.0));
  Var y = nk::neg_log(x, 1e-12, &clamped);
  EXPECT_EQ(clamped, 1);
  EXPECT_NEAR(y.item(), -std::log(1e-12), 1e-9);
  tape.backward(y);
  EXPECT_EQ(tape.grad(x)[0], 0.0);
}

TEST(Autodiff, LinearAlgebraOps) {
  std::mt19937_64 rng(8);
  Tensor w = random_tensor({4, 3}, rng), x = random_tensor({3}, rng), p = random_tensor({4}, rng);
  check_gradient({w, x}, [](Tape&, const std::vector<Var>& v) { return nk::sum_elements(nk::tanh(nk::matvec(v[0], v[1]))); });
  check_gradient({w, p},
                 [](Tape&, const std::vector<Var>& v) { return nk::sum_elements(nk::tanh(nk::matvec_transposed(v[0], v[1]))); });
}

TEST(Autodiff, ShapeOps) {
  std::mt19937_64 rng(9);
  Tensor a = random_tensor({3}, rng), b = random_tensor({3}, rng), m = random_tensor({4, 3}, rng);
  const Tensor weights = random_tensor({9}, rng);
  check_gradient({a, b}, [&](Tape& t, const std::vector<Var>& v) {
    Var c = nk::concat({v[0], v[1], nk::slice(v[0], 1, 2)});
    Var s = nk::stack_rows(std::vector<Var>{c, nk::tanh(c)});
    return nk::dot(nk::row(s, 1), t.constant(Tensor::vector({1, 2, 3, 4, 5, 6, 7, 8})));
  });
  check_gradient({m}, [](Tape&, const std::vector<Var>& v) {
    return nk::sum_elements(nk::mul(nk::row(v[0], 2), nk::row(v[0], 0)));
  });
  check_gradient({a}, [&](Tape& t, const std::vector<Var>& v) {
    std::vector<std::size_t> ids = {4, 0, 4};
    Var sc = nk::scatter_add(nk::softmax(v[0]), ids, 9);
    Var padded = nk::pad(nk::tanh(v[0]), 9);
    return nk::dot(nk::add(sc, padded), t.constant(weights));
  });
  check_gradient({a, b}, [](Tape&, const std::vector<Var>& v) {
    std::vector<Var> parts = {v[0], v[1], v[0]};
    return nk::sum_elements(nk::tanh(nk::sum(parts)));
  });
}

TEST(Autodiff, ShapeErrors) {
  Tape tape;
  Var a = tape.variable(Tensor::vector({1, 2}));
  Var b = tape.variable(Tensor::vector({1, 2, 3}));
  EXPECT_THROW(nk::add(a, b), trade::ShapeError);
  EXPECT_THROW(nk::dot(a, b), trade::ShapeError);
  EXPECT_THROW(nk::slice(a, 1, 2), trade::ShapeError);
  EXPECT_THROW(nk::pick(a, 2), trade::IndexError);
  std::vector<std::size_t> ids = {0, 9};
  EXPECT_THROW(nk::scatter_add(a, ids, 3), trade::IndexError);
  EXPECT_THROW(tape.backward(a), trade::ShapeError);
}

TEST(Autodiff, DiamondGraphAccumulatesBothPaths) {
  // y = x*x + 3x reached through two branches of the same node.
  Tape tape;
  Var x = tape.variable(Tensor::scalar(2.0));
  Var sq = nk::mul(x, x);
  Var lin = nk::scale(x, 3.0);
  Var y = nk::add(sq, lin);
  tape.backward(y);
  EXPECT_DOUBLE_EQ(tape.grad(x)[0], 2 * 2.0 + 3.0);
}

TEST(Autodiff, RejectsNodesFromAnotherTape) {
  Tape t1, t2;
  Var a = t1.variable(Tensor::vector({1.0}));
  Var b = t2.variable(Tensor::vector({1.0}));
  EXPECT_THROW(nk::add(a, b), trade::InternalError);
}

TEST(Autodiff, InferenceTapeKeepsNoGradients) {
  Tape tape(nullptr, false);
  Var a = tape.variable(Tensor::scalar(1.5));
  Var y = nk::mul(a, a);
  EXPECT_DOUBLE_EQ(y.item(), 2.25);
  EXPECT_FALSE(tape.requires_grad(y));
}

TEST(GruCell, ZeroParametersHalveTheState) {
  // With W = U = b = 0: z = 0.5, n = 0, so h' = 0.5 h.
  Tape tape;
  Var x = tape.constant(Tensor::vector({0.3, -0.2}));
  Var h = tape.constant(Tensor::vector({1.0, -2.0, 4.0}));
  Var w = tape.constant(Tensor({9, 2}));
  Var u = tape.constant(Tensor({9, 3}));
  Var b = tape.constant(Tensor({9}));
  Var out = nk::gru_cell(x, h, w, u, b);
  EXPECT_EQ(out.value(), Tensor::vector({0.5, -1.0, 2.0}));
}

TEST(GruCell, MatchesUnfusedReference) {
  std::mt19937_64 rng(10);
  const std::size_t in = 3, hd = 2;
  Tensor x = random_tensor({in}, rng), h = random_tensor({hd}, rng);
  Tensor w = random_tensor({3 * hd, in}, rng), u = random_tensor({3 * hd, hd}, rng), b = random_tensor({3 * hd}, rng);
  Tape tape;
  Var out = nk::gru_cell(tape.constant(x), tape.constant(h), tape.constant(w), tape.constant(u), tape.constant(b));
  auto lin = [&](std::size_t block, const Tensor& hh) {
    std::vector<double> wx(hd), uh(hd);
    for (std::size_t r = 0; r < hd; ++r) {
      for (std::size_t c = 0; c < in; ++c) wx[r] += w.at(block * hd + r, c) * x[c];
      for (std::size_t c = 0; c < hd; ++c) uh[r] += u.at(block * hd + r, c) * hh[c];
    }
    return std::make_pair(wx, uh);
  };
  auto sig = [](double v) { return 1 / (1 + std::exp(-v)); };
  auto [zx, zh] = lin(0, h);
  auto [rx, rh] = lin(1, h);
  std::vector<double> z(hd), r(hd);
  Tensor rhv({hd});
  for (std::size_t i = 0; i < hd; ++i) {
    z[i] = sig(zx[i] + zh[i] + b[i]);
    r[i] = sig(rx[i] + rh[i] + b[hd + i]);
    rhv[i] = r[i] * h[i];
  }
  auto [nx, nh] = lin(2, rhv);
  for (std::size_t i = 0; i < hd; ++i) {
    const double n = std::tanh(nx[i] + nh[i] + b[2 * hd + i]);
    EXPECT_NEAR(out.value()[i], (1 - z[i]) * h[i] + z[i] * n, 1e-14);
  }
}

TEST(GruCell, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  Tensor x = random_tensor({3}, rng), h = random_tensor({2}, rng);
  Tensor w = random_tensor({6, 3}, rng), u = random_tensor({6, 2}, rng), b = random_tensor({6}, rng);
  check_gradient({x, h, w, u, b}, [](Tape& t, const std::vector<Var>& v) {
    Var h1 = nk::gru_cell(v[0], v[1], v[2], v[3], v[4]);
    Var h2 = nk::gru_cell(v[0], h1, v[2], v[3], v[4]);
    return nk::dot(h2, t.constant(Tensor::vector({0.7, -1.3})));
  });
}

TEST(ParamStore, FlattenRoundTripAndDuplicates) {
  nk::ParamStore p;
  p.add("a", Tensor::vector({1, 2}));
  p.add("b", Tensor::matrix(1, 2, {3, 4}));
  EXPECT_THROW(p.add("a", Tensor::vector({0})), trade::ConfigError);
  EXPECT_EQ(p.flatten(), (std::vector<double>{1, 2, 3, 4}));
  std::vector<double> flat = {5, 6, 7, 8};
  p.assign_flat(flat);
  EXPECT_EQ(p.value("b").at(0, 1), 8.0);
  EXPECT_EQ(p.total_elements(), 4u);
  nk::Gradients g(p);
  g.assign_flat(flat);
  g.scale(0.5);
  EXPECT_EQ(g.flatten(), (std::vector<double>{2.5, 3, 3.5, 4}));
}

TEST(Adam, MatchesScalarReference) {
  nk::ParamStore p;
  p.add("w", Tensor::vector({0.5, -1.0}));
  nk::AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};
  nk::Adam adam(cfg);
  double m[2] = {0, 0}, v[2] = {0, 0}, w[2] = {0.5, -1.0};
  for (int t = 1; t <= 20; ++t) {
    nk::Gradients g(p);
    for (int i = 0; i < 2; ++i) g[0][i] = 2 * p.value(0)[i] + (i == 0 ? 0.1 : -0.3) * t;
    double gr[2] = {g[0][0], g[0][1]};
    adam.step(p, g);
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * gr[i];
      v[i] = 0.999 * v[i] + 0.001 * gr[i] * gr[i];
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.999, t));
      w[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
      EXPECT_NEAR(p.value(0)[i], w[i], 1e-13);
    }
  }
  EXPECT_EQ(adam.steps(), 20);
}

TEST(Adam, RefusesNonFiniteGradientWithoutSideEffects) {
  nk::ParamStore p;
  p.add("w", Tensor::vector({1.0, 2.0}));
  nk::Adam adam;
  nk::Gradients g(p);
  g[0][0] = 1.0;
  adam.step(p, g);
  const nk::ParamStore before = p;
  const auto m_before = adam.first_moments();
  g[0][1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(adam.step(p, g), trade::NumericError);
  EXPECT_EQ(p, before);
  EXPECT_EQ(adam.first_moments(), m_before);
  EXPECT_EQ(adam.steps(), 1);
}
