#include <gtest/gtest.h>

#include <cmath>

#include "featsel/gating.hpp"
#include "featsel/gradcheck.hpp"
#include "featsel/optim.hpp"
#include "featsel/rng.hpp"

using namespace featsel;

TEST(BinarizeSte, DecisionTable) {
  EXPECT_EQ(binarize_ste(0.01), 1.0);
  EXPECT_EQ(binarize_ste(0.0), 0.0);
  EXPECT_EQ(binarize_ste(-3.0), 0.0);
  EXPECT_EQ(binarize_ste(1e300), 1.0);
}

TEST(BinarizeSte, MonotoneOnGrid) {
  double prev = -1.0;
  for (int i = 0; i <= 1000; ++i) {
    const double a = -1.0 + 2.0 * i / 1000.0;
    const double g = binarize_ste(a);
    EXPECT_TRUE(g == 0.0 || g == 1.0);
    EXPECT_GE(g, prev);
    prev = g;
  }
}

TEST(BinarizeSte, IdentitySurrogateBackward) {
  // upstream gradient 0.7 at alpha = -5 passes through unchanged
  EXPECT_DOUBLE_EQ(ste_surrogate_backward(0.7), 0.7);
  // and through apply_gates: d(masked)/d(alpha) uses surrogate 1
  GateGroup group;
  group.alpha = {-5.0};
  group.alpha_grad = {0.0};
  Tape t;
  const auto emb = t.input(Tensor({1, 1, 1}, {1.0}));
  const auto masked = apply_gates(t, emb, group);
  const auto out = t.push("readout", Tensor({1}, {0.0}));
  t.set_backward(out, [=](Tape& tp) { tp.grad(masked).data[0] += 0.7; });
  t.backward(out);
  EXPECT_DOUBLE_EQ(group.alpha_grad[0], 0.7 * 1.0);
}

TEST(BinarizeGumbel, NoiseCancellation) {
  // forced u_k == u_l makes the noises cancel
  EXPECT_DOUBLE_EQ(binarize_gumbel_from_noise(0.0, 1.0, 0.3, 0.3), 0.5);
  EXPECT_DOUBLE_EQ(binarize_gumbel_from_noise(0.0, 1e-4, -2.0, -2.0), 0.5);
  // saturated open at tiny temperature
  EXPECT_GE(binarize_gumbel_from_noise(0.01, 1e-4, 0.7, 0.7), 1.0 - 1e-15);
}

TEST(BinarizeGumbel, MonteCarloMeanAtZero) {
  // g_k - g_l is symmetric about 0, so the mean soft gate at alpha=0 is 0.5.
  RngStream rng(123);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += binarize_gumbel(0.0, 1.0, rng);
  EXPECT_NEAR(sum / n, 0.5, 0.01);
}

TEST(BinarizeGumbel, GradCheckThroughSigmoid) {
  // fixed noise; checks d gate / d alpha = g(1-g)/gamma
  const double gamma = 0.37, gk = 0.9, gl = -0.2;
  auto f = [&](const Tensor& x) {
    return binarize_gumbel_from_noise(x.data[0], gamma, gk, gl);
  };
  auto g = [&](const Tensor& x) {
    const double y = binarize_gumbel_from_noise(x.data[0], gamma, gk, gl);
    return Tensor({1}, {y * (1.0 - y) / gamma});
  };
  const auto report = grad_check(f, g, Tensor({1}, {0.15}), 1e-6);
  EXPECT_TRUE(report.pass) << report.max_rel_err;
}

TEST(ApplyGates, AllOpenIsExactIdentity) {
  GateGroup group;
  group.alpha = {0.1, 0.2, 0.3};
  group.alpha_grad.assign(3, 0.0);
  Tensor emb0({2, 3, 2});
  RngStream rng(5);
  for (double& v : emb0.data) v = rng.uniform(-1, 1);
  Tape t;
  const auto emb = t.input(emb0);
  const auto masked = apply_gates(t, emb, group);
  EXPECT_EQ(t.value(masked).data, emb0.data);  // bit-identical
  // and identity on gradients
  Tensor upstream(emb0.shape);
  for (std::size_t i = 0; i < upstream.numel(); ++i) upstream.data[i] = 0.1 * i;
  const auto out = t.push("readout", Tensor({1}, {0.0}));
  t.set_backward(out, [&, masked](Tape& tp) {
    for (std::size_t i = 0; i < upstream.numel(); ++i)
      tp.grad(masked).data[i] += upstream.data[i];
  });
  t.backward(out);
  EXPECT_EQ(t.grad(emb).data, upstream.data);
}

TEST(ApplyGates, ClosedFieldAnnihilates) {
  GateGroup group;
  group.alpha = {0.5, -0.5};
  group.alpha_grad.assign(2, 0.0);
  Tensor emb0({2, 2, 2});
  emb0.fill(1.5);
  Tape t;
  const auto emb = t.input(emb0);
  const auto masked = apply_gates(t, emb, group);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t v = 0; v < 2; ++v) {
      EXPECT_EQ(t.value(masked).data[(b * 2 + 0) * 2 + v], 1.5);
      EXPECT_EQ(t.value(masked).data[(b * 2 + 1) * 2 + v], 0.0);
    }
  const auto out = t.push("readout", Tensor({1}, {0.0}));
  t.set_backward(out, [=](Tape& tp) {
    for (double& g : tp.grad(masked).data) g += 1.0;
  });
  t.backward(out);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t v = 0; v < 2; ++v) {
      EXPECT_EQ(t.grad(emb).data[(b * 2 + 0) * 2 + v], 1.0);
      EXPECT_EQ(t.grad(emb).data[(b * 2 + 1) * 2 + v], 0.0);
    }
}

// Oracle: a hand-built dense computation of d loss / d alpha on batch=2,
// M=2, V=2 under the STE surrogate: sum over batch and V of upstream * e.
TEST(ApplyGates, AlphaGradientMatchesDenseOracle) {
  GateGroup group;
  group.alpha = {0.4, -0.1};
  group.alpha_grad.assign(2, 0.0);
  const Tensor emb0({2, 2, 2}, {0.1, -0.2, 0.3, 0.4, -0.5, 0.6, 0.7, -0.8});
  Tensor upstream({2, 2, 2}, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0});
  Tape t;
  const auto emb = t.input(emb0);
  const auto masked = apply_gates(t, emb, group);
  const auto out = t.push("readout", Tensor({1}, {0.0}));
  t.set_backward(out, [&, masked](Tape& tp) {
    for (std::size_t i = 0; i < upstream.numel(); ++i)
      tp.grad(masked).data[i] += upstream.data[i];
  });
  t.backward(out);
  double expected0 = 0.0, expected1 = 0.0;
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t v = 0; v < 2; ++v) {
      expected0 += upstream.data[(b * 2 + 0) * 2 + v] * emb0.data[(b * 2 + 0) * 2 + v];
      expected1 += upstream.data[(b * 2 + 1) * 2 + v] * emb0.data[(b * 2 + 1) * 2 + v];
    }
  EXPECT_DOUBLE_EQ(group.alpha_grad[0], expected0);
  EXPECT_DOUBLE_EQ(group.alpha_grad[1], expected1);
}

TEST(SparseRegularizer, PaperBranches) {
  GateGroup group;
  group.alpha.assign(39, -1.0);
  group.alpha_grad.assign(39, 0.0);
  for (int i = 0; i < 25; ++i) group.alpha[i] = 0.5;  // 25 open
  auto over = sparse_regularizer(group, 19);
  EXPECT_DOUBLE_EQ(over.value, 25.0);
  for (double g : over.alpha_grad) EXPECT_DOUBLE_EQ(g, 1.0);

  for (int i = 19; i < 25; ++i) group.alpha[i] = -0.5;  // exactly 19 open
  auto at = sparse_regularizer(group, 19);
  EXPECT_DOUBLE_EQ(at.value, 0.0);

  for (int i = 12; i < 19; ++i) group.alpha[i] = -0.5;  // 12 open
  auto under = sparse_regularizer(group, 19);
  EXPECT_DOUBLE_EQ(under.value, 0.0);
  for (double g : under.alpha_grad) EXPECT_DOUBLE_EQ(g, 0.0);
}

TEST(SparseRegularizer, SignInvariance) {
  GateGroup group;
  group.alpha = {0.3, -0.2, 0.7, 0.0, -0.9};
  group.alpha_grad.assign(5, 0.0);
  const auto base = sparse_regularizer(group, 2);
  for (double& a : group.alpha) a *= 17.0;  // positive rescale keeps signs
  const auto scaled = sparse_regularizer(group, 2);
  EXPECT_DOUBLE_EQ(base.value, scaled.value);
  EXPECT_EQ(base.alpha_grad, scaled.alpha_grad);
}

TEST(SparseRegularizer, RegularizerOnlyStepNeverOpensGates) {
  RngStream rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    GateGroup group;
    group.alpha.resize(12);
    for (double& a : group.alpha) a = rng.uniform(-0.01, 0.01);
    group.alpha_grad.assign(12, 0.0);
    const std::size_t before = group.open_count();
    const auto reg = sparse_regularizer(group, 4);
    std::vector<double> grads(12);
    for (std::size_t i = 0; i < 12; ++i) grads[i] = 2.0 * reg.alpha_grad[i];
    sgd_step(group.alpha, grads, 1e-3);
    EXPECT_LE(group.open_count(), before);
  }
}

TEST(InitGates, RandomSupportAndConstant) {
  GateInitSpec spec;
  spec.mode = GateInitMode::random_uniform;
  const auto g = init_gates(spec, 1000, 42);
  for (double a : g.alpha) {
    EXPECT_GE(a, -0.002);
    EXPECT_LE(a, 0.008);
  }
  GateInitSpec cspec;  // constant +c*p = 0.008
  const auto c = init_gates(cspec, 10, 0);
  for (double a : c.alpha) EXPECT_DOUBLE_EQ(a, 0.008);
  EXPECT_EQ(c.open_count(), 10u);
}

TEST(InitGates, MonteCarloOpenFraction) {
  GateInitSpec spec;
  spec.mode = GateInitMode::random_uniform;
  std::size_t open = 0;
  const std::size_t n = 100000;
  const auto g = init_gates(spec, n, 7);
  open = g.open_count();
  EXPECT_NEAR(static_cast<double>(open) / n, 0.8, 0.01);
}

TEST(AnnealTemperature, GeometricSchedule) {
  EXPECT_DOUBLE_EQ(anneal_temperature(0, 100), 1e-3);
  EXPECT_NEAR(anneal_temperature(100, 100), 1e-4, 1e-19);
  EXPECT_NEAR(anneal_temperature(50, 100), 3.16227766e-4, 1e-12);
  EXPECT_THROW(anneal_temperature(101, 100), std::invalid_argument);
}
