#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace hdbn;

TEST(GaussianKl, StandardNormalIsZero) {
  EXPECT_EQ(gaussian_kl_to_std(Vec::Zero(16), Vec::Ones(16)), 0.0);
}

TEST(GaussianKl, ShiftedMeanOneDim) {
  Vec mu(1), s(1);
  mu << 1.0;
  s << 1.0;
  EXPECT_DOUBLE_EQ(gaussian_kl_to_std(mu, s), 0.5);
}

TEST(GaussianKl, IdenticalDistributionsGiveZero) {
  Rng rng(3);
  const Vec m = rng.normal_vec(8);
  const Vec s = (rng.normal_vec(8).array().abs() + 0.1).matrix();
  EXPECT_NEAR(gaussian_kl(m, s, m, s), 0.0, 1e-15);
}

TEST(GaussianKl, MatchesQuadratureOnRandomInstances) {
  Rng rng(11);
  for (int i = 0; i < 50; ++i) {
    const auto n = static_cast<Eigen::Index>(1 + rng.below(6));
    const Vec qm = rng.normal_vec(n);
    const Vec qs = (0.2 + 1.5 * rng.normal_vec(n).array().abs()).matrix();
    const Vec pm = rng.normal_vec(n);
    const Vec ps = (0.3 + 1.5 * rng.normal_vec(n).array().abs()).matrix();
    EXPECT_NEAR(gaussian_kl(qm, qs, pm, ps), oracle::gaussian_kl_quadrature(qm, qs, pm, ps), 1e-6);
    EXPECT_NEAR(gaussian_kl_to_std(qm, qs),
                oracle::gaussian_kl_quadrature(qm, qs, Vec::Zero(n), Vec::Ones(n)), 1e-6);
  }
}

TEST(GaussianKl, NonNegative) {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const Vec qm = rng.normal_vec(4), pm = rng.normal_vec(4);
    const Vec qs = (rng.normal_vec(4).array().abs() + 0.05).matrix();
    const Vec ps = (rng.normal_vec(4).array().abs() + 0.05).matrix();
    EXPECT_GE(gaussian_kl(qm, qs, pm, ps), 0.0);
  }
}

TEST(GaussianKl, RejectsBadSigmaAndShapes) {
  Vec s = Vec::Ones(3);
  s[1] = 0.0;
  EXPECT_THROW(gaussian_kl_to_std(Vec::Zero(3), s), std::domain_error);
  EXPECT_THROW(gaussian_kl(Vec::Zero(3), Vec::Ones(3), Vec::Zero(2), Vec::Ones(2)), std::invalid_argument);
}

TEST(CategoricalKl, UniformVersusPointMass) {
  const Vec o = Vec::Constant(9, 1.0 / 9.0);
  EXPECT_NEAR(categorical_kl(o, o), 0.0, 1e-15);
  Vec l = Vec::Constant(9, 0.5 / 8.0);
  l[0] = 0.5;
  EXPECT_NEAR(categorical_kl(o, l), oracle::categorical_kl_sum(o, l), 1e-14);
}

TEST(CategoricalKl, InfiniteWhenSupportMissing) {
  Vec o = Vec::Zero(3), l = Vec::Zero(3);
  o << 0.5, 0.5, 0.0;
  l << 1.0, 0.0, 0.0;
  EXPECT_THROW(categorical_kl(o, l), std::domain_error);
  EXPECT_TRUE(std::isfinite(categorical_kl_floored(o, l)));
}

TEST(CategoricalKl, ZeroTargetMassContributesNothing) {
  Vec o(3), l(3);
  o << 1.0, 0.0, 0.0;
  l << 0.5, 0.25, 0.25;
  EXPECT_NEAR(categorical_kl(o, l), std::log(2.0), 1e-15);
}

TEST(Softmax, SimplexAndShiftInvariant) {
  Rng rng(9);
  const Vec x = rng.normal_vec(9) * 30.0;
  const Vec p = softmax(x);
  EXPECT_NEAR(p.sum(), 1.0, 1e-12);
  EXPECT_TRUE((p.array() >= 0.0).all());
  const Vec q = softmax((x.array() + 1000.0).matrix());
  EXPECT_LT((p - q).cwiseAbs().maxCoeff(), 1e-12);
  Vec bad = x;
  bad[2] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(softmax(bad), NumericalError);
}

TEST(Softmax, BackwardMatchesFiniteDifferences) {
  Rng rng(2);
  Mat logits = rng.normal_mat(9, 3);
  const Mat w = rng.normal_mat(9, 3);
  auto loss = [&]() { return softmax_columns(logits).cwiseProduct(w).sum(); };
  const Mat analytic = softmax_columns_backward(softmax_columns(logits), w);
  ParamView view;
  view.add(logits);
  Mat a = analytic;
  ParamView av;
  av.add(a);
  const auto ptrs = view.pointers();
  const auto vals = av.values();
  const auto rep = grad_check(loss, ptrs, vals);
  EXPECT_LT(rep.max_rel_error, 1e-7);
}

TEST(GradCheck, StepLadderSkipsKinkButNotWrongGradient) {
  // relu just right of its kink: a 1e-5 step straddles zero, 1e-6 does not
  double x = 3e-6;
  auto loss = [&]() { return std::max(0.0, x); };
  std::vector<double*> ptrs{&x};
  const std::vector<double> right{1.0}, wrong{1.01};
  EXPECT_GT(grad_check(loss, ptrs, right, 1e-5).max_rel_error, 0.1);
  const double steps[] = {1e-5, 1e-6};
  EXPECT_LT(grad_check(loss, ptrs, right, steps, 1e-8).max_rel_error, 1e-8);
  EXPECT_GT(grad_check(loss, ptrs, wrong, steps, 1e-8).max_rel_error, 5e-3);
  EXPECT_EQ(x, 3e-6);
  EXPECT_THROW(grad_check(loss, ptrs, right, std::span<const double>{}, 1e-8), std::invalid_argument);
}

TEST(Mse, TrueMean) {
  Vec a(4), b(4);
  a << 1, 2, 3, 4;
  b << 1, 2, 3, 6;
  EXPECT_DOUBLE_EQ(mse(a, b), 1.0);
}

TEST(Rng, SplitsDependOnlyOnSeedAndLabel) {
  Rng a(7), b(7);
  a.normal();
  a.normal();
  Rng sa = a.split("eps-latent"), sb = b.split("eps-latent");
  EXPECT_EQ(sa.normal(), sb.normal());
  EXPECT_NE(Rng(7).split("x").seed(), Rng(7).split("y").seed());
  EXPECT_NE(Rng(7).split("x", 1).seed(), Rng(7).split("x", 2).seed());
}

TEST(Rng, ShuffleIsAPermutation) {
  Rng rng(1);
  std::vector<int> v(100);
  std::iota(v.begin(), v.end(), 0);
  rng.shuffle(v.begin(), v.end());
  auto s = v;
  std::sort(s.begin(), s.end());
  for (int i = 0; i < 100; ++i) EXPECT_EQ(s[static_cast<std::size_t>(i)], i);
}

TEST(Softplus, InverseRoundTrip) {
  for (double y : {1e-6, 0.05, 0.6931, 1.0, 5.0, 40.0}) EXPECT_NEAR(softplus(softplus_inverse(y)), y, 1e-12 * std::max(1.0, y));
  EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_EQ(softplus(-800.0), 0.0);
  EXPECT_EQ(softplus(800.0), 800.0);
}

TEST(ReparamSample, ZeroSigmaIsMean) {
  Rng rng(4);
  const Vec mu = rng.normal_vec(5);
  EXPECT_EQ(reparam_sample(mu, Vec::Zero(5), rng), mu);
}

TEST(Dense, MlpGradientsMatchFiniteDifferences) {
  Rng rng(21);
  Mlp mlp;
  mlp.layers.push_back(DenseLayer::fan_in_uniform(4, 6, Activation::kRelu, rng));
  mlp.layers.push_back(DenseLayer::fan_in_uniform(6, 3, Activation::kSoftplus, rng));
  const Mat x = rng.normal_mat(4, 5);
  const Mat target = rng.normal_mat(3, 5);
  auto loss = [&]() { return 0.5 * (mlp_forward(mlp, x) - target).squaredNorm(); };
  MlpTape tape;
  const Mat y = mlp_forward(mlp, x, &tape);
  MlpGrad g = MlpGrad::like(mlp);
  mlp_backward(mlp, tape, y - target, &g);
  ParamView pv;
  pv.add(mlp);
  ParamView gv;
  gv.add(g);
  const auto rep = grad_check(loss, pv.pointers(), gv.values(), 1e-6);
  EXPECT_LT(rep.max_rel_error, 1e-5) << "worst index " << rep.worst_index;
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
  Vec p = Vec::Zero(3), g(3);
  g << 2.0, -0.5, 0.0;
  ParamView pv, gv;
  pv.add(p);
  gv.add(g);
  Optimizer opt(OptimizerKind::kAdam, 0.1);
  opt.step(pv, gv);
  EXPECT_NEAR(p[0], -0.1, 1e-6);
  EXPECT_NEAR(p[1], 0.1, 1e-6);
  EXPECT_EQ(p[2], 0.0);
}

TEST(Optimizer, SgdStep) {
  Vec p = Vec::Ones(2), g = Vec::Constant(2, 3.0);
  ParamView pv, gv;
  pv.add(p);
  gv.add(g);
  Optimizer(OptimizerKind::kSgd, 0.5).step(pv, gv);
  EXPECT_DOUBLE_EQ(p[0], -0.5);
}

TEST(BinaryIo, RoundTripAndTruncation) {
  BinaryWriter w;
  w.magic("TESTMAGC");
  w.u32(7);
  Rng rng(1);
  const Mat m = rng.normal_mat(3, 4);
  w.mat(m);
  w.str("hello");
  BinaryReader r(w.buffer());
  r.expect_magic("TESTMAGC");
  EXPECT_EQ(r.u32(), 7u);
  EXPECT_EQ(r.mat(), m);
  EXPECT_EQ(r.str(), "hello");
  EXPECT_TRUE(r.at_end());
  auto cut = w.buffer();
  cut.resize(cut.size() - 3);
  BinaryReader t(cut);
  t.expect_magic("TESTMAGC");
  t.u32();
  t.mat();
  EXPECT_THROW(t.str(), FormatError);
}
