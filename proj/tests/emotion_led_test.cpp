#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace hdbn;

namespace {

void jitter(ParamView v, Rng& rng, double scale) {
  for (double* p : v.pointers()) *p += scale * rng.normal();
}

InferenceNets random_nets(Rng& rng, Eigen::Index emb = 12, Eigen::Index emo = 6, Eigen::Index latent = 4,
                          Eigen::Index hidden = 10) {
  auto n = InferenceNets::create(rng, emb, emo, latent, hidden);
  jitter(param_view(n), rng, 0.3);
  return n;
}

LedBatch random_batch(const InferenceNets& n, int users, int records, Rng& rng) {
  LedBatch b;
  const Eigen::Index latent = n.latent_dim();
  b.user_repr = rng.normal_mat(n.prior.trunk.in_dim(), users);
  b.emotions = rng.normal_mat(n.posterior.trunk.in_dim(), records);
  for (int i = 0; i < records; ++i) b.record_user.push_back(i % users);
  b.user_noise = rng.normal_mat(latent, users);
  b.record_noise = rng.normal_mat(latent, records);
  return b;
}

// Straightforward loop evaluation of one dense layer.
Vec dense_loop(const DenseLayer& l, const Vec& x) {
  Vec y(l.out_dim());
  for (Eigen::Index o = 0; o < l.out_dim(); ++o) {
    double s = l.bias[o];
    for (Eigen::Index i = 0; i < l.in_dim(); ++i) s += l.weight(o, i) * x[i];
    if (l.activation == Activation::kRelu) s = s > 0 ? s : 0.0;
    y[o] = s;
  }
  return y;
}

std::pair<Vec, Vec> encode_loop(const GaussianEncoder& e, const Vec& x) {
  const Vec h = dense_loop(e.trunk, x);
  const Vec mu = dense_loop(e.mean, h);
  Vec sigma = dense_loop(e.scale, h);
  for (Eigen::Index i = 0; i < sigma.size(); ++i) sigma[i] = std::log1p(std::exp(sigma[i])) + 1e-6;
  return {mu, sigma};
}

Vec decode_loop(const Mlp& m, const Vec& z) { return dense_loop(m.layers[1], dense_loop(m.layers[0], z)); }

double kl_loop(const Vec& qm, const Vec& qs, const Vec& pm, const Vec& ps) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < qm.size(); ++i) {
    s += std::log(ps[i] / qs[i]) + (qs[i] * qs[i] + (qm[i] - pm[i]) * (qm[i] - pm[i])) / (2.0 * ps[i] * ps[i]) - 0.5;
  }
  return s;
}

LedLosses losses_oracle(const InferenceNets& n, const LedBatch& b) {
  LedLosses out;
  const Eigen::Index users = b.user_repr.cols(), records = b.emotions.cols();
  std::vector<std::pair<Vec, Vec>> prior;
  double se2 = 0.0;
  for (Eigen::Index u = 0; u < users; ++u) {
    prior.push_back(encode_loop(n.prior, b.user_repr.col(u)));
    const auto& [mu, sigma] = prior.back();
    out.kl1 += kl_loop(mu, sigma, Vec::Zero(mu.size()), Vec::Ones(mu.size()));
    Vec z(mu.size());
    for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = mu[j] + sigma[j] * b.user_noise(j, u);
    const Vec r = decode_loop(n.user_decoder, z);
    for (Eigen::Index j = 0; j < r.size(); ++j) se2 += std::pow(b.user_repr(j, u) - r[j], 2);
  }
  double se1 = 0.0;
  for (Eigen::Index i = 0; i < records; ++i) {
    const auto [mu, sigma] = encode_loop(n.posterior, b.emotions.col(i));
    const auto& p = prior[static_cast<std::size_t>(b.record_user[static_cast<std::size_t>(i)])];
    out.kl2 += kl_loop(mu, sigma, p.first, p.second);
    Vec z(mu.size());
    for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = mu[j] + sigma[j] * b.record_noise(j, i);
    const Vec s = decode_loop(n.emotion_decoder, z);
    for (Eigen::Index j = 0; j < s.size(); ++j) se1 += std::pow(b.emotions(j, i) - s[j], 2);
  }
  out.kl1 /= static_cast<double>(users);
  out.kl2 /= static_cast<double>(records);
  out.mse1 = se1 / static_cast<double>(b.emotions.size());
  out.mse2 = se2 / static_cast<double>(b.user_repr.size());
  return out;
}

double weighted(const LedLosses& l, const LedWeights& w) {
  return w.kl1 * l.kl1 + w.kl2 * l.kl2 + w.mse2 * l.mse2 + w.mse1 * l.mse1;
}

// Checks parameter and input gradients of one weighted combination.
void check_gradients(const LedWeights& w, bool anchored, bool upstream, std::uint64_t seed) {
  Rng rng(seed);
  auto nets = random_nets(rng);
  auto batch = random_batch(nets, 3, 16, rng);
  const Mat upstream_w = upstream ? rng.normal_mat(nets.latent_dim(), 16) : Mat();
  auto loss = [&]() {
    const auto p = led_forward(nets, batch, anchored);
    double v = weighted(p.losses, w);
    if (upstream) v += upstream_w.cwiseProduct(p.record_latent).sum();
    return v;
  };
  const auto pass = led_forward(nets, batch, anchored);
  auto grad = InferenceNetsGrad::like(nets);
  Mat grad_repr = Mat::Zero(batch.user_repr.rows(), batch.user_repr.cols());
  led_backward(nets, batch, pass, w, upstream ? upstream_w : Mat(), grad, &grad_repr);

  const auto rep = grad_check(loss, param_view(nets).pointers(), param_view(grad).values(), 1e-5);
  EXPECT_LT(rep.max_rel_error, 1e-4) << "params: worst " << rep.worst_index << " analytic " << rep.worst_analytic
                                     << " numeric " << rep.worst_numeric;
  ParamView rv, gv;
  rv.add(batch.user_repr);
  gv.add(grad_repr);
  const auto rr = grad_check(loss, rv.pointers(), gv.values(), 1e-5);
  EXPECT_LT(rr.max_rel_error, 1e-4) << "user repr: worst " << rr.worst_index;
}

}  // namespace

TEST(InferenceNets, ZeroHeadsGiveStandardShapes) {
  Rng rng(1);
  const auto n = InferenceNets::create(rng);
  EXPECT_EQ(n.latent_dim(), kLatentDim);
  const auto p = infer_prior(n, rng.normal_vec(kEmbeddingDim));
  EXPECT_EQ(p.mu, Vec::Zero(kLatentDim));
  EXPECT_NEAR(p.sigma[0], std::log(2.0) + 1e-6, 1e-15);
  const auto q = infer_posterior(n, rng.normal_vec(kEmotionDim));
  EXPECT_EQ(q.sigma.size(), kLatentDim);
  EXPECT_THROW(infer_prior(n, Vec::Zero(5)), std::invalid_argument);
  EXPECT_THROW(infer_posterior(n, Vec::Zero(64)), std::invalid_argument);
}

TEST(InferenceNets, PosteriorIsDeterministicAndPositive) {
  Rng rng(2);
  const auto n = random_nets(rng, kEmbeddingDim, kEmotionDim, kLatentDim, kLedHidden);
  const Vec s = rng.normal_vec(kEmotionDim);
  const auto a = infer_posterior(n, s);
  const auto b = infer_posterior(n, s);
  EXPECT_EQ(a.mu, b.mu);
  EXPECT_EQ(a.sigma, b.sigma);
  EXPECT_GT(a.sigma.minCoeff(), 0.0);
  const Vec r1 = rng.normal_vec(kEmbeddingDim), r2 = rng.normal_vec(kEmbeddingDim);
  EXPECT_NE(infer_prior(n, r1).mu, infer_prior(n, r2).mu);
}

TEST(LedLosses, MatchLoopOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const auto n = random_nets(rng);
    const auto b = random_batch(n, 2, 5, rng);
    const auto got = led_losses(n, b);
    const auto want = losses_oracle(n, b);
    EXPECT_NEAR(got.kl1, want.kl1, 1e-10);
    EXPECT_NEAR(got.kl2, want.kl2, 1e-10);
    EXPECT_NEAR(got.mse1, want.mse1, 1e-10);
    EXPECT_NEAR(got.mse2, want.mse2, 1e-10);
  }
}

TEST(LedLosses, KlDecompositionMatchesMatrixForm) {
  Rng rng(4);
  const auto n = random_nets(rng);
  const auto b = random_batch(n, 3, 9, rng);
  const auto p = led_forward(n, b);
  double kl1 = 0.0, kl2 = 0.0;
  const Eigen::Index k = n.latent_dim();
  for (Eigen::Index u = 0; u < 3; ++u) {
    kl1 += oracle::gaussian_kl_matrix_form(p.prior.mu.col(u), p.prior.sigma.col(u), Vec::Zero(k), Vec::Ones(k));
  }
  for (Eigen::Index i = 0; i < 9; ++i) {
    const int u = b.record_user[static_cast<std::size_t>(i)];
    kl2 += oracle::gaussian_kl_matrix_form(p.posterior.mu.col(i), p.posterior.sigma.col(i), p.prior.mu.col(u),
                                           p.prior.sigma.col(u));
  }
  EXPECT_NEAR(p.losses.kl1 + p.losses.kl2, kl1 / 3.0 + kl2 / 9.0, 1e-9);
}

TEST(LedLosses, PriorHeadAtStandardNormalGivesZeroKl1) {
  Rng rng(5);
  auto n = random_nets(rng);
  n.prior.mean.weight.setZero();
  n.prior.mean.bias.setZero();
  n.prior.scale.weight.setZero();
  n.prior.scale.bias.setConstant(softplus_inverse(1.0 - 1e-6));
  const auto b = random_batch(n, 4, 4, rng);
  EXPECT_NEAR(led_losses(n, b).kl1, 0.0, 1e-12);
}

TEST(LedLosses, MatchingHeadsGiveZeroKl2) {
  Rng rng(6);
  auto n = random_nets(rng, 6, 6, 4, 8);
  n.posterior = n.prior;
  auto b = random_batch(n, 5, 5, rng);
  b.emotions = b.user_repr;
  for (int i = 0; i < 5; ++i) b.record_user[static_cast<std::size_t>(i)] = i;
  EXPECT_NEAR(led_losses(n, b).kl2, 0.0, 1e-12);
  EXPECT_GT(led_losses(n, b, false).kl2, 0.0);
}

TEST(LedGradients, Kl1) { check_gradients({1, 0, 0, 0}, true, false, 10); }
TEST(LedGradients, Kl2AnchoredToUserPrior) { check_gradients({0, 1, 0, 0}, true, false, 11); }
TEST(LedGradients, Kl2AnchoredToStandardNormal) { check_gradients({0, 1, 0, 0}, false, false, 12); }
TEST(LedGradients, UserReconstruction) { check_gradients({0, 0, 1, 0}, true, false, 13); }
TEST(LedGradients, EmotionReconstruction) { check_gradients({0, 0, 0, 1}, true, false, 14); }
TEST(LedGradients, WeightedSumWithUpstream) { check_gradients({0.3, 0.7, 1.3, 2.1}, true, true, 15); }

TEST(LedForward, RejectsMismatchedRecordUsers) {
  Rng rng(7);
  const auto n = random_nets(rng);
  auto b = random_batch(n, 2, 3, rng);
  b.record_user.pop_back();
  EXPECT_THROW(led_forward(n, b), std::invalid_argument);
}

TEST(LedSweep, ConstantNetworkGivesFlatCurves) {
  Rng rng(8);
  const auto n = random_nets(rng, kEmbeddingDim, kEmotionDim, kLatentDim, kLedHidden);
  const Vec fixed = softmax(rng.normal_vec(kMoodCount));
  const auto curve = sweep_led_dimension(n, rng.normal_vec(kEmotionDim), 3, {-2, -1, 0, 1, 2},
                                         [&](const Vec&) { return fixed; });
  ASSERT_EQ(curve.size(), 5u);
  for (const auto& c : curve) EXPECT_EQ(c, fixed);
}

TEST(LedSweep, SimplexAndBoundedVariation) {
  Rng rng(9);
  const auto n = random_nets(rng, kEmbeddingDim, kEmotionDim, kLatentDim, kLedHidden);
  const Mat proj = rng.normal_mat(kMoodCount, kLatentDim);
  std::vector<double> grid;
  for (int i = 0; i <= 200; ++i) grid.push_back(-3.0 + 0.03 * i);
  int seen_dim = -1;
  const auto curve = sweep_led_dimension(n, rng.normal_vec(kEmotionDim), 5, grid, [&](const Vec& mu) {
    seen_dim = static_cast<int>(mu.size());
    return softmax(proj * mu);
  });
  EXPECT_EQ(seen_dim, kLatentDim);
  double variation = 0.0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    EXPECT_NEAR(curve[i].sum(), 1.0, 1e-12);
    EXPECT_GE(curve[i].minCoeff(), 0.0);
    if (i > 0) {
      const double step = (curve[i] - curve[i - 1]).cwiseAbs().maxCoeff();
      EXPECT_LT(step, 0.2);
      variation += step;
    }
  }
  EXPECT_LT(variation, 9.0);
}

TEST(LedSweep, RejectsBadArguments) {
  Rng rng(10);
  const auto n = InferenceNets::create(rng);
  const Vec s = rng.normal_vec(kEmotionDim);
  auto f = [](const Vec&) { return Vec::Constant(kMoodCount, 1.0 / kMoodCount); };
  EXPECT_THROW(sweep_led_dimension(n, s, 16, {0, 1}, f), std::out_of_range);
  EXPECT_THROW(sweep_led_dimension(n, s, -1, {0, 1}, f), std::out_of_range);
  EXPECT_THROW(sweep_led_dimension(n, s, 0, {1, 0}, f), std::invalid_argument);
  EXPECT_THROW(sweep_led_dimension(n, s, 0, {0, std::numeric_limits<double>::infinity()}, f), std::invalid_argument);
}
