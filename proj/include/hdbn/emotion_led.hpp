#pragma once

// Latent emotion distributions (LEDs). A prior encoder maps the user
// representation r_u to N(mu_u, sigma_1); a posterior encoder maps the tag
// encoding s to N(mu_uv, sigma_2). Two decoders reconstruct r_u and s from
// samples of those distributions. The four regularizers of the objective
// (two KLs, two reconstruction errors) live here with their reverse pass.

#include "hdbn/dense.hpp"
#include "hdbn/dataset.hpp"

#include <functional>

namespace hdbn {

inline constexpr int kLatentDim = 16;
inline constexpr int kEmbeddingDim = 64;
inline constexpr int kLedHidden = 64;

struct LatentGaussian {
  Vec mu;
  Vec sigma;
};

struct GaussianBatch {
  Mat mu;     // latent x n
  Mat sigma;  // latent x n, strictly positive
};

// One relu hidden layer with a linear mean head and a softplus scale head.
struct GaussianEncoder {
  DenseLayer trunk;
  DenseLayer mean;
  DenseLayer scale;  // raw scale; sigma = softplus(raw) + 1e-6

  static GaussianEncoder create(Eigen::Index in, Eigen::Index latent, Eigen::Index hidden, Rng& rng) {
    return {DenseLayer::fan_in_uniform(in, hidden, Activation::kRelu, rng),
            DenseLayer::zeros(hidden, latent, Activation::kIdentity),
            DenseLayer::zeros(hidden, latent, Activation::kIdentity)};
  }
};

struct GaussianEncoderGrad {
  DenseGrad trunk, mean, scale;

  static GaussianEncoderGrad like(const GaussianEncoder& e) {
    return {DenseGrad::like(e.trunk), DenseGrad::like(e.mean), DenseGrad::like(e.scale)};
  }
};

struct GaussianEncoderTape {
  DenseTape trunk, mean, scale;
};

inline GaussianBatch encode(const GaussianEncoder& enc, const Mat& x, GaussianEncoderTape* tape = nullptr) {
  const Mat h = dense_forward(enc.trunk, x, tape ? &tape->trunk : nullptr);
  GaussianBatch out;
  out.mu = dense_forward(enc.mean, h, tape ? &tape->mean : nullptr);
  const Mat raw = dense_forward(enc.scale, h, tape ? &tape->scale : nullptr);
  out.sigma = raw.unaryExpr([](double r) { return softplus(r) + kSigmaOffset; });
  return out;
}

// Returns dL/dx given dL/dmu and dL/dsigma.
inline Mat encode_backward(const GaussianEncoder& enc, const GaussianEncoderTape& tape, const Mat& grad_mu,
                           const Mat& grad_sigma, GaussianEncoderGrad* grad) {
  const Mat grad_raw = grad_sigma.cwiseProduct(tape.scale.pre.unaryExpr([](double r) { return sigmoid(r); }));
  Mat grad_h = dense_backward(enc.mean, tape.mean, grad_mu, grad ? &grad->mean : nullptr);
  grad_h += dense_backward(enc.scale, tape.scale, grad_raw, grad ? &grad->scale : nullptr);
  return dense_backward(enc.trunk, tape.trunk, grad_h, grad ? &grad->trunk : nullptr);
}

inline Mlp make_decoder(Eigen::Index latent, Eigen::Index out, Eigen::Index hidden, Rng& rng) {
  Mlp m;
  m.layers.push_back(DenseLayer::fan_in_uniform(latent, hidden, Activation::kRelu, rng));
  m.layers.push_back(DenseLayer::fan_in_uniform(hidden, out, Activation::kIdentity, rng));
  return m;
}

struct InferenceNets {
  GaussianEncoder prior;      // r_u -> (mu_u, sigma_1)
  GaussianEncoder posterior;  // s -> (mu_uv, sigma_2)
  Mlp user_decoder;           // z_u -> r_u'
  Mlp emotion_decoder;        // z_uv -> s'

  static InferenceNets create(Rng& rng, Eigen::Index embedding = kEmbeddingDim,
                              Eigen::Index emotion = kEmotionDim, Eigen::Index latent = kLatentDim,
                              Eigen::Index hidden = kLedHidden) {
    InferenceNets n;
    n.prior = GaussianEncoder::create(embedding, latent, hidden, rng);
    n.posterior = GaussianEncoder::create(emotion, latent, hidden, rng);
    n.user_decoder = make_decoder(latent, embedding, hidden, rng);
    n.emotion_decoder = make_decoder(latent, emotion, hidden, rng);
    return n;
  }

  Eigen::Index latent_dim() const { return prior.mean.out_dim(); }
};

struct InferenceNetsGrad {
  GaussianEncoderGrad prior, posterior;
  MlpGrad user_decoder, emotion_decoder;

  static InferenceNetsGrad like(const InferenceNets& n) {
    return {GaussianEncoderGrad::like(n.prior), GaussianEncoderGrad::like(n.posterior),
            MlpGrad::like(n.user_decoder), MlpGrad::like(n.emotion_decoder)};
  }
};

inline ParamView param_view(GaussianEncoder& e) {
  ParamView v;
  v.add(e.trunk);
  v.add(e.mean);
  v.add(e.scale);
  return v;
}
inline ParamView param_view(GaussianEncoderGrad& g) {
  ParamView v;
  v.add(g.trunk);
  v.add(g.mean);
  v.add(g.scale);
  return v;
}
inline ParamView param_view(InferenceNets& n) {
  ParamView v = param_view(n.prior);
  v.append(param_view(n.posterior));
  v.add(n.user_decoder);
  v.add(n.emotion_decoder);
  return v;
}
inline ParamView param_view(InferenceNetsGrad& g) {
  ParamView v = param_view(g.prior);
  v.append(param_view(g.posterior));
  v.add(g.user_decoder);
  v.add(g.emotion_decoder);
  return v;
}

inline LatentGaussian infer_prior(const InferenceNets& nets, const Vec& user_repr) {
  if (user_repr.size() != nets.prior.trunk.in_dim()) throw std::invalid_argument("infer_prior: dimension mismatch");
  auto b = encode(nets.prior, user_repr);
  return {b.mu.col(0), b.sigma.col(0)};
}

inline LatentGaussian infer_posterior(const InferenceNets& nets, const Vec& emotion) {
  if (emotion.size() != nets.posterior.trunk.in_dim()) {
    throw std::invalid_argument("infer_posterior: dimension mismatch");
  }
  auto b = encode(nets.posterior, emotion);
  return {b.mu.col(0), b.sigma.col(0)};
}

// Inputs to the LED terms for one minibatch. Noise is supplied by the caller
// so a pass can be replayed exactly.
struct LedBatch {
  Mat user_repr;                 // embedding x users-in-batch
  Mat emotions;                  // emotion x records
  std::vector<int> record_user;  // column of user_repr per record
  Mat user_noise;                // latent x users-in-batch
  Mat record_noise;              // latent x records
};

struct LedLosses {
  double kl1 = 0.0;   // mean over users of KL(S_u || N(0, 1))
  double kl2 = 0.0;   // mean over records of KL(S_uv || S_u)
  double mse1 = 0.0;  // emotion reconstruction
  double mse2 = 0.0;  // user representation reconstruction
};

// Loss weights lambda_1..lambda_4 as bound in the combined objective:
// kl1, kl2, mse2 (user), mse1 (emotion).
struct LedWeights {
  double kl1 = 1.0;
  double kl2 = 1.0;
  double mse2 = 1.0;
  double mse1 = 1.0;
};

struct LedPass {
  GaussianBatch prior;
  GaussianBatch posterior;
  Mat user_latent;    // z_u
  Mat record_latent;  // z_uv
  Mat user_recon;     // r_u'
  Mat emotion_recon;  // s'
  GaussianEncoderTape prior_tape, posterior_tape;
  MlpTape user_decoder_tape, emotion_decoder_tape;
  LedLosses losses;
  // KL(S_uv || S_u) when true, KL(S_uv || N(0, 1)) otherwise.
  bool anchored_to_user_prior = true;
};

inline LedPass led_forward(const InferenceNets& nets, const LedBatch& batch, bool anchor_to_user_prior = true) {
  const Eigen::Index users = batch.user_repr.cols();
  const Eigen::Index records = batch.emotions.cols();
  if (static_cast<Eigen::Index>(batch.record_user.size()) != records) {
    throw std::invalid_argument("led_forward: record_user size mismatch");
  }
  LedPass p;
  p.anchored_to_user_prior = anchor_to_user_prior;
  p.prior = encode(nets.prior, batch.user_repr, &p.prior_tape);
  p.posterior = encode(nets.posterior, batch.emotions, &p.posterior_tape);
  p.user_latent = p.prior.mu + p.prior.sigma.cwiseProduct(batch.user_noise);
  p.record_latent = p.posterior.mu + p.posterior.sigma.cwiseProduct(batch.record_noise);
  p.user_recon = mlp_forward(nets.user_decoder, p.user_latent, &p.user_decoder_tape);
  p.emotion_recon = mlp_forward(nets.emotion_decoder, p.record_latent, &p.emotion_decoder_tape);

  if (users > 0) {
    double kl1 = 0.0;
    for (Eigen::Index u = 0; u < users; ++u) kl1 += gaussian_kl_to_std(p.prior.mu.col(u), p.prior.sigma.col(u));
    p.losses.kl1 = kl1 / static_cast<double>(users);
    p.losses.mse2 = (batch.user_repr - p.user_recon).squaredNorm() / static_cast<double>(batch.user_repr.size());
  }
  if (records > 0) {
    double kl2 = 0.0;
    const Vec zero = Vec::Zero(p.posterior.mu.rows());
    const Vec one = Vec::Ones(p.posterior.mu.rows());
    for (Eigen::Index i = 0; i < records; ++i) {
      const int u = batch.record_user[static_cast<std::size_t>(i)];
      kl2 += anchor_to_user_prior
                 ? gaussian_kl(p.posterior.mu.col(i), p.posterior.sigma.col(i), p.prior.mu.col(u), p.prior.sigma.col(u))
                 : gaussian_kl(p.posterior.mu.col(i), p.posterior.sigma.col(i), zero, one);
    }
    p.losses.kl2 = kl2 / static_cast<double>(records);
    p.losses.mse1 = (batch.emotions - p.emotion_recon).squaredNorm() / static_cast<double>(batch.emotions.size());
  }
  return p;
}

inline LedLosses led_losses(const InferenceNets& nets, const LedBatch& batch, bool anchor_to_user_prior = true) {
  return led_forward(nets, batch, anchor_to_user_prior).losses;
}

// Reverse pass of the weighted LED terms. `grad_record_latent` (latent x
// records, may be empty) is an upstream gradient arriving at z_uv from the
// ranking path. Parameter gradients accumulate into `grad`; the gradient with
// respect to the user representations accumulates into `grad_user_repr`.
inline void led_backward(const InferenceNets& nets, const LedBatch& batch, const LedPass& p, const LedWeights& w,
                         const Mat& grad_record_latent, InferenceNetsGrad& grad, Mat* grad_user_repr) {
  const Eigen::Index users = batch.user_repr.cols();
  const Eigen::Index records = batch.emotions.cols();
  const Eigen::Index latent = p.prior.mu.rows();

  Mat d_prior_mu = Mat::Zero(latent, users);
  Mat d_prior_sigma = Mat::Zero(latent, users);
  Mat d_post_mu = Mat::Zero(latent, records);
  Mat d_post_sigma = Mat::Zero(latent, records);
  Mat d_user_repr = Mat::Zero(batch.user_repr.rows(), users);

  if (users > 0) {
    // KL1
    const double s1 = w.kl1 / static_cast<double>(users);
    d_prior_mu += s1 * p.prior.mu;
    d_prior_sigma += s1 * (p.prior.sigma - p.prior.sigma.cwiseInverse());
    // MSE2: r_u is both the encoder input and the reconstruction target.
    const Mat diff = p.user_recon - batch.user_repr;
    const Mat d_recon = (2.0 * w.mse2 / static_cast<double>(batch.user_repr.size())) * diff;
    d_user_repr -= d_recon;
    const Mat d_zu = mlp_backward(nets.user_decoder, p.user_decoder_tape, d_recon, &grad.user_decoder);
    d_prior_mu += d_zu;
    d_prior_sigma += d_zu.cwiseProduct(batch.user_noise);
  }
  if (records > 0) {
    // KL2
    const double s2 = w.kl2 / static_cast<double>(records);
    for (Eigen::Index i = 0; i < records; ++i) {
      const int u = batch.record_user[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j < latent; ++j) {
        const double qm = p.posterior.mu(j, i);
        const double qs = p.posterior.sigma(j, i);
        const double pm = p.anchored_to_user_prior ? p.prior.mu(j, u) : 0.0;
        const double ps = p.anchored_to_user_prior ? p.prior.sigma(j, u) : 1.0;
        const double pv = ps * ps;
        const double diff = qm - pm;
        d_post_mu(j, i) += s2 * diff / pv;
        d_post_sigma(j, i) += s2 * (-1.0 / qs + qs / pv);
        if (p.anchored_to_user_prior) {
          d_prior_mu(j, u) -= s2 * diff / pv;
          d_prior_sigma(j, u) += s2 * (1.0 / ps - (qs * qs + diff * diff) / (pv * ps));
        }
      }
    }
    // MSE1
    const Mat d_recon = (2.0 * w.mse1 / static_cast<double>(batch.emotions.size())) *
                        (p.emotion_recon - batch.emotions);
    Mat d_z = mlp_backward(nets.emotion_decoder, p.emotion_decoder_tape, d_recon, &grad.emotion_decoder);
    if (grad_record_latent.size() > 0) d_z += grad_record_latent;
    d_post_mu += d_z;
    d_post_sigma += d_z.cwiseProduct(batch.record_noise);
    encode_backward(nets.posterior, p.posterior_tape, d_post_mu, d_post_sigma, &grad.posterior);
  }
  if (users > 0) {
    d_user_repr += encode_backward(nets.prior, p.prior_tape, d_prior_mu, d_prior_sigma, &grad.prior);
    if (grad_user_repr != nullptr) *grad_user_repr += d_user_repr;
  }
}

// Moves one coordinate of the posterior mean across `grid` and reports the
// mood distribution produced at each point (no latent sampling).
inline std::vector<Vec> sweep_led_dimension(const InferenceNets& nets, const Vec& emotion, int dim,
                                            const std::vector<double>& grid,
                                            const std::function<Vec(const Vec&)>& mood_of_latent) {
  if (dim < 0 || dim >= nets.latent_dim()) {
    throw std::out_of_range("sweep_led_dimension: dimension " + std::to_string(dim) + " out of range");
  }
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw std::invalid_argument("sweep_led_dimension: grid must ascend");
  }
  for (double g : grid) {
    if (!std::isfinite(g)) throw std::invalid_argument("sweep_led_dimension: non-finite grid value");
  }
  Vec mu = infer_posterior(nets, emotion).mu;
  std::vector<Vec> out;
  out.reserve(grid.size());
  for (double g : grid) {
    mu[dim] = g;
    out.push_back(mood_of_latent(mu));
  }
  return out;
}

}  // namespace hdbn
