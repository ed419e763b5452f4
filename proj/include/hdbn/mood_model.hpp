#pragma once

// Bayesian mood-preference network: a diagonal-Gaussian posterior over the
// weights of a 16 -> 64 -> 64 -> 9 network with a softmax output, trained by
// Bayes by Backprop. Global pretraining regularizes towards N(0, 1); group
// fine-tuning starts from the global posterior and regularizes towards it.

#include "hdbn/binary_io.hpp"
#include "hdbn/dataset.hpp"
#include "hdbn/dense.hpp"
#include "hdbn/optim.hpp"

#include <nlohmann/json.hpp>

#include <optional>

namespace hdbn {

inline constexpr int kBnnHidden = 64;
inline constexpr double kBnnInitSigma = 0.05;

struct BnnLayer {
  Mat weight_mu;
  Mat weight_rho;  // sigma = softplus(rho)
  Vec bias_mu;
  Vec bias_rho;
  Activation activation = Activation::kIdentity;

  Eigen::Index in_dim() const { return weight_mu.cols(); }
  Eigen::Index out_dim() const { return weight_mu.rows(); }
};

struct BnnPosterior {
  std::vector<BnnLayer> layers;

  Eigen::Index input_dim() const { return layers.front().in_dim(); }
  Eigen::Index output_dim() const { return layers.back().out_dim(); }

  std::size_t num_weights() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight_mu.size() + l.bias_mu.size());
    return n;
  }

  // Fan-in uniform means, every sigma at `init_sigma`.
  static BnnPosterior create(Rng& rng, Eigen::Index input = kEmotionDim, Eigen::Index hidden = kBnnHidden,
                             Eigen::Index output = kMoodCount, double init_sigma = kBnnInitSigma) {
    const double rho = softplus_inverse(init_sigma);
    BnnPosterior p;
    const Eigen::Index dims[] = {input, hidden, hidden, output};
    for (int i = 0; i < 3; ++i) {
      const auto act = i < 2 ? Activation::kRelu : Activation::kIdentity;
      auto mean = DenseLayer::fan_in_uniform(dims[i], dims[i + 1], act, rng);
      p.layers.push_back({mean.weight, Mat::Constant(dims[i + 1], dims[i], rho), mean.bias,
                          Vec::Constant(dims[i + 1], rho), act});
    }
    return p;
  }

  // Same architecture with every mean at zero.
  static BnnPosterior zeros_like(const BnnPosterior& other, double init_sigma = kBnnInitSigma) {
    BnnPosterior p = other;
    const double rho = softplus_inverse(init_sigma);
    for (auto& l : p.layers) {
      l.weight_mu.setZero();
      l.bias_mu.setZero();
      l.weight_rho.setConstant(rho);
      l.bias_rho.setConstant(rho);
    }
    return p;
  }
};

inline Mat sigma_of(const Mat& rho) { return rho.unaryExpr([](double r) { return softplus(r); }); }
inline Vec sigma_of(const Vec& rho) { return rho.unaryExpr([](double r) { return softplus(r); }); }

// Standard-normal draws with the posterior's shape.
struct BnnNoise {
  std::vector<Mat> weight;
  std::vector<Vec> bias;
};

inline BnnNoise draw_noise(const BnnPosterior& p, Rng& rng) {
  BnnNoise n;
  for (const auto& l : p.layers) {
    n.weight.push_back(rng.normal_mat(l.weight_mu.rows(), l.weight_mu.cols()));
    n.bias.push_back(rng.normal_vec(l.bias_mu.size()));
  }
  return n;
}

inline BnnNoise zero_noise(const BnnPosterior& p) {
  BnnNoise n;
  for (const auto& l : p.layers) {
    n.weight.push_back(Mat::Zero(l.weight_mu.rows(), l.weight_mu.cols()));
    n.bias.push_back(Vec::Zero(l.bias_mu.size()));
  }
  return n;
}

// Concrete network mu + sigma * eps.
inline Mlp realize(const BnnPosterior& p, const BnnNoise& noise) {
  Mlp m;
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    const auto& l = p.layers[i];
    m.layers.push_back({l.weight_mu + sigma_of(l.weight_rho).cwiseProduct(noise.weight[i]),
                        l.bias_mu + sigma_of(l.bias_rho).cwiseProduct(noise.bias[i]), l.activation});
  }
  return m;
}

inline Mlp sample_weights(const BnnPosterior& p, Rng& rng) { return realize(p, draw_noise(p, rng)); }

inline Mlp mean_weights(const BnnPosterior& p) {
  Mlp m;
  for (const auto& l : p.layers) m.layers.push_back({l.weight_mu, l.bias_mu, l.activation});
  return m;
}

// Column-wise mood distributions for a batch of inputs.
inline Mat predict_moods(const Mlp& weights, const Mat& inputs) {
  return softmax_columns(mlp_forward(weights, inputs));
}

inline Vec predict_mood(const BnnPosterior& p, const Vec& s, Rng& rng) {
  if (s.size() != p.input_dim()) throw std::invalid_argument("predict_mood: input dimension mismatch");
  return predict_moods(sample_weights(p, rng), s);
}

inline Vec predict_mood_mean(const BnnPosterior& p, const Vec& s) {
  if (s.size() != p.input_dim()) throw std::invalid_argument("predict_mood: input dimension mismatch");
  return predict_moods(mean_weights(p), s);
}

// KL(q(psi) || N(0, 1)) summed over every weight and bias.
inline double weight_kl_to_std(const BnnPosterior& q) {
  double total = 0.0;
  auto add = [&](const double* mu, const double* rho, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double s = softplus(rho[i]);
      const double var = s * s;
      total += 0.5 * (mu[i] * mu[i] + var - std::log(var) - 1.0);
    }
  };
  for (const auto& l : q.layers) {
    add(l.weight_mu.data(), l.weight_rho.data(), l.weight_mu.size());
    add(l.bias_mu.data(), l.bias_rho.data(), l.bias_mu.size());
  }
  return total;
}

// KL(q(psi_g) || q(psi)) with the anchor's learned sigmas as prior scale.
inline double weight_kl(const BnnPosterior& q, const BnnPosterior& anchor) {
  double total = 0.0;
  auto add = [&](const double* mu, const double* rho, const double* amu, const double* arho, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double qs = softplus(rho[i]);
      const double ps = softplus(arho[i]);
      const double qv = qs * qs;
      const double pv = ps * ps;
      const double diff = mu[i] - amu[i];
      total += 0.5 * (std::log(pv / qv) + qv / pv + diff * diff / pv - 1.0);
    }
  };
  for (std::size_t k = 0; k < q.layers.size(); ++k) {
    const auto& l = q.layers[k];
    const auto& a = anchor.layers[k];
    add(l.weight_mu.data(), l.weight_rho.data(), a.weight_mu.data(), a.weight_rho.data(), l.weight_mu.size());
    add(l.bias_mu.data(), l.bias_rho.data(), a.bias_mu.data(), a.bias_rho.data(), l.bias_mu.size());
  }
  return total;
}

struct BnnGrad {
  std::vector<Mat> weight_mu, weight_rho;
  std::vector<Vec> bias_mu, bias_rho;

  static BnnGrad like(const BnnPosterior& p) {
    BnnGrad g;
    for (const auto& l : p.layers) {
      g.weight_mu.push_back(Mat::Zero(l.weight_mu.rows(), l.weight_mu.cols()));
      g.weight_rho.push_back(Mat::Zero(l.weight_mu.rows(), l.weight_mu.cols()));
      g.bias_mu.push_back(Vec::Zero(l.bias_mu.size()));
      g.bias_rho.push_back(Vec::Zero(l.bias_mu.size()));
    }
    return g;
  }
};

inline ParamView param_view(BnnPosterior& p) {
  ParamView v;
  for (auto& l : p.layers) {
    v.add(l.weight_mu);
    v.add(l.weight_rho);
    v.add(l.bias_mu);
    v.add(l.bias_rho);
  }
  return v;
}

inline ParamView param_view(BnnGrad& g) {
  ParamView v;
  for (std::size_t i = 0; i < g.weight_mu.size(); ++i) {
    v.add(g.weight_mu[i]);
    v.add(g.weight_rho[i]);
    v.add(g.bias_mu[i]);
    v.add(g.bias_rho[i]);
  }
  return v;
}

// Mean over columns of KL(o || l), with l floored before the log.
inline double mean_mood_kl(const Mat& targets, const Mat& predicted) {
  if (targets.cols() == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index c = 0; c < targets.cols(); ++c) total += categorical_kl_floored(targets.col(c), predicted.col(c));
  return total / static_cast<double>(targets.cols());
}

// Gradient of mean_mood_kl with respect to the predicted probabilities.
inline Mat mean_mood_kl_grad(const Mat& targets, const Mat& predicted) {
  Mat g = Mat::Zero(targets.rows(), targets.cols());
  const double scale = 1.0 / static_cast<double>(targets.cols());
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const double o = targets.data()[i];
    const double l = predicted.data()[i];
    if (o > 0.0 && l > kProbabilityFloor) g.data()[i] = -scale * o / l;
  }
  return g;
}

struct MoodData {
  Mat inputs;   // emotion encodings, one column per record
  Mat targets;  // track moods, one column per record

  Eigen::Index size() const { return inputs.cols(); }
};

inline MoodData mood_data(const std::vector<Interaction>& records, const EmotionVocab& vocab,
                          const Mat& moods) {
  MoodData d{Mat(vocab.dim(), static_cast<Eigen::Index>(records.size())),
             Mat(kMoodCount, static_cast<Eigen::Index>(records.size()))};
  for (std::size_t i = 0; i < records.size(); ++i) {
    d.inputs.col(static_cast<Eigen::Index>(i)) = vocab.table.col(records[i].emotion);
    d.targets.col(static_cast<Eigen::Index>(i)) = moods.col(records[i].music);
  }
  return d;
}

inline MoodData select_columns(const MoodData& d, const std::vector<Eigen::Index>& cols) {
  MoodData out{Mat(d.inputs.rows(), static_cast<Eigen::Index>(cols.size())),
               Mat(d.targets.rows(), static_cast<Eigen::Index>(cols.size()))};
  for (std::size_t i = 0; i < cols.size(); ++i) {
    out.inputs.col(static_cast<Eigen::Index>(i)) = d.inputs.col(cols[i]);
    out.targets.col(static_cast<Eigen::Index>(i)) = d.targets.col(cols[i]);
  }
  return out;
}

struct MoodObjective {
  double data = 0.0;       // E[KL(o || l)] over the batch
  double weight_kl = 0.0;  // KL against N(0, 1) or the anchor posterior
  double total = 0.0;      // data + alpha * weight_kl
};

// data-KL + alpha * weight-KL for one noise draw. `anchor` == nullptr uses
// the N(0, 1) prior. Gradients with respect to (mu, rho) are accumulated into
// `grad` when it is non-null.
inline MoodObjective mood_objective(const BnnPosterior& q, const BnnPosterior* anchor, const MoodData& batch,
                                    const BnnNoise& noise, double alpha, BnnGrad* grad) {
  MoodObjective obj;
  const Mlp weights = realize(q, noise);
  MlpTape tape;
  const Mat logits = mlp_forward(weights, batch.inputs, grad != nullptr ? &tape : nullptr);
  const Mat probs = softmax_columns(logits);
  obj.data = mean_mood_kl(batch.targets, probs);
  obj.weight_kl = anchor == nullptr ? weight_kl_to_std(q) : weight_kl(q, *anchor);
  obj.total = obj.data + alpha * obj.weight_kl;
  if (grad == nullptr) return obj;

  const Mat dlogits = softmax_columns_backward(probs, mean_mood_kl_grad(batch.targets, probs));
  MlpGrad dw = MlpGrad::like(weights);
  mlp_backward(weights, tape, dlogits, &dw);

  auto chain = [&](const double* mu, const double* rho, const double* eps, const double* dweight,
                   const double* amu, const double* arho, double* gmu, double* grho, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double sigma = softplus(rho[i]);
      double kl_mu = 0.0;
      double kl_sigma = 0.0;
      if (amu == nullptr) {
        kl_mu = mu[i];
        kl_sigma = sigma - 1.0 / sigma;
      } else {
        const double ps = softplus(arho[i]);
        const double pv = ps * ps;
        kl_mu = (mu[i] - amu[i]) / pv;
        kl_sigma = -1.0 / sigma + sigma / pv;
      }
      gmu[i] += dweight[i] + alpha * kl_mu;
      grho[i] += (dweight[i] * eps[i] + alpha * kl_sigma) * sigmoid(rho[i]);
    }
  };
  for (std::size_t k = 0; k < q.layers.size(); ++k) {
    const auto& l = q.layers[k];
    const BnnLayer* a = anchor != nullptr ? &anchor->layers[k] : nullptr;
    chain(l.weight_mu.data(), l.weight_rho.data(), noise.weight[k].data(), dw.layers[k].weight.data(),
          a ? a->weight_mu.data() : nullptr, a ? a->weight_rho.data() : nullptr, grad->weight_mu[k].data(),
          grad->weight_rho[k].data(), l.weight_mu.size());
    chain(l.bias_mu.data(), l.bias_rho.data(), noise.bias[k].data(), dw.layers[k].bias.data(),
          a ? a->bias_mu.data() : nullptr, a ? a->bias_rho.data() : nullptr, grad->bias_mu[k].data(),
          grad->bias_rho[k].data(), l.bias_mu.size());
  }
  return obj;
}

struct BnnTrainConfig {
  double lr = 0.01;
  int batch = 512;
  int epochs = 50;
  double alpha = 1e-5;
  // false trains a plain network: no weight noise and no weight-KL term.
  bool sample_weights = true;
  OptimizerKind optimizer = OptimizerKind::kSgd;
};

struct BnnEpochLog {
  int epoch = 0;
  double data_kl = 0.0;
  double weight_kl = 0.0;
};

struct BnnTrainResult {
  BnnPosterior posterior;
  std::vector<BnnEpochLog> log;
  bool warning = false;
  std::string message;
};

namespace detail {

inline void train_posterior(BnnPosterior& q, const BnnPosterior* anchor, const MoodData& data,
                            const BnnTrainConfig& cfg, Rng& rng, std::vector<BnnEpochLog>& log) {
  if (cfg.batch < 1 || cfg.epochs < 0) throw std::invalid_argument("BNN training: invalid batch/epochs");
  if (cfg.alpha < 0.0) throw std::invalid_argument("BNN training: alpha must be >= 0");
  Rng shuffle_rng = rng.split("shuffle");
  Rng noise_rng = rng.split("eps-weights");
  const double alpha = cfg.sample_weights ? cfg.alpha : 0.0;
  Optimizer opt(cfg.optimizer, cfg.lr);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.size()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);
  BnnGrad grad = BnnGrad::like(q);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order.begin(), order.end());
    double data_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      const MoodData batch =
          select_columns(data, std::vector<Eigen::Index>(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                         order.begin() + static_cast<std::ptrdiff_t>(stop)));
      const BnnNoise noise = cfg.sample_weights ? draw_noise(q, noise_rng) : zero_noise(q);
      param_view(grad).fill(0.0);
      const auto obj = mood_objective(q, anchor, batch, noise, alpha, &grad);
      if (!std::isfinite(obj.total)) {
        throw NumericalError("BNN training diverged at epoch " + std::to_string(epoch) + ", batch offset " +
                             std::to_string(start) + ": data-KL=" + std::to_string(obj.data) +
                             " weight-KL=" + std::to_string(obj.weight_kl));
      }
      opt.step(param_view(q), param_view(grad));
      data_sum += obj.data * static_cast<double>(stop - start);
    }
    const double wkl = anchor == nullptr ? weight_kl_to_std(q) : weight_kl(q, *anchor);
    log.push_back({epoch, order.empty() ? 0.0 : data_sum / static_cast<double>(order.size()), wkl});
  }
}

}  // namespace detail

// Global posterior on every training record, regularized towards N(0, 1).
inline BnnTrainResult pretrain(const MoodData& data, const BnnTrainConfig& cfg, Rng& rng) {
  if (data.size() == 0) throw std::invalid_argument("pretrain: empty dataset");
  BnnTrainResult res;
  Rng init = rng.split("weights-init");
  res.posterior = BnnPosterior::create(init, data.inputs.rows());
  detail::train_posterior(res.posterior, nullptr, data, cfg, rng, res.log);
  return res;
}

// Group posterior initialized at the global one and anchored to it. The
// global posterior is copied, never modified.
inline BnnTrainResult finetune_group(const BnnPosterior& global, const MoodData& group_data,
                                     const BnnTrainConfig& cfg, Rng& rng) {
  BnnTrainResult res;
  res.posterior = global;
  if (group_data.size() == 0) {
    res.warning = true;
    res.message = "empty group: returning the global posterior";
    return res;
  }
  const BnnPosterior anchor = global;
  detail::train_posterior(res.posterior, &anchor, group_data, cfg, rng, res.log);
  return res;
}

// Data term evaluated with mean weights (deterministic).
inline double evaluate_mood_kl(const BnnPosterior& q, const MoodData& data) {
  if (data.size() == 0) return 0.0;
  return mean_mood_kl(data.targets, predict_moods(mean_weights(q), data.inputs));
}

struct GroupBnnSet {
  BnnPosterior global;
  std::vector<BnnPosterior> groups;

  const BnnPosterior& for_group(int g) const {
    if (g < 0 || g >= static_cast<int>(groups.size())) throw std::out_of_range("no BNN for group " + std::to_string(g));
    return groups[static_cast<std::size_t>(g)];
  }
};

inline void write_posterior(BinaryWriter& w, const BnnPosterior& p) {
  w.u64(p.layers.size());
  for (const auto& l : p.layers) {
    w.u32(static_cast<std::uint32_t>(l.activation));
    w.mat(l.weight_mu);
    w.mat(l.weight_rho);
    w.vec(l.bias_mu);
    w.vec(l.bias_rho);
  }
}

inline BnnPosterior read_posterior(BinaryReader& r) {
  BnnPosterior p;
  const auto n = r.u64();
  if (n == 0 || n > 64) throw FormatError("implausible BNN layer count");
  for (std::uint64_t i = 0; i < n; ++i) {
    BnnLayer l;
    const auto act = r.u32();
    if (act > 2) throw FormatError("unknown activation tag");
    l.activation = static_cast<Activation>(act);
    l.weight_mu = r.mat();
    l.weight_rho = r.mat();
    l.bias_mu = r.vec();
    l.bias_rho = r.vec();
    if (l.weight_rho.rows() != l.weight_mu.rows() || l.weight_rho.cols() != l.weight_mu.cols() ||
        l.bias_mu.size() != l.weight_mu.rows() || l.bias_rho.size() != l.bias_mu.size()) {
      throw FormatError("inconsistent BNN layer shapes");
    }
    if (!p.layers.empty() && p.layers.back().out_dim() != l.in_dim()) throw FormatError("BNN layers do not chain");
    p.layers.push_back(std::move(l));
  }
  return p;
}

inline constexpr std::uint32_t kPosteriorFormatVersion = 1;

// Standalone posterior checkpoint: architecture, arrays, training config, seed.
inline void save_posterior_set(const GroupBnnSet& set, const BnnTrainConfig& cfg, std::uint64_t seed,
                               const std::string& path) {
  BinaryWriter w;
  w.magic("HDBNPOST");
  w.u32(kPosteriorFormatVersion);
  w.f64(cfg.lr);
  w.i64(cfg.batch);
  w.i64(cfg.epochs);
  w.f64(cfg.alpha);
  w.boolean(cfg.sample_weights);
  w.u32(static_cast<std::uint32_t>(cfg.optimizer));
  w.u64(seed);
  write_posterior(w, set.global);
  w.u64(set.groups.size());
  for (const auto& g : set.groups) write_posterior(w, g);
  w.save(path);
}

struct PosteriorCheckpoint {
  GroupBnnSet set;
  BnnTrainConfig config;
  std::uint64_t seed = 0;
};

inline PosteriorCheckpoint load_posterior_set(const std::string& path) {
  auto r = BinaryReader::from_file(path);
  r.expect_magic("HDBNPOST");
  const auto version = r.u32();
  if (version != kPosteriorFormatVersion) {
    throw FormatError("posterior checkpoint version mismatch: file has " + std::to_string(version) +
                      ", expected " + std::to_string(kPosteriorFormatVersion));
  }
  PosteriorCheckpoint c;
  c.config.lr = r.f64();
  c.config.batch = static_cast<int>(r.i64());
  c.config.epochs = static_cast<int>(r.i64());
  c.config.alpha = r.f64();
  c.config.sample_weights = r.boolean();
  c.config.optimizer = static_cast<OptimizerKind>(r.u32());
  c.seed = r.u64();
  c.set.global = read_posterior(r);
  c.set.groups.resize(r.u64());
  for (auto& g : c.set.groups) g = read_posterior(r);
  r.expect_end();
  return c;
}

inline nlohmann::json to_json(const BnnPosterior& p) {
  auto flat = [](const auto& m) { return std::vector<double>(m.data(), m.data() + m.size()); };
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : p.layers) {
    layers.push_back({{"in", l.in_dim()},
                      {"out", l.out_dim()},
                      {"activation", activation_name(l.activation)},
                      {"weight_mu", flat(l.weight_mu)},
                      {"weight_sigma", flat(sigma_of(l.weight_rho))},
                      {"bias_mu", flat(l.bias_mu)},
                      {"bias_sigma", flat(sigma_of(l.bias_rho))}});
  }
  return {{"layers", layers}, {"output", "softmax"}, {"layout", "column-major"}};
}

}  // namespace hdbn
