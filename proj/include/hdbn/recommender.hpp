#pragma once

// End-to-end model: embeddings, matching score, pairwise ranking loss, the
// combined second-phase objective, EM-style training, ranking and
// checkpoints.

#include "hdbn/emotion_led.hpp"
#include "hdbn/grouping.hpp"
#include "hdbn/mood_model.hpp"
#include "hdbn/optim.hpp"
#include "hdbn/ranking.hpp"

#include <map>
#include <memory>
#include <optional>

namespace hdbn {

// true = component enabled (the full model has all four on).
struct Ablation {
  bool emotion_across = true;     // posterior LED anchored to the user prior
  bool emotion_within = true;     // latent emotion sampled from the posterior LED
  bool preference_across = true;  // group-specific mood model
  bool preference_within = true;  // sampled mood-model weights

  bool operator==(const Ablation&) const = default;
};

struct AblationVariant {
  std::string name;
  Ablation flags;
};

inline std::vector<AblationVariant> ablation_variants() {
  std::vector<AblationVariant> v{{"HDBN", {}}, {"w/o EHAU", {}}, {"w/o EHWU", {}}, {"w/o PHAU", {}}, {"w/o PHWU", {}}};
  v[1].flags.emotion_across = false;
  v[2].flags.emotion_within = false;
  v[3].flags.preference_across = false;
  v[4].flags.preference_within = false;
  return v;
}

struct HyperParams {
  int latent_dim = kLatentDim;
  int embedding_dim = kEmbeddingDim;
  int groups = 50;
  int neg_k = 10;
  int batch = 512;
  double lr = 0.05;
  int epochs = 30;
  int patience = 5;  // 0 disables early stopping
  double lambda1 = 0.01;  // KL1
  double lambda2 = 0.05;  // KL2
  double lambda3 = 1e-6;  // MSE2 (user representation)
  double lambda4 = 1e-4;  // MSE1 (emotion)
  double lambda5 = 0.0;   // mood-model terms; must stay 0 (frozen in this phase)
  double lambda6 = 0.0;
  double init_scale = 0.05;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  BnnTrainConfig pretrain{0.01, 1024, 50, 1e-5, true, OptimizerKind::kSgd};
  BnnTrainConfig finetune{0.001, 64, 50, 1e-5, true, OptimizerKind::kSgd};
  Ablation ablation;

  static HyperParams large() { return {}; }

  static HyperParams small() {
    HyperParams h;
    h.groups = 10;
    h.neg_k = 7;
    h.lambda1 = 0.005;
    h.lambda2 = 0.005;
    h.lambda3 = 5e-6;
    h.lambda4 = 5e-5;
    h.pretrain.batch = 512;
    h.pretrain.alpha = 1e-6;
    h.finetune.alpha = 1e-6;
    return h;
  }

  LedWeights led_weights() const { return {lambda1, lambda2, lambda3, lambda4}; }

  void validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("hyperparameters: " + m); };
    if (latent_dim < 1 || embedding_dim < 1) fail("dimensions must be positive");
    if (groups < 1) fail("G must be >= 1");
    if (neg_k < 1) fail("neg_k must be >= 1");
    if (batch < 1) fail("batch must be >= 1");
    if (!(lr > 0.0)) fail("lr must be positive");
    if (epochs < 0 || patience < 0) fail("epochs/patience must be >= 0");
    for (double l : {lambda1, lambda2, lambda3, lambda4}) {
      if (!(l >= 0.0) || !std::isfinite(l)) fail("lambda1..lambda4 must be finite and >= 0");
    }
    if (lambda5 != 0.0 || lambda6 != 0.0) fail("lambda5 and lambda6 must be 0: mood models are frozen in phase II");
    if (!(init_scale > 0.0)) fail("init_scale must be positive");
    for (const auto* c : {&pretrain, &finetune}) {
      if (!(c->lr > 0.0) || c->batch < 1 || c->epochs < 0 || c->alpha < 0.0) fail("invalid mood-model training config");
    }
  }
};

struct ModelState {
  HyperParams hp;
  std::uint64_t seed = 0;
  EmotionVocab vocab;
  Mat moods;  // 9 x V track mood distributions
  std::vector<std::vector<int>> train_listened;
  GroupAssignment groups;
  InferenceNets nets;
  GroupBnnSet bnns;
  Mat user_emb;   // d x U
  Mat track_emb;  // d x V
  // Off: the mood term of the matching score is dropped (pure embedding model).
  bool use_mood_channel = true;

  int num_users() const { return static_cast<int>(user_emb.cols()); }
  int num_tracks() const { return static_cast<int>(track_emb.cols()); }
  int num_groups() const { return static_cast<int>(bnns.groups.size()); }

  // Mood-model slot for a user: its group, or num_groups() for the global one.
  int slot_of(int user) const { return hp.ablation.preference_across ? groups.group_of(user) : num_groups(); }
  const BnnPosterior& bnn(int slot) const { return slot == num_groups() ? bnns.global : bnns.for_group(slot); }

  void check_user(int u) const {
    if (u < 0 || u >= num_users()) throw std::out_of_range("unknown user index " + std::to_string(u));
  }
  void check_emotion(int e) const {
    if (e < 0 || e >= vocab.size()) throw std::out_of_range("unknown emotion index " + std::to_string(e));
  }
  void check_track(int v) const {
    if (v < 0 || v >= num_tracks()) throw std::out_of_range("unknown music index " + std::to_string(v));
  }
};

inline Mat uniform_matrix(Eigen::Index rows, Eigen::Index cols, double scale, Rng& rng) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
  return m;
}

// Users then tracks, both drawn from the same embedding stream.
inline std::pair<Mat, Mat> init_embeddings(std::uint64_t seed, int dim, int users, int tracks, double scale) {
  Rng rng = Rng(seed).split("embed-init");
  Mat u = uniform_matrix(dim, users, scale, rng);
  Mat v = uniform_matrix(dim, tracks, scale, rng);
  return {std::move(u), std::move(v)};
}

inline ModelState init_model(const HyperParams& hp, std::uint64_t seed, EmotionVocab vocab, Mat moods,
                             std::vector<std::vector<int>> train_listened, GroupAssignment groups,
                             GroupBnnSet bnns) {
  hp.validate();
  const int users = static_cast<int>(train_listened.size());
  if (static_cast<int>(groups.user_group.size()) != users) {
    throw std::invalid_argument("init_model: group assignment does not cover every user");
  }
  if (static_cast<int>(bnns.groups.size()) != groups.num_groups()) {
    throw std::invalid_argument("init_model: " + std::to_string(groups.num_groups()) + " groups but " +
                                std::to_string(bnns.groups.size()) + " group mood models");
  }
  if (moods.rows() != kMoodCount) throw std::invalid_argument("init_model: mood matrix must have 9 rows");
  if (vocab.dim() != bnns.global.input_dim()) throw std::invalid_argument("init_model: emotion/mood-model dim mismatch");
  ModelState m;
  m.hp = hp;
  m.seed = seed;
  m.vocab = std::move(vocab);
  m.moods = std::move(moods);
  m.train_listened = std::move(train_listened);
  m.groups = std::move(groups);
  m.bnns = std::move(bnns);
  Rng net_rng = Rng(seed).split("net-init");
  m.nets = InferenceNets::create(net_rng, hp.embedding_dim, m.vocab.dim(), hp.latent_dim, kLedHidden);
  auto [u, v] = init_embeddings(seed, hp.embedding_dim, users, static_cast<int>(m.moods.cols()), hp.init_scale);
  m.user_emb = std::move(u);
  m.track_emb = std::move(v);
  return m;
}

// m = [l, r_u] . [o_v, r_v]
inline double match_score(const Vec& mood, const Vec& user, const Vec& track_mood, const Vec& track) {
  if (mood.size() != track_mood.size() || user.size() != track.size()) {
    throw std::invalid_argument("match_score: dimension mismatch");
  }
  return mood.dot(track_mood) + user.dot(track);
}

// Mean of -log sigmoid(m_pos - m_neg).
inline double bpr_loss(const std::vector<double>& pos, const std::vector<double>& neg) {
  if (pos.size() != neg.size()) throw std::invalid_argument("bpr_loss: size mismatch");
  if (pos.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < pos.size(); ++i) total += softplus(-(pos[i] - neg[i]));
  return total / static_cast<double>(pos.size());
}

struct PairRecord {
  int user = 0;
  int emotion = 0;
  int positive = 0;
  int negative = 0;
};

// Frozen randomness for one objective evaluation.
struct L3Noise {
  Mat user_noise;    // latent x unique users (ascending id)
  Mat record_noise;  // latent x pairs
  std::map<int, BnnNoise> weights;  // per mood-model slot present in the batch
};

struct L3Terms {
  double rec = 0.0;
  double kl1 = 0.0;
  double kl2 = 0.0;
  double mse1 = 0.0;
  double mse2 = 0.0;
  double total = 0.0;
};

struct L3Grad {
  InferenceNetsGrad nets;
  Mat user_emb;
  Mat track_emb;

  static L3Grad like(const ModelState& m) {
    return {InferenceNetsGrad::like(m.nets), Mat::Zero(m.user_emb.rows(), m.user_emb.cols()),
            Mat::Zero(m.track_emb.rows(), m.track_emb.cols())};
  }
};

inline ParamView param_view(L3Grad& g) {
  ParamView v = param_view(g.nets);
  v.add(g.user_emb);
  v.add(g.track_emb);
  return v;
}

// Trainable second-phase parameters, same layout as param_view(L3Grad&).
inline ParamView trainable_view(ModelState& m) {
  ParamView v = param_view(m.nets);
  v.add(m.user_emb);
  v.add(m.track_emb);
  return v;
}

inline std::vector<int> unique_users(std::span<const PairRecord> pairs) {
  std::vector<int> users;
  for (const auto& p : pairs) users.push_back(p.user);
  std::sort(users.begin(), users.end());
  users.erase(std::unique(users.begin(), users.end()), users.end());
  return users;
}

inline std::vector<int> slots_in(const ModelState& m, std::span<const PairRecord> pairs) {
  std::vector<int> slots;
  for (const auto& p : pairs) slots.push_back(m.slot_of(p.user));
  std::sort(slots.begin(), slots.end());
  slots.erase(std::unique(slots.begin(), slots.end()), slots.end());
  return slots;
}

inline L3Noise draw_l3_noise(const ModelState& m, std::span<const PairRecord> pairs, Rng& latent_rng,
                             Rng& weight_rng) {
  L3Noise n;
  const auto users = unique_users(pairs);
  const auto latent = m.nets.latent_dim();
  n.user_noise = latent_rng.normal_mat(latent, static_cast<Eigen::Index>(users.size()));
  n.record_noise = m.hp.ablation.emotion_within ? latent_rng.normal_mat(latent, static_cast<Eigen::Index>(pairs.size()))
                                                : Mat::Zero(latent, static_cast<Eigen::Index>(pairs.size()));
  if (m.hp.ablation.preference_within) {
    for (int s : slots_in(m, pairs)) n.weights.emplace(s, draw_noise(m.bnn(s), weight_rng));
  }
  return n;
}

inline Mlp slot_weights(const ModelState& m, int slot, const L3Noise& noise) {
  if (!m.hp.ablation.preference_within) return mean_weights(m.bnn(slot));
  const auto it = noise.weights.find(slot);
  if (it == noise.weights.end()) throw std::logic_error("missing weight noise for mood-model slot");
  return realize(m.bnn(slot), it->second);
}

// L3 = L_rec + l1*KL1 + l2*KL2 + l3*MSE2 + l4*MSE1 on a batch of pairs with
// frozen noise. Mood models are constant here; gradients flow through them
// into the latent emotion.
inline L3Terms compute_l3(const ModelState& m, std::span<const PairRecord> pairs, const L3Noise& noise,
                          L3Grad* grad) {
  L3Terms t;
  const auto B = static_cast<Eigen::Index>(pairs.size());
  if (B == 0) return t;
  const auto users = unique_users(pairs);
  auto col_of = [&](int u) {
    return static_cast<int>(std::lower_bound(users.begin(), users.end(), u) - users.begin());
  };

  LedBatch lb;
  lb.user_repr.resize(m.user_emb.rows(), static_cast<Eigen::Index>(users.size()));
  for (std::size_t i = 0; i < users.size(); ++i) lb.user_repr.col(static_cast<Eigen::Index>(i)) = m.user_emb.col(users[i]);
  lb.emotions.resize(m.vocab.dim(), B);
  for (Eigen::Index i = 0; i < B; ++i) {
    const auto& p = pairs[static_cast<std::size_t>(i)];
    lb.emotions.col(i) = m.vocab.table.col(p.emotion);
    lb.record_user.push_back(col_of(p.user));
  }
  lb.user_noise = noise.user_noise;
  lb.record_noise = noise.record_noise;
  const LedPass pass = led_forward(m.nets, lb, m.hp.ablation.emotion_across);
  const Mat& inputs = m.hp.ablation.emotion_within ? pass.record_latent : lb.emotions;

  // Mood distributions, one slot at a time.
  Mat mood = Mat::Zero(kMoodCount, B);
  struct SlotPass {
    std::vector<Eigen::Index> cols;
    Mlp weights;
    MlpTape tape;
    Mat probs;
  };
  std::vector<SlotPass> slot_passes;
  if (m.use_mood_channel) {
    for (int s : slots_in(m, pairs)) {
      SlotPass sp;
      for (Eigen::Index i = 0; i < B; ++i) {
        if (m.slot_of(pairs[static_cast<std::size_t>(i)].user) == s) sp.cols.push_back(i);
      }
      Mat x(inputs.rows(), static_cast<Eigen::Index>(sp.cols.size()));
      for (std::size_t k = 0; k < sp.cols.size(); ++k) x.col(static_cast<Eigen::Index>(k)) = inputs.col(sp.cols[k]);
      sp.weights = slot_weights(m, s, noise);
      sp.probs = softmax_columns(mlp_forward(sp.weights, x, &sp.tape));
      for (std::size_t k = 0; k < sp.cols.size(); ++k) mood.col(sp.cols[k]) = sp.probs.col(static_cast<Eigen::Index>(k));
      slot_passes.push_back(std::move(sp));
    }
  }

  std::vector<double> diff(static_cast<std::size_t>(B));
  double rec = 0.0;
  for (Eigen::Index i = 0; i < B; ++i) {
    const auto& p = pairs[static_cast<std::size_t>(i)];
    const double mp = mood.col(i).dot(m.moods.col(p.positive)) + m.user_emb.col(p.user).dot(m.track_emb.col(p.positive));
    const double mn = mood.col(i).dot(m.moods.col(p.negative)) + m.user_emb.col(p.user).dot(m.track_emb.col(p.negative));
    diff[static_cast<std::size_t>(i)] = mp - mn;
    rec += softplus(-(mp - mn));
  }
  t.rec = rec / static_cast<double>(B);
  t.kl1 = pass.losses.kl1;
  t.kl2 = pass.losses.kl2;
  t.mse1 = pass.losses.mse1;
  t.mse2 = pass.losses.mse2;
  const auto w = m.hp.led_weights();
  t.total = t.rec + w.kl1 * t.kl1 + w.kl2 * t.kl2 + w.mse2 * t.mse2 + w.mse1 * t.mse1;
  if (grad == nullptr) return t;

  Mat d_mood = Mat::Zero(kMoodCount, B);
  for (Eigen::Index i = 0; i < B; ++i) {
    const auto& p = pairs[static_cast<std::size_t>(i)];
    const double d = -sigmoid(-diff[static_cast<std::size_t>(i)]) / static_cast<double>(B);
    d_mood.col(i) = d * (m.moods.col(p.positive) - m.moods.col(p.negative));
    grad->user_emb.col(p.user) += d * (m.track_emb.col(p.positive) - m.track_emb.col(p.negative));
    grad->track_emb.col(p.positive) += d * m.user_emb.col(p.user);
    grad->track_emb.col(p.negative) -= d * m.user_emb.col(p.user);
  }
  Mat d_latent;
  if (m.hp.ablation.emotion_within && m.use_mood_channel) {
    d_latent = Mat::Zero(inputs.rows(), B);
    for (const auto& sp : slot_passes) {
      Mat g(kMoodCount, static_cast<Eigen::Index>(sp.cols.size()));
      for (std::size_t k = 0; k < sp.cols.size(); ++k) g.col(static_cast<Eigen::Index>(k)) = d_mood.col(sp.cols[k]);
      const Mat dx = mlp_backward(sp.weights, sp.tape, softmax_columns_backward(sp.probs, g), nullptr);
      for (std::size_t k = 0; k < sp.cols.size(); ++k) d_latent.col(sp.cols[k]) = dx.col(static_cast<Eigen::Index>(k));
    }
  }
  Mat d_user = Mat::Zero(lb.user_repr.rows(), lb.user_repr.cols());
  led_backward(m.nets, lb, pass, w, d_latent, grad->nets, &d_user);
  for (std::size_t i = 0; i < users.size(); ++i) grad->user_emb.col(users[i]) += d_user.col(static_cast<Eigen::Index>(i));
  return t;
}

// ----- inference -----

enum class RankMode { kDeterministic, kStochastic };

struct ForwardTrace {
  int slot = 0;
  Vec emotion;
  LatentGaussian prior;
  LatentGaussian posterior;
  Vec latent;  // BNN input
  Vec mood;    // l
  double score = 0.0;
};

// Mood distribution l for a (user, tag) query. Deterministic mode uses the
// posterior mean and mean weights.
inline Vec query_mood(const ModelState& m, int u, int e, RankMode mode, Rng* rng, ForwardTrace* trace = nullptr) {
  m.check_user(u);
  m.check_emotion(e);
  const Vec s = m.vocab.table.col(e);
  const auto post = infer_posterior(m.nets, s);
  Vec input = s;
  const bool stochastic = mode == RankMode::kStochastic;
  if (stochastic && rng == nullptr) throw std::invalid_argument("stochastic mode requires an rng");
  if (m.hp.ablation.emotion_within) input = stochastic ? reparam_sample(post.mu, post.sigma, *rng) : post.mu;
  const int slot = m.slot_of(u);
  const BnnPosterior& q = m.bnn(slot);
  const Mlp weights = stochastic && m.hp.ablation.preference_within ? sample_weights(q, *rng) : mean_weights(q);
  Vec mood = m.use_mood_channel ? Vec(predict_moods(weights, input)) : Vec::Zero(kMoodCount);
  if (trace != nullptr) {
    trace->slot = slot;
    trace->emotion = s;
    trace->prior = infer_prior(m.nets, m.user_emb.col(u));
    trace->posterior = post;
    trace->latent = input;
    trace->mood = mood;
  }
  return mood;
}

inline ForwardTrace forward(const ModelState& m, int u, int e, int v, Rng& rng, RankMode mode = RankMode::kStochastic) {
  m.check_track(v);
  ForwardTrace t;
  query_mood(m, u, e, mode, &rng, &t);
  t.score = t.mood.dot(m.moods.col(v)) + m.user_emb.col(u).dot(m.track_emb.col(v));
  return t;
}

// Scores for every track.
inline Vec score_all(const ModelState& m, int u, int e, RankMode mode = RankMode::kDeterministic, Rng* rng = nullptr) {
  const Vec mood = query_mood(m, u, e, mode, rng);
  Vec scores = m.moods.transpose() * mood;
  scores.noalias() += m.track_emb.transpose() * m.user_emb.col(u);
  return scores;
}

inline RankedList rank_top_T(const ModelState& m, int u, int e, int T, RankMode mode = RankMode::kDeterministic,
                             Rng* rng = nullptr) {
  return top_T(score_all(m, u, e, mode, rng), m.train_listened[static_cast<std::size_t>(u)], T);
}

// Share of records whose track ranks within the top T (deterministic mode).
template <class ScoreFn>
double hit_rate(const std::vector<Interaction>& records, const std::vector<std::vector<int>>& listened, int T,
                ScoreFn&& score) {
  if (records.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& r : records) {
    const Vec s = score(r.user, r.emotion);
    if (rank_of(s, listened[static_cast<std::size_t>(r.user)], r.music) <= static_cast<std::size_t>(T)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

inline std::vector<Vec> sweep_led(const ModelState& m, int u, int e, int dim, const std::vector<double>& grid) {
  m.check_user(u);
  m.check_emotion(e);
  const Mlp weights = mean_weights(m.bnn(m.slot_of(u)));
  return sweep_led_dimension(m.nets, m.vocab.table.col(e), dim, grid,
                             [&](const Vec& z) { return Vec(predict_moods(weights, z)); });
}

inline void write_sweep_csv(const std::vector<double>& grid, const std::vector<Vec>& curve, std::ostream& out) {
  out.precision(17);
  out << "grid_value";
  for (int k = 1; k <= kMoodCount; ++k) out << ",m" << k;
  out << '\n';
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out << grid[i];
    for (Eigen::Index k = 0; k < curve[i].size(); ++k) out << ',' << curve[i][k];
    out << '\n';
  }
}

// ----- training -----

// One epoch of (user, tag, positive, negative) tuples: k fresh negatives per
// training record, then a shuffle.
inline std::vector<PairRecord> build_epoch_pairs(const std::vector<Interaction>& train, const NegativeSampler& sampler,
                                                 int k, Rng& neg_rng, Rng& shuffle_rng) {
  std::vector<PairRecord> pairs;
  pairs.reserve(train.size() * static_cast<std::size_t>(k));
  for (const auto& r : train) {
    for (int v : sampler.sample(r.user, r.music, k, neg_rng).tracks) pairs.push_back({r.user, r.emotion, r.music, v});
  }
  shuffle_rng.shuffle(pairs.begin(), pairs.end());
  return pairs;
}

struct TrainLogRow {
  int epoch = 0;
  double rec = 0.0;
  double kl1 = 0.0;
  double kl2 = 0.0;
  double mse1 = 0.0;
  double mse2 = 0.0;
  std::optional<double> val_hr10;
};

inline void write_train_log_csv(const std::vector<TrainLogRow>& log, std::ostream& out) {
  out.precision(17);
  out << "epoch,L_rec,L_KL1,L_KL2,L_MSE1,L_MSE2,val_HR@10\n";
  for (const auto& r : log) {
    out << r.epoch << ',' << r.rec << ',' << r.kl1 << ',' << r.kl2 << ',' << r.mse1 << ',' << r.mse2 << ',';
    if (r.val_hr10) out << *r.val_hr10;
    out << '\n';
  }
}

struct TrainResult {
  ModelState model;
  std::vector<TrainLogRow> log;
  int best_epoch = -1;
  bool stopped_early = false;
};

// Non-finite objective. Carries the state from the end of the last finished
// epoch.
class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(const std::string& what, std::shared_ptr<const ModelState> last_good)
      : NumericalError(what), last_good_(std::move(last_good)) {}
  const ModelState& last_good() const { return *last_good_; }

 private:
  std::shared_ptr<const ModelState> last_good_;
};

inline TrainResult train(ModelState model, const SplitDataset& split) {
  model.hp.validate();
  const auto& hp = model.hp;
  if (split.train.empty()) throw std::invalid_argument("train: empty training split");
  const Rng root(model.seed);
  Rng neg_rng = root.split("negative-sampling");
  Rng shuffle_rng = root.split("shuffle");
  Rng latent_rng = root.split("eps-latent");
  Rng weight_rng = root.split("eps-weights");
  const NegativeSampler sampler(model.train_listened, model.num_tracks());
  Optimizer opt(hp.optimizer, hp.lr);
  L3Grad grad = L3Grad::like(model);

  TrainResult res;
  auto last_good = std::make_shared<const ModelState>(model);
  double best_hr = -1.0;
  int since_best = 0;
  std::shared_ptr<const ModelState> best = last_good;
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    const auto pairs = build_epoch_pairs(split.train, sampler, hp.neg_k, neg_rng, shuffle_rng);
    TrainLogRow row;
    row.epoch = epoch;
    for (std::size_t start = 0; start < pairs.size(); start += static_cast<std::size_t>(hp.batch)) {
      const std::size_t stop = std::min(pairs.size(), start + static_cast<std::size_t>(hp.batch));
      const std::span<const PairRecord> batch(pairs.data() + start, stop - start);
      // E-step: latent draws with the generative parts held fixed.
      const L3Noise noise = draw_l3_noise(model, batch, latent_rng, weight_rng);
      // M-step: one gradient step on L3.
      param_view(grad).fill(0.0);
      const auto t = compute_l3(model, batch, noise, &grad);
      if (!std::isfinite(t.total)) {
        throw TrainingDiverged("phase II objective is non-finite at epoch " + std::to_string(epoch) +
                                   ", pair offset " + std::to_string(start),
                               last_good);
      }
      opt.step(trainable_view(model), param_view(grad));
      const double w = static_cast<double>(stop - start) / static_cast<double>(pairs.size());
      row.rec += w * t.rec;
      row.kl1 += w * t.kl1;
      row.kl2 += w * t.kl2;
      row.mse1 += w * t.mse1;
      row.mse2 += w * t.mse2;
    }
    if (!trainable_view(model).all_finite()) {
      throw TrainingDiverged("phase II parameters became non-finite at epoch " + std::to_string(epoch), last_good);
    }
    last_good = std::make_shared<const ModelState>(model);
    if (!split.validation.empty()) {
      row.val_hr10 = hit_rate(split.validation, model.train_listened, 10,
                              [&](int u, int e) { return score_all(model, u, e); });
    }
    res.log.push_back(row);
    if (!row.val_hr10 || hp.patience == 0) {
      best = last_good;
      res.best_epoch = epoch;
      continue;
    }
    if (*row.val_hr10 > best_hr) {
      best_hr = *row.val_hr10;
      best = last_good;
      res.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= hp.patience) {
      res.stopped_early = true;
      break;
    }
  }
  res.model = *best;
  return res;
}

// ----- checkpoints -----

inline constexpr std::uint32_t kModelFormatVersion = 1;

namespace detail {

inline void write_bnn_config(BinaryWriter& w, const BnnTrainConfig& c) {
  w.f64(c.lr);
  w.i64(c.batch);
  w.i64(c.epochs);
  w.f64(c.alpha);
  w.boolean(c.sample_weights);
  w.u32(static_cast<std::uint32_t>(c.optimizer));
}

inline BnnTrainConfig read_bnn_config(BinaryReader& r) {
  BnnTrainConfig c;
  c.lr = r.f64();
  c.batch = static_cast<int>(r.i64());
  c.epochs = static_cast<int>(r.i64());
  c.alpha = r.f64();
  c.sample_weights = r.boolean();
  c.optimizer = static_cast<OptimizerKind>(r.u32());
  return c;
}

inline void write_hp(BinaryWriter& w, const HyperParams& h) {
  for (int x : {h.latent_dim, h.embedding_dim, h.groups, h.neg_k, h.batch, h.epochs, h.patience}) w.i64(x);
  for (double x : {h.lr, h.lambda1, h.lambda2, h.lambda3, h.lambda4, h.lambda5, h.lambda6, h.init_scale}) w.f64(x);
  w.u32(static_cast<std::uint32_t>(h.optimizer));
  write_bnn_config(w, h.pretrain);
  write_bnn_config(w, h.finetune);
  for (bool b : {h.ablation.emotion_across, h.ablation.emotion_within, h.ablation.preference_across,
                 h.ablation.preference_within}) {
    w.boolean(b);
  }
}

inline HyperParams read_hp(BinaryReader& r) {
  HyperParams h;
  for (int* x : {&h.latent_dim, &h.embedding_dim, &h.groups, &h.neg_k, &h.batch, &h.epochs, &h.patience}) {
    *x = static_cast<int>(r.i64());
  }
  for (double* x : {&h.lr, &h.lambda1, &h.lambda2, &h.lambda3, &h.lambda4, &h.lambda5, &h.lambda6, &h.init_scale}) {
    *x = r.f64();
  }
  h.optimizer = static_cast<OptimizerKind>(r.u32());
  h.pretrain = read_bnn_config(r);
  h.finetune = read_bnn_config(r);
  for (bool* b : {&h.ablation.emotion_across, &h.ablation.emotion_within, &h.ablation.preference_across,
                  &h.ablation.preference_within}) {
    *b = r.boolean();
  }
  return h;
}

inline void write_layer(BinaryWriter& w, const DenseLayer& l) {
  w.u32(static_cast<std::uint32_t>(l.activation));
  w.mat(l.weight);
  w.vec(l.bias);
}

inline DenseLayer read_layer(BinaryReader& r) {
  DenseLayer l;
  const auto act = r.u32();
  if (act > 2) throw FormatError("unknown activation tag");
  l.activation = static_cast<Activation>(act);
  l.weight = r.mat();
  l.bias = r.vec();
  if (l.bias.size() != l.weight.rows()) throw FormatError("inconsistent layer shapes");
  return l;
}

inline void write_mlp(BinaryWriter& w, const Mlp& m) {
  w.u64(m.layers.size());
  for (const auto& l : m.layers) write_layer(w, l);
}

inline Mlp read_mlp(BinaryReader& r) {
  Mlp m;
  const auto n = r.u64();
  if (n == 0 || n > 64) throw FormatError("implausible layer count");
  for (std::uint64_t i = 0; i < n; ++i) m.layers.push_back(read_layer(r));
  return m;
}

inline void write_encoder(BinaryWriter& w, const GaussianEncoder& e) {
  write_layer(w, e.trunk);
  write_layer(w, e.mean);
  write_layer(w, e.scale);
}

inline GaussianEncoder read_encoder(BinaryReader& r) {
  GaussianEncoder e;
  e.trunk = read_layer(r);
  e.mean = read_layer(r);
  e.scale = read_layer(r);
  return e;
}

}  // namespace detail

inline std::vector<char> serialize_model(const ModelState& m) {
  BinaryWriter w;
  w.magic("HDBNMODL");
  w.u32(kModelFormatVersion);
  detail::write_hp(w, m.hp);
  w.u64(m.seed);
  w.boolean(m.use_mood_channel);
  w.u64(m.vocab.tags.size());
  for (const auto& t : m.vocab.tags) w.str(t);
  w.mat(m.vocab.table);
  w.mat(m.moods);
  w.u64(m.train_listened.size());
  for (const auto& l : m.train_listened) w.ints(l);
  w.ints(m.groups.user_group);
  w.mat(m.groups.centroids);
  w.f64(m.groups.inertia);
  detail::write_encoder(w, m.nets.prior);
  detail::write_encoder(w, m.nets.posterior);
  detail::write_mlp(w, m.nets.user_decoder);
  detail::write_mlp(w, m.nets.emotion_decoder);
  write_posterior(w, m.bnns.global);
  w.u64(m.bnns.groups.size());
  for (const auto& g : m.bnns.groups) write_posterior(w, g);
  w.mat(m.user_emb);
  w.mat(m.track_emb);
  return w.buffer();
}

inline void save_model(const ModelState& m, const std::string& path) {
  const auto bytes = serialize_model(m);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline ModelState deserialize_model(BinaryReader& r) {
  r.expect_magic("HDBNMODL");
  const auto version = r.u32();
  if (version != kModelFormatVersion) {
    throw FormatError("model checkpoint version mismatch: file has " + std::to_string(version) + ", expected " +
                      std::to_string(kModelFormatVersion));
  }
  ModelState m;
  m.hp = detail::read_hp(r);
  m.seed = r.u64();
  m.use_mood_channel = r.boolean();
  const auto ntags = r.u64();
  if (ntags > (1u << 24)) throw FormatError("implausible tag count");
  for (std::uint64_t i = 0; i < ntags; ++i) m.vocab.tags.push_back(r.str());
  m.vocab.table = r.mat();
  m.moods = r.mat();
  const auto nusers = r.u64();
  if (nusers > (1u << 28)) throw FormatError("implausible user count");
  m.train_listened.resize(nusers);
  for (auto& l : m.train_listened) l = r.ints();
  m.groups.user_group = r.ints();
  m.groups.centroids = r.mat();
  m.groups.inertia = r.f64();
  m.nets.prior = detail::read_encoder(r);
  m.nets.posterior = detail::read_encoder(r);
  m.nets.user_decoder = detail::read_mlp(r);
  m.nets.emotion_decoder = detail::read_mlp(r);
  m.bnns.global = read_posterior(r);
  m.bnns.groups.resize(r.u64());
  for (auto& g : m.bnns.groups) g = read_posterior(r);
  m.user_emb = r.mat();
  m.track_emb = r.mat();
  r.expect_end();
  if (static_cast<Eigen::Index>(m.vocab.tags.size()) != m.vocab.table.cols() ||
      m.moods.cols() != m.track_emb.cols() || m.user_emb.cols() != static_cast<Eigen::Index>(nusers) ||
      m.groups.user_group.size() != nusers || m.bnns.groups.size() != static_cast<std::size_t>(m.groups.centroids.cols())) {
    throw FormatError("model checkpoint has inconsistent shapes");
  }
  return m;
}

inline ModelState load_model(const std::string& path) {
  auto r = BinaryReader::from_file(path);
  return deserialize_model(r);
}

}  // namespace hdbn
