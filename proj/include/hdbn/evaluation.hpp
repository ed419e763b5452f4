#pragma once

// Top-T ranking metrics, the shared test protocol, reports, and the
// comparison baselines.

#include "hdbn/recommender.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdio>
#include <unordered_map>

namespace hdbn {

inline constexpr std::array<int, 4> kCutoffs = {5, 10, 15, 20};

struct RecordScore {
  double hr = 0.0;
  double precision = 0.0;
  double ndcg = 0.0;
  double mrr = 0.0;
};

// Single relevant item. A hit at 1-based position t gives
// (1, 1/T, 1/log2(t+1), 1/t); a miss gives zeros.
inline RecordScore score_record(const RankedList& ranked, int target, int T) {
  if (T < 1) throw std::invalid_argument("score_record: T must be >= 1");
  if (ranked.size() > static_cast<std::size_t>(T)) throw std::invalid_argument("score_record: list longer than T");
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (ranked.tracks[i] != target) continue;
    const double t = static_cast<double>(i + 1);
    return {1.0, 1.0 / T, 1.0 / std::log2(t + 1.0), 1.0 / t};
  }
  return {};
}

// Scores for every track given (user, emotion tag).
using Scorer = std::function<Vec(int, int)>;

// Test records plus the train history that defines each record's
// candidates. Every method is evaluated through the same object.
class EvaluationProtocol {
 public:
  EvaluationProtocol(std::vector<Interaction> records, std::vector<std::vector<int>> train_listened, int num_tracks)
      : records_(std::move(records)), listened_(std::move(train_listened)), num_tracks_(num_tracks) {
    if (records_.empty()) throw std::invalid_argument("evaluation: empty test split");
    for (const auto& r : records_) {
      if (r.user < 0 || r.user >= static_cast<int>(listened_.size()) || r.music < 0 || r.music >= num_tracks_) {
        throw std::out_of_range("evaluation: test record references an unknown user or track");
      }
    }
  }

  const std::vector<Interaction>& records() const { return records_; }
  const std::vector<std::vector<int>>& listened() const { return listened_; }
  int num_tracks() const { return num_tracks_; }

  // All tracks minus the user's train history; the ground truth is kept.
  RankedList ranked(const Vec& scores, const Interaction& r, int T) const {
    return top_T(scores, listened_[static_cast<std::size_t>(r.user)], T, r.music);
  }

  std::size_t candidate_count(const Interaction& r) const {
    const auto& l = listened_[static_cast<std::size_t>(r.user)];
    const bool gt_listened = std::binary_search(l.begin(), l.end(), r.music);
    return static_cast<std::size_t>(num_tracks_) - l.size() + (gt_listened ? 1 : 0);
  }

 private:
  std::vector<Interaction> records_;
  std::vector<std::vector<int>> listened_;
  int num_tracks_;
};

struct MetricsReport {
  std::string method;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::size_t records = 0;
  std::size_t skipped = 0;
  std::array<RecordScore, kCutoffs.size()> means{};
};

inline MetricsReport evaluate(const Scorer& scorer, const EvaluationProtocol& protocol, const std::string& method,
                              std::uint64_t config_hash, std::uint64_t seed) {
  MetricsReport rep;
  rep.method = method;
  rep.config_hash = config_hash;
  rep.seed = seed;
  const int max_t = kCutoffs.back();
  std::array<RecordScore, kCutoffs.size()> sums{};
  for (const auto& r : protocol.records()) {
    RankedList list;
    try {
      const Vec s = scorer(r.user, r.emotion);
      if (s.size() != protocol.num_tracks() || !s.allFinite()) throw NumericalError("bad score vector");
      list = protocol.ranked(s, r, max_t);
    } catch (const std::exception&) {
      ++rep.skipped;
      continue;
    }
    ++rep.records;
    for (std::size_t k = 0; k < kCutoffs.size(); ++k) {
      RankedList prefix = list;
      const auto n = std::min<std::size_t>(prefix.size(), static_cast<std::size_t>(kCutoffs[k]));
      prefix.tracks.resize(n);
      prefix.scores.resize(n);
      const auto sc = score_record(prefix, r.music, kCutoffs[k]);
      sums[k].hr += sc.hr;
      sums[k].precision += sc.precision;
      sums[k].ndcg += sc.ndcg;
      sums[k].mrr += sc.mrr;
    }
  }
  if (rep.records > 0) {
    const double n = static_cast<double>(rep.records);
    for (std::size_t k = 0; k < kCutoffs.size(); ++k) {
      rep.means[k] = {sums[k].hr / n, sums[k].precision / n, sums[k].ndcg / n, sums[k].mrr / n};
    }
  }
  return rep;
}

inline std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

inline double metric_value(const RecordScore& s, int which) {
  switch (which) {
    case 0: return s.hr;
    case 1: return s.precision;
    case 2: return s.ndcg;
    default: return s.mrr;
  }
}

inline const std::array<std::string, 4>& metric_names() {
  static const std::array<std::string, 4> names = {"HR", "Precision", "NDCG", "MRR"};
  return names;
}

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
  nlohmann::ordered_json metrics;
  for (int m = 0; m < 4; ++m) {
    for (std::size_t k = 0; k < kCutoffs.size(); ++k) {
      metrics[metric_names()[static_cast<std::size_t>(m)] + "@" + std::to_string(kCutoffs[k])] = metric_value(r.means[k], m);
    }
  }
  return {{"method", r.method},   {"config_hash", hex64(r.config_hash)}, {"seed", r.seed},
          {"records", r.records}, {"skipped", r.skipped},               {"metrics", metrics}};
}

// A set of reports that all come from one configuration.
inline nlohmann::ordered_json reports_json(const std::vector<MetricsReport>& reports) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : reports) arr.push_back(to_json(r));
  return arr;
}

// Refuses to combine reports produced under different configs or seeds.
inline std::vector<MetricsReport> merge_reports(const std::vector<std::vector<MetricsReport>>& parts) {
  std::vector<MetricsReport> out;
  for (const auto& part : parts) {
    for (const auto& r : part) {
      if (!out.empty() && (r.config_hash != out.front().config_hash || r.seed != out.front().seed)) {
        throw std::invalid_argument("cannot merge reports: config hash/seed " + hex64(r.config_hash) + "/" +
                                    std::to_string(r.seed) + " differs from " + hex64(out.front().config_hash) + "/" +
                                    std::to_string(out.front().seed));
      }
      out.push_back(r);
    }
  }
  return out;
}

// method, then HR/Precision/NDCG/MRR at each cutoff (16 columns), then the
// config hash and seed.
inline void write_metrics_table(const std::vector<MetricsReport>& reports, std::ostream& out) {
  out.precision(17);
  out << "method";
  for (int m = 0; m < 4; ++m) {
    for (int t : kCutoffs) out << ',' << metric_names()[static_cast<std::size_t>(m)] << '@' << t;
  }
  out << ",records,skipped,config_hash,seed\n";
  for (const auto& r : reports) {
    out << r.method;
    for (int m = 0; m < 4; ++m) {
      for (std::size_t k = 0; k < kCutoffs.size(); ++k) out << ',' << metric_value(r.means[k], m);
    }
    out << ',' << r.records << ',' << r.skipped << ',' << hex64(r.config_hash) << ',' << r.seed << '\n';
  }
}

// ----- baselines -----

// Training interactions indexed both ways, with tag information.
struct TrainIndex {
  int users = 0;
  int tracks = 0;
  std::vector<std::vector<int>> user_items;  // sorted, unique
  std::vector<std::vector<int>> item_users;  // sorted, unique
  std::vector<double> play_count;
  std::vector<Vec> user_tag_freq;
  std::vector<Vec> item_tag_freq;
  // Mean tag encoding of each listened (user, track) pair.
  std::unordered_map<std::uint64_t, Vec> pair_emotion;
  Mat tag_table;

  std::uint64_t key(int u, int v) const { return static_cast<std::uint64_t>(u) * static_cast<std::uint64_t>(tracks) + static_cast<std::uint64_t>(v); }
  const Vec& emotion_of(int u, int v) const { return pair_emotion.at(key(u, v)); }

  static TrainIndex build(const std::vector<Interaction>& train, int users, int tracks, const Mat& tag_table) {
    TrainIndex ix;
    ix.users = users;
    ix.tracks = tracks;
    ix.tag_table = tag_table;
    ix.user_items.resize(static_cast<std::size_t>(users));
    ix.item_users.resize(static_cast<std::size_t>(tracks));
    ix.play_count.assign(static_cast<std::size_t>(tracks), 0.0);
    const auto tags = tag_table.cols();
    ix.user_tag_freq.assign(static_cast<std::size_t>(users), Vec::Zero(tags));
    ix.item_tag_freq.assign(static_cast<std::size_t>(tracks), Vec::Zero(tags));
    std::unordered_map<std::uint64_t, int> pair_count;
    for (const auto& r : train) {
      ix.user_items[static_cast<std::size_t>(r.user)].push_back(r.music);
      ix.item_users[static_cast<std::size_t>(r.music)].push_back(r.user);
      ix.play_count[static_cast<std::size_t>(r.music)] += 1.0;
      ix.user_tag_freq[static_cast<std::size_t>(r.user)][r.emotion] += 1.0;
      ix.item_tag_freq[static_cast<std::size_t>(r.music)][r.emotion] += 1.0;
      auto [it, fresh] = ix.pair_emotion.try_emplace(ix.key(r.user, r.music), Vec::Zero(tag_table.rows()));
      it->second += tag_table.col(r.emotion);
      ++pair_count[ix.key(r.user, r.music)];
    }
    for (auto& [k, v] : ix.pair_emotion) v /= static_cast<double>(pair_count[k]);
    for (auto* lists : {&ix.user_items, &ix.item_users}) {
      for (auto& l : *lists) {
        std::sort(l.begin(), l.end());
        l.erase(std::unique(l.begin(), l.end()), l.end());
      }
    }
    return ix;
  }
};

inline double cosine(const Vec& a, const Vec& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

inline std::size_t intersection_size(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t n = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

inline std::vector<int> intersection(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

// Cosine of two binary indicator vectors given as sorted id lists.
inline double binary_cosine(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.empty() || b.empty()) return 0.0;
  return static_cast<double>(intersection_size(a, b)) / std::sqrt(static_cast<double>(a.size() * b.size()));
}

struct Neighbor {
  int id = 0;
  double sim = 0.0;
};

// The m entries with the largest non-zero similarity (ties: lower id),
// excluding `self`.
inline std::vector<Neighbor> top_neighbors(int self, int count, int m, const std::function<double(int)>& sim) {
  std::vector<Neighbor> all;
  for (int j = 0; j < count; ++j) {
    if (j == self) continue;
    const double s = sim(j);
    if (s != 0.0) all.push_back({j, s});
  }
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(m), all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(),
                    [](const Neighbor& a, const Neighbor& b) { return a.sim > b.sim || (a.sim == b.sim && a.id < b.id); });
  all.resize(take);
  return all;
}

namespace detail {

// Per-key lazily computed neighbor lists.
struct NeighborCache {
  std::vector<std::optional<std::vector<Neighbor>>> lists;
  const std::vector<Neighbor>& get(int i, const std::function<std::vector<Neighbor>()>& make) {
    auto& slot = lists[static_cast<std::size_t>(i)];
    if (!slot) slot = make();
    return *slot;
  }
};

}  // namespace detail

inline Scorer random_scorer(int num_tracks, int num_emotions, std::uint64_t seed) {
  return [=](int u, int e) {
    Rng rng = Rng(seed).split("random-baseline", static_cast<std::uint64_t>(u) * static_cast<std::uint64_t>(num_emotions) +
                                                      static_cast<std::uint64_t>(e));
    Vec s(num_tracks);
    for (int v = 0; v < num_tracks; ++v) s[v] = rng.uniform();
    return s;
  };
}

inline Scorer pop_scorer(std::shared_ptr<const TrainIndex> ix) {
  Vec counts = Eigen::Map<const Vec>(ix->play_count.data(), static_cast<Eigen::Index>(ix->play_count.size()));
  return [counts](int, int) { return counts; };
}

// User-based CF with similarity (1 - w) * binary cosine + w * tag-profile
// cosine; w = 0 is plain UCF. score(u, v) = sum of neighbor similarities over
// neighbors who listened to v.
inline double user_similarity(const TrainIndex& ix, int a, int b, double w) {
  const double base = binary_cosine(ix.user_items[static_cast<std::size_t>(a)], ix.user_items[static_cast<std::size_t>(b)]);
  if (w == 0.0) return base;
  return (1.0 - w) * base + w * cosine(ix.user_tag_freq[static_cast<std::size_t>(a)], ix.user_tag_freq[static_cast<std::size_t>(b)]);
}

inline double item_similarity(const TrainIndex& ix, int a, int b, double w) {
  const double base = binary_cosine(ix.item_users[static_cast<std::size_t>(a)], ix.item_users[static_cast<std::size_t>(b)]);
  if (w == 0.0) return base;
  return (1.0 - w) * base + w * cosine(ix.item_tag_freq[static_cast<std::size_t>(a)], ix.item_tag_freq[static_cast<std::size_t>(b)]);
}

inline Scorer ucf_scorer(std::shared_ptr<const TrainIndex> ix, int m, double w = 0.0) {
  if (m < 1) throw std::invalid_argument("UCF: m must be >= 1");
  if (w < 0.0 || w > 1.0) throw std::invalid_argument("UCF: blend weight must lie in [0, 1]");
  auto cache = std::make_shared<detail::NeighborCache>();
  cache->lists.resize(static_cast<std::size_t>(ix->users));
  return [ix, m, w, cache](int u, int) {
    const auto& nb = cache->get(u, [&] {
      return top_neighbors(u, ix->users, m, [&](int j) { return user_similarity(*ix, u, j, w); });
    });
    Vec s = Vec::Zero(ix->tracks);
    for (const auto& n : nb) {
      for (int v : ix->user_items[static_cast<std::size_t>(n.id)]) s[v] += n.sim;
    }
    return s;
  };
}

// Item-based CF: score(u, v) = sum over v's top-m neighbors that u listened
// to of their similarity.
inline Scorer icf_scorer(std::shared_ptr<const TrainIndex> ix, int m, double w = 0.0) {
  if (m < 1) throw std::invalid_argument("ICF: m must be >= 1");
  if (w < 0.0 || w > 1.0) throw std::invalid_argument("ICF: blend weight must lie in [0, 1]");
  auto cache = std::make_shared<detail::NeighborCache>();
  cache->lists.resize(static_cast<std::size_t>(ix->tracks));
  return [ix, m, w, cache](int u, int) {
    const auto& hist = ix->user_items[static_cast<std::size_t>(u)];
    Vec s = Vec::Zero(ix->tracks);
    for (int v = 0; v < ix->tracks; ++v) {
      const auto& nb = cache->get(v, [&] {
        return top_neighbors(v, ix->tracks, m, [&](int j) { return item_similarity(*ix, v, j, w); });
      });
      for (const auto& n : nb) {
        if (std::binary_search(hist.begin(), hist.end(), n.id)) s[v] += n.sim;
      }
    }
    return s;
  };
}

// sim(a, b) = sum over co-listened v of cos(e_{a,v}, e_{b,v}) / sqrt(|V_a| |V_b|)
inline double ucfe_similarity(const TrainIndex& ix, int a, int b) {
  const auto& va = ix.user_items[static_cast<std::size_t>(a)];
  const auto& vb = ix.user_items[static_cast<std::size_t>(b)];
  if (va.empty() || vb.empty()) return 0.0;
  double total = 0.0;
  for (int v : intersection(va, vb)) total += cosine(ix.emotion_of(a, v), ix.emotion_of(b, v));
  return total / std::sqrt(static_cast<double>(va.size() * vb.size()));
}

// sim(a, b) = sum over common listeners u of cos(e_{u,a}, e_{u,b}) / sqrt(|U_a| |U_b|)
inline double icfe_similarity(const TrainIndex& ix, int a, int b) {
  const auto& ua = ix.item_users[static_cast<std::size_t>(a)];
  const auto& ub = ix.item_users[static_cast<std::size_t>(b)];
  if (ua.empty() || ub.empty()) return 0.0;
  double total = 0.0;
  for (int u : intersection(ua, ub)) total += cosine(ix.emotion_of(u, a), ix.emotion_of(u, b));
  return total / std::sqrt(static_cast<double>(ua.size() * ub.size()));
}

// score(u, v) = sum over neighbors u' who listened to v of
// sim(u, u') * cos(e_query, e_{u',v})
inline Scorer ucfe_scorer(std::shared_ptr<const TrainIndex> ix, int m) {
  if (m < 1) throw std::invalid_argument("UCFE: m must be >= 1");
  auto cache = std::make_shared<detail::NeighborCache>();
  cache->lists.resize(static_cast<std::size_t>(ix->users));
  return [ix, m, cache](int u, int e) {
    const auto& nb = cache->get(u, [&] {
      return top_neighbors(u, ix->users, m, [&](int j) { return ucfe_similarity(*ix, u, j); });
    });
    const Vec q = ix->tag_table.col(e);
    Vec s = Vec::Zero(ix->tracks);
    for (const auto& n : nb) {
      for (int v : ix->user_items[static_cast<std::size_t>(n.id)]) s[v] += n.sim * cosine(q, ix->emotion_of(n.id, v));
    }
    return s;
  };
}

// score(u, v) = sum over v's neighbors v' in u's history of
// sim(v, v') * cos(e_query, e_{u,v'})
inline Scorer icfe_scorer(std::shared_ptr<const TrainIndex> ix, int m) {
  if (m < 1) throw std::invalid_argument("ICFE: m must be >= 1");
  auto cache = std::make_shared<detail::NeighborCache>();
  cache->lists.resize(static_cast<std::size_t>(ix->tracks));
  return [ix, m, cache](int u, int e) {
    const auto& hist = ix->user_items[static_cast<std::size_t>(u)];
    const Vec q = ix->tag_table.col(e);
    Vec s = Vec::Zero(ix->tracks);
    for (int v = 0; v < ix->tracks; ++v) {
      const auto& nb = cache->get(v, [&] {
        return top_neighbors(v, ix->tracks, m, [&](int j) { return icfe_similarity(*ix, v, j); });
      });
      for (const auto& n : nb) {
        if (std::binary_search(hist.begin(), hist.end(), n.id)) s[v] += n.sim * cosine(q, ix->emotion_of(u, n.id));
      }
    }
    return s;
  };
}

// Matrix factorization trained on the pairwise ranking loss alone. Shares
// the embedding initialization, negative sampling, shuffling, batching and
// optimizer with the full model, so that with the mood channel and all
// regularizers off both produce the same embedding trajectory.
struct MfBprModel {
  Mat user_emb;
  Mat track_emb;
  std::vector<TrainLogRow> log;
  int best_epoch = -1;
};

inline Scorer mf_scorer(std::shared_ptr<const MfBprModel> mf) {
  return [mf](int u, int) { return Vec(mf->track_emb.transpose() * mf->user_emb.col(u)); };
}

inline MfBprModel train_mf_bpr(const SplitDataset& split, int num_tracks, const HyperParams& hp, std::uint64_t seed) {
  hp.validate();
  if (split.train.empty()) throw std::invalid_argument("MF-BPR: empty training split");
  const Rng root(seed);
  Rng neg_rng = root.split("negative-sampling");
  Rng shuffle_rng = root.split("shuffle");
  const NegativeSampler sampler(split.train_listened, num_tracks);
  MfBprModel mf;
  std::tie(mf.user_emb, mf.track_emb) =
      init_embeddings(seed, hp.embedding_dim, split.num_users(), num_tracks, hp.init_scale);
  Optimizer opt(hp.optimizer, hp.lr);
  Mat du = Mat::Zero(mf.user_emb.rows(), mf.user_emb.cols());
  Mat dv = Mat::Zero(mf.track_emb.rows(), mf.track_emb.cols());
  ParamView params;
  params.add(mf.user_emb);
  params.add(mf.track_emb);
  ParamView grads;
  grads.add(du);
  grads.add(dv);

  double best_hr = -1.0;
  int since_best = 0;
  std::pair<Mat, Mat> best{mf.user_emb, mf.track_emb};
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    const auto pairs = build_epoch_pairs(split.train, sampler, hp.neg_k, neg_rng, shuffle_rng);
    TrainLogRow row;
    row.epoch = epoch;
    for (std::size_t start = 0; start < pairs.size(); start += static_cast<std::size_t>(hp.batch)) {
      const std::size_t stop = std::min(pairs.size(), start + static_cast<std::size_t>(hp.batch));
      const double B = static_cast<double>(stop - start);
      du.setZero();
      dv.setZero();
      double loss = 0.0;
      for (std::size_t i = start; i < stop; ++i) {
        const auto& p = pairs[i];
        const double diff = mf.user_emb.col(p.user).dot(mf.track_emb.col(p.positive)) -
                            mf.user_emb.col(p.user).dot(mf.track_emb.col(p.negative));
        loss += softplus(-diff);
        const double d = -sigmoid(-diff) / B;
        du.col(p.user) += d * (mf.track_emb.col(p.positive) - mf.track_emb.col(p.negative));
        dv.col(p.positive) += d * mf.user_emb.col(p.user);
        dv.col(p.negative) -= d * mf.user_emb.col(p.user);
      }
      if (!std::isfinite(loss)) throw NumericalError("MF-BPR loss is non-finite at epoch " + std::to_string(epoch));
      opt.step(params, grads);
      row.rec += loss / static_cast<double>(pairs.size());
    }
    if (!split.validation.empty()) {
      row.val_hr10 = hit_rate(split.validation, split.train_listened, 10,
                              [&](int u, int) { return Vec(mf.track_emb.transpose() * mf.user_emb.col(u)); });
    }
    mf.log.push_back(row);
    if (!row.val_hr10 || hp.patience == 0) {
      best = {mf.user_emb, mf.track_emb};
      mf.best_epoch = epoch;
      continue;
    }
    if (*row.val_hr10 > best_hr) {
      best_hr = *row.val_hr10;
      best = {mf.user_emb, mf.track_emb};
      mf.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= hp.patience) {
      break;
    }
  }
  mf.user_emb = best.first;
  mf.track_emb = best.second;
  return mf;
}

inline Scorer model_scorer(std::shared_ptr<const ModelState> m) {
  return [m](int u, int e) { return score_all(*m, u, e, RankMode::kDeterministic); };
}

inline const std::vector<std::string>& baseline_names() {
  static const std::vector<std::string> names = {"hdbn", "random", "pop",   "ucf",   "icf",
                                                 "mf_bpr", "ucfe", "icfe", "ucf+e", "icf+e"};
  return names;
}

// ----- case study -----

struct CaseStudyRow {
  std::string section;  // "history" or "recommendation"
  int position = 0;
  int tag = -1;
  int track = 0;
  Vec mood;
};

struct CaseStudy {
  int user = 0;
  int query_tag = 0;
  Vec predicted_mood;
  std::vector<CaseStudyRow> rows;
};

// History rows come from `history` (the user's training records); the query
// tag defaults to the user's most frequent history tag.
inline CaseStudy case_study(const ModelState& m, const std::vector<Interaction>& history, int user, int T,
                            std::optional<int> tag = std::nullopt) {
  m.check_user(user);
  CaseStudy cs;
  cs.user = user;
  std::vector<int> freq(static_cast<std::size_t>(m.vocab.size()), 0);
  int pos = 0;
  for (const auto& r : history) {
    if (r.user != user) continue;
    ++freq[static_cast<std::size_t>(r.emotion)];
    cs.rows.push_back({"history", ++pos, r.emotion, r.music, m.moods.col(r.music)});
  }
  cs.query_tag = tag ? *tag : static_cast<int>(std::max_element(freq.begin(), freq.end()) - freq.begin());
  m.check_emotion(cs.query_tag);
  cs.predicted_mood = query_mood(m, user, cs.query_tag, RankMode::kDeterministic, nullptr);
  const auto list = rank_top_T(m, user, cs.query_tag, T);
  for (std::size_t i = 0; i < list.size(); ++i) {
    cs.rows.push_back({"recommendation", static_cast<int>(i + 1), cs.query_tag, list.tracks[i], m.moods.col(list.tracks[i])});
  }
  return cs;
}

inline void write_case_study_csv(const CaseStudy& cs, const std::vector<std::string>& tag_names,
                                 const std::vector<std::string>& track_names, std::ostream& out) {
  out.precision(17);
  out << "section,position,tag,track";
  for (const auto& n : mood_names()) out << ',' << n;
  out << '\n';
  for (const auto& r : cs.rows) {
    out << r.section << ',' << r.position << ',' << tag_names.at(static_cast<std::size_t>(r.tag)) << ','
        << track_names.at(static_cast<std::size_t>(r.track));
    for (Eigen::Index k = 0; k < r.mood.size(); ++k) out << ',' << r.mood[k];
    out << '\n';
  }
}

inline nlohmann::ordered_json to_json(const CaseStudy& cs, const std::vector<std::string>& tag_names,
                                      const std::vector<std::string>& track_names) {
  auto vec = [](const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::ordered_json series = nlohmann::ordered_json::array();
  for (const auto& r : cs.rows) {
    series.push_back({{"section", r.section},
                      {"position", r.position},
                      {"tag", tag_names.at(static_cast<std::size_t>(r.tag))},
                      {"track", track_names.at(static_cast<std::size_t>(r.track))},
                      {"mood", vec(r.mood)}});
  }
  std::vector<std::string> moods(mood_names().begin(), mood_names().end());
  return {{"query_tag", tag_names.at(static_cast<std::size_t>(cs.query_tag))},
          {"moods", moods},
          {"predicted_mood", vec(cs.predicted_mood)},
          {"bars", series}};
}

}  // namespace hdbn
