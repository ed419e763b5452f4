// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Pass criterion numbers as arguments to run a subset.

#include "oracles.hpp"

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

using namespace hdbn;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 42;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_s;  // 0: no runtime bound
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string sci(double x) { return fmt("%.3g", x); }

Vec random_simplex(Eigen::Index n, Rng& rng) {
  Vec p = (1.5 * rng.normal_vec(n)).array().exp();
  return p / p.sum();
}

void jitter(ParamView v, Rng& rng, double scale) {
  for (double* p : v.pointers()) *p += scale * rng.normal();
}

MoodData random_mood_batch(int n, Rng& rng) {
  MoodData d;
  d.inputs = rng.normal_mat(kEmotionDim, n);
  d.targets.resize(kMoodCount, n);
  for (int i = 0; i < n; ++i) d.targets.col(i) = random_simplex(kMoodCount, rng);
  return d;
}

// Phase I settings sized for a few thousand records: the preset step size
// and batch target the full dataset and barely move in 50 epochs here.
HyperParams desk_hp(int groups) {
  HyperParams hp = HyperParams::small();
  hp.groups = groups;
  hp.pretrain.lr = 0.1;
  hp.pretrain.batch = 64;
  hp.finetune.lr = 0.01;
  hp.embedding_dim = 16;
  hp.lr = 0.001;
  return hp;
}

SynthConfig heterogeneous(int users, int groups, double preference_across) {
  SynthConfig c;
  c.users = users;
  c.tracks = 100;
  c.groups = groups;
  c.genres = std::max(4, groups);
  c.emotion_across = 0.2;
  c.emotion_within = 0.1;
  c.preference_across = preference_across;
  c.preference_within = 0.1;
  return c;
}

struct Fitted {
  Prepared prep;
  GroupAssignment groups;
  GroupBnnSet bnns;
};

Fitted fit_phase_one(const SynthConfig& c, const HyperParams& hp) {
  Fitted f{prepare(synth_generate(c, kSeed).dataset, kSeed), {}, {}};
  f.groups = fit_groups(f.prep, hp.groups);
  f.bnns = run_finetune(f.prep, run_pretrain(f.prep, hp.pretrain).posterior, f.groups, hp.finetune);
  return f;
}

double hr10(const Fitted& f, const HyperParams& hp, const std::string& method,
            const std::shared_ptr<const ModelState>& model = nullptr) {
  return evaluate_methods(f.prep, {method}, model, hp, {}, 0).front().means[1].hr;
}

// ----- criteria -----

Outcome closed_form_kl() {
  Rng rng(kSeed);
  double worst = 0.0;
  int fails = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto k = static_cast<Eigen::Index>(1 + rng.below(8));
    auto pos_sigma = [&] {
      Vec v(k);
      for (Eigen::Index j = 0; j < k; ++j) v[j] = rng.uniform(0.3, 2.5);
      return v;
    };
    const Vec qm = 2.0 * rng.normal_vec(k), pm = 2.0 * rng.normal_vec(k);
    const Vec qs = pos_sigma(), ps = pos_sigma();
    const double a = gaussian_kl_to_std(qm, qs);
    const double a_ref = oracle::gaussian_kl_quadrature(qm, qs, Vec::Zero(k), Vec::Ones(k));
    const double b = gaussian_kl(qm, qs, pm, ps);
    const double b_ref = oracle::gaussian_kl_quadrature(qm, qs, pm, ps);
    const Vec o = random_simplex(kMoodCount, rng), l = random_simplex(kMoodCount, rng);
    const double c = categorical_kl(o, l);
    const double c_ref = oracle::categorical_kl_sum(o, l);
    for (auto [got, want] : {std::pair{a, a_ref}, std::pair{b, b_ref}, std::pair{c, c_ref}}) {
      const double err = std::abs(got - want);
      worst = std::max(worst, err);
      if (err > 1e-6) ++fails;
    }
  }
  return {fails == 0, "3000 comparisons, max abs error " + sci(worst) + ", " + std::to_string(fails) + " over 1e-6"};
}

Outcome gradients() {
  Rng rng(kSeed);
  std::ostringstream d;
  bool ok = true;
  auto record = [&](const std::string& what, const GradCheckReport& r) {
    ok = ok && r.max_rel_error < 1e-4;
    d << what << "=" << sci(r.max_rel_error) << " ";
  };

  // A large step can straddle a ReLU kink, a small one drowns a tiny
  // gradient in roundoff; each coordinate takes the first step that agrees.
  static constexpr double kSteps[] = {1e-5, 1e-4, 1e-6};

  // mood model, production shape, 16-record batch, large-preset alpha
  const double alpha = HyperParams::large().pretrain.alpha;
  const auto batch = random_mood_batch(16, rng);
  auto global = BnnPosterior::create(rng);
  jitter(param_view(global), rng, 0.3);
  {
    const auto noise = draw_noise(global, rng);
    BnnGrad g = BnnGrad::like(global);
    mood_objective(global, nullptr, batch, noise, alpha, &g);
    auto loss = [&] { return mood_objective(global, nullptr, batch, noise, alpha, nullptr).total; };
    record("L1", grad_check(loss, param_view(global).pointers(), param_view(g).values(), kSteps, 1e-5));
  }
  {
    const BnnPosterior anchor = global;
    auto q = anchor;
    jitter(param_view(q), rng, 0.1);
    const auto noise = draw_noise(q, rng);
    BnnGrad g = BnnGrad::like(q);
    mood_objective(q, &anchor, batch, noise, alpha, &g);
    auto loss = [&] { return mood_objective(q, &anchor, batch, noise, alpha, nullptr).total; };
    record("L2", grad_check(loss, param_view(q).pointers(), param_view(g).values(), kSteps, 1e-5));
  }

  // second phase; the group networks are frozen here and only supply moods,
  // so they are kept narrow. Each term switched on alone, then all.
  HyperParams hp;
  hp.embedding_dim = 16;
  const int users = 6, tracks = 20;
  auto vocab = EmotionVocab::seeded({"a", "b", "c", "d"}, kSeed);
  Mat moods(kMoodCount, tracks);
  for (int v = 0; v < tracks; ++v) moods.col(v) = random_simplex(kMoodCount, rng);
  std::vector<std::vector<int>> listened(users);
  for (int u = 0; u < users; ++u) listened[static_cast<std::size_t>(u)] = {u, u + 7};
  GroupAssignment groups;
  for (int u = 0; u < users; ++u) groups.user_group.push_back(u % 2);
  groups.centroids = Mat::Zero(3, 2);
  GroupBnnSet bnns;
  for (int i = 0; i < 3; ++i) {
    auto b = BnnPosterior::create(rng, kEmotionDim, 16, kMoodCount, 0.1);
    jitter(param_view(b), rng, 0.3);
    (i == 0 ? bnns.global : bnns.groups.emplace_back()) = b;
  }
  auto m = init_model(hp, kSeed, vocab, moods, listened, groups, bnns);
  jitter(param_view(m.nets), rng, 0.2);
  m.user_emb = 0.5 * rng.normal_mat(hp.embedding_dim, users);
  m.track_emb = 0.5 * rng.normal_mat(hp.embedding_dim, tracks);
  std::vector<PairRecord> pairs;
  for (int i = 0; i < 16; ++i) {
    const int u = i % users;
    pairs.push_back({u, i % 4, listened[static_cast<std::size_t>(u)][0], (u + 3 + i) % tracks});
  }
  Rng lr = rng.split("latent"), wr = rng.split("weights");
  const auto noise = draw_l3_noise(m, pairs, lr, wr);
  const std::vector<std::pair<std::string, LedWeights>> terms = {
      {"rec", {0, 0, 0, 0}},  {"KL1", {1, 0, 0, 0}},  {"KL2", {0, 1, 0, 0}},
      {"MSE2", {0, 0, 1, 0}}, {"MSE1", {0, 0, 0, 1}}, {"L3", {0.3, 0.5, 0.7, 0.9}}};
  for (const auto& [name, w] : terms) {
    m.hp.lambda1 = w.kl1;
    m.hp.lambda2 = w.kl2;
    m.hp.lambda3 = w.mse2;
    m.hp.lambda4 = w.mse1;
    L3Grad g = L3Grad::like(m);
    compute_l3(m, pairs, noise, &g);
    auto loss = [&] { return compute_l3(m, pairs, noise, nullptr).total; };
    record(name, grad_check(loss, trainable_view(m).pointers(), param_view(g).values(), kSteps, 1e-5));
  }
  return {ok, "max relative error: " + d.str()};
}

Outcome metric_oracle() {
  Rng rng(kSeed);
  std::size_t mismatches = 0, violations = 0, hits = 0, total = 0;
  for (int T : kCutoffs) {
    for (int i = 0; i < 10000; ++i) {
      std::vector<int> ids(60);
      std::iota(ids.begin(), ids.end(), 0);
      rng.shuffle(ids.begin(), ids.end());
      ids.resize(static_cast<std::size_t>(rng.below(4) == 0 ? rng.below(static_cast<std::size_t>(T) + 1) : T));
      RankedList list;
      list.tracks = ids;
      list.scores.assign(ids.size(), 0.0);
      const int target = rng.below(3) == 0 ? static_cast<int>(rng.below(60)) : (ids.empty() ? 0 : ids[rng.below(ids.size())]);
      const auto got = score_record(list, target, T);
      const auto want = oracle::scan_metrics(ids, target, T);
      if (got.hr != want.hr || got.precision != want.precision || got.ndcg != want.ndcg || got.mrr != want.mrr) ++mismatches;
      if (!(got.hr >= got.ndcg) || got.precision != got.hr / T) ++violations;
      hits += got.hr > 0 ? 1 : 0;
      ++total;
    }
  }
  return {mismatches == 0 && violations == 0,
          std::to_string(total) + " instances (" + std::to_string(hits) + " hits), " + std::to_string(mismatches) +
              " mismatches, " + std::to_string(violations) + " invariant violations"};
}

Outcome weight_kl_sum() {
  Rng rng(kSeed);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    auto q = BnnPosterior::create(rng);
    auto a = BnnPosterior::create(rng);
    jitter(param_view(q), rng, 0.5);
    jitter(param_view(a), rng, 0.5);
    long double to_std = 0.0L, to_anchor = 0.0L;
    auto add = [&](const Mat& mu, const Mat& rho, const Mat& amu, const Mat& arho) {
      for (Eigen::Index i = 0; i < mu.size(); ++i) {
        Vec m1(1), s1(1), m2(1), s2(1);
        m1 << mu(i);
        s1 << softplus(rho(i));
        m2 << amu(i);
        s2 << softplus(arho(i));
        to_std += gaussian_kl_to_std(m1, s1);
        to_anchor += gaussian_kl(m1, s1, m2, s2);
      }
    };
    for (std::size_t k = 0; k < q.layers.size(); ++k) {
      const auto& l = q.layers[k];
      const auto& al = a.layers[k];
      add(l.weight_mu, l.weight_rho, al.weight_mu, al.weight_rho);
      add(l.bias_mu, l.bias_rho, al.bias_mu, al.bias_rho);
    }
    const double e1 = std::abs(weight_kl_to_std(q) - static_cast<double>(to_std)) / std::max(1.0L, to_std);
    const double e2 = std::abs(weight_kl(q, a) - static_cast<double>(to_anchor)) / std::max(1.0L, to_anchor);
    worst = std::max({worst, e1, e2});
  }
  return {worst <= 1e-9, "20 random posterior pairs (5833 weights each), max relative error " + sci(worst)};
}

Outcome finetune_benefit() {
  SynthConfig c;
  c.users = 400;
  c.tracks = 100;
  c.groups = 2;
  c.preference_across = 1.0;  // group 1 reads every tag as the opposite mood
  const auto hp = desk_hp(2);
  const Prepared p = prepare(synth_generate(c, kSeed).dataset, kSeed);
  const auto groups = fit_groups(p, 2);
  const auto global = run_pretrain(p, hp.pretrain).posterior;
  std::vector<FinetuneRow> rows;
  run_finetune(p, global, groups, hp.finetune, &rows);
  bool ok = true;
  double mean_imp = 0.0;
  std::ostringstream d;
  for (const auto& r : rows) {
    const double imp = (r.global_kl - r.finetuned_kl) / r.global_kl;
    ok = ok && r.finetuned_kl < r.global_kl;
    mean_imp += imp / static_cast<double>(rows.size());
    d << "group " << r.group << ": " << fmt("%.4f", r.global_kl) << " -> " << fmt("%.4f", r.finetuned_kl) << "; ";
  }
  d << "mean relative improvement " << fmt("%.1f%%", 100.0 * mean_imp);
  return {ok && mean_imp >= 0.05, d.str()};
}

Outcome ranking_competence() {
  const auto hp = desk_hp(2);
  const auto f = fit_phase_one(heterogeneous(800, 2, 0.5), hp);
  const auto model = std::make_shared<const ModelState>(run_phase_two(f.prep, f.groups, f.bnns, hp).model);
  const double h = hr10(f, hp, "hdbn", model);
  const double pop = hr10(f, hp, "pop");
  const double rnd = hr10(f, hp, "random");
  return {h >= 1.5 * pop && h >= 5.0 * rnd,
          "HR@10 hdbn=" + fmt("%.4f", h) + " pop=" + fmt("%.4f", pop) + " random=" + fmt("%.4f", rnd) +
              " (needs >= " + fmt("%.4f", std::max(1.5 * pop, 5.0 * rnd)) + ")"};
}

Outcome ablation_direction() {
  const auto hp = desk_hp(4);
  const auto f = fit_phase_one(heterogeneous(800, 4, 1.0), hp);
  auto variant_hr = [&](const Ablation& a) {
    HyperParams h = hp;
    h.ablation = a;
    const auto model = std::make_shared<const ModelState>(run_phase_two(f.prep, f.groups, f.bnns, h).model);
    return hr10(f, h, "hdbn", model);
  };
  const double full = variant_hr({});
  Ablation no_phau;
  no_phau.preference_across = false;
  const double ablated = variant_hr(no_phau);
  return {ablated <= full, "HR@10 full=" + fmt("%.4f", full) + " w/o PHAU=" + fmt("%.4f", ablated)};
}

Outcome determinism() {
  const auto base = fs::temp_directory_path() / ("hdbn-accept-" + std::to_string(::getpid()));
  fs::remove_all(base);
  std::vector<std::string> outputs;
  for (const auto* name : {"a", "b"}) {
    const Config cfg = Config::resolve({}, {{"preset", "small"},
                                            {"seed", std::to_string(kSeed)},
                                            {"synth.users", "200"},
                                            {"groups", "2"},
                                            {"pretrain.epochs", "10"},
                                            {"finetune.epochs", "10"},
                                            {"train.epochs", "5"},
                                            {"out", (base / name).string()}});
    const Workspace ws(cfg);
    std::ostringstream log;
    for (const auto* step : {"synth", "group", "pretrain", "finetune", "train", "evaluate"}) {
      for (const auto& [n, fn] : commands()) {
        if (n == step) fn(ws, log);
      }
    }
    std::ifstream json(ws.path("evaluate.json"), std::ios::binary), csv(ws.path("evaluate.csv"), std::ios::binary);
    std::stringstream all;
    all << json.rdbuf() << csv.rdbuf();
    outputs.push_back(all.str());
  }
  fs::remove_all(base);
  const bool same = outputs[0] == outputs[1] && !outputs[0].empty();
  return {same, std::string(same ? "identical" : "different") + " evaluate.json + evaluate.csv (" +
                    std::to_string(outputs[0].size()) + " bytes, 10 methods)"};
}

Outcome elbow_behavior() {
  std::ostringstream d;
  bool ok = true;
  for (int k : {3, 5}) {
    int good = 0;
    d << "k*=" << k << ":";
    for (std::uint64_t s = 0; s < 5; ++s) {
      SynthConfig c;
      c.users = 400;
      c.tracks = 100;
      c.groups = k;
      c.genres = 2 * k;
      const Prepared p = prepare(synth_generate(c, kSeed + s).dataset, kSeed + s);
      const int g = elbow_select(prepared_profiles(p), {1, 2, 3, 4, 5, 6, 7, 8, 9}, kSeed + s).selected;
      good += std::abs(g - k) <= 1 ? 1 : 0;
      d << ' ' << g;
    }
    d << " (" << good << "/5 within 1)  ";
    ok = ok && good >= 4;
  }
  return {ok, d.str()};
}

Outcome persistence() {
  auto hp = desk_hp(2);
  hp.epochs = 3;
  const auto f = fit_phase_one(heterogeneous(200, 2, 0.5), hp);
  const auto trained = run_phase_two(f.prep, f.groups, f.bnns, hp).model;
  const auto path = (fs::temp_directory_path() / ("hdbn-accept-" + std::to_string(::getpid()) + ".bin")).string();
  save_model(trained, path);
  const auto loaded = load_model(path);
  fs::remove(path);
  Rng rng(kSeed);
  int identical = 0;
  for (int q = 0; q < 100; ++q) {
    const int u = static_cast<int>(rng.below(static_cast<std::size_t>(trained.num_users())));
    const int e = static_cast<int>(rng.below(static_cast<std::size_t>(trained.vocab.size())));
    const Vec a = score_all(trained, u, e), b = score_all(loaded, u, e);
    identical += a.size() == b.size() &&
                 std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
  }
  return {identical == 100, std::to_string(identical) + "/100 queries bit-identical after save/load"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "closed-form KL vs quadrature", 10, closed_form_kl},
      {2, "gradient checks L1/L2/L3", 60, gradients},
      {3, "metric oracle equivalence", 0, metric_oracle},
      {4, "weight-KL equals per-weight sum", 0, weight_kl_sum},
      {5, "group fine-tuning benefit", 300, finetune_benefit},
      {6, "end-to-end ranking competence", 600, ranking_competence},
      {7, "ablation direction (w/o PHAU)", 0, ablation_direction},
      {8, "pipeline determinism", 0, determinism},
      {9, "elbow recovers group count", 0, elbow_behavior},
      {10, "checkpoint round trip", 0, persistence},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int run = 0, failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string timing = fmt("%.1fs", secs);
    if (c.budget_s > 0) {
      timing += fmt(" of %.0fs", c.budget_s);
      if (secs > c.budget_s) {
        o.pass = false;
        o.detail += "; over the runtime bound";
      }
    }
    ++run;
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << " (" << timing
              << ")" << std::endl;
  }
  std::cout << run - failed << "/" << run << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
