#pragma once

// Command orchestration over a write-once output directory. Each command
// reads the artifacts of earlier commands and writes `<command>.<format>`.

#include "hdbn/config.hpp"
#include "hdbn/evaluation.hpp"

#include <filesystem>
#include <iostream>

namespace hdbn {

// ----- in-memory pipeline stages -----

struct Prepared {
  Dataset data;
  SplitDataset split;
  EmotionVocab vocab;
  Mat moods;
  std::uint64_t seed = 0;
};

inline Prepared prepare(Dataset data, std::uint64_t seed) {
  Prepared p;
  p.seed = seed;
  p.split = split_8_1_1(data.interactions, data.num_users(), seed);
  p.vocab = EmotionVocab::seeded(data.emotions.names(), seed);
  p.moods = data.mood_matrix();
  p.data = std::move(data);
  return p;
}

inline std::vector<GenreProfile> prepared_profiles(const Prepared& p) {
  return genre_profiles(p.split, p.data.genre_of_track(), p.data.num_genres());
}

inline GroupAssignment fit_groups(const Prepared& p, int groups, int max_iter = 100) {
  const auto profiles = prepared_profiles(p);
  if (groups > static_cast<int>(profiles.size())) {
    throw UsageError("G=" + std::to_string(groups) + " exceeds the " + std::to_string(profiles.size()) +
                     " users with training records; lower `groups`");
  }
  return group_users(profiles, p.data.num_users(), groups, Rng(p.seed).split("grouping").seed(), max_iter);
}

inline BnnTrainResult run_pretrain(const Prepared& p, const BnnTrainConfig& cfg) {
  Rng rng = Rng(p.seed).split("phase1");
  return pretrain(mood_data(p.split.train, p.vocab, p.moods), cfg, rng);
}

struct FinetuneRow {
  int group = 0;
  std::size_t records = 0;
  double global_kl = 0.0;
  double finetuned_kl = 0.0;
  bool warning = false;
};

inline MoodData group_mood_data(const Prepared& p, const GroupAssignment& groups, int g) {
  std::vector<Interaction> recs;
  for (const auto& r : p.split.train) {
    if (groups.group_of(r.user) == g) recs.push_back(r);
  }
  return mood_data(recs, p.vocab, p.moods);
}

inline GroupBnnSet run_finetune(const Prepared& p, const BnnPosterior& global, const GroupAssignment& groups,
                                const BnnTrainConfig& cfg, std::vector<FinetuneRow>* rows = nullptr) {
  GroupBnnSet set;
  set.global = global;
  for (int g = 0; g < groups.num_groups(); ++g) {
    const MoodData d = group_mood_data(p, groups, g);
    Rng rng = Rng(p.seed).split("phase1-group", static_cast<std::uint64_t>(g));
    auto res = finetune_group(global, d, cfg, rng);
    if (rows != nullptr) {
      rows->push_back({g, static_cast<std::size_t>(d.size()), evaluate_mood_kl(global, d),
                       evaluate_mood_kl(res.posterior, d), res.warning});
    }
    set.groups.push_back(std::move(res.posterior));
  }
  return set;
}

inline TrainResult run_phase_two(const Prepared& p, const GroupAssignment& groups, const GroupBnnSet& bnns,
                                 const HyperParams& hp) {
  ModelState m = init_model(hp, p.seed, p.vocab, p.moods, p.split.train_listened, groups, bnns);
  return train(std::move(m), p.split);
}

struct MethodOptions {
  int neighbors = 50;
  double blend = 0.5;
};

inline Scorer baseline_scorer(const std::string& name, const Prepared& p, const HyperParams& hp,
                              const MethodOptions& opt, std::shared_ptr<const TrainIndex>& index) {
  if (!index) index = std::make_shared<const TrainIndex>(
      TrainIndex::build(p.split.train, p.data.num_users(), p.data.num_tracks(), p.vocab.table));
  if (name == "random") return random_scorer(p.data.num_tracks(), p.data.num_emotions(), p.seed);
  if (name == "pop") return pop_scorer(index);
  if (name == "ucf") return ucf_scorer(index, opt.neighbors);
  if (name == "icf") return icf_scorer(index, opt.neighbors);
  if (name == "ucf+e") return ucf_scorer(index, opt.neighbors, opt.blend);
  if (name == "icf+e") return icf_scorer(index, opt.neighbors, opt.blend);
  if (name == "ucfe") return ucfe_scorer(index, opt.neighbors);
  if (name == "icfe") return icfe_scorer(index, opt.neighbors);
  if (name == "mf_bpr") {
    return mf_scorer(std::make_shared<const MfBprModel>(train_mf_bpr(p.split, p.data.num_tracks(), hp, p.seed)));
  }
  throw UsageError("unknown method '" + name + "'");
}

inline std::vector<MetricsReport> evaluate_methods(const Prepared& p, const std::vector<std::string>& methods,
                                                   const std::shared_ptr<const ModelState>& model,
                                                   const HyperParams& hp, const MethodOptions& opt,
                                                   std::uint64_t config_hash) {
  const EvaluationProtocol protocol(p.split.test, p.split.train_listened, p.data.num_tracks());
  std::shared_ptr<const TrainIndex> index;
  std::vector<MetricsReport> out;
  for (const auto& m : methods) {
    Scorer s;
    if (m == "hdbn") {
      if (!model) throw UsageError("method 'hdbn' needs a trained model");
      s = model_scorer(model);
    } else {
      s = baseline_scorer(m, p, hp, opt, index);
    }
    out.push_back(evaluate(s, protocol, m, config_hash, p.seed));
  }
  return out;
}

// ----- artifacts -----

inline constexpr char kArtifactMagic[9] = "HDBNARTF";

// Output directory whose files are never changed once written: rewriting
// identical bytes is accepted, anything else is refused.
class Workspace {
 public:
  explicit Workspace(Config cfg) : cfg_(std::move(cfg)), dir_(cfg_.get("out")) {
    std::filesystem::create_directories(dir_);
  }

  const Config& config() const { return cfg_; }
  std::uint64_t hash() const { return cfg_.hash(); }
  std::uint64_t seed() const { return cfg_.seed(); }
  std::filesystem::path path(const std::string& name) const { return dir_ / name; }
  bool exists(const std::string& name) const { return std::filesystem::exists(path(name)); }

  void write(const std::string& name, const std::string& bytes) const {
    const auto p = path(name);
    if (std::filesystem::exists(p)) {
      if (slurp(p) == bytes) return;
      throw UsageError("artifact '" + p.string() + "' already exists with different content; use a fresh output directory");
    }
    const auto tmp = p.string() + ".partial";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw std::runtime_error("cannot write '" + tmp + "'");
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      if (!out) throw std::runtime_error("write failed for '" + tmp + "'");
    }
    std::filesystem::rename(tmp, p);
  }

  std::string read(const std::string& name, const std::string& producer) const {
    const auto p = path(name);
    if (!std::filesystem::exists(p)) {
      throw UsageError("missing artifact '" + p.string() + "': run `hdbn " + producer + "` first");
    }
    return slurp(p);
  }

  // Envelope: magic, config hash, seed, then the payload.
  void write_binary(const std::string& name, const std::vector<char>& payload) const {
    BinaryWriter w;
    w.magic(kArtifactMagic);
    w.u64(hash());
    w.u64(seed());
    std::string bytes(w.buffer().begin(), w.buffer().end());
    bytes.append(payload.begin(), payload.end());
    write(name, bytes);
  }

  // Returns a reader positioned at the payload.
  BinaryReader read_binary(const std::string& name, const std::string& producer) const {
    const auto bytes = read(name, producer);
    BinaryReader r(std::vector<char>(bytes.begin(), bytes.end()));
    r.expect_magic(kArtifactMagic);
    r.u64();  // producer's config hash
    const auto s = r.u64();
    if (s != seed()) {
      throw UsageError("artifact '" + name + "' was produced with seed " + std::to_string(s) + ", current seed is " +
                       std::to_string(seed()));
    }
    return r;
  }

  void write_json(const std::string& name, nlohmann::ordered_json j) const {
    j["config_hash"] = hex64(hash());
    j["seed"] = seed();
    write(name, j.dump(2) + "\n");
  }

  // CSV body plus a trailing provenance comment line.
  void write_csv(const std::string& name, const std::string& body) const {
    write(name, body + "# config_hash=" + hex64(hash()) + " seed=" + std::to_string(seed()) + "\n");
  }

 private:
  static std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read '" + p.string() + "'");
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  }

  Config cfg_;
  std::filesystem::path dir_;
};

inline std::vector<char> serialize_assignment(const GroupAssignment& a) {
  BinaryWriter w;
  w.magic("HDBNGRPS");
  w.u32(1);
  w.ints(a.user_group);
  w.mat(a.centroids);
  w.f64(a.inertia);
  return w.buffer();
}

inline GroupAssignment deserialize_assignment(BinaryReader& r) {
  r.expect_magic("HDBNGRPS");
  if (const auto v = r.u32(); v != 1) throw FormatError("group assignment version mismatch: file has " + std::to_string(v) + ", expected 1");
  GroupAssignment a;
  a.user_group = r.ints();
  a.centroids = r.mat();
  a.inertia = r.f64();
  r.expect_end();
  for (int g : a.user_group) {
    if (g < 0 || g >= a.num_groups()) throw FormatError("group assignment references a missing group");
  }
  return a;
}

inline std::vector<char> serialize_posteriors(const GroupBnnSet& set) {
  BinaryWriter w;
  w.magic("HDBNPSET");
  w.u32(kPosteriorFormatVersion);
  write_posterior(w, set.global);
  w.u64(set.groups.size());
  for (const auto& g : set.groups) write_posterior(w, g);
  return w.buffer();
}

inline GroupBnnSet deserialize_posteriors(BinaryReader& r) {
  r.expect_magic("HDBNPSET");
  if (const auto v = r.u32(); v != kPosteriorFormatVersion) {
    throw FormatError("posterior set version mismatch: file has " + std::to_string(v) + ", expected " +
                      std::to_string(kPosteriorFormatVersion));
  }
  GroupBnnSet s;
  s.global = read_posterior(r);
  s.groups.resize(r.u64());
  for (auto& g : s.groups) g = read_posterior(r);
  r.expect_end();
  return s;
}

// ----- commands -----

namespace cmd {

inline std::vector<char> dataset_bytes(const Dataset& d) {
  BinaryWriter w;
  write_dataset_binary(d, w);
  return w.buffer();
}

inline nlohmann::ordered_json dataset_stats(const Dataset& d) {
  const double cells = static_cast<double>(d.num_users()) * d.num_tracks();
  return {{"users", d.num_users()},
          {"tracks", d.num_tracks()},
          {"emotions", d.num_emotions()},
          {"genres", d.num_genres()},
          {"artists", d.artists.size()},
          {"records", d.interactions.size()},
          {"sparsity", cells > 0 ? 1.0 - static_cast<double>(d.interactions.size()) / cells : 0.0}};
}

inline Prepared load_prepared(const Workspace& ws) {
  auto r = ws.read_binary("dataset.bin", "ingest` or `hdbn synth");
  Dataset d = read_dataset_binary(r);
  r.expect_end();
  return prepare(std::move(d), ws.seed());
}

inline GroupAssignment load_groups(const Workspace& ws) {
  auto r = ws.read_binary("group.bin", "group");
  return deserialize_assignment(r);
}

inline std::shared_ptr<const ModelState> load_trained(const Workspace& ws) {
  auto r = ws.read_binary("train.bin", "train");
  return std::make_shared<const ModelState>(deserialize_model(r));
}

inline int lookup(const Vocabulary& v, const std::string& key, const char* what) {
  const int id = v.find(key);
  if (id < 0) throw UsageError(std::string("unknown ") + what + " '" + key + "'");
  return id;
}

inline void ingest(const Workspace& ws, std::ostream& log) {
  const auto& c = ws.config();
  if (c.get("data.interactions").empty() || c.get("data.music").empty()) {
    throw UsageError("ingest needs data.interactions and data.music");
  }
  const Dataset d = load_dataset(c.get("data.interactions"), c.get("data.music"));
  ws.write_binary("dataset.bin", dataset_bytes(d));
  ws.write_json("ingest.json", dataset_stats(d));
  log << "ingested " << d.interactions.size() << " records (" << d.num_users() << " users, " << d.num_tracks()
      << " tracks, " << d.num_emotions() << " tags)\n";
}

inline void synth(const Workspace& ws, std::ostream& log) {
  const auto sc = ws.config().synth();
  const auto s = synth_generate(sc, ws.seed());
  ws.write_binary("dataset.bin", dataset_bytes(s.dataset));
  nlohmann::ordered_json j;
  j["stats"] = dataset_stats(s.dataset);
  j["generator"] = to_json(sc);
  j["truth"] = to_json(s.truth);
  ws.write_json("synth.json", j);
  log << "synthesized " << s.dataset.interactions.size() << " records\n";
}

inline void group(const Workspace& ws, std::ostream& log) {
  const auto& c = ws.config();
  const Prepared p = load_prepared(ws);
  const auto profiles = prepared_profiles(p);
  int G = c.get_int("groups");
  nlohmann::ordered_json j;
  const auto mode = c.get("group.select");
  if (mode != "fixed" && mode != "elbow") throw UsageError("group.select must be fixed or elbow");
  if (mode == "elbow") {
    const auto cands = c.get_int_list("group.candidates");
    if (cands.empty() || cands.back() > static_cast<int>(profiles.size())) {
      throw UsageError("group.candidates exceed the number of users with training records");
    }
    const auto e = elbow_select(profiles, cands, Rng(ws.seed()).split("elbow").seed(), c.get_int("group.restarts"),
                                c.get_int("group.max_iter"));
    std::ostringstream curve;
    curve.precision(17);
    curve << "G,inertia\n";
    for (const auto& pt : e.curve) curve << pt.groups << ',' << pt.inertia << '\n';
    ws.write_csv("group.curve.csv", curve.str());
    G = e.selected;
    j["selected_by"] = "elbow";
    j["curve"] = nlohmann::ordered_json::array();
    for (const auto& pt : e.curve) j["curve"].push_back({{"G", pt.groups}, {"inertia", pt.inertia}});
  } else {
    j["selected_by"] = "fixed";
  }
  const auto a = fit_groups(p, G, c.get_int("group.max_iter"));
  ws.write_binary("group.bin", serialize_assignment(a));
  std::ostringstream csv;
  csv << "user,group\n";
  for (std::size_t u = 0; u < a.user_group.size(); ++u) csv << p.data.users.name(static_cast<int>(u)) << ',' << a.user_group[u] << '\n';
  ws.write_csv("group.csv", csv.str());
  std::vector<int> sizes(static_cast<std::size_t>(a.num_groups()), 0);
  for (int g : a.user_group) ++sizes[static_cast<std::size_t>(g)];
  j["G"] = G;
  j["inertia"] = a.inertia;
  j["group_sizes"] = sizes;
  ws.write_json("group.json", j);
  log << "grouped users into G=" << G << " groups\n";
}

inline void pretrain(const Workspace& ws, std::ostream& log) {
  const auto hp = ws.config().hyper_params();
  const Prepared p = load_prepared(ws);
  const auto res = run_pretrain(p, hp.pretrain);
  GroupBnnSet set;
  set.global = res.posterior;
  ws.write_binary("pretrain.bin", serialize_posteriors(set));
  std::ostringstream csv;
  csv.precision(17);
  csv << "epoch,data_kl,weight_kl\n";
  for (const auto& r : res.log) csv << r.epoch << ',' << r.data_kl << ',' << r.weight_kl << '\n';
  ws.write_csv("pretrain.csv", csv.str());
  ws.write_json("pretrain.json", {{"records", p.split.train.size()},
                                  {"epochs", res.log.size()},
                                  {"final_data_kl", res.log.empty() ? 0.0 : res.log.back().data_kl},
                                  {"eval_data_kl", evaluate_mood_kl(res.posterior, mood_data(p.split.train, p.vocab, p.moods))}});
  log << "pretrained the global mood model on " << p.split.train.size() << " records\n";
}

inline void finetune(const Workspace& ws, std::ostream& log) {
  const auto hp = ws.config().hyper_params();
  const Prepared p = load_prepared(ws);
  const auto groups = load_groups(ws);
  auto r = ws.read_binary("pretrain.bin", "pretrain");
  const auto base = deserialize_posteriors(r);
  std::vector<FinetuneRow> rows;
  const auto set = run_finetune(p, base.global, groups, hp.finetune, &rows);
  ws.write_binary("finetune.bin", serialize_posteriors(set));
  std::ostringstream csv;
  csv.precision(17);
  csv << "group,records,global_kl,finetuned_kl,relative_improvement\n";
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& row : rows) {
    const double imp = row.global_kl > 0 ? (row.global_kl - row.finetuned_kl) / row.global_kl : 0.0;
    csv << row.group << ',' << row.records << ',' << row.global_kl << ',' << row.finetuned_kl << ',' << imp << '\n';
    arr.push_back({{"group", row.group}, {"records", row.records}, {"global_kl", row.global_kl},
                   {"finetuned_kl", row.finetuned_kl}, {"empty_group_warning", row.warning}});
    if (row.warning) log << "warning: group " << row.group << " has no training records; kept the global model\n";
  }
  ws.write_csv("finetune.csv", csv.str());
  ws.write_json("finetune.json", {{"groups", arr}});
  log << "fine-tuned " << rows.size() << " group mood models\n";
}

inline void train(const Workspace& ws, std::ostream& log) {
  const auto hp = ws.config().hyper_params();
  const Prepared p = load_prepared(ws);
  const auto groups = load_groups(ws);
  auto r = ws.read_binary("finetune.bin", "finetune");
  const auto set = deserialize_posteriors(r);
  if (static_cast<int>(set.groups.size()) != groups.num_groups()) {
    throw UsageError("finetune.bin has " + std::to_string(set.groups.size()) + " group models but group.bin has " +
                     std::to_string(groups.num_groups()) + " groups: rerun `hdbn finetune`");
  }
  TrainResult res;
  try {
    res = run_phase_two(p, groups, set, hp);
  } catch (const TrainingDiverged& e) {
    ws.write_binary("train.last_good.bin", serialize_model(e.last_good()));
    throw;
  }
  ws.write_binary("train.bin", serialize_model(res.model));
  std::ostringstream csv;
  write_train_log_csv(res.log, csv);
  ws.write_csv("train.csv", csv.str());
  ws.write_json("train.json", {{"epochs_run", res.log.size()},
                               {"best_epoch", res.best_epoch},
                               {"stopped_early", res.stopped_early}});
  log << "trained for " << res.log.size() << " epochs (best epoch " << res.best_epoch << ")\n";
}

inline void evaluate(const Workspace& ws, std::ostream& log) {
  const auto& c = ws.config();
  const auto hp = c.hyper_params();
  const Prepared p = load_prepared(ws);
  const auto methods = c.get_list("eval.methods");
  for (const auto& m : methods) {
    if (std::find(baseline_names().begin(), baseline_names().end(), m) == baseline_names().end()) {
      throw UsageError("unknown method '" + m + "' in eval.methods");
    }
  }
  std::shared_ptr<const ModelState> model;
  if (std::find(methods.begin(), methods.end(), "hdbn") != methods.end()) model = load_trained(ws);
  const auto reports = evaluate_methods(p, methods, model, hp, {c.get_int("eval.neighbors"), c.get_double("eval.blend")},
                                        ws.hash());
  std::ostringstream csv;
  write_metrics_table(reports, csv);
  ws.write_csv("evaluate.csv", csv.str());
  ws.write_json("evaluate.json", {{"reports", reports_json(reports)}});
  for (const auto& r : reports) log << r.method << ": HR@10=" << r.means[1].hr << " NDCG@10=" << r.means[1].ndcg << '\n';
}

inline void recommend(const Workspace& ws, std::ostream& log) {
  const auto& c = ws.config();
  const Prepared p = load_prepared(ws);
  const auto model = load_trained(ws);
  if (c.get("recommend.user").empty() || c.get("recommend.tag").empty()) {
    throw UsageError("recommend needs recommend.user and recommend.tag");
  }
  const int u = lookup(p.data.users, c.get("recommend.user"), "user");
  const int e = lookup(p.data.emotions, c.get("recommend.tag"), "emotion tag");
  const int T = c.get_int("recommend.top");
  if (T < 1) throw UsageError("recommend.top must be >= 1");
  const auto list = rank_top_T(*model, u, e, T);
  std::ostringstream csv;
  csv.precision(17);
  csv << "rank,track,score\n";
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < list.size(); ++i) {
    const auto& name = p.data.tracks.name(list.tracks[i]);
    csv << i + 1 << ',' << name << ',' << list.scores[i] << '\n';
    arr.push_back({{"rank", i + 1}, {"track", name}, {"score", list.scores[i]}});
    log << i + 1 << ". " << name << '\n';
  }
  ws.write_csv("recommend.csv", csv.str());
  ws.write_json("recommend.json", {{"user", c.get("recommend.user")}, {"tag", c.get("recommend.tag")}, {"items", arr}});
}

inline void ablate(const Workspace& ws, std::ostream& log) {
  const auto& c = ws.config();
  const auto base = c.hyper_params();
  const Prepared p = load_prepared(ws);
  const auto groups = load_groups(ws);
  // Phase I depends only on whether weights are sampled.
  std::map<bool, GroupBnnSet> phase_one;
  std::vector<MetricsReport> reports;
  for (const auto& v : ablation_variants()) {
    HyperParams hp = base;
    hp.ablation = v.flags;
    const bool sampled = v.flags.preference_within;
    hp.pretrain.sample_weights = hp.finetune.sample_weights = sampled;
    if (!phase_one.count(sampled)) {
      const auto pre = run_pretrain(p, hp.pretrain);
      phase_one[sampled] = run_finetune(p, pre.posterior, groups, hp.finetune);
    }
    const auto res = run_phase_two(p, groups, phase_one[sampled], hp);
    auto model = std::make_shared<const ModelState>(res.model);
    auto rep = evaluate_methods(p, {"hdbn"}, model, hp, {}, ws.hash()).front();
    rep.method = v.name;
    log << v.name << ": HR@10=" << rep.means[1].hr << '\n';
    reports.push_back(rep);
  }
  std::ostringstream csv;
  write_metrics_table(reports, csv);
  ws.write_csv("ablate.csv", csv.str());
  ws.write_json("ablate.json", {{"reports", reports_json(reports)}});
}

inline void sweep_led(const Workspace& ws, std::ostream& log) {
  const auto& c = ws.config();
  const Prepared p = load_prepared(ws);
  const auto model = load_trained(ws);
  const int u = c.get("sweep.user").empty() ? 0 : lookup(p.data.users, c.get("sweep.user"), "user");
  const int e = c.get("sweep.tag").empty() ? 0 : lookup(p.data.emotions, c.get("sweep.tag"), "emotion tag");
  const int dim = c.get_int("sweep.dim");
  const auto grid = c.grid("sweep.grid");
  std::vector<Vec> curve;
  try {
    curve = hdbn::sweep_led(*model, u, e, dim, grid);
  } catch (const std::out_of_range& ex) {
    throw UsageError(ex.what());
  }
  std::ostringstream csv;
  write_sweep_csv(grid, curve, csv);
  ws.write_csv("sweep-led.csv", csv.str());
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    rows.push_back({{"grid_value", grid[i]}, {"mood", std::vector<double>(curve[i].data(), curve[i].data() + curve[i].size())}});
  }
  ws.write_json("sweep-led.json", {{"user", p.data.users.name(u)}, {"tag", p.data.emotions.name(e)}, {"dim", dim}, {"curve", rows}});
  log << "swept latent dimension " << dim << " over " << grid.size() << " points\n";
}

inline void case_study(const Workspace& ws, std::ostream& log) {
  const auto& c = ws.config();
  const Prepared p = load_prepared(ws);
  const auto model = load_trained(ws);
  if (c.get("case.user").empty()) throw UsageError("case-study needs case.user");
  const int u = lookup(p.data.users, c.get("case.user"), "user");
  std::optional<int> tag;
  if (!c.get("case.tag").empty()) tag = lookup(p.data.emotions, c.get("case.tag"), "emotion tag");
  const int T = c.get_int("case.top");
  if (T < 1) throw UsageError("case.top must be >= 1");
  const auto cs = hdbn::case_study(*model, p.split.train, u, T, tag);
  std::ostringstream csv;
  write_case_study_csv(cs, p.data.emotions.names(), p.data.tracks.names(), csv);
  ws.write_csv("case-study.csv", csv.str());
  auto j = to_json(cs, p.data.emotions.names(), p.data.tracks.names());
  j["user"] = c.get("case.user");
  ws.write_json("case-study.json", j);
  log << "case study for " << c.get("case.user") << ": " << cs.rows.size() << " rows\n";
}

}  // namespace cmd

inline const std::vector<std::pair<std::string, void (*)(const Workspace&, std::ostream&)>>& commands() {
  static const std::vector<std::pair<std::string, void (*)(const Workspace&, std::ostream&)>> table = {
      {"ingest", cmd::ingest},       {"synth", cmd::synth},         {"group", cmd::group},
      {"pretrain", cmd::pretrain},   {"finetune", cmd::finetune},   {"train", cmd::train},
      {"evaluate", cmd::evaluate},   {"recommend", cmd::recommend}, {"ablate", cmd::ablate},
      {"sweep-led", cmd::sweep_led}, {"case-study", cmd::case_study}};
  return table;
}

}  // namespace hdbn
