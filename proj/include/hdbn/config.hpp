#pragma once

// Flat `key = value` experiment configuration with two named presets.
// Precedence: preset defaults < config file < command-line overrides.

#include "hdbn/recommender.hpp"
#include "hdbn/synth.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace hdbn {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// key -> {large, small}
inline const std::map<std::string, std::pair<std::string, std::string>>& config_defaults() {
  static const std::map<std::string, std::pair<std::string, std::string>> d = {
      {"preset", {"large", "small"}},
      {"seed", {"42", "42"}},
      {"out", {"out", "out"}},
      {"data.interactions", {"", ""}},
      {"data.music", {"", ""}},
      {"synth.users", {"400", "400"}},
      {"synth.tracks", {"100", "100"}},
      {"synth.tags", {"8", "8"}},
      {"synth.groups", {"2", "2"}},
      {"synth.genres", {"4", "4"}},
      {"synth.records_per_user", {"12", "12"}},
      {"synth.emotion_across", {"0", "0"}},
      {"synth.emotion_within", {"0", "0"}},
      {"synth.preference_across", {"1", "1"}},
      {"synth.preference_within", {"0", "0"}},
      {"synth.genre_affinity", {"0.9", "0.9"}},
      {"synth.mood_sharpness", {"10", "10"}},
      {"synth.primary_mood_mass", {"0.7", "0.7"}},
      {"groups", {"50", "10"}},
      {"group.select", {"fixed", "fixed"}},
      {"group.candidates", {"2,3,4,5,6,7,8", "2,3,4,5,6,7,8"}},
      {"group.restarts", {"5", "5"}},
      {"group.max_iter", {"100", "100"}},
      {"pretrain.lr", {"0.01", "0.01"}},
      {"pretrain.batch", {"1024", "512"}},
      {"pretrain.epochs", {"50", "50"}},
      {"pretrain.alpha", {"1e-05", "1e-06"}},
      {"pretrain.optimizer", {"sgd", "sgd"}},
      {"finetune.lr", {"0.001", "0.001"}},
      {"finetune.batch", {"64", "64"}},
      {"finetune.epochs", {"50", "50"}},
      {"finetune.alpha", {"1e-05", "1e-06"}},
      {"finetune.optimizer", {"sgd", "sgd"}},
      {"train.lr", {"0.05", "0.05"}},
      {"train.batch", {"512", "512"}},
      {"train.epochs", {"30", "30"}},
      {"train.patience", {"5", "5"}},
      {"train.optimizer", {"adam", "adam"}},
      {"train.neg_k", {"10", "7"}},
      {"train.init_scale", {"0.05", "0.05"}},
      {"lambda1", {"0.01", "0.005"}},
      {"lambda2", {"0.05", "0.005"}},
      {"lambda3", {"1e-06", "5e-06"}},
      {"lambda4", {"0.0001", "5e-05"}},
      {"ablation.ehau", {"on", "on"}},
      {"ablation.ehwu", {"on", "on"}},
      {"ablation.phau", {"on", "on"}},
      {"ablation.phwu", {"on", "on"}},
      {"eval.methods", {"hdbn,random,pop,ucf,icf,mf_bpr,ucfe,icfe,ucf+e,icf+e",
                        "hdbn,random,pop,ucf,icf,mf_bpr,ucfe,icfe,ucf+e,icf+e"}},
      {"eval.neighbors", {"50", "50"}},
      {"eval.blend", {"0.5", "0.5"}},
      {"recommend.user", {"", ""}},
      {"recommend.tag", {"", ""}},
      {"recommend.top", {"10", "10"}},
      {"sweep.user", {"", ""}},
      {"sweep.tag", {"", ""}},
      {"sweep.dim", {"0", "0"}},
      {"sweep.grid", {"-3:3:25", "-3:3:25"}},
      {"case.user", {"", ""}},
      {"case.tag", {"", ""}},
      {"case.top", {"5", "5"}},
  };
  return d;
}

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace detail

class Config {
 public:
  static Config preset(const std::string& name) {
    if (name != "large" && name != "small") throw UsageError("unknown preset '" + name + "' (expected large or small)");
    Config c;
    for (const auto& [k, v] : detail::config_defaults()) c.values_[k] = name == "large" ? v.first : v.second;
    return c;
  }

  // `key = value` lines; '#' starts a comment. Returns entries in file order.
  static std::vector<std::pair<std::string, std::string>> parse(std::istream& in, const std::string& source) {
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw UsageError(source + ":" + std::to_string(n) + ": expected 'key = value'");
      out.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
    return out;
  }

  static std::vector<std::pair<std::string, std::string>> parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config file '" + path + "'");
    return parse(in, path);
  }

  // Preset chosen by the last `preset` entry in overrides, then file, else large.
  static Config resolve(const std::vector<std::pair<std::string, std::string>>& file_entries,
                        const std::vector<std::pair<std::string, std::string>>& overrides) {
    std::string name = "large";
    for (const auto* list : {&file_entries, &overrides}) {
      for (const auto& [k, v] : *list) {
        if (k == "preset") name = v;
      }
    }
    Config c = preset(name);
    for (const auto* list : {&file_entries, &overrides}) {
      for (const auto& [k, v] : *list) c.set(k, v);
    }
    return c;
  }

  void set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) throw UsageError("unknown config key '" + key + "'");
    values_[key] = value;
  }

  const std::string& get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw std::logic_error("config key not defined: " + key);
    return it->second;
  }

  int get_int(const std::string& key) const {
    const auto& s = get(key);
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(s, &pos);
      if (pos != s.size() || v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) throw 0;
      return static_cast<int>(v);
    } catch (...) {
      throw UsageError("config key '" + key + "' expects an integer, got '" + s + "'");
    }
  }

  std::uint64_t get_u64(const std::string& key) const {
    const auto& s = get(key);
    try {
      std::size_t pos = 0;
      if (!s.empty() && s[0] == '-') throw 0;
      const auto v = std::stoull(s, &pos);
      if (pos != s.size()) throw 0;
      return v;
    } catch (...) {
      throw UsageError("config key '" + key + "' expects a non-negative integer, got '" + s + "'");
    }
  }

  double get_double(const std::string& key) const {
    const auto& s = get(key);
    try {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size() || !std::isfinite(v)) throw 0;
      return v;
    } catch (...) {
      throw UsageError("config key '" + key + "' expects a number, got '" + s + "'");
    }
  }

  bool get_bool(const std::string& key) const {
    const auto& s = get(key);
    if (s == "on" || s == "true" || s == "1" || s == "yes") return true;
    if (s == "off" || s == "false" || s == "0" || s == "no") return false;
    throw UsageError("config key '" + key + "' expects on/off, got '" + s + "'");
  }

  std::vector<std::string> get_list(const std::string& key) const { return detail::split_list(get(key)); }

  std::vector<int> get_int_list(const std::string& key) const {
    std::vector<int> out;
    for (const auto& item : get_list(key)) {
      try {
        std::size_t pos = 0;
        out.push_back(std::stoi(item, &pos));
        if (pos != item.size()) throw 0;
      } catch (...) {
        throw UsageError("config key '" + key + "' expects a list of integers, got '" + get(key) + "'");
      }
    }
    return out;
  }

  // Canonical text of every key except the output directory.
  std::string canonical() const {
    std::string s;
    for (const auto& [k, v] : values_) {
      if (k == "out") continue;
      s += k + " = " + v + "\n";
    }
    return s;
  }

  std::uint64_t hash() const { return fnv1a64(canonical()); }
  std::uint64_t seed() const { return get_u64("seed"); }

  const std::map<std::string, std::string>& values() const { return values_; }

  HyperParams hyper_params() const {
    HyperParams h;
    h.groups = get_int("groups");
    h.neg_k = get_int("train.neg_k");
    h.batch = get_int("train.batch");
    h.lr = get_double("train.lr");
    h.epochs = get_int("train.epochs");
    h.patience = get_int("train.patience");
    h.optimizer = optimizer("train.optimizer");
    h.init_scale = get_double("train.init_scale");
    h.lambda1 = get_double("lambda1");
    h.lambda2 = get_double("lambda2");
    h.lambda3 = get_double("lambda3");
    h.lambda4 = get_double("lambda4");
    h.ablation.emotion_across = get_bool("ablation.ehau");
    h.ablation.emotion_within = get_bool("ablation.ehwu");
    h.ablation.preference_across = get_bool("ablation.phau");
    h.ablation.preference_within = get_bool("ablation.phwu");
    for (const auto& [prefix, cfg] : {std::pair<std::string, BnnTrainConfig*>{"pretrain.", &h.pretrain},
                                      std::pair<std::string, BnnTrainConfig*>{"finetune.", &h.finetune}}) {
      cfg->lr = get_double(prefix + "lr");
      cfg->batch = get_int(prefix + "batch");
      cfg->epochs = get_int(prefix + "epochs");
      cfg->alpha = get_double(prefix + "alpha");
      cfg->optimizer = optimizer(prefix + "optimizer");
      cfg->sample_weights = h.ablation.preference_within;
    }
    try {
      h.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return h;
  }

  SynthConfig synth() const {
    SynthConfig s;
    s.users = get_int("synth.users");
    s.tracks = get_int("synth.tracks");
    s.tags = get_int("synth.tags");
    s.groups = get_int("synth.groups");
    s.genres = get_int("synth.genres");
    s.records_per_user = get_int("synth.records_per_user");
    s.emotion_across = get_double("synth.emotion_across");
    s.emotion_within = get_double("synth.emotion_within");
    s.preference_across = get_double("synth.preference_across");
    s.preference_within = get_double("synth.preference_within");
    s.genre_affinity = get_double("synth.genre_affinity");
    s.mood_sharpness = get_double("synth.mood_sharpness");
    s.primary_mood_mass = get_double("synth.primary_mood_mass");
    try {
      validate(s);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return s;
  }

  // lo:hi:count, inclusive, count >= 2.
  std::vector<double> grid(const std::string& key) const {
    const auto parts = detail::split_list(get(key), ':');
    try {
      if (parts.size() != 3) throw 0;
      const double lo = std::stod(parts[0]);
      const double hi = std::stod(parts[1]);
      const int n = std::stoi(parts[2]);
      if (n < 2 || !(hi > lo)) throw 0;
      std::vector<double> g;
      for (int i = 0; i < n; ++i) g.push_back(lo + (hi - lo) * i / (n - 1));
      return g;
    } catch (...) {
      throw UsageError("config key '" + key + "' expects lo:hi:count with hi > lo and count >= 2");
    }
  }

 private:
  OptimizerKind optimizer(const std::string& key) const {
    try {
      return parse_optimizer(get(key));
    } catch (const std::invalid_argument& e) {
      throw UsageError("config key '" + key + "': " + e.what());
    }
  }

  std::map<std::string, std::string> values_;
};

}  // namespace hdbn
