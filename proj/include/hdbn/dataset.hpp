#pragma once

// Interaction and music-metadata ingestion, emotion-tag encoding, the
// record-level 8:1:1 split and negative sampling over unlistened tracks.

#include "hdbn/binary_io.hpp"
#include "hdbn/numerics.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace hdbn {

inline constexpr int kMoodCount = 9;
inline constexpr int kEmotionDim = 16;

inline const std::array<std::string, kMoodCount>& mood_names() {
  static const std::array<std::string, kMoodCount> names = {
      "amazement", "solemnity", "tenderness", "nostalgia", "calmness",
      "power",     "joyful_activation", "tension", "sadness"};
  return names;
}

enum Mood : int {
  kAmazement = 0,
  kSolemnity,
  kTenderness,
  kNostalgia,
  kCalmness,
  kPower,
  kJoyfulActivation,
  kTension,
  kSadness
};

// Invalid input data; carries the 1-based line number when known.
class DataError : public std::runtime_error {
 public:
  DataError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line > 0 ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

inline bool is_simplex(const Eigen::Ref<const Vec>& p, double tol = 1e-6) {
  if (p.size() == 0) return false;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (!std::isfinite(p[i]) || p[i] < 0.0) return false;
  }
  return std::abs(p.sum() - 1.0) <= tol;
}

struct Interaction {
  int user = 0;
  int emotion = 0;
  int music = 0;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

struct MusicMeta {
  int music = 0;
  int genre = 0;
  int year = 0;
  int artist = 0;
  Vec mood = Vec::Constant(kMoodCount, 1.0 / kMoodCount);
};

// String <-> dense id table with first-seen ordering.
class Vocabulary {
 public:
  int intern(const std::string& key) {
    auto [it, inserted] = index_.try_emplace(key, static_cast<int>(names_.size()));
    if (inserted) names_.push_back(key);
    return it->second;
  }
  int find(const std::string& key) const {
    auto it = index_.find(key);
    return it == index_.end() ? -1 : it->second;
  }
  const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }

  static Vocabulary from_names(const std::vector<std::string>& names) {
    Vocabulary v;
    for (const auto& n : names) v.intern(n);
    return v;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
};

// Fixed seeded unit-norm encodings of the emotion tags (one column per tag).
struct EmotionVocab {
  std::vector<std::string> tags;
  Mat table;  // kEmotionDim x M

  int size() const { return static_cast<int>(tags.size()); }
  Eigen::Index dim() const { return table.rows(); }

  Vec encode(int tag) const {
    if (tag < 0 || tag >= size()) throw std::out_of_range("emotion tag id " + std::to_string(tag));
    return table.col(tag);
  }

  static EmotionVocab seeded(std::vector<std::string> tags, std::uint64_t seed,
                             Eigen::Index dim = kEmotionDim) {
    Rng rng = Rng(seed).split("emotion-vocab");
    EmotionVocab v;
    v.table = rng.normal_mat(dim, static_cast<Eigen::Index>(tags.size()));
    for (Eigen::Index c = 0; c < v.table.cols(); ++c) v.table.col(c).normalize();
    v.tags = std::move(tags);
    return v;
  }
};

struct Dataset {
  std::vector<Interaction> interactions;
  std::vector<MusicMeta> music;  // indexed by music id
  Vocabulary users;
  Vocabulary emotions;
  Vocabulary tracks;
  Vocabulary genres;
  Vocabulary artists;

  int num_users() const { return users.size(); }
  int num_tracks() const { return tracks.size(); }
  int num_emotions() const { return emotions.size(); }
  int num_genres() const { return genres.size(); }

  // 9 x V matrix of track moods.
  Mat mood_matrix() const {
    Mat m(kMoodCount, num_tracks());
    for (const auto& meta : music) m.col(meta.music) = meta.mood;
    return m;
  }
  std::vector<int> genre_of_track() const {
    std::vector<int> g(music.size());
    for (const auto& meta : music) g[static_cast<std::size_t>(meta.music)] = meta.genre;
    return g;
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  for (auto& f : fields) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return fields;
}

// Calls row(fields, line_no) for every non-empty data row.
template <class F>
void read_csv(const std::string& path, std::size_t expected_columns, F&& row) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() != expected_columns) {
      throw DataError(path + ": expected " + std::to_string(expected_columns) + " columns, got " +
                          std::to_string(fields.size()),
                      line_no);
    }
    if (header) {
      header = false;
      continue;
    }
    row(fields, line_no);
  }
  if (header) throw DataError(path + ": missing header row");
}

inline double parse_double(const std::string& s, std::size_t line, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(std::string("invalid ") + what + " '" + s + "'", line);
  }
}

}  // namespace detail

struct InteractionTable {
  std::vector<Interaction> interactions;
  Vocabulary users;
  Vocabulary emotions;
  Vocabulary tracks;
};

// Reads `user,emotion,music` rows; ids are assigned in first-seen order.
inline InteractionTable load_interactions(const std::string& path) {
  InteractionTable t;
  detail::read_csv(path, 3, [&](const std::vector<std::string>& f, std::size_t line) {
    for (std::size_t i = 0; i < 3; ++i) {
      if (f[i].empty()) {
        static const char* names[] = {"user", "emotion", "music"};
        throw DataError(std::string("empty ") + names[i] + " field", line);
      }
    }
    t.interactions.push_back({t.users.intern(f[0]), t.emotions.intern(f[1]), t.tracks.intern(f[2])});
  });
  if (t.interactions.empty()) throw DataError(path + ": no interactions");
  return t;
}

// Reads `music,genre,year,artist,m1..m9` rows. Tracks unknown to `tracks` are
// appended to it so metadata-only tracks remain rankable candidates.
inline std::vector<MusicMeta> load_music_meta(const std::string& path, Vocabulary& tracks,
                                              Vocabulary& genres, Vocabulary& artists) {
  std::vector<MusicMeta> rows;
  std::unordered_set<int> seen;
  detail::read_csv(path, 4 + kMoodCount, [&](const std::vector<std::string>& f, std::size_t line) {
    if (f[0].empty()) throw DataError("empty music field", line);
    MusicMeta m;
    m.music = tracks.intern(f[0]);
    if (!seen.insert(m.music).second) throw DataError("duplicate music '" + f[0] + "'", line);
    m.genre = genres.intern(f[1]);
    m.year = f[2].empty() ? 0 : static_cast<int>(detail::parse_double(f[2], line, "year"));
    m.artist = artists.intern(f[3]);
    m.mood = Vec(kMoodCount);
    for (int i = 0; i < kMoodCount; ++i) {
      m.mood[i] = detail::parse_double(f[4 + static_cast<std::size_t>(i)], line, "mood value");
    }
    if (!is_simplex(m.mood)) {
      throw DataError("mood distribution of '" + f[0] + "' is not on the simplex", line);
    }
    rows.push_back(std::move(m));
  });
  return rows;
}

inline void validate(const Dataset& d) {
  if (d.interactions.empty()) throw DataError("dataset has no interactions");
  if (static_cast<int>(d.music.size()) != d.num_tracks()) {
    throw DataError("music metadata covers " + std::to_string(d.music.size()) + " of " +
                    std::to_string(d.num_tracks()) + " tracks");
  }
  for (std::size_t i = 0; i < d.music.size(); ++i) {
    const auto& m = d.music[i];
    if (m.music != static_cast<int>(i)) throw DataError("music metadata not indexed by id");
    if (!is_simplex(m.mood)) throw DataError("mood of track '" + d.tracks.name(m.music) + "' is not a simplex");
    if (m.genre < 0 || m.genre >= d.num_genres()) throw DataError("genre id out of range");
  }
  for (const auto& r : d.interactions) {
    if (r.user < 0 || r.user >= d.num_users() || r.emotion < 0 || r.emotion >= d.num_emotions() ||
        r.music < 0 || r.music >= d.num_tracks()) {
      throw DataError("interaction index out of range");
    }
  }
}

inline Dataset load_dataset(const std::string& interactions_path, const std::string& music_path) {
  auto table = load_interactions(interactions_path);
  Dataset d;
  d.interactions = std::move(table.interactions);
  d.users = std::move(table.users);
  d.emotions = std::move(table.emotions);
  d.tracks = std::move(table.tracks);
  auto meta = load_music_meta(music_path, d.tracks, d.genres, d.artists);
  d.music.assign(static_cast<std::size_t>(d.num_tracks()), MusicMeta{});
  std::vector<bool> covered(d.music.size(), false);
  for (auto& m : meta) {
    covered[static_cast<std::size_t>(m.music)] = true;
    d.music[static_cast<std::size_t>(m.music)] = std::move(m);
  }
  for (std::size_t i = 0; i < covered.size(); ++i) {
    if (!covered[i]) throw DataError("track '" + d.tracks.name(static_cast<int>(i)) + "' has no metadata row");
  }
  validate(d);
  return d;
}

inline void write_dataset_csv(const Dataset& d, const std::string& interactions_path,
                              const std::string& music_path) {
  std::ofstream out(interactions_path);
  if (!out) throw std::runtime_error("cannot write '" + interactions_path + "'");
  out << "user,emotion,music\n";
  for (const auto& r : d.interactions) {
    out << d.users.name(r.user) << ',' << d.emotions.name(r.emotion) << ',' << d.tracks.name(r.music) << '\n';
  }
  std::ofstream meta(music_path);
  if (!meta) throw std::runtime_error("cannot write '" + music_path + "'");
  meta << "music,genre,year,artist";
  for (int i = 1; i <= kMoodCount; ++i) meta << ",m" << i;
  meta << '\n';
  meta.precision(17);
  for (const auto& m : d.music) {
    meta << d.tracks.name(m.music) << ',' << d.genres.name(m.genre) << ',' << m.year << ','
         << d.artists.name(m.artist);
    for (int i = 0; i < kMoodCount; ++i) meta << ',' << m.mood[i];
    meta << '\n';
  }
}

// Canonical binary form of a validated dataset.
inline void write_dataset_binary(const Dataset& d, BinaryWriter& w) {
  w.magic("HDBNDATA");
  w.u32(1);
  auto names = [&](const Vocabulary& v) {
    w.u64(static_cast<std::uint64_t>(v.size()));
    for (const auto& n : v.names()) w.str(n);
  };
  names(d.users);
  names(d.emotions);
  names(d.tracks);
  names(d.genres);
  names(d.artists);
  w.u64(d.interactions.size());
  for (const auto& r : d.interactions) {
    w.i64(r.user);
    w.i64(r.emotion);
    w.i64(r.music);
  }
  for (const auto& m : d.music) {
    w.i64(m.genre);
    w.i64(m.year);
    w.i64(m.artist);
    w.vec(m.mood);
  }
}

inline Dataset read_dataset_binary(BinaryReader& r) {
  r.expect_magic("HDBNDATA");
  const auto version = r.u32();
  if (version != 1) {
    throw FormatError("dataset version mismatch: file has " + std::to_string(version) + ", expected 1");
  }
  auto names = [&]() {
    std::vector<std::string> n(r.u64());
    for (auto& s : n) s = r.str();
    return Vocabulary::from_names(n);
  };
  Dataset d;
  d.users = names();
  d.emotions = names();
  d.tracks = names();
  d.genres = names();
  d.artists = names();
  d.interactions.resize(r.u64());
  for (auto& x : d.interactions) {
    x.user = static_cast<int>(r.i64());
    x.emotion = static_cast<int>(r.i64());
    x.music = static_cast<int>(r.i64());
  }
  d.music.resize(static_cast<std::size_t>(d.num_tracks()));
  for (std::size_t i = 0; i < d.music.size(); ++i) {
    auto& m = d.music[i];
    m.music = static_cast<int>(i);
    m.genre = static_cast<int>(r.i64());
    m.year = static_cast<int>(r.i64());
    m.artist = static_cast<int>(r.i64());
    m.mood = r.vec();
  }
  validate(d);
  return d;
}

struct SplitDataset {
  std::vector<Interaction> train;
  std::vector<Interaction> validation;
  std::vector<Interaction> test;
  // Records whose user has no training record; kept so the split remains a
  // partition of the input.
  std::vector<Interaction> cold;
  // Sorted, de-duplicated training tracks per user.
  std::vector<std::vector<int>> train_listened;

  int num_users() const { return static_cast<int>(train_listened.size()); }
  bool listened(int user, int music) const {
    const auto& l = train_listened.at(static_cast<std::size_t>(user));
    return std::binary_search(l.begin(), l.end(), music);
  }
};

inline std::vector<std::vector<int>> listened_index(const std::vector<Interaction>& records,
                                                    int num_users) {
  std::vector<std::vector<int>> idx(static_cast<std::size_t>(num_users));
  for (const auto& r : records) idx[static_cast<std::size_t>(r.user)].push_back(r.music);
  for (auto& l : idx) {
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
  }
  return idx;
}

// Counts for a record-level 8:1:1 split of n records.
struct SplitSizes {
  std::size_t train, validation, test;
};
inline SplitSizes split_sizes(std::size_t n) {
  const auto train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(n)));
  const auto validation = (n - train) / 2;
  return {train, validation, n - train - validation};
}

// Random record-level 8:1:1 partition. Validation/test records of users with
// no training record are moved to `cold`.
inline SplitDataset split_8_1_1(const std::vector<Interaction>& data, int num_users,
                                std::uint64_t seed) {
  if (data.empty()) throw std::invalid_argument("split_8_1_1: empty data");
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = Rng(seed).split("split");
  rng.shuffle(order.begin(), order.end());
  const auto sizes = split_sizes(data.size());
  SplitDataset s;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& rec = data[order[i]];
    if (i < sizes.train) {
      s.train.push_back(rec);
    } else if (i < sizes.train + sizes.validation) {
      s.validation.push_back(rec);
    } else {
      s.test.push_back(rec);
    }
  }
  s.train_listened = listened_index(s.train, num_users);
  auto drop_cold = [&](std::vector<Interaction>& part) {
    std::vector<Interaction> kept;
    for (const auto& r : part) {
      (s.train_listened[static_cast<std::size_t>(r.user)].empty() ? s.cold : kept).push_back(r);
    }
    part = std::move(kept);
  };
  drop_cold(s.validation);
  drop_cold(s.test);
  return s;
}

struct NegativeDraw {
  std::vector<int> tracks;
  // True when the eligible pool held fewer than k tracks.
  bool short_pool = false;
};

// Uniform sampling of tracks a user has not listened to in training.
class NegativeSampler {
 public:
  NegativeSampler(std::vector<std::vector<int>> listened, int num_tracks)
      : listened_(std::move(listened)), num_tracks_(num_tracks) {}

  int num_tracks() const { return num_tracks_; }

  NegativeDraw sample(int user, int positive, int k, Rng& rng) const {
    if (k < 1) throw std::invalid_argument("negative_sample: k must be >= 1");
    const auto& seen = listened_.at(static_cast<std::size_t>(user));
    auto excluded = [&](int v) {
      return v == positive || std::binary_search(seen.begin(), seen.end(), v);
    };
    std::size_t blocked = seen.size();
    if (!std::binary_search(seen.begin(), seen.end(), positive) && positive >= 0 &&
        positive < num_tracks_) {
      ++blocked;
    }
    const std::size_t pool = static_cast<std::size_t>(num_tracks_) - blocked;
    NegativeDraw draw;
    if (pool <= static_cast<std::size_t>(k)) {
      for (int v = 0; v < num_tracks_; ++v) {
        if (!excluded(v)) draw.tracks.push_back(v);
      }
      draw.short_pool = pool < static_cast<std::size_t>(k);
      return draw;
    }
    if (pool * 2 < static_cast<std::size_t>(num_tracks_)) {
      // Dense exclusion: enumerate the pool and take a partial shuffle.
      std::vector<int> eligible;
      eligible.reserve(pool);
      for (int v = 0; v < num_tracks_; ++v) {
        if (!excluded(v)) eligible.push_back(v);
      }
      for (int i = 0; i < k; ++i) {
        const auto j = static_cast<std::size_t>(i) + rng.below(eligible.size() - static_cast<std::size_t>(i));
        std::swap(eligible[static_cast<std::size_t>(i)], eligible[j]);
        draw.tracks.push_back(eligible[static_cast<std::size_t>(i)]);
      }
      return draw;
    }
    while (static_cast<int>(draw.tracks.size()) < k) {
      const int v = static_cast<int>(rng.below(static_cast<std::size_t>(num_tracks_)));
      if (excluded(v)) continue;
      if (std::find(draw.tracks.begin(), draw.tracks.end(), v) != draw.tracks.end()) continue;
      draw.tracks.push_back(v);
    }
    return draw;
  }

 private:
  std::vector<std::vector<int>> listened_;
  int num_tracks_;
};

}  // namespace hdbn
