#pragma once

// Seeded synthetic listening data with controllable heterogeneity.
//
// Each latent user group owns a block of genres and a tag -> mood mapping.
// Four knobs correspond to the four heterogeneity channels:
//   emotion_across    per (user, tag) chance that the user reads the tag as
//                     the neighbouring mood
//   emotion_within    per event chance of the same neighbour shift
//   preference_across per (group, tag) chance that the group's preferred mood
//                     departs from the shared mapping
//   preference_within per event chance of picking a uniformly random mood

#include "hdbn/dataset.hpp"

#include <nlohmann/json.hpp>

#include <numeric>
#include <utility>

namespace hdbn {

struct SynthConfig {
  int users = 200;
  int tracks = 50;
  int tags = 8;
  int groups = 2;
  int genres = 4;
  int records_per_user = 12;
  double emotion_across = 0.0;
  double emotion_within = 0.0;
  double preference_across = 1.0;
  double preference_within = 0.0;
  // Probability mass a user puts on their group's genre block.
  double genre_affinity = 0.9;
  // Exponent scale on a track's mass at the target mood.
  double mood_sharpness = 10.0;
  // Mass on each track's primary mood.
  double primary_mood_mass = 0.7;
};

struct SynthTruth {
  std::vector<int> user_group;
  std::vector<std::vector<int>> group_tag_mood;  // [group][tag]
  std::vector<std::vector<int>> group_genres;    // genres per group block
  std::vector<int> track_primary_mood;
  std::vector<int> track_genre;
};

struct SynthData {
  Dataset dataset;
  SynthTruth truth;
};

// Mood reached by "reversing" the arousal/valence of another mood.
inline int opposite_mood(int mood) {
  static const int table[kMoodCount] = {kSadness,  kSolemnity,        kPower,
                                        kTension,  kJoyfulActivation, kTenderness,
                                        kCalmness, kNostalgia,        kAmazement};
  return table[mood];
}

inline void validate(const SynthConfig& c) {
  auto fail = [](const std::string& m) { throw std::invalid_argument("synth config: " + m); };
  if (c.users < 1 || c.tracks < 2 || c.tags < 1 || c.genres < 1 || c.records_per_user < 1) {
    fail("users/tracks/tags/genres/records_per_user must be positive");
  }
  if (c.groups < 1) fail("groups must be >= 1");
  if (c.groups > c.users) fail("more groups than users");
  if (c.groups > c.genres) fail("every group needs at least one genre");
  if (c.records_per_user >= c.tracks) fail("records_per_user must be below the track count");
  for (double p : {c.emotion_across, c.emotion_within, c.preference_across, c.preference_within,
                   c.genre_affinity}) {
    if (p < 0.0 || p > 1.0) fail("probabilities must lie in [0, 1]");
  }
  if (c.primary_mood_mass <= 0.0 || c.primary_mood_mass > 1.0) fail("primary_mood_mass out of (0, 1]");
}

inline SynthData synth_generate(const SynthConfig& config, std::uint64_t seed) {
  validate(config);
  const Rng root(seed);
  SynthData out;
  auto& d = out.dataset;
  auto& truth = out.truth;

  for (int t = 0; t < config.tags; ++t) d.emotions.intern("tag" + std::to_string(t));
  for (int g = 0; g < config.genres; ++g) d.genres.intern("genre" + std::to_string(g));
  for (int v = 0; v < config.tracks; ++v) d.tracks.intern("track" + std::to_string(v));
  for (int u = 0; u < config.users; ++u) d.users.intern("user" + std::to_string(u));
  d.artists.intern("artist0");

  // Genre blocks: genres are dealt round-robin to groups.
  truth.group_genres.assign(static_cast<std::size_t>(config.groups), {});
  for (int g = 0; g < config.genres; ++g) {
    truth.group_genres[static_cast<std::size_t>(g % config.groups)].push_back(g);
  }

  // Tracks: every (genre, primary mood) cell is filled round-robin, then the
  // cell list is shuffled; up to two secondary moods share the remaining mass.
  {
    Rng rng = root.split("synth-tracks");
    std::vector<std::pair<int, int>> cells;
    for (int v = 0; v < config.tracks; ++v) {
      const int c = v % (config.genres * kMoodCount);
      cells.emplace_back(c / kMoodCount, c % kMoodCount);
    }
    rng.shuffle(cells.begin(), cells.end());
    truth.track_primary_mood.resize(static_cast<std::size_t>(config.tracks));
    truth.track_genre.resize(static_cast<std::size_t>(config.tracks));
    for (int v = 0; v < config.tracks; ++v) {
      const auto [genre, primary] = cells[static_cast<std::size_t>(v)];
      MusicMeta m;
      m.music = v;
      m.genre = genre;
      m.year = 1990 + static_cast<int>(rng.below(30));
      m.artist = 0;
      m.mood = Vec::Zero(kMoodCount);
      m.mood[primary] = config.primary_mood_mass;
      const double rest = 1.0 - config.primary_mood_mass;
      if (rest > 0.0) {
        const int extra = 1 + static_cast<int>(rng.below(2));
        std::vector<int> pool;
        for (int k = 0; k < kMoodCount; ++k) {
          if (k != primary) pool.push_back(k);
        }
        rng.shuffle(pool.begin(), pool.end());
        for (int k = 0; k < extra; ++k) m.mood[pool[static_cast<std::size_t>(k)]] += rest / extra;
      }
      truth.track_primary_mood[static_cast<std::size_t>(v)] = primary;
      truth.track_genre[static_cast<std::size_t>(v)] = genre;
      d.music.push_back(std::move(m));
    }
  }

  // Tag -> mood maps per group.
  {
    Rng rng = root.split("synth-moodmap");
    std::vector<int> base(static_cast<std::size_t>(config.tags));
    std::vector<int> order(kMoodCount);
    for (int k = 0; k < kMoodCount; ++k) order[static_cast<std::size_t>(k)] = k;
    rng.shuffle(order.begin(), order.end());
    for (int t = 0; t < config.tags; ++t) base[static_cast<std::size_t>(t)] = order[static_cast<std::size_t>(t % kMoodCount)];
    truth.group_tag_mood.assign(static_cast<std::size_t>(config.groups), base);
    for (int g = 1; g < config.groups; ++g) {
      for (int t = 0; t < config.tags; ++t) {
        if (rng.uniform() >= config.preference_across) continue;
        const int b = base[static_cast<std::size_t>(t)];
        const int mood = g == 1 ? opposite_mood(b) : (b + 1 + 2 * (g - 1)) % kMoodCount;
        truth.group_tag_mood[static_cast<std::size_t>(g)][static_cast<std::size_t>(t)] = mood;
      }
    }
  }

  // Users: balanced group membership in a shuffled order.
  Rng user_rng = root.split("synth-users");
  truth.user_group.resize(static_cast<std::size_t>(config.users));
  {
    std::vector<int> groups(static_cast<std::size_t>(config.users));
    for (int u = 0; u < config.users; ++u) groups[static_cast<std::size_t>(u)] = u % config.groups;
    user_rng.shuffle(groups.begin(), groups.end());
    truth.user_group = groups;
  }

  std::vector<double> genre_weight(static_cast<std::size_t>(config.genres));
  std::vector<double> track_weight(static_cast<std::size_t>(config.tracks));
  Rng event_rng = root.split("synth-events");
  for (int u = 0; u < config.users; ++u) {
    const int group = truth.user_group[static_cast<std::size_t>(u)];
    const auto& block = truth.group_genres[static_cast<std::size_t>(group)];
    const double off_block = config.genres > static_cast<int>(block.size())
                                 ? (1.0 - config.genre_affinity) /
                                       static_cast<double>(config.genres - static_cast<int>(block.size()))
                                 : 0.0;
    for (int g = 0; g < config.genres; ++g) {
      const bool in_block = std::find(block.begin(), block.end(), g) != block.end();
      genre_weight[static_cast<std::size_t>(g)] =
          in_block ? config.genre_affinity / static_cast<double>(block.size()) : off_block;
    }
    // Per-user tag usage and per-user reading of each tag.
    std::vector<double> tag_weight(static_cast<std::size_t>(config.tags));
    std::vector<bool> shifted(static_cast<std::size_t>(config.tags));
    for (int t = 0; t < config.tags; ++t) {
      tag_weight[static_cast<std::size_t>(t)] = 0.2 + user_rng.uniform();
      shifted[static_cast<std::size_t>(t)] = user_rng.uniform() < config.emotion_across;
    }
    const double tag_total = std::accumulate(tag_weight.begin(), tag_weight.end(), 0.0);
    std::vector<bool> used(static_cast<std::size_t>(config.tracks), false);
    for (int r = 0; r < config.records_per_user; ++r) {
      double pick = event_rng.uniform() * tag_total;
      int tag = config.tags - 1;
      for (int t = 0; t < config.tags; ++t) {
        pick -= tag_weight[static_cast<std::size_t>(t)];
        if (pick < 0) {
          tag = t;
          break;
        }
      }
      int mood = truth.group_tag_mood[static_cast<std::size_t>(group)][static_cast<std::size_t>(tag)];
      if (shifted[static_cast<std::size_t>(tag)]) mood = (mood + 1) % kMoodCount;
      if (event_rng.uniform() < config.emotion_within) mood = (mood + 1) % kMoodCount;
      if (event_rng.uniform() < config.preference_within) mood = static_cast<int>(event_rng.below(kMoodCount));
      double total = 0.0;
      for (int v = 0; v < config.tracks; ++v) {
        const auto& meta = d.music[static_cast<std::size_t>(v)];
        const double w = used[static_cast<std::size_t>(v)]
                             ? 0.0
                             : genre_weight[static_cast<std::size_t>(meta.genre)] *
                                   std::exp(config.mood_sharpness * meta.mood[mood]);
        track_weight[static_cast<std::size_t>(v)] = w;
        total += w;
      }
      double x = event_rng.uniform() * total;
      int chosen = -1;
      for (int v = 0; v < config.tracks; ++v) {
        if (track_weight[static_cast<std::size_t>(v)] <= 0.0) continue;
        chosen = v;
        x -= track_weight[static_cast<std::size_t>(v)];
        if (x < 0) break;
      }
      used[static_cast<std::size_t>(chosen)] = true;
      d.interactions.push_back({u, tag, chosen});
    }
  }
  validate(d);
  return out;
}

inline nlohmann::json to_json(const SynthConfig& c) {
  return {{"users", c.users},
          {"tracks", c.tracks},
          {"tags", c.tags},
          {"groups", c.groups},
          {"genres", c.genres},
          {"records_per_user", c.records_per_user},
          {"emotion_across", c.emotion_across},
          {"emotion_within", c.emotion_within},
          {"preference_across", c.preference_across},
          {"preference_within", c.preference_within},
          {"genre_affinity", c.genre_affinity},
          {"mood_sharpness", c.mood_sharpness},
          {"primary_mood_mass", c.primary_mood_mass}};
}

inline nlohmann::json to_json(const SynthTruth& t) {
  return {{"user_group", t.user_group},
          {"group_tag_mood", t.group_tag_mood},
          {"group_genres", t.group_genres},
          {"track_primary_mood", t.track_primary_mood},
          {"track_genre", t.track_genre}};
}

}  // namespace hdbn
