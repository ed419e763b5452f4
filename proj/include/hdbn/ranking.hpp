#pragma once

// Top-T selection over a dense score vector with train-history exclusion.
// Order: descending score, then ascending track id.

#include "hdbn/numerics.hpp"

#include <algorithm>
#include <vector>

namespace hdbn {

struct RankedList {
  std::vector<int> tracks;
  std::vector<double> scores;

  std::size_t size() const { return tracks.size(); }
};

inline bool ranks_before(double score_a, int a, double score_b, int b) {
  return score_a > score_b || (score_a == score_b && a < b);
}

// `excluded` is sorted. `keep` (if >= 0) stays a candidate even when listed
// in `excluded`. Returns min(T, #candidates) entries.
inline RankedList top_T(const Vec& scores, const std::vector<int>& excluded, int T, int keep = -1) {
  if (T < 1) throw std::invalid_argument("top_T: T must be >= 1");
  std::vector<int> cand;
  cand.reserve(static_cast<std::size_t>(scores.size()));
  for (int v = 0; v < static_cast<int>(scores.size()); ++v) {
    if (v != keep && std::binary_search(excluded.begin(), excluded.end(), v)) continue;
    cand.push_back(v);
  }
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(T), cand.size());
  auto cmp = [&](int a, int b) { return ranks_before(scores[a], a, scores[b], b); };
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end(), cmp);
  RankedList out;
  for (std::size_t i = 0; i < take; ++i) {
    out.tracks.push_back(cand[i]);
    out.scores.push_back(scores[cand[i]]);
  }
  return out;
}

// 1-based position of `target` among the candidates (target always counted).
inline std::size_t rank_of(const Vec& scores, const std::vector<int>& excluded, int target) {
  std::size_t ahead = 0;
  const double s = scores[target];
  for (int v = 0; v < static_cast<int>(scores.size()); ++v) {
    if (v == target || std::binary_search(excluded.begin(), excluded.end(), v)) continue;
    if (ranks_before(scores[v], v, s, target)) ++ahead;
  }
  return ahead + 1;
}

}  // namespace hdbn
