#pragma once

// User grouping: genre-proportion profiles, seeded K-means (k-means++ init)
// and elbow selection of the group count on the Inertia(G) curve.

#include "hdbn/dataset.hpp"

#include <fstream>
#include <limits>
#include <map>

namespace hdbn {

struct GenreProfile {
  int user = 0;
  Vec proportions;
};

// One profile per user with at least one training record, in user-id order.
inline std::vector<GenreProfile> genre_profiles(const SplitDataset& split,
                                                const std::vector<int>& genre_of_track,
                                                int num_genres) {
  if (split.train.empty()) throw std::invalid_argument("genre_profiles: empty training split");
  std::vector<Vec> counts(static_cast<std::size_t>(split.num_users()), Vec::Zero(num_genres));
  for (const auto& r : split.train) {
    counts[static_cast<std::size_t>(r.user)][genre_of_track.at(static_cast<std::size_t>(r.music))] += 1.0;
  }
  std::vector<GenreProfile> out;
  for (int u = 0; u < split.num_users(); ++u) {
    const Vec& c = counts[static_cast<std::size_t>(u)];
    const double total = c.sum();
    if (total <= 0.0) continue;
    out.push_back({u, c / total});
  }
  return out;
}

inline Mat profile_matrix(const std::vector<GenreProfile>& profiles) {
  if (profiles.empty()) return {};
  Mat m(profiles.front().proportions.size(), static_cast<Eigen::Index>(profiles.size()));
  for (std::size_t i = 0; i < profiles.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = profiles[i].proportions;
  return m;
}

struct KMeansResult {
  std::vector<int> labels;  // per point
  Mat centroids;            // dim x G
  double inertia = 0.0;
  // Inertia after every assignment step; non-increasing.
  std::vector<double> trace;
  int iterations = 0;
};

namespace detail {

inline int nearest_centroid(const Mat& points, Eigen::Index i, const Mat& centroids, double* dist) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.cols(); ++c) {
    const double d = (points.col(i) - centroids.col(c)).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  if (dist != nullptr) *dist = best_d;
  return best;
}

inline Mat kmeanspp_init(const Mat& points, int k, Rng& rng) {
  const Eigen::Index n = points.cols();
  Mat centroids(points.rows(), k);
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  Eigen::Index first = static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(n)));
  centroids.col(0) = points.col(first);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[static_cast<std::size_t>(i)] = std::min(d2[static_cast<std::size_t>(i)],
                                                 (points.col(i) - centroids.col(c - 1)).squaredNorm());
      total += d2[static_cast<std::size_t>(i)];
    }
    Eigen::Index chosen = 0;
    if (total <= 0.0) {
      // All remaining mass is on existing centroids; fall back to uniform.
      chosen = static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(n)));
    } else {
      double x = rng.uniform() * total;
      chosen = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        x -= d2[static_cast<std::size_t>(i)];
        if (x < 0.0 && d2[static_cast<std::size_t>(i)] > 0.0) {
          chosen = i;
          break;
        }
      }
    }
    centroids.col(c) = points.col(chosen);
  }
  return centroids;
}

}  // namespace detail

// Lloyd iterations from a k-means++ start. An empty cluster is re-seeded at
// the point farthest from its current centroid (lowest index on ties).
inline KMeansResult kmeans(const Mat& points, int k, std::uint64_t seed, int max_iter = 100) {
  const Eigen::Index n = points.cols();
  if (k < 1) throw std::invalid_argument("kmeans: G must be >= 1");
  if (k > n) throw std::invalid_argument("kmeans: G exceeds the number of profiles");
  Rng rng = Rng(seed).split("kmeans-init");
  KMeansResult res;
  res.centroids = detail::kmeanspp_init(points, k, rng);
  res.labels.assign(static_cast<std::size_t>(n), -1);
  std::vector<double> dist(static_cast<std::size_t>(n));

  auto assign = [&]() {
    bool changed = false;
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = detail::nearest_centroid(points, i, res.centroids, &dist[static_cast<std::size_t>(i)]);
      if (c != res.labels[static_cast<std::size_t>(i)]) changed = true;
      res.labels[static_cast<std::size_t>(i)] = c;
      inertia += dist[static_cast<std::size_t>(i)];
    }
    res.inertia = inertia;
    res.trace.push_back(inertia);
    return changed;
  };

  assign();
  for (res.iterations = 1; res.iterations <= max_iter; ++res.iterations) {
    Mat sums = Mat::Zero(points.rows(), k);
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.col(res.labels[static_cast<std::size_t>(i)]) += points.col(i);
      ++counts[static_cast<std::size_t>(res.labels[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        res.centroids.col(c) = sums.col(c) / counts[static_cast<std::size_t>(c)];
        continue;
      }
      Eigen::Index far = 0;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double d = (points.col(i) - res.centroids.col(res.labels[static_cast<std::size_t>(i)])).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      res.centroids.col(c) = points.col(far);
      res.labels[static_cast<std::size_t>(far)] = c;
    }
    if (!assign()) break;
  }
  res.iterations = std::min(res.iterations, max_iter);
  return res;
}

struct GroupAssignment {
  std::vector<int> user_group;  // every user
  Mat centroids;                // genres x G
  double inertia = 0.0;

  int num_groups() const { return static_cast<int>(centroids.cols()); }
  int group_of(int user) const { return user_group.at(static_cast<std::size_t>(user)); }
};

// Maps clustered profiles back to users; users without a profile join the
// largest group (lowest index on ties).
inline GroupAssignment assign_groups(const std::vector<GenreProfile>& profiles,
                                     const KMeansResult& km, int num_users) {
  GroupAssignment a;
  a.centroids = km.centroids;
  a.inertia = km.inertia;
  a.user_group.assign(static_cast<std::size_t>(num_users), -1);
  std::vector<int> sizes(static_cast<std::size_t>(km.centroids.cols()), 0);
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    a.user_group[static_cast<std::size_t>(profiles[i].user)] = km.labels[i];
    ++sizes[static_cast<std::size_t>(km.labels[i])];
  }
  const int largest = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  for (auto& g : a.user_group) {
    if (g < 0) g = largest;
  }
  return a;
}

inline GroupAssignment group_users(const std::vector<GenreProfile>& profiles, int num_users, int groups,
                                   std::uint64_t seed, int max_iter = 100) {
  return assign_groups(profiles, kmeans(profile_matrix(profiles), groups, seed, max_iter), num_users);
}

struct ElbowPoint {
  int groups = 0;
  double inertia = 0.0;
};

struct ElbowResult {
  std::vector<ElbowPoint> curve;
  int selected = 0;
};

// Index-based second difference; picks the interior candidate with the
// largest positive value, or the smallest candidate when none is positive.
inline int select_elbow(const std::vector<ElbowPoint>& curve) {
  if (curve.size() < 3) throw std::invalid_argument("elbow: need at least 3 candidates");
  for (std::size_t i = 1; i < curve.size(); ++i) {
    if (curve[i].groups <= curve[i - 1].groups) {
      throw std::invalid_argument("elbow: candidates must be strictly ascending");
    }
  }
  int best = curve.front().groups;
  double best_d2 = 0.0;
  for (std::size_t i = 1; i + 1 < curve.size(); ++i) {
    const double d2 = curve[i - 1].inertia - 2.0 * curve[i].inertia + curve[i + 1].inertia;
    if (d2 > best_d2) {
      best_d2 = d2;
      best = curve[i].groups;
    }
  }
  return best;
}

// Best-of-`restarts` inertia for each candidate G, then elbow selection.
inline ElbowResult elbow_select(const std::vector<GenreProfile>& profiles,
                                const std::vector<int>& candidates, std::uint64_t seed,
                                int restarts = 5, int max_iter = 100) {
  if (candidates.size() < 3) throw std::invalid_argument("elbow: need at least 3 candidates");
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    if (candidates[i] <= candidates[i - 1]) {
      throw std::invalid_argument("elbow: candidates must be strictly ascending");
    }
  }
  const Mat points = profile_matrix(profiles);
  ElbowResult res;
  const Rng root(seed);
  for (int g : candidates) {
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < restarts; ++r) {
      const auto km = kmeans(points, g, root.split("elbow", static_cast<std::uint64_t>(g) * 1000 + static_cast<std::uint64_t>(r)).seed(), max_iter);
      best = std::min(best, km.inertia);
    }
    res.curve.push_back({g, best});
  }
  res.selected = select_elbow(res.curve);
  return res;
}

inline void write_curve_csv(const std::vector<ElbowPoint>& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out.precision(17);
  out << "G,inertia\n";
  for (const auto& p : curve) out << p.groups << ',' << p.inertia << '\n';
}

inline void write_assignment_csv(const GroupAssignment& a, const Vocabulary& users, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "user,group\n";
  for (std::size_t u = 0; u < a.user_group.size(); ++u) {
    out << users.name(static_cast<int>(u)) << ',' << a.user_group[u] << '\n';
  }
}

}  // namespace hdbn
