#pragma once

// Dense numerics shared by every model component: seeded random streams,
// closed-form divergences, simplex helpers and a finite-difference checker.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hdbn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Raised when a training objective becomes non-finite.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kProbabilityFloor = 1e-12;
inline constexpr double kSigmaOffset = 1e-6;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view text,
                             std::uint64_t hash = 0xCBF29CE484222325ULL) {
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001B3ULL;
  }
  return hash;
}

// Seeded random stream. Substreams derived with split() depend only on the
// seed and the label, never on how much of the parent has been consumed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(splitmix64(seed)) {}

  std::uint64_t seed() const { return seed_; }

  Rng split(std::string_view label) const {
    return Rng(splitmix64(seed_ ^ fnv1a64(label)));
  }
  Rng split(std::string_view label, std::uint64_t index) const {
    return Rng(splitmix64(splitmix64(seed_ ^ fnv1a64(label)) + index));
  }

  double normal() { return normal_(engine_); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  // Uniform integer in [0, n).
  std::size_t below(std::size_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: empty range");
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  Vec normal_vec(Eigen::Index n) {
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }
  Mat normal_mat(Eigen::Index rows, Eigen::Index cols) {
    Mat m(rows, cols);
    // Column-major fill keeps the draw order identical to a flat loop.
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal();
    return m;
  }

  template <class It>
  void shuffle(It first, It last) {
    // Explicit Fisher-Yates so the permutation is fixed by this code, not by
    // the standard library's std::shuffle.
    auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) {
      std::size_t j = below(i);
      std::iter_swap(first + (i - 1), first + j);
    }
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// Inverse of softplus for y > 0.
inline double softplus_inverse(double y) {
  if (y <= 0) throw std::domain_error("softplus_inverse: non-positive argument");
  if (y > 30.0) return y + std::log1p(-std::exp(-y));
  return std::log(std::expm1(y));
}

// -log(sigmoid(x)), the pairwise ranking loss on a score margin.
inline double log1p_exp_neg(double x) { return softplus(-x); }

inline bool all_finite(const Eigen::Ref<const Mat>& m) { return m.allFinite(); }

namespace detail {
inline void require_same_size(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": length mismatch (" +
                                std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}
inline void require_positive(const Eigen::Ref<const Vec>& sigma, const char* what) {
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    if (!(sigma[i] > 0.0)) {
      throw std::domain_error(std::string(what) + ": sigma must be strictly positive");
    }
  }
}
}  // namespace detail

// KL(N(mu, sigma^2) || N(0, 1)), summed over dimensions.
inline double gaussian_kl_to_std(const Eigen::Ref<const Vec>& mu,
                                 const Eigen::Ref<const Vec>& sigma) {
  detail::require_same_size(mu.size(), sigma.size(), "gaussian_kl_to_std");
  detail::require_positive(sigma, "gaussian_kl_to_std");
  double total = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const double var = sigma[i] * sigma[i];
    total += mu[i] * mu[i] + var - std::log(var) - 1.0;
  }
  return 0.5 * total;
}

// KL(N(q_mu, q_sigma^2) || N(p_mu, p_sigma^2)) for diagonal Gaussians.
inline double gaussian_kl(const Eigen::Ref<const Vec>& q_mu, const Eigen::Ref<const Vec>& q_sigma,
                          const Eigen::Ref<const Vec>& p_mu, const Eigen::Ref<const Vec>& p_sigma) {
  detail::require_same_size(q_mu.size(), q_sigma.size(), "gaussian_kl");
  detail::require_same_size(q_mu.size(), p_mu.size(), "gaussian_kl");
  detail::require_same_size(q_mu.size(), p_sigma.size(), "gaussian_kl");
  detail::require_positive(q_sigma, "gaussian_kl");
  detail::require_positive(p_sigma, "gaussian_kl");
  double total = 0.0;
  for (Eigen::Index i = 0; i < q_mu.size(); ++i) {
    const double qv = q_sigma[i] * q_sigma[i];
    const double pv = p_sigma[i] * p_sigma[i];
    const double diff = q_mu[i] - p_mu[i];
    total += std::log(pv / qv) + qv / pv + diff * diff / pv - 1.0;
  }
  return 0.5 * total;
}

// KL(o || l) over a discrete support. Terms with o_i == 0 contribute nothing;
// l_i == 0 where o_i > 0 is an infinite divergence and is rejected.
inline double categorical_kl(const Eigen::Ref<const Vec>& o, const Eigen::Ref<const Vec>& l) {
  detail::require_same_size(o.size(), l.size(), "categorical_kl");
  double total = 0.0;
  for (Eigen::Index i = 0; i < o.size(); ++i) {
    if (o[i] <= 0.0) continue;
    if (!(l[i] > 0.0)) {
      throw std::domain_error("categorical_kl: infinite divergence at index " + std::to_string(i));
    }
    total += o[i] * std::log(o[i] / l[i]);
  }
  return total;
}

// Training-side variant: predicted probabilities are floored before the log.
inline double categorical_kl_floored(const Eigen::Ref<const Vec>& o,
                                     const Eigen::Ref<const Vec>& l) {
  detail::require_same_size(o.size(), l.size(), "categorical_kl_floored");
  double total = 0.0;
  for (Eigen::Index i = 0; i < o.size(); ++i) {
    if (o[i] <= 0.0) continue;
    total += o[i] * (std::log(o[i]) - std::log(std::max(l[i], kProbabilityFloor)));
  }
  return total;
}

inline Vec softmax(const Eigen::Ref<const Vec>& v) {
  if (!v.allFinite()) throw NumericalError("softmax: non-finite input");
  const double shift = v.maxCoeff();
  Vec out = (v.array() - shift).exp();
  out /= out.sum();
  return out;
}

// Column-wise softmax.
inline Mat softmax_columns(const Eigen::Ref<const Mat>& logits) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) out.col(c) = softmax(logits.col(c));
  return out;
}

// Backward of a column-wise softmax: given dL/dp returns dL/dlogits.
inline Mat softmax_columns_backward(const Eigen::Ref<const Mat>& probs,
                                    const Eigen::Ref<const Mat>& grad_probs) {
  Mat out(probs.rows(), probs.cols());
  for (Eigen::Index c = 0; c < probs.cols(); ++c) {
    const double inner = probs.col(c).dot(grad_probs.col(c));
    out.col(c) = probs.col(c).array() * (grad_probs.col(c).array() - inner);
  }
  return out;
}

// Mean of squared differences over all elements.
inline double mse(const Eigen::Ref<const Vec>& a, const Eigen::Ref<const Vec>& b) {
  detail::require_same_size(a.size(), b.size(), "mse");
  if (a.size() == 0) return 0.0;
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

// mu + sigma * eps with eps ~ N(0, 1) drawn from rng.
inline Vec reparam_sample(const Eigen::Ref<const Vec>& mu, const Eigen::Ref<const Vec>& sigma,
                          Rng& rng) {
  detail::require_same_size(mu.size(), sigma.size(), "reparam_sample");
  Vec out(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    if (sigma[i] < 0.0) throw std::domain_error("reparam_sample: negative sigma");
    out[i] = mu[i] + sigma[i] * rng.normal();
  }
  return out;
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

// Relative error with an absolute floor so that near-zero gradients compare
// on an absolute scale.
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Compares analytic gradients against central differences. `loss` must be a
// deterministic function of the values behind `params` (noise frozen).
// Each coordinate tries `steps` in order and keeps the smallest error,
// stopping once it drops below `tol`. A large step can straddle a ReLU kink
// and a small one loses digits when the loss value dwarfs the gradient, so a
// short ladder separates a wrong derivative from an unlucky step size.
inline GradCheckReport grad_check(const std::function<double()>& loss,
                                  std::span<double* const> params,
                                  std::span<const double> analytic,
                                  std::span<const double> steps, double tol) {
  detail::require_same_size(static_cast<Eigen::Index>(params.size()),
                            static_cast<Eigen::Index>(analytic.size()), "grad_check");
  if (steps.empty()) throw std::invalid_argument("grad_check: no step sizes");
  GradCheckReport report;
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i];
    const double saved = *p;
    double err = std::numeric_limits<double>::infinity();
    double numeric = 0.0;
    for (double h : steps) {
      *p = saved + h;
      const double up = loss();
      *p = saved - h;
      const double down = loss();
      *p = saved;
      const double n = (up - down) / (2.0 * h);
      const double e = relative_error(analytic[i], n);
      if (e < err) {
        err = e;
        numeric = n;
      }
      if (err < tol) break;
    }
    if (err > report.max_rel_error || report.checked == 0) {
      report.max_rel_error = err;
      report.worst_index = i;
      report.worst_analytic = analytic[i];
      report.worst_numeric = numeric;
    }
    ++report.checked;
  }
  return report;
}

inline GradCheckReport grad_check(const std::function<double()>& loss,
                                  std::span<double* const> params,
                                  std::span<const double> analytic, double eps = 1e-5) {
  const double steps[] = {eps};
  return grad_check(loss, params, analytic, steps, 0.0);
}

}  // namespace hdbn
