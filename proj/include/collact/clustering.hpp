#pragma once
// User clustering in latent space: L2 k-means (k-means++ seeding, Lloyd
// iterations) and cosine k-medoids (seeded BUILD + SWAP), plus selection of
// seed clusters for collectives.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "collact/datasets.hpp"
#include "collact/error.hpp"
#include "collact/format.hpp"
#include "collact/recsys.hpp"
#include "collact/rng.hpp"

namespace collact {

enum class DistanceMetric { l2, cosine };
enum class ClusterMethod { l2_kmeans, cosine_kmedoids };
enum class SeedMode { uniform, max_distance };

inline DistanceMetric metric_of(ClusterMethod m) {
  return m == ClusterMethod::l2_kmeans ? DistanceMetric::l2 : DistanceMetric::cosine;
}

inline std::string to_string(ClusterMethod m) {
  return m == ClusterMethod::l2_kmeans ? "l2_kmeans" : "cosine_kmedoids";
}

inline std::string to_string(SeedMode m) { return m == SeedMode::uniform ? "uniform" : "max_distance"; }

inline double distance(std::span<const double> a, std::span<const double> b, DistanceMetric metric) {
  if (a.size() != b.size()) throw ValidationError("distance between vectors of different length");
  if (metric == DistanceMetric::l2) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(s);
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  if (na == 0.0 || nb == 0.0) throw ValidationError("cosine distance of a zero vector");
  // Rounding can push the cosine slightly outside [-1, 1].
  return std::max(0.0, 1.0 - dot / (std::sqrt(na) * std::sqrt(nb)));
}

using UserVectors = std::map<UserId, std::vector<double>>;

inline UserVectors user_vectors(const LatentFactors& model) {
  UserVectors out;
  for (std::size_t u = 0; u < model.user_ids.size(); ++u) {
    const auto v = model.user_vec(u);
    out.emplace(model.user_ids[u], std::vector<double>(v.begin(), v.end()));
  }
  return out;
}

struct Clustering {
  ClusterMethod method = ClusterMethod::l2_kmeans;
  int q = 0;
  std::uint64_t seed = 0;
  std::vector<UserId> users;      // ascending
  std::vector<int> assignments;   // parallel to users, in [0, q)
  std::vector<std::vector<double>> centers;
  std::vector<UserId> medoids;    // k-medoids only, parallel to centers
  double objective = 0.0;         // k-means: inertia; k-medoids: total distance
  std::vector<double> cost_trace;  // after each Lloyd iteration / accepted swap
  int iterations = 0;

  DistanceMetric metric() const { return metric_of(method); }

  int cluster_of(UserId u) const {
    const auto it = std::lower_bound(users.begin(), users.end(), u);
    if (it == users.end() || *it != u) throw ValidationError("user " + std::to_string(u) + " not clustered");
    return assignments[static_cast<std::size_t>(it - users.begin())];
  }

  // Members of each cluster, ascending ids.
  std::vector<std::vector<UserId>> members() const {
    std::vector<std::vector<UserId>> out(static_cast<std::size_t>(q));
    for (std::size_t k = 0; k < users.size(); ++k) out[static_cast<std::size_t>(assignments[k])].push_back(users[k]);
    return out;
  }

  friend bool operator==(const Clustering&, const Clustering&) = default;
};

inline constexpr int kMaxClusterIterations = 100;
inline constexpr double kCentroidShiftTolerance = 1e-4;

namespace detail {

inline double squared_l2(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

inline bool not_above(double next, double prev) { return next <= prev + 1e-12 * std::max(1.0, std::abs(prev)); }

inline Clustering kmeans(const std::vector<std::vector<double>>& x, int q, Rng& rng) {
  const std::size_t n = x.size();
  const auto uq = static_cast<std::size_t>(q);
  Clustering c;
  c.method = ClusterMethod::l2_kmeans;

  // k-means++ seeding
  std::vector<std::size_t> chosen{static_cast<std::size_t>(rng.below(n))};
  std::vector<double> d2(n);
  std::vector<char> is_chosen(n, 0);
  is_chosen[chosen[0]] = 1;
  for (std::size_t j = 0; j < n; ++j) d2[j] = squared_l2(x[j], x[chosen[0]]);
  while (chosen.size() < uq) {
    auto pick = rng.categorical(d2);
    if (pick == n) {  // every point coincides with a chosen center
      std::vector<std::size_t> rest;
      for (std::size_t j = 0; j < n; ++j)
        if (!is_chosen[j]) rest.push_back(j);
      pick = rest[rng.below(rest.size())];
    }
    chosen.push_back(pick);
    is_chosen[pick] = 1;
    for (std::size_t j = 0; j < n; ++j) d2[j] = std::min(d2[j], squared_l2(x[j], x[pick]));
  }
  for (auto idx : chosen) c.centers.push_back(x[idx]);

  std::vector<int> assign(n, 0);
  const std::size_t dim = x.front().size();
  double prev = std::numeric_limits<double>::infinity();
  for (int iter = 1; iter <= kMaxClusterIterations; ++iter) {
    c.iterations = iter;
    std::vector<double> own(n);
    for (std::size_t j = 0; j < n; ++j) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < uq; ++k) {
        const double d = squared_l2(x[j], c.centers[k]);
        if (d < best) {
          best = d;
          assign[j] = static_cast<int>(k);
        }
      }
      own[j] = best;
    }
    // Re-seed empty clusters with the point farthest from its centroid.
    std::vector<std::size_t> sizes(uq, 0);
    for (int a : assign) ++sizes[static_cast<std::size_t>(a)];
    for (std::size_t k = 0; k < uq; ++k) {
      if (sizes[k] != 0) continue;
      std::size_t far = n;
      for (std::size_t j = 0; j < n; ++j) {
        if (sizes[static_cast<std::size_t>(assign[j])] < 2) continue;
        if (far == n || own[j] > own[far]) far = j;
      }
      --sizes[static_cast<std::size_t>(assign[far])];
      assign[far] = static_cast<int>(k);
      sizes[k] = 1;
      own[far] = 0.0;
      c.centers[k] = x[far];
    }
    std::vector<std::vector<double>> next(uq, std::vector<double>(dim, 0.0));
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t f = 0; f < dim; ++f) next[static_cast<std::size_t>(assign[j])][f] += x[j][f];
    double shift = 0.0;
    for (std::size_t k = 0; k < uq; ++k) {
      for (auto& v : next[k]) v /= static_cast<double>(sizes[k]);
      shift = std::max(shift, std::sqrt(squared_l2(next[k], c.centers[k])));
    }
    c.centers = std::move(next);
    double inertia = 0.0;
    for (std::size_t j = 0; j < n; ++j) inertia += squared_l2(x[j], c.centers[static_cast<std::size_t>(assign[j])]);
    if (!not_above(inertia, prev)) throw std::logic_error("k-means inertia increased");
    c.cost_trace.push_back(inertia);
    prev = inertia;
    if (shift < kCentroidShiftTolerance) break;
  }
  c.assignments = std::move(assign);
  c.objective = prev;
  return c;
}

inline Clustering kmedoids(const std::vector<std::vector<double>>& x, int q, Rng& rng) {
  const std::size_t n = x.size();
  const auto uq = static_cast<std::size_t>(q);
  std::vector<double> dm(n * n, 0.0);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) dm[a * n + b] = dm[b * n + a] = distance(x[a], x[b], DistanceMetric::cosine);
  const auto dist = [&](std::size_t a, std::size_t b) { return dm[a * n + b]; };

  // BUILD: random first medoid, then greedy additions.
  std::vector<std::size_t> med{static_cast<std::size_t>(rng.below(n))};
  std::vector<char> is_med(n, 0);
  is_med[med[0]] = 1;
  std::vector<double> nearest(n);
  for (std::size_t j = 0; j < n; ++j) nearest[j] = dist(j, med[0]);
  while (med.size() < uq) {
    std::size_t best_o = n;
    double best_gain = -1.0;
    for (std::size_t o = 0; o < n; ++o) {
      if (is_med[o]) continue;
      double gain = 0.0;
      for (std::size_t j = 0; j < n; ++j) gain += std::max(0.0, nearest[j] - dist(j, o));
      if (gain > best_gain) {
        best_gain = gain;
        best_o = o;
      }
    }
    med.push_back(best_o);
    is_med[best_o] = 1;
    for (std::size_t j = 0; j < n; ++j) nearest[j] = std::min(nearest[j], dist(j, best_o));
  }

  std::vector<std::size_t> slot(n);
  std::vector<double> second(n);
  const auto refresh = [&]() {
    double cost = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double d1 = std::numeric_limits<double>::infinity(), d2 = d1;
      std::size_t s1 = 0;
      for (std::size_t k = 0; k < uq; ++k) {
        const double d = dist(j, med[k]);
        if (d < d1) {
          d2 = d1;
          d1 = d;
          s1 = k;
        } else if (d < d2) {
          d2 = d;
        }
      }
      if (is_med[j]) {  // a medoid always owns itself, even with duplicate vectors
        s1 = static_cast<std::size_t>(std::find(med.begin(), med.end(), j) - med.begin());
        d1 = 0.0;
      }
      nearest[j] = d1;
      second[j] = d2;
      slot[j] = s1;
      cost += d1;
    }
    return cost;
  };

  Clustering c;
  c.method = ClusterMethod::cosine_kmedoids;
  double cost = refresh();
  for (int iter = 1; iter <= kMaxClusterIterations; ++iter) {
    double best_delta = 0.0;
    std::size_t best_k = uq, best_o = n;
    for (std::size_t k = 0; k < uq; ++k) {
      for (std::size_t o = 0; o < n; ++o) {
        if (is_med[o]) continue;
        double delta = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double dj = dist(j, o);
          const double base = slot[j] == k ? second[j] : nearest[j];
          delta += std::min(base, dj) - nearest[j];
        }
        if (delta < best_delta) {
          best_delta = delta;
          best_k = k;
          best_o = o;
        }
      }
    }
    if (best_k == uq || !(best_delta < -1e-12 * std::max(1.0, cost))) break;
    is_med[med[best_k]] = 0;
    med[best_k] = best_o;
    is_med[best_o] = 1;
    const double next = refresh();
    if (!(next < cost)) throw std::logic_error("k-medoids swap did not decrease cost");
    cost = next;
    c.cost_trace.push_back(cost);
    c.iterations = iter;
  }
  c.assignments.resize(n);
  for (std::size_t j = 0; j < n; ++j) c.assignments[j] = static_cast<int>(slot[j]);
  for (auto m : med) c.centers.push_back(x[m]);
  c.objective = cost;
  c.medoids.reserve(uq);
  for (auto m : med) c.medoids.push_back(static_cast<UserId>(m));  // positions; mapped to ids by caller
  return c;
}

}  // namespace detail

inline Clustering cluster_users(const UserVectors& vectors, int q, ClusterMethod method, Rng& rng) {
  if (q < 2) throw ValidationError("need at least 2 clusters");
  if (vectors.size() < static_cast<std::size_t>(q))
    throw ValidationError("fewer users (" + std::to_string(vectors.size()) + ") than clusters (" +
                          std::to_string(q) + ")");
  std::vector<UserId> users;
  std::vector<std::vector<double>> x;
  for (const auto& [u, v] : vectors) {
    if (!x.empty() && v.size() != x.front().size()) throw ValidationError("user vectors differ in length");
    users.push_back(u);
    x.push_back(v);
  }
  const std::uint64_t seed = rng.seed();
  Clustering c = method == ClusterMethod::l2_kmeans ? detail::kmeans(x, q, rng) : detail::kmedoids(x, q, rng);
  for (auto& m : c.medoids) m = users[static_cast<std::size_t>(m)];
  c.q = q;
  c.seed = seed;
  c.users = std::move(users);
  return c;
}

// Uniform: C distinct clusters at random. Max distance: the C-subset whose
// minimum pairwise center distance is largest; ties go to the
// lexicographically first subset. Returned ascending in max-distance mode and
// in draw order in uniform mode.
inline std::vector<int> select_seed_clusters(const Clustering& clustering, int count, SeedMode mode, Rng& rng) {
  const int q = clustering.q;
  if (count < 1) throw ValidationError("need at least one seed cluster");
  if (count > q) throw ValidationError("more seed clusters requested than clusters");
  if (mode == SeedMode::uniform) {
    std::vector<int> pool(static_cast<std::size_t>(q));
    std::iota(pool.begin(), pool.end(), 0);
    for (int k = 0; k < count; ++k) {
      const auto j = static_cast<std::size_t>(k) + rng.below(static_cast<std::uint64_t>(q - k));
      std::swap(pool[static_cast<std::size_t>(k)], pool[j]);
    }
    pool.resize(static_cast<std::size_t>(count));
    return pool;
  }
  const auto uq = static_cast<std::size_t>(q);
  std::vector<double> cd(uq * uq, 0.0);
  for (std::size_t a = 0; a < uq; ++a)
    for (std::size_t b = a + 1; b < uq; ++b)
      cd[a * uq + b] = cd[b * uq + a] = distance(clustering.centers[a], clustering.centers[b], clustering.metric());

  std::vector<int> current(static_cast<std::size_t>(count)), best;
  double best_score = -1.0;
  // Lexicographic enumeration of count-subsets.
  std::iota(current.begin(), current.end(), 0);
  while (true) {
    double score = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < current.size(); ++a)
      for (std::size_t b = a + 1; b < current.size(); ++b)
        score = std::min(score, cd[static_cast<std::size_t>(current[a]) * uq + static_cast<std::size_t>(current[b])]);
    if (count == 1) score = 0.0;
    if (score > best_score) {
      best_score = score;
      best = current;
    }
    int pos = count - 1;
    while (pos >= 0 && current[static_cast<std::size_t>(pos)] == q - count + pos) --pos;
    if (pos < 0) break;
    ++current[static_cast<std::size_t>(pos)];
    for (int k = pos + 1; k < count; ++k) current[static_cast<std::size_t>(k)] = current[static_cast<std::size_t>(k - 1)] + 1;
  }
  return best;
}

inline std::string dump_clustering_csv(const Clustering& c) {
  std::string out = "#method=" + to_string(c.method) + ";Q=" + std::to_string(c.q) + ";seed=" +
                    std::to_string(c.seed) + ";objective=" + format_double(c.objective) + "\nuser,cluster\n";
  for (std::size_t k = 0; k < c.users.size(); ++k)
    out += std::to_string(c.users[k]) + "," + std::to_string(c.assignments[k]) + "\n";
  return out;
}

}  // namespace collact
