#pragma once
// Biased matrix factorization trained by SGD, grid-search cross-validation,
// top-K ranking and hit-ratio evaluation.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "collact/datasets.hpp"
#include "collact/error.hpp"
#include "collact/format.hpp"
#include "collact/rng.hpp"

namespace collact {

struct MFHyper {
  int factors = 100;
  int epochs = 20;
  double learning_rate = 0.005;
  double regularization = 0.02;

  void validate() const {
    if (factors < 1) throw ValidationError("factors must be >= 1");
    if (epochs < 1) throw ValidationError("epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
    if (!(regularization >= 0.0)) throw ValidationError("regularization must be non-negative");
  }

  friend bool operator==(const MFHyper&, const MFHyper&) = default;
};

inline std::vector<MFHyper> default_mf_grid(int factors = 100) {
  std::vector<MFHyper> grid;
  for (int epochs : {10, 20})
    for (double lr : {0.002, 0.005, 0.01})
      for (double reg : {0.02, 0.1}) grid.push_back({factors, epochs, lr, reg});
  return grid;
}

// Prediction: global_mean + user_bias + item_bias + <user_vec, item_vec>.
// Ids are sorted; vectors are stored row-major, `factors` values per id.
struct LatentFactors {
  int factors = 0;
  double global_mean = 0.0;
  std::vector<UserId> user_ids;
  std::vector<ItemId> item_ids;
  std::vector<double> user_bias;
  std::vector<double> item_bias;
  std::vector<double> user_vecs;
  std::vector<double> item_vecs;

  std::optional<std::size_t> user_index(UserId u) const { return lookup(user_ids, u); }
  std::optional<std::size_t> item_index(ItemId i) const { return lookup(item_ids, i); }

  std::span<const double> user_vec(std::size_t idx) const {
    return {user_vecs.data() + idx * static_cast<std::size_t>(factors), static_cast<std::size_t>(factors)};
  }
  std::span<const double> item_vec(std::size_t idx) const {
    return {item_vecs.data() + idx * static_cast<std::size_t>(factors), static_cast<std::size_t>(factors)};
  }

  double score(std::size_t u, std::size_t i) const {
    const double* p = user_vecs.data() + u * static_cast<std::size_t>(factors);
    const double* q = item_vecs.data() + i * static_cast<std::size_t>(factors);
    double dot = 0.0;
    for (int f = 0; f < factors; ++f) dot += p[f] * q[f];
    return global_mean + user_bias[u] + item_bias[i] + dot;
  }

  // Unclipped. Unknown user or item predicts the global mean.
  double predict(UserId u, ItemId i) const {
    const auto ui = user_index(u);
    const auto ii = item_index(i);
    if (!ui || !ii) return global_mean;
    return score(*ui, *ii);
  }

  friend bool operator==(const LatentFactors&, const LatentFactors&) = default;

 private:
  template <typename T>
  static std::optional<std::size_t> lookup(const std::vector<T>& ids, T id) {
    const auto it = std::lower_bound(ids.begin(), ids.end(), id);
    if (it == ids.end() || *it != id) return std::nullopt;
    return static_cast<std::size_t>(it - ids.begin());
  }
};

// Freshly initialized parameters: biases zero, vectors ~ Normal(0, 0.1),
// users before items, each in ascending id order.
inline LatentFactors init_mf(const RatingMatrix& ratings, const MFHyper& hyper, std::uint64_t seed) {
  hyper.validate();
  if (ratings.empty()) throw EmptyDatasetError("cannot train on an empty rating matrix");
  Rng rng(derive_seed(seed, "mf-init"));
  LatentFactors m;
  m.factors = hyper.factors;
  m.user_ids = ratings.users();
  m.item_ids = ratings.items();
  double sum = 0.0;
  for (const auto& e : ratings.entries()) sum += e.value;
  m.global_mean = sum / static_cast<double>(ratings.size());
  const auto d = static_cast<std::size_t>(hyper.factors);
  m.user_bias.assign(m.user_ids.size(), 0.0);
  m.item_bias.assign(m.item_ids.size(), 0.0);
  m.user_vecs.resize(m.user_ids.size() * d);
  m.item_vecs.resize(m.item_ids.size() * d);
  for (auto& v : m.user_vecs) v = rng.normal(0.0, 0.1);
  for (auto& v : m.item_vecs) v = rng.normal(0.0, 0.1);
  return m;
}

// Deterministic in (rating set, hyper, seed); entry order does not matter.
// Each epoch visits entries in the order of a keyed hash of (user, item), so
// two datasets that differ in a few entries share the relative visit order of
// everything else.
inline LatentFactors train_mf(const RatingMatrix& ratings, const MFHyper& hyper, std::uint64_t seed) {
  LatentFactors m = init_mf(ratings, hyper, seed);
  const auto order_seed = derive_seed(seed, "mf-order");

  struct Dense {
    std::uint32_t u, i;
    double r;
    std::uint64_t id;  // (user, item) hash
  };
  std::vector<Dense> data;
  data.reserve(ratings.size());
  for (const auto& e : ratings.entries())
    data.push_back({static_cast<std::uint32_t>(*m.user_index(e.user)),
                    static_cast<std::uint32_t>(*m.item_index(e.item)), e.value,
                    derive_seed(static_cast<std::uint64_t>(e.user), static_cast<std::uint64_t>(e.item))});

  std::vector<std::pair<std::uint64_t, std::uint32_t>> keyed(data.size());
  std::vector<std::uint32_t> order(data.size());

  const int d = hyper.factors;
  const double lr = hyper.learning_rate;
  const double reg = hyper.regularization;
  const double mu = m.global_mean;
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    const auto salt = derive_seed(order_seed, static_cast<std::uint64_t>(epoch));
    for (std::size_t k = 0; k < data.size(); ++k) keyed[k] = {splitmix64(data[k].id ^ salt), static_cast<std::uint32_t>(k)};
    std::sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      const auto &x = data[a.second], &y = data[b.second];
      return x.u != y.u ? x.u < y.u : x.i < y.i;
    });
    for (std::size_t k = 0; k < data.size(); ++k) order[k] = keyed[k].second;
    double sse = 0.0;
    for (auto k : order) {
      const auto& e = data[k];
      double* p = m.user_vecs.data() + static_cast<std::size_t>(e.u) * static_cast<std::size_t>(d);
      double* q = m.item_vecs.data() + static_cast<std::size_t>(e.i) * static_cast<std::size_t>(d);
      double& bu = m.user_bias[e.u];
      double& bi = m.item_bias[e.i];
      double dot = 0.0;
      for (int f = 0; f < d; ++f) dot += p[f] * q[f];
      const double err = e.r - (mu + bu + bi + dot);
      sse += err * err;
      bu += lr * (err - reg * bu);
      bi += lr * (err - reg * bi);
      for (int f = 0; f < d; ++f) {
        const double pf = p[f];
        const double qf = q[f];
        p[f] += lr * (err * qf - reg * pf);
        q[f] += lr * (err * pf - reg * qf);
      }
    }
    if (!std::isfinite(sse)) throw DivergenceError("matrix factorization loss is not finite", epoch);
  }
  return m;
}

// Predictions clipped to [1,5]; unknown users/items predict the global mean.
inline double rmse(const LatentFactors& model, std::span<const Rating> holdout) {
  if (holdout.empty()) throw Error("rmse over an empty holdout");
  double sse = 0.0;
  for (const auto& e : holdout) {
    const double pred = model.predict(e.user, e.item);
    if (!std::isfinite(pred)) return std::numeric_limits<double>::infinity();
    const double err = e.value - std::clamp(pred, kMinRating, kMaxRating);
    sse += err * err;
  }
  return std::sqrt(sse / static_cast<double>(holdout.size()));
}

inline double rmse(const LatentFactors& model, const RatingMatrix& holdout) {
  return rmse(model, std::span<const Rating>(holdout.entries()));
}

struct GridSearchResult {
  MFHyper best;
  std::size_t best_index = 0;
  std::vector<double> mean_rmse;  // per grid point; +inf when training diverged
};

// Folds are a seeded partition of the entries. All trainings share one init
// seed drawn from `rng`. Ties go to the earlier grid point.
inline GridSearchResult grid_search_cv(const RatingMatrix& ratings, std::span<const MFHyper> grid, int folds,
                                       Rng& rng) {
  if (folds < 2) throw ValidationError("cross-validation needs at least 2 folds");
  if (grid.empty()) throw ValidationError("empty hyperparameter grid");
  if (ratings.size() < static_cast<std::size_t>(folds)) throw ValidationError("fewer ratings than folds");

  std::vector<std::size_t> perm(ratings.size());
  for (std::size_t k = 0; k < perm.size(); ++k) perm[k] = k;
  rng.shuffle(perm);
  std::vector<int> fold_of(ratings.size());
  for (std::size_t k = 0; k < perm.size(); ++k) fold_of[perm[k]] = static_cast<int>(k % static_cast<std::size_t>(folds));
  const std::uint64_t train_seed = rng.next_u64();

  std::vector<RatingMatrix> train_parts;
  std::vector<std::vector<Rating>> holdouts(static_cast<std::size_t>(folds));
  for (int f = 0; f < folds; ++f) {
    std::vector<Rating> train;
    for (std::size_t k = 0; k < ratings.size(); ++k) {
      (fold_of[k] == f ? holdouts[static_cast<std::size_t>(f)] : train).push_back(ratings.entries()[k]);
    }
    train_parts.emplace_back(std::move(train));
  }

  GridSearchResult result;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double total = 0.0;
    for (int f = 0; f < folds; ++f) {
      double score;
      try {
        score = rmse(train_mf(train_parts[static_cast<std::size_t>(f)], grid[g], train_seed),
                     std::span<const Rating>(holdouts[static_cast<std::size_t>(f)]));
      } catch (const DivergenceError&) {
        score = std::numeric_limits<double>::infinity();
      }
      if (std::isnan(score)) score = std::numeric_limits<double>::infinity();
      total += score;
    }
    const double mean = total / folds;
    result.mean_rmse.push_back(mean);
    if (g == 0 || mean < best) {
      best = mean;
      result.best_index = g;
    }
  }
  result.best = grid[result.best_index];
  return result;
}

struct ScoredItem {
  ItemId item = 0;
  double score = 0.0;

  friend bool operator==(const ScoredItem&, const ScoredItem&) = default;
};

// Per-user top-K lists over items the user did not rate in the original data.
struct RankingTable {
  std::size_t k = 0;
  std::vector<UserId> users;
  std::vector<std::vector<ScoredItem>> lists;  // parallel to users
  std::size_t excluded_users = 0;              // users with no candidate items
  std::uint64_t candidate_hash = 0;            // fingerprint of the candidate policy

  friend bool operator==(const RankingTable&, const RankingTable&) = default;
};

inline bool ranks_before(const ScoredItem& a, const ScoredItem& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.item < b.item;
}

// Candidate sets depend only on `original`, so rankings under different models
// of the same trial are comparable. Scores are unclipped.
inline RankingTable rank_top_k(const LatentFactors& model, const RatingMatrix& original, std::size_t k) {
  if (k < 1) throw ValidationError("k must be >= 1");
  const auto& users = original.users();
  const auto& items = original.items();

  std::unordered_map<UserId, std::vector<std::size_t>> rated;  // item positions in `items`
  for (const auto& e : original.entries()) {
    const auto pos = static_cast<std::size_t>(std::lower_bound(items.begin(), items.end(), e.item) - items.begin());
    rated[e.user].push_back(pos);
  }

  std::vector<std::optional<std::size_t>> model_item(items.size());
  for (std::size_t j = 0; j < items.size(); ++j) model_item[j] = model.item_index(items[j]);

  RankingTable table;
  table.k = k;
  std::uint64_t h = derive_seed(fnv1a64("unrated-in-original"), items.size());
  std::vector<char> is_rated(items.size());
  std::vector<ScoredItem> cand;
  for (UserId u : users) {
    std::fill(is_rated.begin(), is_rated.end(), 0);
    for (auto pos : rated[u]) is_rated[pos] = 1;
    const auto mu = model.user_index(u);
    cand.clear();
    for (std::size_t j = 0; j < items.size(); ++j) {
      if (is_rated[j]) continue;
      const double s = (mu && model_item[j]) ? model.score(*mu, *model_item[j]) : model.global_mean;
      cand.push_back({items[j], s});
    }
    h = derive_seed(h, static_cast<std::uint64_t>(u), cand.size());
    if (cand.empty()) {
      ++table.excluded_users;
      continue;
    }
    const auto take = std::min(k, cand.size());
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end(), ranks_before);
    table.users.push_back(u);
    table.lists.emplace_back(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take));
  }
  table.candidate_hash = h;
  return table;
}

enum class HitMode {
  mean_per_item,  // mean over targets of the fraction of users seeing that target
  any_target,     // fraction of users seeing at least one target
};

inline double hr_at_k(const RankingTable& table, std::span<const ItemId> targets,
                      HitMode mode = HitMode::mean_per_item) {
  if (targets.empty()) throw Error("hit ratio over an empty target list");
  if (table.users.empty()) return 0.0;
  const auto n_users = static_cast<double>(table.users.size());
  const auto contains = [](const std::vector<ScoredItem>& list, ItemId i) {
    return std::any_of(list.begin(), list.end(), [i](const ScoredItem& s) { return s.item == i; });
  };
  if (mode == HitMode::any_target) {
    std::size_t hits = 0;
    for (const auto& list : table.lists)
      if (std::any_of(targets.begin(), targets.end(), [&](ItemId t) { return contains(list, t); })) ++hits;
    return static_cast<double>(hits) / n_users;
  }
  double total = 0.0;
  for (ItemId t : targets) {
    std::size_t hits = 0;
    for (const auto& list : table.lists)
      if (contains(list, t)) ++hits;
    total += static_cast<double>(hits) / n_users;
  }
  return total / static_cast<double>(targets.size());
}

// ---------------------------------------------------------------------------
// Checkpoints: line-oriented text, doubles in shortest round-trip form.

inline std::string save_checkpoint(const LatentFactors& m) {
  std::string out = "collact-mf 1\nfactors " + std::to_string(m.factors) + "\nglobal_mean " +
                    format_double(m.global_mean) + "\n";
  const auto d = static_cast<std::size_t>(m.factors);
  const auto dump = [&](const char* tag, const auto& ids, const auto& bias, const auto& vecs) {
    out += std::string(tag) + " " + std::to_string(ids.size()) + "\n";
    for (std::size_t r = 0; r < ids.size(); ++r) {
      out += std::to_string(ids[r]) + " " + format_double(bias[r]);
      for (std::size_t f = 0; f < d; ++f) out += " " + format_double(vecs[r * d + f]);
      out += '\n';
    }
  };
  dump("users", m.user_ids, m.user_bias, m.user_vecs);
  dump("items", m.item_ids, m.item_bias, m.item_vecs);
  return out;
}

inline LatentFactors load_checkpoint(std::string_view text) {
  const auto lines = split(text, '\n');
  std::size_t ln = 0;
  const auto next = [&]() -> std::vector<std::string> {
    while (ln < lines.size() && trim(lines[ln]).empty()) ++ln;
    if (ln >= lines.size()) throw ParseError("checkpoint", ln, "unexpected end of input");
    return split_whitespace(lines[ln++]);
  };
  const auto num = [&](const std::string& s) {
    auto v = parse_number<double>(s);
    if (!v) throw ParseError("checkpoint", ln, "bad number '" + s + "'");
    return *v;
  };
  const auto integer = [&](const std::string& s) {
    auto v = parse_number<std::int64_t>(s);
    if (!v) throw ParseError("checkpoint", ln, "bad integer '" + s + "'");
    return *v;
  };
  auto head = next();
  if (head.size() != 2 || head[0] != "collact-mf" || head[1] != "1")
    throw ParseError("checkpoint", ln, "unsupported checkpoint header");
  LatentFactors m;
  auto f = next();
  if (f.size() != 2 || f[0] != "factors") throw ParseError("checkpoint", ln, "expected factors");
  m.factors = static_cast<int>(integer(f[1]));
  auto g = next();
  if (g.size() != 2 || g[0] != "global_mean") throw ParseError("checkpoint", ln, "expected global_mean");
  m.global_mean = num(g[1]);
  const auto d = static_cast<std::size_t>(m.factors);
  const auto read_block = [&](const char* tag, auto& ids, auto& bias, auto& vecs) {
    auto h = next();
    if (h.size() != 2 || h[0] != tag) throw ParseError("checkpoint", ln, std::string("expected ") + tag);
    const auto n = static_cast<std::size_t>(integer(h[1]));
    for (std::size_t r = 0; r < n; ++r) {
      auto row = next();
      if (row.size() != d + 2) throw ParseError("checkpoint", ln, "wrong row width");
      ids.push_back(integer(row[0]));
      bias.push_back(num(row[1]));
      for (std::size_t k = 0; k < d; ++k) vecs.push_back(num(row[k + 2]));
    }
  };
  read_block("users", m.user_ids, m.user_bias, m.user_vecs);
  read_block("items", m.item_ids, m.item_bias, m.item_vecs);
  return m;
}

}  // namespace collact
