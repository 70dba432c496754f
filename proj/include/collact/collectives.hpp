#pragma once
// Collective formation (propensity sampling from seed clusters), target
// choice, and the data edits each archetype performs in the three experiment
// families.

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "collact/clustering.hpp"
#include "collact/datasets.hpp"
#include "collact/error.hpp"
#include "collact/format.hpp"
#include "collact/rng.hpp"

namespace collact {

enum class Archetype { promoter, demoter };

inline std::string to_string(Archetype a) { return a == Archetype::promoter ? "promoter" : "demoter"; }

inline double rating_for(Archetype a) { return a == Archetype::promoter ? kMaxRating : kMinRating; }

struct RatingEdit {
  std::vector<ItemId> targets;
  double rating = kMaxRating;
};

struct TextSignal {
  std::string signal;
  int target_class = 0;
};

struct TabularRewrite {
  std::string occupation;
  Income label = Income::positive;
};

using Strategy = std::variant<RatingEdit, TextSignal, TabularRewrite>;

// Member ids are user ids (ratings), document indices (text) or row indices
// (tabular), in draw order.
struct Collective {
  int id = 0;
  Archetype archetype = Archetype::promoter;
  std::vector<std::int64_t> members;
  int seed_cluster = -1;
  double propensity = 1.0;
  Strategy strategy;
};

struct SamplingPlan {
  int clusters = 2;
  int seed = 0;
  double propensity = 1.0;

  void validate() const {
    if (clusters < 1) throw ValidationError("sampling plan needs at least one cluster");
    if (seed < 0 || seed >= clusters) throw ValidationError("seed cluster out of range");
    if (!(propensity >= 0.0 && propensity <= 1.0)) throw ValidationError("propensity must lie in [0,1]");
  }

  // Seed cluster w.p. p, every other cluster w.p. (1-p)/(Q-1).
  std::vector<double> distribution() const {
    validate();
    if (clusters == 1) return {1.0};
    std::vector<double> d(static_cast<std::size_t>(clusters), (1.0 - propensity) / (clusters - 1));
    d[static_cast<std::size_t>(seed)] = propensity;
    return d;
  }
};

struct SampleResult {
  std::vector<std::int64_t> members;
  std::size_t redraws = 0;  // draws that hit an exhausted cluster
};

// pools[k] lists the ids of cluster k. Each draw picks a cluster from the plan
// and then a uniform remaining member of it; an exhausted cluster triggers a
// redraw over the non-exhausted clusters, renormalized.
inline SampleResult sample_collective(std::span<const std::vector<std::int64_t>> pools, const SamplingPlan& plan,
                                      std::size_t n, Rng& rng, const std::set<std::int64_t>& excluded = {}) {
  if (static_cast<std::size_t>(plan.clusters) != pools.size())
    throw ValidationError("sampling plan cluster count does not match the partition");
  const auto dist = plan.distribution();
  std::vector<std::vector<std::int64_t>> remaining(pools.size());
  std::size_t available = 0;
  for (std::size_t k = 0; k < pools.size(); ++k) {
    for (auto id : pools[k])
      if (!excluded.contains(id)) remaining[k].push_back(id);
    available += remaining[k].size();
  }
  if (available < n)
    throw ValidationError("only " + std::to_string(available) + " users available for a collective of " +
                          std::to_string(n));

  SampleResult out;
  out.members.reserve(n);
  std::vector<double> weights(pools.size());
  while (out.members.size() < n) {
    auto k = rng.categorical(dist);
    if (k == pools.size() || remaining[k].empty()) {
      ++out.redraws;
      for (std::size_t j = 0; j < pools.size(); ++j) weights[j] = remaining[j].empty() ? 0.0 : dist[j];
      k = rng.categorical(weights);
      if (k == pools.size()) {  // all remaining mass sits on exhausted clusters
        for (std::size_t j = 0; j < pools.size(); ++j) weights[j] = remaining[j].empty() ? 0.0 : 1.0;
        k = rng.categorical(weights);
      }
    }
    auto& pool = remaining[k];
    const auto j = static_cast<std::size_t>(rng.below(pool.size()));
    out.members.push_back(pool[j]);
    pool[j] = pool.back();
    pool.pop_back();
  }
  return out;
}

inline std::vector<std::vector<std::int64_t>> cluster_pools(const Clustering& c) {
  std::vector<std::vector<std::int64_t>> pools;
  for (auto& m : c.members()) pools.emplace_back(m.begin(), m.end());
  return pools;
}

inline SampleResult sample_collective(const Clustering& clustering, const SamplingPlan& plan, std::size_t n,
                                      Rng& rng, const std::set<std::int64_t>& excluded = {}) {
  const auto pools = cluster_pools(clustering);
  return sample_collective(std::span<const std::vector<std::int64_t>>(pools), plan, n, rng, excluded);
}

enum class TargetScore { sum, mean };

struct TargetSelection {
  std::vector<ItemId> items;
  std::size_t displaced = 0;  // excluded items skipped while filling the V slots
};

// Items ranked by the members' summed (or mean) original ratings, ties to the
// lower id; excluded items are skipped.
inline TargetSelection select_targets(const RatingMatrix& ratings, std::span<const std::int64_t> members,
                                      std::size_t v, const std::set<ItemId>& excluded_items = {},
                                      TargetScore mode = TargetScore::sum) {
  if (members.empty()) throw ValidationError("cannot select targets for an empty collective");
  const std::set<std::int64_t> who(members.begin(), members.end());
  std::map<ItemId, std::pair<double, std::size_t>> score;
  for (const auto& e : ratings.entries()) {
    if (!who.contains(e.user)) continue;
    auto& s = score[e.item];
    s.first += e.value;
    ++s.second;
  }
  std::vector<std::pair<double, ItemId>> ranked;
  for (const auto& [item, s] : score)
    ranked.emplace_back(mode == TargetScore::sum ? s.first : s.first / static_cast<double>(s.second), item);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  TargetSelection out;
  for (const auto& [s, item] : ranked) {
    if (out.items.size() == v) break;
    if (excluded_items.contains(item)) {
      ++out.displaced;
      continue;
    }
    out.items.push_back(item);
  }
  if (out.items.size() < v)
    throw ValidationError("members rated only " + std::to_string(out.items.size()) + " eligible items, need " +
                          std::to_string(v));
  return out;
}

// Every member rates every target with the archetype's rating; new entries are
// appended with timestamp 0.
inline RatingMatrix apply_rating_actions(const RatingMatrix& ratings, const Collective& c) {
  const auto* edit = std::get_if<RatingEdit>(&c.strategy);
  if (!edit) throw ValidationError("collective has no rating strategy");
  if (edit->rating != rating_for(c.archetype))
    throw ValidationError("rating " + format_double(edit->rating) + " inconsistent with archetype " +
                          to_string(c.archetype));
  RatingMatrix out = ratings;
  for (auto u : c.members)
    for (auto item : edit->targets) out.upsert({u, item, edit->rating, 0});
  return out;
}

inline constexpr std::size_t kSignalSpacing = 20;

// Signal after every 20th original word; docs shorter than that get one
// signal at the end.
inline std::vector<std::string> plant_signal(std::span<const std::string> doc, const std::string& signal) {
  if (doc.empty()) throw ValidationError("cannot plant a signal in an empty document");
  std::vector<std::string> out;
  out.reserve(doc.size() + doc.size() / kSignalSpacing + 1);
  for (std::size_t i = 0; i < doc.size(); ++i) {
    out.push_back(doc[i]);
    if ((i + 1) % kSignalSpacing == 0) out.push_back(signal);
  }
  if (doc.size() < kSignalSpacing) out.push_back(signal);
  return out;
}

inline TextCorpus apply_text_actions(const TextCorpus& corpus, const Collective& c) {
  const auto* sig = std::get_if<TextSignal>(&c.strategy);
  if (!sig) throw ValidationError("collective has no text strategy");
  if (sig->target_class < 0 || static_cast<std::size_t>(sig->target_class) >= corpus.classes.size())
    throw ValidationError("target class out of range");
  TextCorpus out = corpus;
  for (auto m : c.members) {
    if (m < 0 || static_cast<std::size_t>(m) >= corpus.docs.size() ||
        corpus.docs[static_cast<std::size_t>(m)].split != Split::train)
      throw ValidationError("member " + std::to_string(m) + " is not a training document");
    auto& doc = out.docs[static_cast<std::size_t>(m)];
    doc.tokens = plant_signal(doc.tokens, sig->signal);
    doc.label = sig->target_class;
  }
  return out;
}

struct OccupationPartition {
  std::vector<std::vector<std::int64_t>> groups;  // one per requested occupation
  std::vector<std::int64_t> rest;
};

inline OccupationPartition partition_by_occupation(const TabularDataset& ds, std::span<const std::string> occupations) {
  OccupationPartition p;
  p.groups.resize(occupations.size());
  std::vector<bool> seen(occupations.size(), false);
  for (std::size_t r = 0; r < ds.rows.size(); ++r) {
    const auto& occ = ds.occupation(r);
    const auto it = std::find(occupations.begin(), occupations.end(), occ);
    if (it == occupations.end()) {
      p.rest.push_back(static_cast<std::int64_t>(r));
    } else {
      const auto g = static_cast<std::size_t>(it - occupations.begin());
      p.groups[g].push_back(static_cast<std::int64_t>(r));
      seen[g] = true;
    }
  }
  for (std::size_t g = 0; g < occupations.size(); ++g)
    if (!seen[g]) throw ValidationError("occupation '" + occupations[g] + "' does not occur in the data");
  return p;
}

struct AdultPartition {
  std::vector<std::int64_t> a, b, rest;
};

inline AdultPartition partition_adult(const TabularDataset& ds, const std::string& class_a, const std::string& class_b) {
  if (class_a == class_b) throw ValidationError("occupation classes must differ");
  const std::vector<std::string> occ{class_a, class_b};
  auto p = partition_by_occupation(ds, occ);
  return {std::move(p.groups[0]), std::move(p.groups[1]), std::move(p.rest)};
}

inline TabularDataset apply_tabular_actions(const TabularDataset& ds, const Collective& c) {
  const auto* rw = std::get_if<TabularRewrite>(&c.strategy);
  if (!rw) throw ValidationError("collective has no tabular strategy");
  TabularDataset out = ds;
  for (auto m : c.members) {
    if (m < 0 || static_cast<std::size_t>(m) >= ds.rows.size())
      throw ValidationError("member row " + std::to_string(m) + " out of range");
    auto& row = out.rows[static_cast<std::size_t>(m)];
    row.values[ds.occupation_attribute] = rw->occupation;
    row.label = rw->label;
  }
  return out;
}

// CSV `collective,member,seed_cluster,p,archetype`.
inline std::string dump_manifest_csv(std::span<const Collective> collectives) {
  std::string out = "collective,member,seed_cluster,p,archetype\n";
  for (const auto& c : collectives)
    for (auto m : c.members)
      out += std::to_string(c.id) + "," + std::to_string(m) + "," + std::to_string(c.seed_cluster) + "," +
             format_double(c.propensity) + "," + to_string(c.archetype) + "\n";
  return out;
}

// CSV `collective,rank,item` for rating campaigns.
inline std::string dump_targets_csv(std::span<const Collective> collectives) {
  std::string out = "collective,rank,item\n";
  for (const auto& c : collectives) {
    if (const auto* e = std::get_if<RatingEdit>(&c.strategy))
      for (std::size_t r = 0; r < e->targets.size(); ++r)
        out += std::to_string(c.id) + "," + std::to_string(r) + "," + std::to_string(e->targets[r]) + "\n";
  }
  return out;
}

}  // namespace collact
