#pragma once
// Trial orchestration. Each trial trains a baseline model on unmodified data,
// one model per collective acting alone and one with every collective acting
// jointly, then scores each collective's objective under all three.
//
// Seed streams per trial:
//   baseline stream  <- (master_seed, baseline-relevant config, trial): CV folds, clustering
//   model-init seed  <- (master_seed, baseline-relevant config): shared by every model in the trial
//   sampling stream  <- (master_seed, full cell config, trial): seed clusters, members

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "collact/classifiers.hpp"
#include "collact/clustering.hpp"
#include "collact/collectives.hpp"
#include "collact/config.hpp"
#include "collact/datasets.hpp"
#include "collact/metrics.hpp"
#include "collact/recsys.hpp"
#include "collact/rng.hpp"

namespace collact {

// Thread-safe compute-once cache.
template <typename T>
class Memo {
 public:
  std::shared_ptr<const T> get(const std::string& key, const std::function<T()>& make) {
    std::shared_future<std::shared_ptr<const T>> fut;
    std::promise<std::shared_ptr<const T>> promise;
    bool owner = false;
    {
      std::lock_guard lock(mu_);
      auto it = entries_.find(key);
      if (it == entries_.end()) {
        fut = promise.get_future().share();
        entries_.emplace(key, fut);
        owner = true;
      } else {
        fut = it->second;
      }
    }
    if (owner) {
      try {
        promise.set_value(std::make_shared<const T>(make()));
      } catch (...) {
        promise.set_exception(std::current_exception());
      }
    }
    return fut.get();
  }

 private:
  std::mutex mu_;
  std::map<std::string, std::shared_future<std::shared_ptr<const T>>> entries_;
};

struct RecsysBaseline {
  std::shared_ptr<const RatingMatrix> ratings;
  GridSearchResult selection;  // empty scores when no grid was configured
  MFHyper hyper;
  std::uint64_t cv_seed = 0;
  std::uint64_t init_seed = 0;
  std::shared_ptr<const LatentFactors> model;
  Clustering clustering;
  RankingTable table;
};

struct TextBaseline {
  std::shared_ptr<const TextCorpus> corpus;
  TextFeaturizer featurizer;
  std::vector<std::size_t> train_docs;
  std::vector<std::size_t> test_docs;
  std::vector<SparseVector> features;  // all docs, clean
  std::vector<int> labels;             // all docs
  LinearModel model;
};

struct LinearBaseline {
  std::shared_ptr<const TabularDataset> train;
  std::shared_ptr<const TabularDataset> test;
  TabularFeaturizer featurizer;
  std::vector<SparseVector> train_x;
  std::vector<int> train_y;
  std::vector<SparseVector> test_x;
  LinearModel model;
};

// Caches shared by all trials of a run. Every cached value is a pure function
// of its key, so sharing never changes results.
class Workspace {
 public:
  Memo<RatingMatrix> ratings;
  Memo<TabularDataset> tables;
  Memo<TextCorpus> corpora;
  Memo<GridSearchResult> selections;
  Memo<LatentFactors> mf_models;
  Memo<RecsysBaseline> recsys;
  Memo<TextBaseline> text;
  Memo<LinearBaseline> linear;
};

struct CollectiveOutcome {
  Archetype archetype = Archetype::promoter;
  std::size_t members = 0;
  int seed_cluster = -1;
  double propensity = 0.0;
  double g_baseline = 0.0;
  double g_alone = 0.0;
  double g_joint = 0.0;
  InteractionScore score;
  std::vector<std::int64_t> targets;  // items (recsys) or the target class (textclass)
  std::size_t displaced_targets = 0;
  std::size_t redraws = 0;
};

struct TrialOutcome {
  std::string scenario;
  Family family = Family::recsys;
  double size = 0.0;
  double propensity = 0.0;
  std::string archetypes;
  int trial = 0;
  std::uint64_t trial_seed = 0;
  std::uint64_t model_seed = 0;
  std::vector<CollectiveOutcome> collectives;
  std::string hyper;            // chosen hyperparameters
  std::uint64_t candidate_hash = 0;
  std::size_t excluded_users = 0;
  std::size_t undefined_ratios = 0;
  bool failed = false;
  std::string failure_stage;
  std::string failure_cause;
};

// Optional inspection hooks for tests.
struct TrialTrace {
  std::vector<Collective> collectives;
  std::shared_ptr<const LatentFactors> baseline_mf;
  std::vector<LatentFactors> alone_mf;
  std::optional<LatentFactors> joint_mf;
  std::optional<RatingMatrix> joint_ratings;
  std::optional<LinearModel> baseline_linear;
  std::vector<LinearModel> alone_linear;
  std::optional<LinearModel> joint_linear;
};

namespace detail {

inline std::string hyper_label(const MFHyper& h) {
  return "d=" + std::to_string(h.factors) + ";epochs=" + std::to_string(h.epochs) +
         ";lr=" + format_double(h.learning_rate) + ";reg=" + format_double(h.regularization);
}

inline std::string hyper_label(const LinearHyper& h) {
  return "epochs=" + std::to_string(h.epochs) + ";lr=" + format_double(h.learning_rate) + ";l2=" + format_double(h.l2);
}

inline std::size_t participation_count(double fraction, std::size_t population) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(population)));
}

inline std::string recsys_baseline_key(const ScenarioConfig& c) {
  Json k;
  k["path"] = c.recsys.ratings_path.string();
  k["model"] = c.canonical.value("model", Json::object());
  k["Q"] = c.recsys.clusters;
  k["method"] = to_string(c.recsys.method);
  k["K"] = c.recsys.k;
  k["master_seed"] = c.master_seed;
  return k.dump();
}

inline std::shared_ptr<const RatingMatrix> load_ratings(Workspace& ws, const std::filesystem::path& p) {
  return ws.ratings.get(p.string(), [&] { return load_movielens(p); });
}

inline std::shared_ptr<const RecsysBaseline> recsys_baseline(Workspace& ws, const ScenarioConfig& c, int trial) {
  const auto key = recsys_baseline_key(c);
  const auto base_hash = fnv1a64(key);
  return ws.recsys.get(key + "#" + std::to_string(trial), [&] {
    RecsysBaseline b;
    b.ratings = load_ratings(ws, c.recsys.ratings_path);
    const auto trial_base = derive_seed(c.master_seed, base_hash, static_cast<std::uint64_t>(trial));
    b.cv_seed = derive_seed(trial_base, "cv");
    b.init_seed = derive_seed(c.master_seed, base_hash, "model-init");
    b.hyper = c.recsys.model;
    if (!c.recsys.grid.empty()) {
      Rng cv(b.cv_seed);
      b.selection = grid_search_cv(*b.ratings, c.recsys.grid, c.recsys.folds, cv);
      b.hyper = b.selection.best;
    }
    const auto& ratings = b.ratings;
    const auto hyper = b.hyper;
    const auto init = b.init_seed;
    b.model = ws.mf_models.get(key + "#theta:" + hyper_label(hyper),
                               [&] { return train_mf(*ratings, hyper, init); });
    Rng crng(derive_seed(trial_base, "cluster"));
    b.clustering = cluster_users(user_vectors(*b.model), c.recsys.clusters, c.recsys.method, crng);
    b.table = rank_top_k(*b.model, *b.ratings, c.recsys.k);
    return b;
  });
}

inline MFHyper select_for(const ScenarioConfig& c, const RecsysBaseline& b, const RatingMatrix& data) {
  if (!c.recsys.reselect_per_model || c.recsys.grid.empty()) return b.hyper;
  Rng cv(b.cv_seed);
  return grid_search_cv(data, c.recsys.grid, c.recsys.folds, cv).best;
}

inline void run_recsys(const ScenarioConfig& c, int trial, Workspace& ws, TrialOutcome& out, std::string& stage,
                       TrialTrace* trace) {
  stage = "baseline";
  const auto base = recsys_baseline(ws, c, trial);
  const RatingMatrix& original = *base->ratings;
  out.hyper = hyper_label(base->hyper);
  out.model_seed = base->init_seed;
  out.candidate_hash = base->table.candidate_hash;
  out.excluded_users = base->table.excluded_users;

  stage = "formation";
  Rng srng(derive_seed(out.trial_seed, "sampling"));
  const int count = static_cast<int>(c.collectives.size());
  const auto seeds = select_seed_clusters(base->clustering, count, c.recsys.seed_mode, srng);
  const auto pools = cluster_pools(base->clustering);
  std::set<std::int64_t> taken;
  std::set<ItemId> claimed;
  std::vector<Collective> collectives;
  for (int i = 0; i < count; ++i) {
    const auto& spec = c.collectives[static_cast<std::size_t>(i)];
    auto& co = out.collectives.emplace_back();
    const SamplingPlan plan{base->clustering.q, seeds[static_cast<std::size_t>(i)], spec.propensity};
    auto sample = sample_collective(std::span<const std::vector<std::int64_t>>(pools), plan, *spec.size, srng, taken);
    taken.insert(sample.members.begin(), sample.members.end());
    // An empty collective still names targets: those its seed cluster would pick.
    const auto& population = sample.members.empty() ? pools[static_cast<std::size_t>(plan.seed)] : sample.members;
    auto sel = select_targets(original, population, c.recsys.v, claimed, c.recsys.target_score);
    claimed.insert(sel.items.begin(), sel.items.end());
    co.archetype = spec.archetype;
    co.members = sample.members.size();
    co.seed_cluster = plan.seed;
    co.propensity = spec.propensity;
    co.targets.assign(sel.items.begin(), sel.items.end());
    co.displaced_targets = sel.displaced;
    co.redraws = sample.redraws;
    collectives.push_back({i, spec.archetype, std::move(sample.members), plan.seed, spec.propensity,
                           RatingEdit{std::move(sel.items), rating_for(spec.archetype)}});
  }

  const auto evaluate = [&](const LatentFactors& m) { return rank_top_k(m, original, c.recsys.k); };
  const auto objective = [&](const RankingTable& t, std::size_t i) {
    const auto& targets = std::get<RatingEdit>(collectives[i].strategy).targets;
    return hr_at_k(t, targets, c.recsys.hit_mode);
  };

  for (std::size_t i = 0; i < collectives.size(); ++i) out.collectives[i].g_baseline = objective(base->table, i);

  for (std::size_t i = 0; i < collectives.size(); ++i) {
    stage = "alone:" + std::to_string(i);
    const auto data = apply_rating_actions(original, collectives[i]);
    auto model = train_mf(data, select_for(c, *base, data), base->init_seed);
    out.collectives[i].g_alone = objective(evaluate(model), i);
    if (trace) trace->alone_mf.push_back(std::move(model));
  }

  stage = "joint";
  if (collectives.size() == 1) {
    out.collectives[0].g_joint = out.collectives[0].g_alone;
    if (trace) {
      trace->joint_mf = trace->alone_mf.front();
      trace->joint_ratings = apply_rating_actions(original, collectives[0]);
    }
  } else {
    RatingMatrix joint = original;
    for (const auto& co : collectives) joint = apply_rating_actions(joint, co);
    auto model = train_mf(joint, select_for(c, *base, joint), base->init_seed);
    const auto table = evaluate(model);
    for (std::size_t i = 0; i < collectives.size(); ++i) out.collectives[i].g_joint = objective(table, i);
    if (trace) {
      trace->joint_mf = std::move(model);
      trace->joint_ratings = std::move(joint);
    }
  }
  if (trace) {
    trace->baseline_mf = base->model;
    trace->collectives = std::move(collectives);
  }
}

inline std::shared_ptr<const TextCorpus> load_corpus(Workspace& ws, const ScenarioConfig& c) {
  if (c.text.corpus_path) {
    Json k{{"path", c.text.corpus_path->string()},
           {"classes", c.text.layout.classes},
           {"train", c.text.layout.train_size},
           {"test", c.text.layout.test_size}};
    return ws.corpora.get(k.dump(), [&] { return load_text_corpus(*c.text.corpus_path, c.text.layout); });
  }
  const Json k = c.canonical.value("dataset", Json::object());
  return ws.corpora.get(k.dump(), [&] {
    Rng rng(c.text.corpus_seed);
    return synth_text_corpus(c.text.synthetic, rng);
  });
}

inline std::vector<std::vector<std::string>> reserved_groups(const ScenarioConfig& c) {
  auto groups = c.text.alias_groups;
  std::set<std::string> seen;
  for (const auto& g : groups) seen.insert(g.begin(), g.end());
  // Signals outside alias groups get dedicated buckets; sorted for a stable layout.
  std::set<std::string> singles;
  for (const auto& s : c.collectives)
    if (!seen.contains(s.signal)) singles.insert(s.signal);
  for (const auto& s : singles) groups.push_back({s});
  return groups;
}

inline std::shared_ptr<const TextBaseline> text_baseline(Workspace& ws, const ScenarioConfig& c) {
  const auto groups = reserved_groups(c);
  Json k{{"dataset", c.canonical.value("dataset", Json::object())},
         {"path", c.text.corpus_path ? c.text.corpus_path->string() : ""},
         {"model", c.canonical.value("model", Json::object())},
         {"groups", groups}};
  return ws.text.get(k.dump(), [&] {
    TextBaseline b;
    b.corpus = load_corpus(ws, c);
    b.featurizer = TextFeaturizer(c.text.hash_dim, groups, c.text.norm);
    b.train_docs = b.corpus->indices(Split::train);
    b.test_docs = b.corpus->indices(Split::test);
    for (const auto& d : b.corpus->docs) {
      b.features.push_back(b.featurizer.featurize(d.tokens));
      b.labels.push_back(d.label);
    }
    std::vector<SparseVector> xs;
    std::vector<int> ys;
    for (auto i : b.train_docs) {
      xs.push_back(b.features[i]);
      ys.push_back(b.labels[i]);
    }
    b.model = train_linear(xs, ys, static_cast<int>(b.corpus->classes.size()), b.featurizer.dim(), c.text.hyper);
    return b;
  });
}

inline int resolve_class(const TextCorpus& corpus, const std::string& name) {
  const auto it = std::find(corpus.classes.begin(), corpus.classes.end(), name);
  if (it != corpus.classes.end()) return static_cast<int>(it - corpus.classes.begin());
  if (const auto idx = parse_number<int>(name); idx && *idx >= 0 && static_cast<std::size_t>(*idx) < corpus.classes.size())
    return *idx;
  throw ValidationError("unknown target class '" + name + "'");
}

inline void run_text(const ScenarioConfig& c, int trial, Workspace& ws, TrialOutcome& out, std::string& stage,
                     TrialTrace* trace) {
  (void)trial;
  stage = "baseline";
  const auto base = text_baseline(ws, c);
  const auto& corpus = *base->corpus;
  out.hyper = hyper_label(c.text.hyper);

  stage = "formation";
  Rng srng(derive_seed(out.trial_seed, "sampling"));
  std::vector<std::vector<std::int64_t>> pool(1);
  for (auto i : base->train_docs) pool[0].push_back(static_cast<std::int64_t>(i));
  std::set<std::int64_t> taken;
  std::vector<Collective> collectives;
  for (std::size_t i = 0; i < c.collectives.size(); ++i) {
    const auto& spec = c.collectives[i];
    const auto n = participation_count(*spec.participation, base->train_docs.size());
    auto sample = sample_collective(std::span<const std::vector<std::int64_t>>(pool), SamplingPlan{1, 0, 1.0}, n, srng, taken);
    taken.insert(sample.members.begin(), sample.members.end());
    const int target = resolve_class(corpus, spec.target_class);
    auto& co = out.collectives.emplace_back();
    co.archetype = spec.archetype;
    co.members = sample.members.size();
    co.propensity = spec.propensity;
    co.targets = {target};
    collectives.push_back({static_cast<int>(i), spec.archetype, std::move(sample.members), -1, spec.propensity,
                           TextSignal{spec.signal, target}});
  }

  // Training set under a set of active collectives.
  const auto train_set = [&](std::span<const Collective* const> active) {
    std::vector<SparseVector> xs;
    std::vector<int> ys;
    std::map<std::size_t, std::size_t> pos;
    for (auto d : base->train_docs) {
      pos[d] = xs.size();
      xs.push_back(base->features[d]);
      ys.push_back(base->labels[d]);
    }
    for (const auto* co : active) {
      const auto& sig = std::get<TextSignal>(co->strategy);
      for (auto m : co->members) {
        const auto d = static_cast<std::size_t>(m);
        const auto p = pos.at(d);
        xs[p] = base->featurizer.featurize(plant_signal(corpus.docs[d].tokens, sig.signal));
        ys[p] = sig.target_class;
      }
    }
    return std::pair{std::move(xs), std::move(ys)};
  };
  const int classes = static_cast<int>(corpus.classes.size());
  const auto train = [&](std::span<const Collective* const> active) {
    auto [xs, ys] = train_set(active);
    return train_linear(xs, ys, classes, base->featurizer.dim(), c.text.hyper);
  };

  // Test docs with collective i's signal planted.
  std::vector<std::vector<SparseVector>> probes;
  for (const auto& co : collectives) {
    const auto& sig = std::get<TextSignal>(co.strategy);
    auto& p = probes.emplace_back();
    for (auto d : base->test_docs) p.push_back(base->featurizer.featurize(plant_signal(corpus.docs[d].tokens, sig.signal)));
  }
  const auto objective = [&](const LinearModel& m, std::size_t i) {
    std::vector<int> preds;
    for (const auto& x : probes[i]) preds.push_back(predict_class(m, x));
    return efficacy(preds, std::get<TextSignal>(collectives[i].strategy).target_class);
  };

  for (std::size_t i = 0; i < collectives.size(); ++i) out.collectives[i].g_baseline = objective(base->model, i);
  std::vector<const Collective*> all;
  for (std::size_t i = 0; i < collectives.size(); ++i) {
    stage = "alone:" + std::to_string(i);
    const Collective* one[] = {&collectives[i]};
    auto m = train(one);
    out.collectives[i].g_alone = objective(m, i);
    if (trace) trace->alone_linear.push_back(std::move(m));
    all.push_back(&collectives[i]);
  }
  stage = "joint";
  if (collectives.size() == 1) {
    out.collectives[0].g_joint = out.collectives[0].g_alone;
    if (trace) trace->joint_linear = trace->alone_linear.front();
  } else {
    auto m = train(all);
    for (std::size_t i = 0; i < collectives.size(); ++i) out.collectives[i].g_joint = objective(m, i);
    if (trace) trace->joint_linear = std::move(m);
  }
  if (trace) {
    trace->baseline_linear = base->model;
    trace->collectives = std::move(collectives);
  }
}

inline std::shared_ptr<const LinearBaseline> linear_baseline(Workspace& ws, const ScenarioConfig& c) {
  Json k{{"train", c.linear.train_path.string()},
         {"test", c.linear.test_path ? c.linear.test_path->string() : ""},
         {"fraction", c.linear.test_fraction},
         {"seed", c.linear.test_path ? 0 : c.master_seed},
         {"model", c.canonical.value("model", Json::object())}};
  return ws.linear.get(k.dump(), [&] {
    LinearBaseline b;
    auto full = ws.tables.get(c.linear.train_path.string(), [&] { return load_adult(c.linear.train_path); });
    if (c.linear.test_path) {
      b.train = full;
      b.test = ws.tables.get(c.linear.test_path->string(), [&] { return load_adult(*c.linear.test_path); });
    } else {
      if (!(c.linear.test_fraction > 0.0 && c.linear.test_fraction < 1.0))
        throw ConfigError("test_fraction must lie in (0,1)");
      std::vector<std::size_t> order(full->rows.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      Rng split_rng(derive_seed(c.master_seed, "adult-split"));
      split_rng.shuffle(order);
      const auto n_test = participation_count(c.linear.test_fraction, order.size());
      std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
      std::sort(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
      TabularDataset tr{full->schema, {}, full->occupation_attribute, full->dropped_rows};
      TabularDataset te{full->schema, {}, full->occupation_attribute, 0};
      for (std::size_t i = 0; i < order.size(); ++i) (i < n_test ? te : tr).rows.push_back(full->rows[order[i]]);
      b.train = std::make_shared<const TabularDataset>(std::move(tr));
      b.test = std::make_shared<const TabularDataset>(std::move(te));
    }
    b.featurizer = TabularFeaturizer::fit(*b.train);
    for (const auto& r : b.train->rows) {
      b.train_x.push_back(b.featurizer.featurize(r));
      b.train_y.push_back(r.label == Income::positive ? 1 : 0);
    }
    for (const auto& r : b.test->rows) b.test_x.push_back(b.featurizer.featurize(r));
    b.model = train_linear(b.train_x, b.train_y, 2, b.featurizer.dim(), c.linear.hyper);
    return b;
  });
}

inline void run_linear(const ScenarioConfig& c, int trial, Workspace& ws, TrialOutcome& out, std::string& stage,
                       TrialTrace* trace) {
  (void)trial;
  stage = "baseline";
  const auto base = linear_baseline(ws, c);
  const auto& train = *base->train;
  out.hyper = hyper_label(c.linear.hyper);

  stage = "formation";
  std::vector<std::string> occupations;
  for (const auto& s : c.collectives) occupations.push_back(s.occupation);
  const auto part = partition_by_occupation(train, occupations);
  Rng srng(derive_seed(out.trial_seed, "sampling"));
  std::set<std::int64_t> taken;
  std::vector<Collective> collectives;
  for (std::size_t i = 0; i < c.collectives.size(); ++i) {
    const auto& spec = c.collectives[i];
    const std::vector<std::vector<std::int64_t>> pools{part.groups[i], part.rest};
    const auto n = participation_count(*spec.participation, part.groups[i].size());
    auto sample = sample_collective(std::span<const std::vector<std::int64_t>>(pools), SamplingPlan{2, 0, spec.propensity}, n, srng, taken);
    taken.insert(sample.members.begin(), sample.members.end());
    const Income label = spec.archetype == Archetype::promoter ? Income::positive : Income::negative;
    auto& co = out.collectives.emplace_back();
    co.archetype = spec.archetype;
    co.members = sample.members.size();
    co.seed_cluster = 0;
    co.propensity = spec.propensity;
    co.redraws = sample.redraws;
    co.targets = {label == Income::positive ? 1 : 0};
    collectives.push_back({static_cast<int>(i), spec.archetype, std::move(sample.members), 0, spec.propensity,
                           TabularRewrite{spec.occupation, label}});
  }

  const auto train_with = [&](std::span<const Collective* const> active) {
    auto xs = base->train_x;
    auto ys = base->train_y;
    for (const auto* co : active) {
      const auto& rw = std::get<TabularRewrite>(co->strategy);
      for (auto m : co->members) {
        TabularRow row = train.rows[static_cast<std::size_t>(m)];
        row.values[train.occupation_attribute] = rw.occupation;
        xs[static_cast<std::size_t>(m)] = base->featurizer.featurize(row);
        ys[static_cast<std::size_t>(m)] = rw.label == Income::positive ? 1 : 0;
      }
    }
    return train_linear(xs, ys, 2, base->featurizer.dim(), c.linear.hyper);
  };
  const auto objective = [&](const LinearModel& m, std::size_t i) {
    const auto& rw = std::get<TabularRewrite>(collectives[i].strategy);
    std::vector<int> preds;
    for (std::size_t r = 0; r < base->test->rows.size(); ++r)
      if (base->test->occupation(r) == rw.occupation) preds.push_back(predict_class(m, base->test_x[r]));
    return efficacy(preds, rw.label == Income::positive ? 1 : 0);
  };

  for (std::size_t i = 0; i < collectives.size(); ++i) out.collectives[i].g_baseline = objective(base->model, i);
  std::vector<const Collective*> all;
  for (std::size_t i = 0; i < collectives.size(); ++i) {
    stage = "alone:" + std::to_string(i);
    const Collective* one[] = {&collectives[i]};
    auto m = train_with(one);
    out.collectives[i].g_alone = objective(m, i);
    if (trace) trace->alone_linear.push_back(std::move(m));
    all.push_back(&collectives[i]);
  }
  stage = "joint";
  if (collectives.size() == 1) {
    out.collectives[0].g_joint = out.collectives[0].g_alone;
    if (trace) trace->joint_linear = trace->alone_linear.front();
  } else {
    auto m = train_with(all);
    for (std::size_t i = 0; i < collectives.size(); ++i) out.collectives[i].g_joint = objective(m, i);
    if (trace) trace->joint_linear = std::move(m);
  }
  if (trace) {
    trace->baseline_linear = base->model;
    trace->collectives = std::move(collectives);
  }
}

}  // namespace detail

// Never throws for stage failures; they are recorded on the outcome.
inline TrialOutcome run_trial(const ScenarioConfig& config, int trial_index, Workspace& ws,
                              TrialTrace* trace = nullptr) {
  TrialOutcome out;
  out.scenario = config.name;
  out.family = config.family;
  out.size = config.cell_size;
  out.propensity = config.cell_propensity;
  out.archetypes = config.archetypes();
  out.trial = trial_index;
  out.trial_seed = derive_seed(config.master_seed, scenario_hash(config), static_cast<std::uint64_t>(trial_index));
  std::string stage = "setup";
  try {
    switch (config.family) {
      case Family::recsys: detail::run_recsys(config, trial_index, ws, out, stage, trace); break;
      case Family::textclass: detail::run_text(config, trial_index, ws, out, stage, trace); break;
      case Family::linear: detail::run_linear(config, trial_index, ws, out, stage, trace); break;
    }
    for (auto& co : out.collectives) {
      co.score = interaction(co.g_baseline, co.g_alone, co.g_joint);
      out.undefined_ratios += !co.score.relative_alone + !co.score.relative_joint;
    }
  } catch (const std::exception& e) {
    out.failed = true;
    out.failure_stage = stage;
    out.failure_cause = e.what();
    out.collectives.clear();
  }
  return out;
}

inline TrialOutcome run_trial(const ScenarioConfig& config, int trial_index) {
  Workspace ws;
  return run_trial(config, trial_index, ws);
}

struct SweepOptions {
  int workers = 1;
  std::optional<int> trials;  // overrides each config's trial count
};

// Runs every (cell, trial) pair, in parallel when workers > 1. Outcomes are
// ordered by cell, then trial, whatever the scheduling.
inline std::vector<TrialOutcome> run_sweep(std::span<const ScenarioConfig> cells, const SweepOptions& opts,
                                           Workspace& ws) {
  std::vector<std::pair<std::size_t, int>> tasks;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const int trials = opts.trials.value_or(cells[c].trials);
    for (int t = 0; t < trials; ++t) tasks.emplace_back(c, t);
  }
  std::vector<TrialOutcome> results(tasks.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t k = next++; k < tasks.size(); k = next++)
      results[k] = run_trial(cells[tasks[k].first], tasks[k].second, ws);
  };
  const int n = std::max(1, opts.workers);
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < n; ++w) pool.emplace_back(worker);
  }
  return results;
}

inline std::vector<TrialOutcome> run_sweep(std::span<const ScenarioConfig> cells, const SweepOptions& opts = {}) {
  Workspace ws;
  return run_sweep(cells, opts, ws);
}

}  // namespace collact
