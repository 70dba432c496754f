#pragma once
// Declarative scenario configuration (JSON) and sweep expansion.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "collact/classifiers.hpp"
#include "collact/clustering.hpp"
#include "collact/collectives.hpp"
#include "collact/datasets.hpp"
#include "collact/error.hpp"
#include "collact/recsys.hpp"

namespace collact {

using Json = nlohmann::json;

enum class Family { recsys, linear, textclass };

inline std::string to_string(Family f) {
  switch (f) {
    case Family::recsys: return "recsys";
    case Family::linear: return "linear";
    case Family::textclass: return "textclass";
  }
  return "?";
}

struct CollectiveSpec {
  Archetype archetype = Archetype::promoter;
  std::optional<std::size_t> size;      // recsys: absolute member count
  std::optional<double> participation;  // linear: fraction of the occupation group; textclass: of train docs
  double propensity = 1.0;
  std::string signal;        // textclass
  std::string target_class;  // textclass
  std::string occupation;    // linear
};

struct RecsysSpec {
  std::filesystem::path ratings_path;
  MFHyper model;
  std::vector<MFHyper> grid;  // empty: no selection, use `model`
  int folds = 5;
  bool reselect_per_model = false;
  int clusters = 10;
  ClusterMethod method = ClusterMethod::cosine_kmedoids;
  SeedMode seed_mode = SeedMode::max_distance;
  std::size_t k = 10;
  std::size_t v = 10;
  HitMode hit_mode = HitMode::mean_per_item;
  TargetScore target_score = TargetScore::sum;
};

struct TextSpec {
  std::optional<std::filesystem::path> corpus_path;
  TextCorpusLayout layout;
  CorpusSpec synthetic;
  std::uint64_t corpus_seed = 7;
  std::size_t hash_dim = std::size_t{1} << 16;
  TextNorm norm = TextNorm::none;
  std::vector<std::vector<std::string>> alias_groups;
  LinearHyper hyper;
};

struct LinearSpec {
  std::filesystem::path train_path;
  std::optional<std::filesystem::path> test_path;
  double test_fraction = 0.3;  // used only without test_path
  LinearHyper hyper;
};

struct ScenarioConfig {
  std::string name = "scenario";
  Family family = Family::recsys;
  RecsysSpec recsys;
  TextSpec text;
  LinearSpec linear;
  std::vector<CollectiveSpec> collectives;
  int trials = 1;
  std::uint64_t master_seed = 0;
  std::string output;

  // Sweep axes; empty axes are not swept.
  std::vector<double> sweep_size;
  std::vector<double> sweep_propensity;
  std::vector<double> sweep_participation;

  // Cell coordinates, filled by expansion (or from the first collective).
  double cell_size = 0.0;
  double cell_propensity = 0.0;

  // Canonical JSON of the effective cell (no trials/output/sweep).
  Json canonical;

  std::string archetypes() const {
    std::string out;
    for (std::size_t i = 0; i < collectives.size(); ++i) {
      if (i) out += "+";
      out += to_string(collectives[i].archetype);
    }
    return out;
  }
};

namespace detail {

inline void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("key '") + key + "': " + e.what());
  }
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_absolute() || base.empty()) return path;
  return base / path;
}

inline ClusterMethod parse_method(const std::string& s) {
  if (s == "l2_kmeans") return ClusterMethod::l2_kmeans;
  if (s == "cosine_kmedoids") return ClusterMethod::cosine_kmedoids;
  throw ConfigError("unknown clustering method '" + s + "'");
}

inline SeedMode parse_seed_mode(const std::string& s) {
  if (s == "uniform") return SeedMode::uniform;
  if (s == "max_distance") return SeedMode::max_distance;
  throw ConfigError("unknown seed mode '" + s + "'");
}

inline Archetype parse_archetype(const std::string& s) {
  if (s == "promoter") return Archetype::promoter;
  if (s == "demoter") return Archetype::demoter;
  throw ConfigError("unknown archetype '" + s + "'");
}

inline std::vector<MFHyper> parse_grid(const Json& g, const MFHyper& model) {
  if (g.is_string()) {
    if (g == "default") return default_mf_grid(model.factors);
    if (g == "none") return {};
    throw ConfigError("grid must be \"default\", \"none\" or an object of axes");
  }
  check_keys(g, {"epochs", "learning_rate", "regularization"}, "model.grid");
  const auto epochs = get_or<std::vector<int>>(g, "epochs", {model.epochs});
  const auto lrs = get_or<std::vector<double>>(g, "learning_rate", {model.learning_rate});
  const auto regs = get_or<std::vector<double>>(g, "regularization", {model.regularization});
  std::vector<MFHyper> grid;
  for (int e : epochs)
    for (double lr : lrs)
      for (double reg : regs) grid.push_back({model.factors, e, lr, reg});
  return grid;
}

inline LinearHyper parse_linear_hyper(const Json& m) {
  LinearHyper h;
  h.epochs = get_or(m, "epochs", h.epochs);
  h.learning_rate = get_or(m, "learning_rate", h.learning_rate);
  h.l2 = get_or(m, "l2", h.l2);
  return h;
}

}  // namespace detail

// Parses one scenario object. Relative dataset paths resolve against base_dir.
inline ScenarioConfig parse_scenario(const Json& j, const std::filesystem::path& base_dir = {}) {
  using namespace detail;
  check_keys(j, {"name", "family", "dataset", "model", "clustering", "evaluation", "collectives", "trials",
                 "master_seed", "output", "sweep"},
             "scenario");
  ScenarioConfig c;
  c.name = get_or<std::string>(j, "name", c.name);
  if (!j.contains("family")) throw ConfigError("scenario: missing 'family'");
  const auto family = j.at("family").get<std::string>();
  if (family == "recsys") c.family = Family::recsys;
  else if (family == "linear") c.family = Family::linear;
  else if (family == "textclass") c.family = Family::textclass;
  else throw ConfigError("unknown family '" + family + "'");
  c.trials = get_or(j, "trials", c.trials);
  c.master_seed = get_or<std::uint64_t>(j, "master_seed", c.master_seed);
  c.output = get_or<std::string>(j, "output", "");
  if (c.trials < 1) throw ConfigError("trials must be >= 1");

  const Json empty = Json::object();
  const Json& ds = j.contains("dataset") ? j.at("dataset") : empty;
  const Json& model = j.contains("model") ? j.at("model") : empty;

  switch (c.family) {
    case Family::recsys: {
      check_keys(ds, {"path"}, "dataset");
      if (!ds.contains("path")) throw ConfigError("dataset: missing 'path'");
      c.recsys.ratings_path = resolve(base_dir, ds.at("path").get<std::string>());
      check_keys(model, {"factors", "epochs", "learning_rate", "regularization", "grid", "folds",
                         "reselect_per_model"},
                 "model");
      auto& m = c.recsys.model;
      m.factors = get_or(model, "factors", m.factors);
      m.epochs = get_or(model, "epochs", m.epochs);
      m.learning_rate = get_or(model, "learning_rate", m.learning_rate);
      m.regularization = get_or(model, "regularization", m.regularization);
      m.validate();
      c.recsys.grid = parse_grid(model.contains("grid") ? model.at("grid") : Json("default"), m);
      c.recsys.folds = get_or(model, "folds", c.recsys.folds);
      c.recsys.reselect_per_model = get_or(model, "reselect_per_model", false);
      const Json& cl = j.contains("clustering") ? j.at("clustering") : empty;
      check_keys(cl, {"Q", "method", "seed_mode"}, "clustering");
      c.recsys.clusters = get_or(cl, "Q", c.recsys.clusters);
      c.recsys.method = parse_method(get_or<std::string>(cl, "method", to_string(c.recsys.method)));
      c.recsys.seed_mode = parse_seed_mode(get_or<std::string>(cl, "seed_mode", to_string(c.recsys.seed_mode)));
      const Json& ev = j.contains("evaluation") ? j.at("evaluation") : empty;
      check_keys(ev, {"K", "V", "hit_mode", "target_score"}, "evaluation");
      c.recsys.k = get_or<std::size_t>(ev, "K", c.recsys.k);
      c.recsys.v = get_or<std::size_t>(ev, "V", c.recsys.v);
      const auto hm = get_or<std::string>(ev, "hit_mode", "mean_per_item");
      if (hm == "mean_per_item") c.recsys.hit_mode = HitMode::mean_per_item;
      else if (hm == "any_target") c.recsys.hit_mode = HitMode::any_target;
      else throw ConfigError("unknown hit_mode '" + hm + "'");
      const auto ts = get_or<std::string>(ev, "target_score", "sum");
      if (ts == "sum") c.recsys.target_score = TargetScore::sum;
      else if (ts == "mean") c.recsys.target_score = TargetScore::mean;
      else throw ConfigError("unknown target_score '" + ts + "'");
      if (c.recsys.k < 1 || c.recsys.v < 1) throw ConfigError("K and V must be >= 1");
      break;
    }
    case Family::linear: {
      check_keys(ds, {"train", "test", "test_fraction"}, "dataset");
      if (!ds.contains("train")) throw ConfigError("dataset: missing 'train'");
      c.linear.train_path = resolve(base_dir, ds.at("train").get<std::string>());
      if (ds.contains("test")) c.linear.test_path = resolve(base_dir, ds.at("test").get<std::string>());
      c.linear.test_fraction = get_or(ds, "test_fraction", c.linear.test_fraction);
      check_keys(model, {"epochs", "learning_rate", "l2"}, "model");
      c.linear.hyper = parse_linear_hyper(model);
      break;
    }
    case Family::textclass: {
      check_keys(ds, {"path", "classes", "train_size", "test_size", "synthetic"}, "dataset");
      if (ds.contains("path")) {
        c.text.corpus_path = resolve(base_dir, ds.at("path").get<std::string>());
        c.text.layout.classes = get_or<std::vector<std::string>>(ds, "classes", {});
        c.text.layout.train_size = get_or<std::size_t>(ds, "train_size", 0);
        c.text.layout.test_size = get_or<std::size_t>(ds, "test_size", 0);
      } else {
        const Json& s = ds.contains("synthetic") ? ds.at("synthetic") : empty;
        check_keys(s, {"class_count", "vocab_size", "doc_length", "train_size", "test_size",
                       "background_signal_rate", "signal_tokens", "class_token_rate", "class_tokens_per_class",
                       "seed"},
                   "dataset.synthetic");
        auto& cs = c.text.synthetic;
        cs.class_count = get_or(s, "class_count", cs.class_count);
        cs.vocab_size = get_or(s, "vocab_size", cs.vocab_size);
        const auto len = get_or<std::vector<int>>(s, "doc_length", {cs.doc_length_min, cs.doc_length_max});
        if (len.size() != 2) throw ConfigError("doc_length must be [min, max]");
        cs.doc_length_min = len[0];
        cs.doc_length_max = len[1];
        cs.train_size = get_or(s, "train_size", cs.train_size);
        cs.test_size = get_or(s, "test_size", cs.test_size);
        cs.background_signal_rate = get_or(s, "background_signal_rate", cs.background_signal_rate);
        cs.signal_tokens = get_or(s, "signal_tokens", cs.signal_tokens);
        cs.class_token_rate = get_or(s, "class_token_rate", cs.class_token_rate);
        cs.class_tokens_per_class = get_or(s, "class_tokens_per_class", cs.class_tokens_per_class);
        c.text.corpus_seed = get_or<std::uint64_t>(s, "seed", c.text.corpus_seed);
        try {
          cs.validate();
        } catch (const ValidationError& e) {
          throw ConfigError(std::string("dataset.synthetic: ") + e.what());
        }
      }
      check_keys(model, {"epochs", "learning_rate", "l2", "hash_dim", "normalize", "alias_groups"}, "model");
      c.text.hyper = parse_linear_hyper(model);
      c.text.hash_dim = get_or<std::size_t>(model, "hash_dim", c.text.hash_dim);
      const auto norm = get_or<std::string>(model, "normalize", "none");
      if (norm == "l2") c.text.norm = TextNorm::l2;
      else if (norm == "none") c.text.norm = TextNorm::none;
      else throw ConfigError("unknown normalize '" + norm + "'");
      c.text.alias_groups = get_or<std::vector<std::vector<std::string>>>(model, "alias_groups", {});
      break;
    }
  }

  if (!j.contains("collectives") || !j.at("collectives").is_array() || j.at("collectives").empty())
    throw ConfigError("scenario needs at least one collective");
  for (const auto& cj : j.at("collectives")) {
    CollectiveSpec s;
    switch (c.family) {
      case Family::recsys:
        check_keys(cj, {"archetype", "size", "propensity"}, "collective");
        if (!cj.contains("size")) throw ConfigError("recsys collective needs 'size'");
        s.size = cj.at("size").get<std::size_t>();
        break;
      case Family::linear:
        check_keys(cj, {"archetype", "participation", "propensity", "occupation"}, "collective");
        s.participation = get_or(cj, "participation", 0.0);
        s.occupation = get_or<std::string>(cj, "occupation", "");
        if (s.occupation.empty()) throw ConfigError("linear collective needs 'occupation'");
        break;
      case Family::textclass:
        check_keys(cj, {"archetype", "participation", "signal", "target_class"}, "collective");
        s.participation = get_or(cj, "participation", 0.0);
        s.signal = get_or<std::string>(cj, "signal", "");
        s.target_class = get_or<std::string>(cj, "target_class", "");
        if (s.signal.empty() || s.target_class.empty())
          throw ConfigError("textclass collective needs 'signal' and 'target_class'");
        break;
    }
    s.archetype = parse_archetype(get_or<std::string>(cj, "archetype", "promoter"));
    s.propensity = get_or(cj, "propensity", 1.0);
    if (!(s.propensity >= 0.0 && s.propensity <= 1.0)) throw ConfigError("propensity must lie in [0,1]");
    if (s.participation && !(*s.participation >= 0.0 && *s.participation <= 1.0))
      throw ConfigError("participation must lie in [0,1]");
    c.collectives.push_back(std::move(s));
  }
  if (c.family == Family::textclass)
    for (const auto& s : c.collectives)
      if (s.archetype != Archetype::promoter) throw ConfigError("textclass collectives are promoters");

  if (j.contains("sweep")) {
    const auto& sw = j.at("sweep");
    check_keys(sw, {"size", "propensity", "participation"}, "sweep");
    c.sweep_size = get_or<std::vector<double>>(sw, "size", {});
    c.sweep_propensity = get_or<std::vector<double>>(sw, "propensity", {});
    c.sweep_participation = get_or<std::vector<double>>(sw, "participation", {});
    if (c.family == Family::recsys && !c.sweep_participation.empty())
      throw ConfigError("recsys sweeps use 'size', not 'participation'");
    if (c.family != Family::recsys && !c.sweep_size.empty())
      throw ConfigError("classification sweeps use 'participation', not 'size'");
  }

  Json canon = j;
  canon.erase("trials");
  canon.erase("output");
  canon.erase("sweep");
  c.canonical = canon;
  const auto& first = c.collectives.front();
  c.cell_size = first.size ? static_cast<double>(*first.size) : first.participation.value_or(0.0);
  c.cell_propensity = first.propensity;
  return c;
}

// Cross product of the sweep axes (size or participation, then propensity),
// applied to every collective. A config without axes is its own single cell.
inline std::vector<ScenarioConfig> expand_sweep(const ScenarioConfig& base) {
  const auto& sizes = base.family == Family::recsys ? base.sweep_size : base.sweep_participation;
  const std::vector<std::optional<double>> size_axis =
      sizes.empty() ? std::vector<std::optional<double>>{std::nullopt}
                    : std::vector<std::optional<double>>(sizes.begin(), sizes.end());
  const std::vector<std::optional<double>> p_axis =
      base.sweep_propensity.empty()
          ? std::vector<std::optional<double>>{std::nullopt}
          : std::vector<std::optional<double>>(base.sweep_propensity.begin(), base.sweep_propensity.end());
  std::vector<ScenarioConfig> cells;
  for (const auto& size : size_axis) {
    for (const auto& p : p_axis) {
      ScenarioConfig cell = base;
      cell.sweep_size.clear();
      cell.sweep_propensity.clear();
      cell.sweep_participation.clear();
      auto& cj = cell.canonical["collectives"];
      for (std::size_t i = 0; i < cell.collectives.size(); ++i) {
        auto& s = cell.collectives[i];
        if (size) {
          if (base.family == Family::recsys) {
            if (*size < 0 || std::floor(*size) != *size) throw ConfigError("sweep size must be a whole number");
            s.size = static_cast<std::size_t>(*size);
            cj[i]["size"] = *s.size;
          } else {
            if (!(*size >= 0.0 && *size <= 1.0)) throw ConfigError("participation must lie in [0,1]");
            s.participation = *size;
            cj[i]["participation"] = *size;
          }
        }
        if (p) {
          if (!(*p >= 0.0 && *p <= 1.0)) throw ConfigError("propensity must lie in [0,1]");
          s.propensity = *p;
          cj[i]["propensity"] = *p;
        }
      }
      const auto& first = cell.collectives.front();
      cell.cell_size = first.size ? static_cast<double>(*first.size) : first.participation.value_or(0.0);
      cell.cell_propensity = first.propensity;
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

// A config file holds one scenario object or {"scenarios": [...]}.
inline std::vector<ScenarioConfig> parse_config(const Json& j, const std::filesystem::path& base_dir = {}) {
  std::vector<ScenarioConfig> out;
  if (j.is_object() && j.contains("scenarios")) {
    detail::check_keys(j, {"scenarios"}, "config");
    for (const auto& s : j.at("scenarios")) out.push_back(parse_scenario(s, base_dir));
  } else {
    out.push_back(parse_scenario(j, base_dir));
  }
  return out;
}

inline std::vector<ScenarioConfig> load_config(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(j, path.parent_path());
}

inline std::uint64_t scenario_hash(const ScenarioConfig& c) { return fnv1a64(c.canonical.dump()); }

}  // namespace collact
