#pragma once
// Report files: per-trial rows, per-cell aggregates, diagnostics, failures and
// run metadata. Aggregates are always computed from per-trial rows, so the
// `report` command rebuilds them from trials.csv through the same path.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "collact/config.hpp"
#include "collact/error.hpp"
#include "collact/format.hpp"
#include "collact/harness.hpp"
#include "collact/metrics.hpp"

namespace collact {

inline constexpr const char* kVersion = "1.0.0";

enum class Condition { baseline, alone, joint };

inline std::string to_string(Condition c) {
  switch (c) {
    case Condition::baseline: return "baseline";
    case Condition::alone: return "alone";
    case Condition::joint: return "joint";
  }
  return "?";
}

// One collective under one model condition.
struct TrialRow {
  std::string scenario;
  std::string family;
  double size = 0.0;
  double propensity = 0.0;
  std::string archetypes;
  int trial = 0;
  int collective = 0;
  std::string archetype;
  std::size_t members = 0;
  Condition condition = Condition::baseline;
  double objective = 0.0;
  std::optional<double> relative;
  std::optional<double> ct;  // joint rows only
};

inline std::vector<TrialRow> trial_rows(std::span<const TrialOutcome> outcomes) {
  std::vector<TrialRow> rows;
  for (const auto& o : outcomes) {
    if (o.failed) continue;
    for (std::size_t i = 0; i < o.collectives.size(); ++i) {
      const auto& co = o.collectives[i];
      TrialRow r{o.scenario, to_string(o.family), o.size, o.propensity, o.archetypes, o.trial,
                 static_cast<int>(i), to_string(co.archetype), co.members, Condition::baseline, 0.0, std::nullopt,
                 std::nullopt};
      r.condition = Condition::baseline;
      r.objective = co.g_baseline;
      r.relative = relative_hit_ratio(co.g_baseline, co.g_baseline);
      rows.push_back(r);
      r.condition = Condition::alone;
      r.objective = co.g_alone;
      r.relative = co.score.relative_alone;
      rows.push_back(r);
      r.condition = Condition::joint;
      r.objective = co.g_joint;
      r.relative = co.score.relative_joint;
      r.ct = co.score.ct;
      rows.push_back(r);
    }
  }
  return rows;
}

struct AggregateRow {
  std::string scenario;
  std::string family;
  double size = 0.0;
  double propensity = 0.0;
  std::string archetypes;
  int collective = 0;
  std::string archetype;
  std::string metric;
  std::optional<Aggregate> value;  // empty when every value was undefined
  std::size_t undefined = 0;
};

inline const std::vector<std::string>& aggregate_metrics() {
  static const std::vector<std::string> m{"objective_baseline", "objective_alone", "objective_joint",
                                          "relative_alone",     "relative_joint",  "ct"};
  return m;
}

// Groups by (scenario, size, propensity, archetypes, collective) in order of
// first appearance.
inline std::vector<AggregateRow> aggregate_rows(std::span<const TrialRow> rows) {
  struct Group {
    const TrialRow* head = nullptr;
    std::map<std::string, std::vector<std::optional<double>>> values;
  };
  std::vector<Group> groups;
  std::map<std::string, std::size_t> index;
  for (const auto& r : rows) {
    const auto key = r.scenario + '\x1f' + format_double(r.size) + '\x1f' + format_double(r.propensity) + '\x1f' +
                     r.archetypes + '\x1f' + std::to_string(r.collective);
    auto [it, fresh] = index.emplace(key, groups.size());
    if (fresh) groups.push_back({&r, {}});
    auto& g = groups[it->second];
    const auto cond = to_string(r.condition);
    g.values["objective_" + cond].push_back(r.objective);
    if (r.condition == Condition::alone) g.values["relative_alone"].push_back(r.relative);
    if (r.condition == Condition::joint) {
      g.values["relative_joint"].push_back(r.relative);
      g.values["ct"].push_back(r.ct);
    }
  }
  std::vector<AggregateRow> out;
  for (const auto& g : groups) {
    for (const auto& metric : aggregate_metrics()) {
      const auto it = g.values.find(metric);
      if (it == g.values.end()) continue;
      AggregateRow a{g.head->scenario, g.head->family, g.head->size, g.head->propensity, g.head->archetypes,
                     g.head->collective, g.head->archetype, metric, std::nullopt, 0};
      std::size_t undefined = 0;
      for (const auto& v : it->second) undefined += !v;
      a.undefined = undefined;
      if (undefined < it->second.size()) a.value = aggregate(std::span<const std::optional<double>>(it->second));
      out.push_back(std::move(a));
    }
  }
  return out;
}

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

inline std::vector<std::string> csv_split(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }

inline std::optional<double> parse_opt(const std::string& s, const std::string& source, std::size_t line) {
  if (s == "NA") return std::nullopt;
  const auto v = parse_number<double>(s);
  if (!v) throw ParseError(source, line, "bad number '" + s + "'");
  return v;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
  if (!f.flush()) throw Error("cannot write " + path.string());
}

}  // namespace detail

inline constexpr const char* kTrialsHeader =
    "scenario,family,size,propensity,archetypes,trial,collective,archetype,members,condition,objective,relative,ct";

inline std::string trials_csv(std::span<const TrialRow> rows) {
  using detail::csv_field;
  std::string out = std::string(kTrialsHeader) + "\n";
  for (const auto& r : rows) {
    out += csv_field(r.scenario) + "," + r.family + "," + format_double(r.size) + "," + format_double(r.propensity) +
           "," + r.archetypes + "," + std::to_string(r.trial) + "," + std::to_string(r.collective) + "," +
           r.archetype + "," + std::to_string(r.members) + "," + to_string(r.condition) + "," +
           format_double(r.objective) + "," + detail::opt(r.relative) + "," + detail::opt(r.ct) + "\n";
  }
  return out;
}

inline std::vector<TrialRow> parse_trials_csv(const std::string& text, const std::string& source = "trials.csv") {
  std::vector<TrialRow> rows;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string_view line(text.data() + start, end - start);
    start = end + 1;
    ++line_no;
    if (line_no == 1) {
      if (line != kTrialsHeader) throw ParseError(source, line_no, "unexpected header");
      continue;
    }
    if (line.empty()) continue;
    const auto f = detail::csv_split(line);
    if (f.size() != 13) throw ParseError(source, line_no, "expected 13 fields");
    const auto num = [&](const std::string& s) {
      const auto v = parse_number<double>(s);
      if (!v) throw ParseError(source, line_no, "bad number '" + s + "'");
      return *v;
    };
    const auto whole = [&](const std::string& s) {
      const auto v = parse_number<long long>(s);
      if (!v) throw ParseError(source, line_no, "bad integer '" + s + "'");
      return *v;
    };
    TrialRow r;
    r.scenario = f[0];
    r.family = f[1];
    r.size = num(f[2]);
    r.propensity = num(f[3]);
    r.archetypes = f[4];
    r.trial = static_cast<int>(whole(f[5]));
    r.collective = static_cast<int>(whole(f[6]));
    r.archetype = f[7];
    r.members = static_cast<std::size_t>(whole(f[8]));
    if (f[9] == "baseline") r.condition = Condition::baseline;
    else if (f[9] == "alone") r.condition = Condition::alone;
    else if (f[9] == "joint") r.condition = Condition::joint;
    else throw ParseError(source, line_no, "unknown condition '" + f[9] + "'");
    r.objective = num(f[10]);
    r.relative = detail::parse_opt(f[11], source, line_no);
    r.ct = detail::parse_opt(f[12], source, line_no);
    rows.push_back(std::move(r));
  }
  if (line_no == 0) throw ParseError(source, 0, "empty file");
  return rows;
}

inline std::string aggregates_csv(std::span<const AggregateRow> rows) {
  std::string out = "scenario,family,size,propensity,archetypes,collective,archetype,metric,mean,sigma,stderr,n,undefined\n";
  for (const auto& a : rows) {
    out += detail::csv_field(a.scenario) + "," + a.family + "," + format_double(a.size) + "," +
           format_double(a.propensity) + "," + a.archetypes + "," + std::to_string(a.collective) + "," + a.archetype +
           "," + a.metric + ",";
    if (a.value)
      out += format_double(a.value->mean) + "," + format_double(a.value->sigma) + "," +
             format_double(a.value->stderr_) + "," + std::to_string(a.value->count);
    else
      out += "NA,NA,NA,0";
    out += "," + std::to_string(a.undefined) + "\n";
  }
  return out;
}

inline std::string aggregates_json(std::span<const AggregateRow> rows) {
  Json arr = Json::array();
  for (const auto& a : rows) {
    Json j{{"scenario", a.scenario}, {"family", a.family},       {"size", a.size},
           {"propensity", a.propensity}, {"archetypes", a.archetypes}, {"collective", a.collective},
           {"archetype", a.archetype}, {"metric", a.metric},     {"undefined", a.undefined}};
    if (a.value) {
      j["mean"] = a.value->mean;
      j["sigma"] = a.value->sigma;
      j["stderr"] = a.value->stderr_;
      j["n"] = a.value->count;
    } else {
      j["mean"] = nullptr;
      j["sigma"] = nullptr;
      j["stderr"] = nullptr;
      j["n"] = 0;
    }
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

inline std::string diagnostics_csv(std::span<const TrialOutcome> outcomes) {
  std::string out =
      "scenario,size,propensity,archetypes,trial,trial_seed,model_seed,hyper,candidate_hash,excluded_users,"
      "undefined_ratios,collective,seed_cluster,members,redraws,displaced_targets,targets\n";
  for (const auto& o : outcomes) {
    if (o.failed) continue;
    for (std::size_t i = 0; i < o.collectives.size(); ++i) {
      const auto& co = o.collectives[i];
      std::string targets;
      for (std::size_t t = 0; t < co.targets.size(); ++t) targets += (t ? " " : "") + std::to_string(co.targets[t]);
      out += detail::csv_field(o.scenario) + "," + format_double(o.size) + "," + format_double(o.propensity) + "," +
             o.archetypes + "," + std::to_string(o.trial) + "," + std::to_string(o.trial_seed) + "," +
             std::to_string(o.model_seed) + "," + o.hyper + "," + std::to_string(o.candidate_hash) + "," +
             std::to_string(o.excluded_users) + "," + std::to_string(o.undefined_ratios) + "," + std::to_string(i) +
             "," + std::to_string(co.seed_cluster) + "," + std::to_string(co.members) + "," +
             std::to_string(co.redraws) + "," + std::to_string(co.displaced_targets) + "," + targets + "\n";
    }
  }
  return out;
}

inline std::string failures_log(std::span<const TrialOutcome> outcomes) {
  std::string out;
  for (const auto& o : outcomes)
    if (o.failed)
      out += "scenario=" + o.scenario + " size=" + format_double(o.size) + " propensity=" +
             format_double(o.propensity) + " trial=" + std::to_string(o.trial) + " stage=" + o.failure_stage +
             " cause=" + o.failure_cause + "\n";
  return out;
}

inline std::string run_meta_json(std::span<const ScenarioConfig> cells, std::span<const TrialOutcome> outcomes) {
  Json scen = Json::array();
  std::string all;
  for (const auto& c : cells) {
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(scenario_hash(c)));
    scen.push_back({{"name", c.name}, {"hash", hex}, {"master_seed", c.master_seed},
                    {"size", c.cell_size}, {"propensity", c.cell_propensity}});
    all += c.canonical.dump();
  }
  std::size_t failed = 0;
  for (const auto& o : outcomes) failed += o.failed;
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(all)));
  Json meta{{"version", kVersion},
            {"config_hash", hex},
            {"master_seed", cells.empty() ? 0 : cells.front().master_seed},
            {"cells", scen},
            {"trials", outcomes.size()},
            {"failed", failed}};
  return meta.dump(2) + "\n";
}

enum class ReportFormat { csv, structured };

// Writes the aggregate file for `rows` into dir.
inline void write_aggregates(const std::filesystem::path& dir, std::span<const TrialRow> rows, ReportFormat format) {
  const auto agg = aggregate_rows(rows);
  if (format == ReportFormat::csv)
    detail::write_file(dir / "aggregates.csv", aggregates_csv(agg));
  else
    detail::write_file(dir / "aggregates.json", aggregates_json(agg));
}

inline void emit_report(const std::filesystem::path& dir, std::span<const ScenarioConfig> cells,
                        std::span<const TrialOutcome> outcomes, ReportFormat format = ReportFormat::csv) {
  if (outcomes.empty()) throw Error("no outcomes to report");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());
  const auto rows = trial_rows(outcomes);
  detail::write_file(dir / "trials.csv", trials_csv(rows));
  write_aggregates(dir, rows, format);
  detail::write_file(dir / "diagnostics.csv", diagnostics_csv(outcomes));
  detail::write_file(dir / "failures.log", failures_log(outcomes));
  detail::write_file(dir / "run_meta.json", run_meta_json(cells, outcomes));
}

// Rebuilds the aggregate file from an existing trials.csv.
inline void rebuild_report(const std::filesystem::path& dir, ReportFormat format) {
  const auto path = dir / "trials.csv";
  const auto rows = parse_trials_csv(read_file(path), path.string());
  write_aggregates(dir, rows, format);
}

}  // namespace collact
