#pragma once
// Ingestion for the three data families: explicit ratings (MovieLens u.data),
// tabular census records (UCI Adult) and labelled text, plus a seeded
// generator for synthetic text corpora.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "collact/error.hpp"
#include "collact/format.hpp"
#include "collact/rng.hpp"

namespace collact {

using UserId = std::int64_t;
using ItemId = std::int64_t;

inline constexpr double kMinRating = 1.0;
inline constexpr double kMaxRating = 5.0;

struct Rating {
  UserId user = 0;
  ItemId item = 0;
  double value = 0.0;
  std::int64_t timestamp = 0;

  friend bool operator==(const Rating&, const Rating&) = default;
};

// Sparse user x item ratings. Entry order is preserved: edits overwrite in
// place and additions append.
class RatingMatrix {
 public:
  RatingMatrix() = default;

  explicit RatingMatrix(std::vector<Rating> entries) : entries_(std::move(entries)) {
    index_.reserve(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      check_value(entries_[i]);
      if (!index_.emplace(key(entries_[i].user, entries_[i].item), i).second) {
        throw ValidationError("duplicate rating for user " + std::to_string(entries_[i].user) +
                              ", item " + std::to_string(entries_[i].item));
      }
    }
    rebuild_id_sets();
  }

  const std::vector<Rating>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  // Sorted ascending.
  const std::vector<UserId>& users() const noexcept { return users_; }
  const std::vector<ItemId>& items() const noexcept { return items_; }

  std::optional<std::size_t> find(UserId u, ItemId i) const {
    const auto it = index_.find(key(u, i));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  // Overwrites an existing (user, item) entry or appends a new one.
  void upsert(const Rating& r) {
    check_value(r);
    if (auto pos = find(r.user, r.item)) {
      entries_[*pos].value = r.value;
      return;
    }
    index_.emplace(key(r.user, r.item), entries_.size());
    entries_.push_back(r);
    insert_sorted(users_, r.user);
    insert_sorted(items_, r.item);
  }

  friend bool operator==(const RatingMatrix& a, const RatingMatrix& b) {
    return a.entries_ == b.entries_;
  }

 private:
  static std::uint64_t key(UserId u, ItemId i) {
    return (static_cast<std::uint64_t>(u) << 32) ^ static_cast<std::uint64_t>(i & 0xFFFFFFFF);
  }

  static void check_value(const Rating& r) {
    if (!(r.value >= kMinRating && r.value <= kMaxRating)) {
      throw ValidationError("rating " + format_double(r.value) + " outside [1,5] for user " +
                            std::to_string(r.user));
    }
  }

  template <typename T>
  static void insert_sorted(std::vector<T>& v, T x) {
    auto it = std::lower_bound(v.begin(), v.end(), x);
    if (it == v.end() || *it != x) v.insert(it, x);
  }

  void rebuild_id_sets() {
    users_.clear();
    items_.clear();
    for (const auto& e : entries_) {
      users_.push_back(e.user);
      items_.push_back(e.item);
    }
    std::sort(users_.begin(), users_.end());
    users_.erase(std::unique(users_.begin(), users_.end()), users_.end());
    std::sort(items_.begin(), items_.end());
    items_.erase(std::unique(items_.begin(), items_.end()), items_.end());
  }

  std::vector<Rating> entries_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
  std::vector<UserId> users_;
  std::vector<ItemId> items_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Parses u.data text: `user\titem\trating\ttimestamp` per line.
inline RatingMatrix parse_movielens(std::string_view text, const std::string& source = "<memory>") {
  std::vector<Rating> entries;
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(trim(line), '\t');
    if (fields.size() != 4) {
      throw ParseError(source, line_no, "expected 4 tab-separated fields, got " +
                                            std::to_string(fields.size()));
    }
    const auto user = parse_number<std::int64_t>(fields[0]);
    const auto item = parse_number<std::int64_t>(fields[1]);
    const auto value = parse_number<double>(fields[2]);
    const auto ts = parse_number<std::int64_t>(fields[3]);
    if (!user || !item || !value || !ts) throw ParseError(source, line_no, "malformed numeric field");
    entries.push_back({*user, *item, *value, *ts});
  }
  if (entries.empty()) throw EmptyDatasetError(source + ": no ratings");
  return RatingMatrix(std::move(entries));
}

inline RatingMatrix load_movielens(const std::filesystem::path& path) {
  return parse_movielens(read_file(path), path.string());
}

inline std::string serialize_movielens(const RatingMatrix& m) {
  std::string out;
  for (const auto& e : m.entries()) {
    out += std::to_string(e.user);
    out += '\t';
    out += std::to_string(e.item);
    out += '\t';
    out += format_double(e.value);
    out += '\t';
    out += std::to_string(e.timestamp);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tabular census data

enum class AttributeKind { categorical, numeric };

struct Attribute {
  std::string name;
  AttributeKind kind;
};

enum class Income { negative, positive };

struct TabularRow {
  std::vector<std::string> values;  // one per schema attribute
  Income label = Income::negative;

  friend bool operator==(const TabularRow&, const TabularRow&) = default;
};

struct TabularDataset {
  std::vector<Attribute> schema;
  std::vector<TabularRow> rows;
  std::size_t occupation_attribute = 0;
  std::size_t dropped_rows = 0;  // rows removed for missing values at ingestion

  const std::string& occupation(std::size_t row) const {
    return rows.at(row).values.at(occupation_attribute);
  }
};

inline std::vector<Attribute> adult_schema() {
  using K = AttributeKind;
  return {{"age", K::numeric},           {"workclass", K::categorical},
          {"fnlwgt", K::numeric},        {"education", K::categorical},
          {"education-num", K::numeric}, {"marital-status", K::categorical},
          {"occupation", K::categorical}, {"relationship", K::categorical},
          {"race", K::categorical},      {"sex", K::categorical},
          {"capital-gain", K::numeric},  {"capital-loss", K::numeric},
          {"hours-per-week", K::numeric}, {"native-country", K::categorical}};
}

// Accepts both adult.data and adult.test conventions: lines starting with '|'
// are comments and labels may carry a trailing period.
inline TabularDataset parse_adult(std::string_view text, const std::string& source = "<memory>") {
  TabularDataset ds;
  ds.schema = adult_schema();
  ds.occupation_attribute = 6;
  const std::size_t arity = ds.schema.size() + 1;
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '|') continue;
    const auto fields = split(line, ',');
    if (fields.size() != arity) {
      throw ParseError(source, line_no, "expected " + std::to_string(arity) + " fields, got " +
                                            std::to_string(fields.size()));
    }
    auto label = trim(fields.back());
    if (!label.empty() && label.back() == '.') label.remove_suffix(1);
    TabularRow row;
    if (label == ">50K") {
      row.label = Income::positive;
    } else if (label == "<=50K") {
      row.label = Income::negative;
    } else {
      throw ValidationError(source + ":" + std::to_string(line_no) + ": unknown label '" +
                            std::string(label) + "'");
    }
    bool missing = false;
    for (std::size_t a = 0; a < ds.schema.size(); ++a) {
      const auto v = trim(fields[a]);
      if (v == "?" || v.empty()) {
        missing = true;
        break;
      }
      if (ds.schema[a].kind == AttributeKind::numeric && !parse_number<double>(v)) {
        throw ParseError(source, line_no, "attribute " + ds.schema[a].name + " is not numeric");
      }
      row.values.emplace_back(v);
    }
    if (missing) {
      ++ds.dropped_rows;
      continue;
    }
    ds.rows.push_back(std::move(row));
  }
  if (ds.rows.empty()) throw EmptyDatasetError(source + ": no complete records");
  return ds;
}

inline TabularDataset load_adult(const std::filesystem::path& path) {
  return parse_adult(read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Text

enum class Split { train, test };

struct Document {
  std::vector<std::string> tokens;
  int label = 0;  // index into TextCorpus::classes
  Split split = Split::train;

  friend bool operator==(const Document&, const Document&) = default;
};

struct TextCorpus {
  std::vector<std::string> classes;
  std::vector<Document> docs;

  std::vector<std::size_t> indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < docs.size(); ++i)
      if (docs[i].split == s) out.push_back(i);
    return out;
  }

  int class_index(std::string_view name) const {
    const auto it = std::find(classes.begin(), classes.end(), name);
    if (it == classes.end()) throw ValidationError("unknown class '" + std::string(name) + "'");
    return static_cast<int>(it - classes.begin());
  }

  friend bool operator==(const TextCorpus&, const TextCorpus&) = default;
};

struct TextCorpusLayout {
  std::vector<std::string> classes;  // empty: inferred from the data, sorted
  std::size_t train_size = 0;        // 0 with a single file: every record is train
  std::size_t test_size = 0;
};

namespace detail {

struct RawRecord {
  std::string label;
  std::vector<std::string> tokens;
};

inline std::vector<RawRecord> parse_labelled_lines(std::string_view text, const std::string& source) {
  std::vector<RawRecord> out;
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) throw ParseError(source, line_no, "missing label separator");
    RawRecord r{std::string(trim(line.substr(0, tab))), split_whitespace(line.substr(tab + 1))};
    if (r.tokens.empty()) throw ValidationError(source + ":" + std::to_string(line_no) + ": empty document");
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace detail

// Records are `label<TAB>text`. A directory holds train.tsv and test.tsv; a
// single file is split by the layout's declared sizes, train first.
inline TextCorpus load_text_corpus(const std::filesystem::path& path, const TextCorpusLayout& layout = {}) {
  std::vector<detail::RawRecord> train, test;
  if (std::filesystem::is_directory(path)) {
    train = detail::parse_labelled_lines(read_file(path / "train.tsv"), (path / "train.tsv").string());
    test = detail::parse_labelled_lines(read_file(path / "test.tsv"), (path / "test.tsv").string());
  } else {
    auto all = detail::parse_labelled_lines(read_file(path), path.string());
    const std::size_t n_train = layout.train_size == 0 ? all.size() : layout.train_size;
    if (n_train > all.size()) throw ValidationError("corpus has fewer records than the declared train size");
    test.assign(std::make_move_iterator(all.begin() + static_cast<std::ptrdiff_t>(n_train)),
                std::make_move_iterator(all.end()));
    all.resize(n_train);
    train = std::move(all);
  }
  if (layout.train_size != 0 && train.size() != layout.train_size)
    throw ValidationError("train split has " + std::to_string(train.size()) + " records, declared " +
                          std::to_string(layout.train_size));
  if (layout.test_size != 0 && test.size() != layout.test_size)
    throw ValidationError("test split has " + std::to_string(test.size()) + " records, declared " +
                          std::to_string(layout.test_size));
  if (train.empty() && test.empty()) throw EmptyDatasetError(path.string() + ": no documents");

  TextCorpus corpus;
  corpus.classes = layout.classes;
  if (corpus.classes.empty()) {
    for (const auto* part : {&train, &test})
      for (const auto& r : *part) corpus.classes.push_back(r.label);
    std::sort(corpus.classes.begin(), corpus.classes.end());
    corpus.classes.erase(std::unique(corpus.classes.begin(), corpus.classes.end()), corpus.classes.end());
  }
  for (auto [part, split] : {std::pair{&train, Split::train}, std::pair{&test, Split::test}}) {
    for (auto& r : *part) corpus.docs.push_back({std::move(r.tokens), corpus.class_index(r.label), split});
  }
  return corpus;
}

struct CorpusSpec {
  int class_count = 10;
  int vocab_size = 2000;
  int doc_length_min = 50;
  int doc_length_max = 200;
  std::size_t train_size = 5000;
  std::size_t test_size = 1000;
  // Per-word probability of emitting one of signal_tokens as ordinary text.
  double background_signal_rate = 0.0;
  std::vector<std::string> signal_tokens = {"sig0", "sig1"};
  // Per-word probability of drawing from the document class's exclusive tokens.
  double class_token_rate = 0.06;
  int class_tokens_per_class = 20;

  void validate() const {
    if (class_count < 2) throw ValidationError("class_count must be >= 2");
    if (vocab_size < 1) throw ValidationError("vocab_size must be >= 1");
    if (doc_length_min < 1 || doc_length_max < doc_length_min)
      throw ValidationError("doc length range must satisfy 1 <= min <= max");
    if (!(background_signal_rate >= 0.0 && background_signal_rate <= 0.01))
      throw ValidationError("background_signal_rate must lie in [0, 0.01]");
    if (background_signal_rate > 0.0 && signal_tokens.empty())
      throw ValidationError("background signal rate set without signal tokens");
    if (!(class_token_rate >= 0.0 && class_token_rate <= 1.0 - background_signal_rate))
      throw ValidationError("class_token_rate out of range");
    if (class_tokens_per_class < 1) throw ValidationError("class_tokens_per_class must be >= 1");
  }
};

inline std::string synth_class_name(int c) { return "job" + std::to_string(c); }

// Each class draws words from a shared Zipf vocabulary plus a block of
// class-exclusive tokens. Deterministic given the seed.
inline TextCorpus synth_text_corpus(const CorpusSpec& spec, Rng& rng) {
  spec.validate();
  TextCorpus corpus;
  for (int c = 0; c < spec.class_count; ++c) corpus.classes.push_back(synth_class_name(c));

  std::vector<double> zipf_cdf(static_cast<std::size_t>(spec.vocab_size));
  double acc = 0.0;
  for (int j = 0; j < spec.vocab_size; ++j) zipf_cdf[static_cast<std::size_t>(j)] = acc += 1.0 / (j + 1.0);
  for (auto& v : zipf_cdf) v /= acc;

  const auto total = spec.train_size + spec.test_size;
  corpus.docs.reserve(total);
  for (std::size_t d = 0; d < total; ++d) {
    Document doc;
    doc.split = d < spec.train_size ? Split::train : Split::test;
    doc.label = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.class_count)));
    const auto span = static_cast<std::uint64_t>(spec.doc_length_max - spec.doc_length_min + 1);
    const auto length = spec.doc_length_min + static_cast<int>(rng.below(span));
    doc.tokens.reserve(static_cast<std::size_t>(length));
    for (int w = 0; w < length; ++w) {
      const double u = rng.uniform();
      if (u < spec.background_signal_rate) {
        doc.tokens.push_back(spec.signal_tokens[rng.below(spec.signal_tokens.size())]);
      } else if (u < spec.background_signal_rate + spec.class_token_rate) {
        const auto j = rng.below(static_cast<std::uint64_t>(spec.class_tokens_per_class));
        doc.tokens.push_back("c" + std::to_string(doc.label) + "_" + std::to_string(j));
      } else {
        const auto it = std::upper_bound(zipf_cdf.begin(), zipf_cdf.end(), rng.uniform());
        const auto j = std::min<std::ptrdiff_t>(it - zipf_cdf.begin(), spec.vocab_size - 1);
        doc.tokens.push_back("w" + std::to_string(j));
      }
    }
    corpus.docs.push_back(std::move(doc));
  }
  return corpus;
}

inline std::string serialize_text_corpus(const TextCorpus& corpus, Split split) {
  std::string out;
  for (const auto& d : corpus.docs) {
    if (d.split != split) continue;
    out += corpus.classes[static_cast<std::size_t>(d.label)];
    out += '\t';
    for (std::size_t i = 0; i < d.tokens.size(); ++i) {
      if (i) out += ' ';
      out += d.tokens[i];
    }
    out += '\n';
  }
  return out;
}

}  // namespace collact
