#pragma once
// Linear classifiers: binary and multinomial logistic regression trained by
// full-batch gradient descent, over hashed bag-of-words text features or
// encoded tabular records.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "collact/datasets.hpp"
#include "collact/error.hpp"
#include "collact/format.hpp"
#include "collact/rng.hpp"

namespace collact {

// Sorted indices, no duplicates.
struct SparseVector {
  std::vector<std::uint32_t> index;
  std::vector<double> value;

  std::size_t nnz() const noexcept { return index.size(); }

  friend bool operator==(const SparseVector&, const SparseVector&) = default;
};

inline SparseVector make_sparse(std::map<std::uint32_t, double> entries) {
  SparseVector v;
  for (const auto& [k, x] : entries) {
    if (x == 0.0) continue;
    v.index.push_back(k);
    v.value.push_back(x);
  }
  return v;
}

enum class TextNorm { none, l2 };

// Tokens hash into [0, hash_dim). Each reserved group owns one bucket past the
// hash range; a group of two or more tokens is an alias group whose members
// are indistinguishable to the model.
class TextFeaturizer {
 public:
  TextFeaturizer() = default;

  TextFeaturizer(std::size_t hash_dim, std::vector<std::vector<std::string>> reserved_groups,
                 TextNorm norm = TextNorm::none)
      : hash_dim_(hash_dim), groups_(std::move(reserved_groups)), norm_(norm) {
    if (hash_dim_ == 0) throw ValidationError("hash_dim must be positive");
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      for (const auto& tok : groups_[g]) {
        if (!reserved_.emplace(tok, g).second)
          throw ValidationError("token '" + tok + "' appears in more than one reserved group");
      }
    }
  }

  bool fitted() const noexcept { return hash_dim_ > 0; }
  std::size_t hash_dim() const noexcept { return hash_dim_; }
  std::size_t dim() const noexcept { return hash_dim_ + groups_.size(); }
  TextNorm norm() const noexcept { return norm_; }
  const std::vector<std::vector<std::string>>& groups() const noexcept { return groups_; }

  // token -> alias group id, for groups with at least two members.
  std::map<std::string, std::size_t> alias_map() const {
    std::map<std::string, std::size_t> out;
    for (std::size_t g = 0; g < groups_.size(); ++g)
      if (groups_[g].size() > 1)
        for (const auto& t : groups_[g]) out.emplace(t, g);
    return out;
  }

  std::uint32_t bucket(const std::string& token) const {
    if (const auto it = reserved_.find(token); it != reserved_.end())
      return static_cast<std::uint32_t>(hash_dim_ + it->second);
    return static_cast<std::uint32_t>(fnv1a64(token) % hash_dim_);
  }

  SparseVector featurize(std::span<const std::string> tokens) const {
    if (!fitted()) throw Error("text featurizer is not fitted");
    std::map<std::uint32_t, double> counts;
    for (const auto& t : tokens) counts[bucket(t)] += 1.0;
    if (norm_ == TextNorm::l2) {
      double s = 0.0;
      for (const auto& [k, c] : counts) s += c * c;
      s = std::sqrt(s);
      if (s > 0.0)
        for (auto& [k, c] : counts) c /= s;
    }
    return make_sparse(std::move(counts));
  }

 private:
  std::size_t hash_dim_ = 0;
  std::vector<std::vector<std::string>> groups_;
  std::unordered_map<std::string, std::size_t> reserved_;
  TextNorm norm_ = TextNorm::none;
};

// One-hot categoricals (values seen at fit time) and standardized numerics.
class TabularFeaturizer {
 public:
  TabularFeaturizer() = default;

  static TabularFeaturizer fit(const TabularDataset& train) {
    if (train.rows.empty()) throw EmptyDatasetError("cannot fit a featurizer on no rows");
    TabularFeaturizer f;
    f.schema_ = train.schema;
    f.columns_.resize(train.schema.size());
    std::uint32_t offset = 0;
    for (std::size_t a = 0; a < train.schema.size(); ++a) {
      auto& col = f.columns_[a];
      col.offset = offset;
      if (train.schema[a].kind == AttributeKind::categorical) {
        std::vector<std::string> values;
        for (const auto& r : train.rows) values.push_back(r.values[a]);
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
        for (std::size_t k = 0; k < values.size(); ++k) col.categories.emplace(values[k], static_cast<std::uint32_t>(k));
        offset += static_cast<std::uint32_t>(values.size());
      } else {
        double sum = 0.0, sq = 0.0;
        for (const auto& r : train.rows) {
          const double x = *parse_number<double>(r.values[a]);
          sum += x;
          sq += x * x;
        }
        const double n = static_cast<double>(train.rows.size());
        col.mean = sum / n;
        const double var = std::max(0.0, sq / n - col.mean * col.mean);
        col.scale = var > 0.0 ? std::sqrt(var) : 1.0;
        offset += 1;
      }
    }
    f.dim_ = offset;
    return f;
  }

  bool fitted() const noexcept { return !columns_.empty(); }
  std::size_t dim() const noexcept { return dim_; }

  SparseVector featurize(const TabularRow& row) const {
    if (!fitted()) throw Error("tabular featurizer is not fitted");
    if (row.values.size() != columns_.size()) throw ValidationError("row arity does not match the featurizer");
    std::map<std::uint32_t, double> out;
    for (std::size_t a = 0; a < columns_.size(); ++a) {
      const auto& col = columns_[a];
      if (schema_[a].kind == AttributeKind::categorical) {
        if (const auto it = col.categories.find(row.values[a]); it != col.categories.end())
          out[col.offset + it->second] = 1.0;
      } else {
        const auto x = parse_number<double>(row.values[a]);
        if (!x) throw ValidationError("attribute " + schema_[a].name + " is not numeric");
        out[col.offset] = (*x - col.mean) / col.scale;
      }
    }
    return make_sparse(std::move(out));
  }

  std::string describe() const {
    std::string out;
    for (std::size_t a = 0; a < columns_.size(); ++a) {
      const auto& col = columns_[a];
      out += "attribute " + schema_[a].name + " " + std::to_string(col.offset);
      if (schema_[a].kind == AttributeKind::categorical) {
        std::vector<std::pair<std::uint32_t, std::string>> cats;
        for (const auto& [v, k] : col.categories) cats.emplace_back(k, v);
        std::sort(cats.begin(), cats.end());
        out += " categorical";
        for (const auto& [k, v] : cats) out += " " + v;
      } else {
        out += " numeric " + format_double(col.mean) + " " + format_double(col.scale);
      }
      out += "\n";
    }
    return out;
  }

 private:
  struct Column {
    std::uint32_t offset = 0;
    std::unordered_map<std::string, std::uint32_t> categories;
    double mean = 0.0;
    double scale = 1.0;
  };
  std::vector<Attribute> schema_;
  std::vector<Column> columns_;
  std::size_t dim_ = 0;
};

struct LinearHyper {
  int epochs = 300;
  double learning_rate = 0.1;
  double l2 = 1e-4;

  friend bool operator==(const LinearHyper&, const LinearHyper&) = default;
};

// Two classes use a single logistic row scoring class 1 against class 0.
struct LinearModel {
  int classes = 2;
  std::size_t dim = 0;
  std::vector<double> weights;  // rows() x dim, row-major
  std::vector<double> bias;     // rows()
  LinearHyper hyper;

  std::size_t rows() const noexcept { return classes == 2 ? 1 : static_cast<std::size_t>(classes); }

  static LinearModel zeros(int classes, std::size_t dim) {
    if (classes < 2) throw ValidationError("a classifier needs at least 2 classes");
    LinearModel m;
    m.classes = classes;
    m.dim = dim;
    m.weights.assign(m.rows() * dim, 0.0);
    m.bias.assign(m.rows(), 0.0);
    return m;
  }

  // Per-class scores; binary models score class 0 as zero.
  std::vector<double> scores(const SparseVector& x) const {
    if (!x.index.empty() && x.index.back() >= dim) throw ValidationError("feature index beyond model dimension");
    std::vector<double> row_scores(rows());
    for (std::size_t r = 0; r < rows(); ++r) {
      const double* w = weights.data() + r * dim;
      double s = bias[r];
      for (std::size_t k = 0; k < x.nnz(); ++k) s += w[x.index[k]] * x.value[k];
      row_scores[r] = s;
    }
    if (classes == 2) return {0.0, row_scores[0]};
    return row_scores;
  }

  std::vector<double> probabilities(const SparseVector& x) const {
    auto s = scores(x);
    const double mx = *std::max_element(s.begin(), s.end());
    double z = 0.0;
    for (auto& v : s) z += (v = std::exp(v - mx));
    for (auto& v : s) v /= z;
    return s;
  }

  friend bool operator==(const LinearModel&, const LinearModel&) = default;
};

// Argmax over class scores, ties to the lower class index.
inline int predict_class(const LinearModel& model, const SparseVector& x) {
  const auto s = model.scores(x);
  return static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
}

struct LossGradient {
  double loss = 0.0;
  std::vector<double> weights;
  std::vector<double> bias;
};

// Mean cross-entropy plus (l2/2)||W||^2; the bias is not regularized.
inline LossGradient loss_and_gradient(const LinearModel& m, std::span<const SparseVector> xs,
                                      std::span<const int> labels, double l2) {
  if (xs.size() != labels.size()) throw ValidationError("features and labels differ in length");
  if (xs.empty()) throw EmptyDatasetError("no training examples");
  LossGradient g;
  g.weights.assign(m.weights.size(), 0.0);
  g.bias.assign(m.bias.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(xs.size());
  const std::size_t rows = m.rows();
  // Feature-major copies keep the per-feature class weights contiguous.
  std::vector<double> wt(m.weights.size()), gt(m.weights.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < m.dim; ++k) wt[k * rows + r] = m.weights[r * m.dim + k];
  std::vector<double> s(rows), d(rows);
  for (std::size_t n = 0; n < xs.size(); ++n) {
    const auto& x = xs[n];
    const int y = labels[n];
    if (!x.index.empty() && x.index.back() >= m.dim) throw ValidationError("feature index beyond model dimension");
    std::copy(m.bias.begin(), m.bias.end(), s.begin());
    for (std::size_t k = 0; k < x.nnz(); ++k) {
      const double* w = wt.data() + static_cast<std::size_t>(x.index[k]) * rows;
      const double v = x.value[k];
      for (std::size_t r = 0; r < rows; ++r) s[r] += w[r] * v;
    }
    if (m.classes == 2) {
      const double z = s[0];
      // log(1 + e^z) - y z, computed stably
      g.loss += (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) - (y == 1 ? z : 0.0);
      d[0] = 1.0 / (1.0 + std::exp(-z)) - (y == 1 ? 1.0 : 0.0);
    } else {
      const double mx = *std::max_element(s.begin(), s.end());
      double sum = 0.0;
      for (std::size_t r = 0; r < rows; ++r) sum += std::exp(s[r] - mx);
      g.loss += mx + std::log(sum) - s[static_cast<std::size_t>(y)];
      for (std::size_t r = 0; r < rows; ++r) d[r] = std::exp(s[r] - mx) / sum - (static_cast<int>(r) == y ? 1.0 : 0.0);
    }
    for (std::size_t r = 0; r < rows; ++r) {
      d[r] *= inv_n;
      g.bias[r] += d[r];
    }
    for (std::size_t k = 0; k < x.nnz(); ++k) {
      double* gw = gt.data() + static_cast<std::size_t>(x.index[k]) * rows;
      const double v = x.value[k];
      for (std::size_t r = 0; r < rows; ++r) gw[r] += d[r] * v;
    }
  }
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < m.dim; ++k) g.weights[r * m.dim + k] = gt[k * rows + r];
  g.loss *= inv_n;
  double sq = 0.0;
  for (std::size_t k = 0; k < m.weights.size(); ++k) {
    sq += m.weights[k] * m.weights[k];
    g.weights[k] += l2 * m.weights[k];
  }
  g.loss += 0.5 * l2 * sq;
  return g;
}

// Full-batch gradient descent from zero weights, so the result is fully
// determined by the data and hyperparameters.
inline LinearModel train_linear(std::span<const SparseVector> xs, std::span<const int> labels, int classes,
                                std::size_t dim, const LinearHyper& hyper) {
  if (hyper.epochs < 1) throw ValidationError("epochs must be >= 1");
  std::vector<bool> present(static_cast<std::size_t>(std::max(classes, 0)), false);
  for (int y : labels) {
    if (y < 0 || y >= classes) throw ValidationError("label out of range");
    present[static_cast<std::size_t>(y)] = true;
  }
  if (std::count(present.begin(), present.end(), true) < 2)
    throw ValidationError("training data must contain at least two classes");
  // Features absent from every example keep weight zero throughout, so
  // training runs over the used columns only and expands at the end.
  std::vector<std::uint32_t> used;
  for (const auto& x : xs) {
    if (!x.index.empty() && x.index.back() >= dim) throw ValidationError("feature index beyond model dimension");
    used.insert(used.end(), x.index.begin(), x.index.end());
  }
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());
  std::vector<SparseVector> compact(xs.size());
  for (std::size_t n = 0; n < xs.size(); ++n) {
    compact[n].value = xs[n].value;
    compact[n].index.reserve(xs[n].nnz());
    for (auto k : xs[n].index)
      compact[n].index.push_back(static_cast<std::uint32_t>(std::lower_bound(used.begin(), used.end(), k) - used.begin()));
  }
  LinearModel c = LinearModel::zeros(classes, used.size());
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    const auto g = loss_and_gradient(c, compact, labels, hyper.l2);
    if (!std::isfinite(g.loss)) throw DivergenceError("logistic loss is not finite", epoch);
    for (std::size_t k = 0; k < c.weights.size(); ++k) c.weights[k] -= hyper.learning_rate * g.weights[k];
    for (std::size_t r = 0; r < c.bias.size(); ++r) c.bias[r] -= hyper.learning_rate * g.bias[r];
  }
  LinearModel m = LinearModel::zeros(classes, dim);
  m.hyper = hyper;
  m.bias = c.bias;
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t k = 0; k < used.size(); ++k) m.weights[r * dim + used[k]] = c.weights[r * used.size() + k];
  return m;
}

// Versioned text dump: header, featurizer metadata lines, then one line of
// `bias w_0 ... w_{dim-1}` per row.
inline std::string dump_linear_model(const LinearModel& m, const std::string& featurizer_meta) {
  std::string out = "collact-linear 1\nclasses " + std::to_string(m.classes) + "\ndim " + std::to_string(m.dim) +
                    "\nhyper " + std::to_string(m.hyper.epochs) + " " + format_double(m.hyper.learning_rate) + " " +
                    format_double(m.hyper.l2) + "\n";
  std::size_t meta_lines = 0;
  for (char c : featurizer_meta) meta_lines += c == '\n';
  out += "featurizer " + std::to_string(meta_lines) + "\n" + featurizer_meta;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out += format_double(m.bias[r]);
    for (std::size_t k = 0; k < m.dim; ++k) out += " " + format_double(m.weights[r * m.dim + k]);
    out += "\n";
  }
  return out;
}

inline std::string describe(const TextFeaturizer& f) {
  std::string out = "text hash_dim " + std::to_string(f.hash_dim()) + " norm " +
                    (f.norm() == TextNorm::l2 ? "l2" : "none") + "\n";
  for (std::size_t g = 0; g < f.groups().size(); ++g) {
    out += "group " + std::to_string(g);
    for (const auto& t : f.groups()[g]) out += " " + t;
    out += "\n";
  }
  return out;
}

inline LinearModel load_linear_model(std::string_view text) {
  const auto lines = split(text, '\n');
  std::size_t ln = 0;
  const auto next = [&]() {
    if (ln >= lines.size()) throw ParseError("linear model", ln, "unexpected end of input");
    return split_whitespace(lines[ln++]);
  };
  const auto expect = [&](const std::vector<std::string>& f, const char* key, std::size_t n) {
    if (f.size() != n || f[0] != key) throw ParseError("linear model", ln, std::string("expected ") + key);
  };
  auto head = next();
  if (head.size() != 2 || head[0] != "collact-linear" || head[1] != "1")
    throw ParseError("linear model", ln, "unsupported header");
  LinearModel m;
  auto c = next();
  expect(c, "classes", 2);
  auto d = next();
  expect(d, "dim", 2);
  auto h = next();
  expect(h, "hyper", 4);
  auto fm = next();
  expect(fm, "featurizer", 2);
  const auto classes = parse_number<int>(c[1]);
  const auto dim = parse_number<std::size_t>(d[1]);
  const auto meta = parse_number<std::size_t>(fm[1]);
  if (!classes || !dim || !meta) throw ParseError("linear model", ln, "bad header value");
  m = LinearModel::zeros(*classes, *dim);
  m.hyper = {*parse_number<int>(h[1]), *parse_number<double>(h[2]), *parse_number<double>(h[3])};
  ln += *meta;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = next();
    if (row.size() != m.dim + 1) throw ParseError("linear model", ln, "wrong row width");
    m.bias[r] = *parse_number<double>(row[0]);
    for (std::size_t k = 0; k < m.dim; ++k) {
      const auto v = parse_number<double>(row[k + 1]);
      if (!v) throw ParseError("linear model", ln, "bad weight");
      m.weights[r * m.dim + k] = *v;
    }
  }
  return m;
}

}  // namespace collact
