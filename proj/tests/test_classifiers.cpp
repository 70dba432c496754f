#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "collact/classifiers.hpp"

using namespace collact;

namespace {

struct Toy {
  std::vector<SparseVector> xs;
  std::vector<int> ys;
};

// Random sparse data with labels from a hidden linear rule.
Toy random_toy(Rng& rng, std::size_t n, std::size_t dim, int classes) {
  Toy t;
  std::vector<double> hidden(static_cast<std::size_t>(classes) * dim);
  for (auto& w : hidden) w = rng.normal(0.0, 1.0);
  for (std::size_t j = 0; j < n; ++j) {
    std::map<std::uint32_t, double> e;
    for (int k = 0; k < 4; ++k) e[static_cast<std::uint32_t>(rng.below(dim))] = rng.normal(0.0, 1.0);
    auto x = make_sparse(e);
    int best = 0;
    double best_s = -1e300;
    for (int c = 0; c < classes; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < x.nnz(); ++k) s += hidden[static_cast<std::size_t>(c) * dim + x.index[k]] * x.value[k];
      if (s > best_s) best_s = s, best = c;
    }
    t.xs.push_back(std::move(x));
    t.ys.push_back(best);
  }
  return t;
}

LinearModel random_model(Rng& rng, int classes, std::size_t dim) {
  auto m = LinearModel::zeros(classes, dim);
  for (auto& w : m.weights) w = rng.normal(0.0, 0.5);
  for (auto& b : m.bias) b = rng.normal(0.0, 0.5);
  return m;
}

void check_gradient(int classes) {
  Rng rng(static_cast<std::uint64_t>(classes));
  const std::size_t dim = 12;
  const auto t = random_toy(rng, 30, dim, classes);
  auto m = random_model(rng, classes, dim);
  const double l2 = 0.05, h = 1e-5;
  const auto g = loss_and_gradient(m, t.xs, t.ys, l2);
  const auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1e-6, std::abs(a) + std::abs(b)); };
  for (std::size_t k = 0; k < m.weights.size(); ++k) {
    const double w = m.weights[k];
    m.weights[k] = w + h;
    const double up = loss_and_gradient(m, t.xs, t.ys, l2).loss;
    m.weights[k] = w - h;
    const double down = loss_and_gradient(m, t.xs, t.ys, l2).loss;
    m.weights[k] = w;
    ASSERT_LT(rel((up - down) / (2 * h), g.weights[k]), 1e-4) << "weight " << k;
  }
  for (std::size_t r = 0; r < m.bias.size(); ++r) {
    const double b = m.bias[r];
    m.bias[r] = b + h;
    const double up = loss_and_gradient(m, t.xs, t.ys, l2).loss;
    m.bias[r] = b - h;
    const double down = loss_and_gradient(m, t.xs, t.ys, l2).loss;
    m.bias[r] = b;
    ASSERT_LT(rel((up - down) / (2 * h), g.bias[r]), 1e-4) << "bias " << r;
  }
}

double accuracy(const LinearModel& m, const Toy& t) {
  std::size_t ok = 0;
  for (std::size_t j = 0; j < t.xs.size(); ++j) ok += predict_class(m, t.xs[j]) == t.ys[j];
  return static_cast<double>(ok) / static_cast<double>(t.xs.size());
}

double weight_norm(const LinearModel& m) {
  double s = 0.0;
  for (double w : m.weights) s += w * w;
  return std::sqrt(s);
}

}  // namespace

TEST(Gradient, BinaryMatchesFiniteDifference) { check_gradient(2); }
TEST(Gradient, MulticlassMatchesFiniteDifference) { check_gradient(4); }

TEST(Loss, ZeroModelIsLogClasses) {
  Rng rng(1);
  const auto t = random_toy(rng, 20, 5, 3);
  EXPECT_NEAR(loss_and_gradient(LinearModel::zeros(3, 5), t.xs, t.ys, 0.0).loss, std::log(3.0), 1e-12);
  EXPECT_NEAR(loss_and_gradient(LinearModel::zeros(2, 5), t.xs, std::vector<int>(20, 1), 0.0).loss, std::log(2.0),
              1e-12);
}

TEST(Train, SeparableBinaryReachesPerfectAccuracy) {
  const std::vector<SparseVector> xs{make_sparse({{0, 1.0}}), make_sparse({{0, 2.0}}), make_sparse({{1, 1.0}}),
                                     make_sparse({{1, 3.0}})};
  const std::vector<int> ys{1, 1, 0, 0};
  const auto m = train_linear(xs, ys, 2, 3, LinearHyper{200, 0.5, 0.0});
  for (std::size_t j = 0; j < xs.size(); ++j) EXPECT_EQ(predict_class(m, xs[j]), ys[j]);
  EXPECT_EQ(m.weights[2], 0.0);  // unused column stays zero
}

TEST(Train, ThreeClassOneHot) {
  const std::vector<SparseVector> xs{make_sparse({{0, 1.0}}), make_sparse({{1, 1.0}}), make_sparse({{2, 1.0}})};
  const std::vector<int> ys{2, 0, 1};
  const auto m = train_linear(xs, ys, 3, 3, LinearHyper{300, 0.5, 1e-4});
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(predict_class(m, xs[j]), ys[j]);
  const auto p = m.probabilities(xs[0]);
  EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-12);
  EXPECT_GT(p[2], 0.5);
}

TEST(Train, RecoversHiddenRule) {
  Rng rng(2);
  const auto t = random_toy(rng, 600, 30, 3);
  const auto m = train_linear(t.xs, t.ys, 3, 30, LinearHyper{400, 1.0, 1e-4});
  EXPECT_GE(accuracy(m, t), 0.9);
}

TEST(Train, CompactedMatchesDenseDescent) {
  Rng rng(3);
  const std::size_t dim = 40;
  auto t = random_toy(rng, 50, dim, 3);
  const LinearHyper h{25, 0.3, 0.01};
  const auto fast = train_linear(t.xs, t.ys, 3, dim, h);
  auto m = LinearModel::zeros(3, dim);
  for (int e = 0; e < h.epochs; ++e) {
    const auto g = loss_and_gradient(m, t.xs, t.ys, h.l2);
    for (std::size_t k = 0; k < m.weights.size(); ++k) m.weights[k] -= h.learning_rate * g.weights[k];
    for (std::size_t r = 0; r < m.bias.size(); ++r) m.bias[r] -= h.learning_rate * g.bias[r];
  }
  for (std::size_t k = 0; k < m.weights.size(); ++k) ASSERT_NEAR(fast.weights[k], m.weights[k], 1e-12);
  for (std::size_t r = 0; r < m.bias.size(); ++r) ASSERT_NEAR(fast.bias[r], m.bias[r], 1e-12);
}

TEST(Train, StrongerRegularizationShrinksWeights) {
  Rng rng(4);
  const auto t = random_toy(rng, 200, 20, 2);
  double prev = std::numeric_limits<double>::infinity();
  for (double l2 : {0.0, 1e-3, 1e-2, 1e-1, 1.0}) {
    const double n = weight_norm(train_linear(t.xs, t.ys, 2, 20, LinearHyper{300, 0.5, l2}));
    EXPECT_LE(n, prev + 1e-12) << "l2=" << l2;
    prev = n;
  }
}

TEST(Train, Validation) {
  const std::vector<SparseVector> xs{make_sparse({{0, 1.0}}), make_sparse({{1, 1.0}})};
  EXPECT_THROW(train_linear(xs, std::vector<int>{0, 0}, 2, 2, {}), ValidationError);
  EXPECT_THROW(train_linear(xs, std::vector<int>{0, 2}, 2, 2, {}), ValidationError);
  EXPECT_THROW(train_linear(xs, std::vector<int>{0, 1}, 2, 1, {}), ValidationError);
  EXPECT_THROW(train_linear(xs, std::vector<int>{0, 1}, 2, 2, LinearHyper{0, 0.1, 0.0}), ValidationError);
  EXPECT_THROW(LinearModel::zeros(1, 3), ValidationError);
}

TEST(Train, DivergenceReported) {
  const std::vector<SparseVector> xs{make_sparse({{0, 1e200}}), make_sparse({{1, 1e200}})};
  EXPECT_THROW(train_linear(xs, std::vector<int>{0, 1}, 2, 2, LinearHyper{5, 1e200, 0.0}), DivergenceError);
}

TEST(Predict, ZeroModelPicksClassZero) {
  const auto x = make_sparse({{0, 1.0}});
  EXPECT_EQ(predict_class(LinearModel::zeros(2, 2), x), 0);
  EXPECT_EQ(predict_class(LinearModel::zeros(5, 2), x), 0);
  auto m = LinearModel::zeros(2, 2);
  m.bias[0] = 1e-9;
  EXPECT_EQ(predict_class(m, x), 1);
  EXPECT_THROW(m.scores(make_sparse({{5, 1.0}})), ValidationError);
}

TEST(TextFeaturizer, RawCountsAndReservedBuckets) {
  const TextFeaturizer f(64, {{"sigA", "sigB"}, {"sigC"}});
  EXPECT_EQ(f.dim(), 66u);
  EXPECT_EQ(f.bucket("sigA"), 64u);
  EXPECT_EQ(f.bucket("sigB"), 64u);
  EXPECT_EQ(f.bucket("sigC"), 65u);
  const std::vector<std::string> doc{"x", "x", "sigA", "sigB", "sigC"};
  const auto v = f.featurize(doc);
  double total = 0.0;
  for (double c : v.value) total += c;
  EXPECT_EQ(total, 5.0);
  EXPECT_EQ(v.value[v.nnz() - 2], 2.0);  // both aliases share one bucket
  EXPECT_EQ(v.value.back(), 1.0);
  EXPECT_EQ(f.alias_map().size(), 2u);
  EXPECT_THROW(TextFeaturizer(8, {{"a"}, {"a", "b"}}), ValidationError);
  EXPECT_THROW(TextFeaturizer().featurize(doc), Error);
}

TEST(TextFeaturizer, AliasesAreIndistinguishable) {
  const TextFeaturizer aliased(128, {{"sigA", "sigB"}});
  const TextFeaturizer separate(128, {{"sigA"}, {"sigB"}});
  const std::vector<std::string> a{"w1", "w2", "sigA"}, b{"w1", "w2", "sigB"};
  EXPECT_EQ(aliased.featurize(a), aliased.featurize(b));
  const auto sa = separate.featurize(a), sb = separate.featurize(b);
  EXPECT_NE(sa, sb);
  // The two differ in exactly the two signal buckets.
  std::map<std::uint32_t, double> da, db;
  for (std::size_t k = 0; k < sa.nnz(); ++k) da[sa.index[k]] = sa.value[k];
  for (std::size_t k = 0; k < sb.nnz(); ++k) db[sb.index[k]] = sb.value[k];
  std::set<std::uint32_t> diff;
  for (std::uint32_t k = 0; k < separate.dim(); ++k)
    if (da[k] != db[k]) diff.insert(k);
  EXPECT_EQ(diff, (std::set<std::uint32_t>{128, 129}));
}

TEST(TextFeaturizer, L2Option) {
  const TextFeaturizer f(16, {}, TextNorm::l2);
  const std::vector<std::string> doc{"a", "a", "b", "c"};
  const auto v = f.featurize(doc);
  double s = 0.0;
  for (double c : v.value) s += c * c;
  EXPECT_NEAR(s, 1.0, 1e-12);
}

namespace {
TabularDataset small_tabular() {
  TabularDataset ds;
  ds.schema = {{"age", AttributeKind::numeric}, {"job", AttributeKind::categorical}};
  ds.occupation_attribute = 1;
  ds.rows = {{{"20", "a"}, Income::negative}, {{"30", "b"}, Income::positive}, {{"70", "a"}, Income::positive}};
  return ds;
}
}  // namespace

TEST(TabularFeaturizer, StandardizesAndOneHots) {
  const auto ds = small_tabular();
  const auto f = TabularFeaturizer::fit(ds);
  EXPECT_EQ(f.dim(), 3u);
  double sum = 0.0, sq = 0.0;
  for (const auto& r : ds.rows) {
    const auto v = f.featurize(r);
    sum += v.value[0];
    sq += v.value[0] * v.value[0];
    EXPECT_EQ(v.nnz(), 2u);
  }
  EXPECT_NEAR(sum, 0.0, 1e-12);
  EXPECT_NEAR(sq / 3.0, 1.0, 1e-12);
  EXPECT_EQ(f.featurize(ds.rows[1]).index[1], 2u);
  // A value equal to the mean standardizes to zero and is stored implicitly.
  EXPECT_EQ(f.featurize(TabularRow{{"40", "a"}, Income::negative}).nnz(), 1u);
  // Unseen category contributes nothing.
  EXPECT_EQ(f.featurize(TabularRow{{"45", "zzz"}, Income::negative}).nnz(), 1u);
  EXPECT_THROW(f.featurize(TabularRow{{"x", "a"}, Income::negative}), ValidationError);
  EXPECT_THROW(TabularFeaturizer::fit(TabularDataset{}), EmptyDatasetError);
}

TEST(Dump, RoundTrip) {
  Rng rng(5);
  auto m = random_model(rng, 3, 7);
  m.hyper = {12, 0.25, 1e-3};
  const TextFeaturizer f(7, {{"s1", "s2"}});
  const auto back = load_linear_model(dump_linear_model(m, describe(f)));
  EXPECT_EQ(back, m);
  EXPECT_THROW(load_linear_model("nope"), ParseError);
}
