#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "collact/datasets.hpp"

using namespace collact;

namespace {

const std::filesystem::path kData = COLLACT_DATA_DIR;

std::filesystem::path temp_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("collact_test_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

void write(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST(MovieLens, ParsesTabSeparatedQuadruples) {
  const auto m = parse_movielens("1\t10\t4\t100\n2\t10\t5\t101\n1\t11\t1\t102\n");
  EXPECT_EQ(m.size(), 3u);
  EXPECT_EQ(m.users(), (std::vector<UserId>{1, 2}));
  EXPECT_EQ(m.items(), (std::vector<ItemId>{10, 11}));
  EXPECT_EQ(m.entries()[2], (Rating{1, 11, 1.0, 102}));
}

TEST(MovieLens, MalformedLineReportsLine) {
  try {
    parse_movielens("1\t10\t4\t100\n2\t10\n", "x");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(MovieLens, RejectsDuplicatesAndOutOfRange) {
  EXPECT_THROW(parse_movielens("1\t10\t4\t100\n1\t10\t5\t101\n"), ValidationError);
  EXPECT_THROW(parse_movielens("1\t10\t6\t100\n"), ValidationError);
  EXPECT_THROW(parse_movielens("1\t10\t0\t100\n"), ValidationError);
}

TEST(MovieLens, EmptyInputIsError) { EXPECT_THROW(parse_movielens(""), EmptyDatasetError); }

TEST(MovieLens, SerializeRoundTrip) {
  const auto m = parse_movielens("3\t1\t2\t5\n1\t2\t3\t6\n");
  EXPECT_EQ(parse_movielens(serialize_movielens(m)), m);
}

TEST(RatingMatrix, UpsertOverwritesInPlaceAndAppends) {
  RatingMatrix m({{1, 1, 3, 9}, {2, 1, 4, 9}});
  m.upsert({1, 1, 5, 0});
  EXPECT_EQ(m.entries()[0], (Rating{1, 1, 5, 9}));
  m.upsert({3, 7, 1, 0});
  ASSERT_EQ(m.size(), 3u);
  EXPECT_EQ(m.entries()[2], (Rating{3, 7, 1, 0}));
  EXPECT_EQ(m.users(), (std::vector<UserId>{1, 2, 3}));
  EXPECT_EQ(m.items(), (std::vector<ItemId>{1, 7}));
  EXPECT_THROW(m.upsert({1, 1, 7, 0}), ValidationError);
}

TEST(MovieLens, Real100k) {
  const auto path = kData / "ml-100k" / "u.data";
  if (!std::filesystem::exists(path)) GTEST_SKIP() << "run tools/fetch_data.sh";
  const auto m = load_movielens(path);
  EXPECT_EQ(m.size(), 100000u);
  EXPECT_EQ(m.users().size(), 943u);
  EXPECT_EQ(m.items().size(), 1682u);
}

namespace {
const char* kAdultSample =
    "39, State-gov, 77516, Bachelors, 13, Never-married, Adm-clerical, Not-in-family, White, Male, 2174, 0, 40, "
    "United-States, <=50K\n"
    "50, Self-emp-not-inc, 83311, Bachelors, 13, Married-civ-spouse, Exec-managerial, Husband, White, Male, 0, 0, "
    "13, United-States, >50K\n"
    "54, ?, 180211, Some-college, 10, Married-civ-spouse, ?, Husband, Asian-Pac-Islander, Male, 0, 0, 60, South, "
    ">50K\n";
}

TEST(Adult, ParsesAndDropsMissing) {
  const auto d = parse_adult(kAdultSample);
  ASSERT_EQ(d.rows.size(), 2u);
  EXPECT_EQ(d.dropped_rows, 1u);
  EXPECT_EQ(d.occupation(0), "Adm-clerical");
  EXPECT_EQ(d.occupation(1), "Exec-managerial");
  EXPECT_EQ(d.rows[0].label, Income::negative);
  EXPECT_EQ(d.rows[1].label, Income::positive);
  EXPECT_EQ(d.schema.size(), 14u);
}

TEST(Adult, TestFileConventions) {
  const std::string text = std::string("|1x3 Cross validator\n") +
                           "25, Private, 226802, 11th, 7, Never-married, Machine-op-inspct, Own-child, Black, Male, "
                           "0, 0, 40, United-States, <=50K.\n";
  const auto d = parse_adult(text);
  ASSERT_EQ(d.rows.size(), 1u);
  EXPECT_EQ(d.rows[0].label, Income::negative);
}

TEST(Adult, Errors) {
  EXPECT_THROW(parse_adult("1, 2, 3\n"), ParseError);
  EXPECT_THROW(parse_adult("39, State-gov, 77516, Bachelors, 13, Never-married, Adm-clerical, Not-in-family, "
                           "White, Male, 2174, 0, 40, United-States, maybe\n"),
               ValidationError);
  EXPECT_THROW(parse_adult("x, State-gov, 77516, Bachelors, 13, Never-married, Adm-clerical, Not-in-family, "
                           "White, Male, 2174, 0, 40, United-States, <=50K\n"),
               ParseError);
}

TEST(Adult, RealFiles) {
  const auto train = kData / "adult" / "adult.data";
  const auto test = kData / "adult" / "adult.test";
  if (!std::filesystem::exists(train) || !std::filesystem::exists(test)) GTEST_SKIP() << "run tools/fetch_data.sh";
  const auto a = load_adult(train);
  EXPECT_EQ(a.rows.size() + a.dropped_rows, 32561u);
  EXPECT_EQ(a.rows.size(), 30162u);
  const auto b = load_adult(test);
  EXPECT_EQ(b.rows.size() + b.dropped_rows, 16281u);
  std::set<std::string> occ;
  for (std::size_t r = 0; r < a.rows.size(); ++r) occ.insert(a.occupation(r));
  EXPECT_EQ(occ.size(), 14u);
}

TEST(TextCorpus, LoadsDirectoryLayout) {
  const auto dir = temp_dir("corpus_dir");
  write(dir / "train.tsv", "b\tx y z\na\tp q\n");
  write(dir / "test.tsv", "a\tr\n");
  const auto c = load_text_corpus(dir);
  EXPECT_EQ(c.classes, (std::vector<std::string>{"a", "b"}));
  ASSERT_EQ(c.docs.size(), 3u);
  EXPECT_EQ(c.docs[0].label, 1);
  EXPECT_EQ(c.docs[0].tokens, (std::vector<std::string>{"x", "y", "z"}));
  EXPECT_EQ(c.indices(Split::test), (std::vector<std::size_t>{2}));
}

TEST(TextCorpus, SingleFileSplitsTrainFirst) {
  const auto dir = temp_dir("corpus_file");
  write(dir / "all.tsv", "a\tone\nb\ttwo\na\tthree\n");
  TextCorpusLayout layout{{"a", "b", "c"}, 2, 1};
  const auto c = load_text_corpus(dir / "all.tsv", layout);
  EXPECT_EQ(c.classes.size(), 3u);
  EXPECT_EQ(c.indices(Split::train).size(), 2u);
  EXPECT_EQ(c.docs[2].split, Split::test);
  EXPECT_THROW(load_text_corpus(dir / "all.tsv", TextCorpusLayout{{}, 2, 2}), ValidationError);
  EXPECT_THROW(load_text_corpus(dir / "all.tsv", TextCorpusLayout{{"a"}, 0, 0}), ValidationError);
}

TEST(TextCorpus, EmptyDocumentRejected) {
  const auto dir = temp_dir("corpus_empty");
  write(dir / "bad.tsv", "a\tfine\nb\t   \n");
  EXPECT_THROW(load_text_corpus(dir / "bad.tsv"), ValidationError);
}

TEST(SyntheticCorpus, DeterministicAndShaped) {
  CorpusSpec spec;
  spec.train_size = 200;
  spec.test_size = 50;
  Rng a(7), b(7);
  const auto c1 = synth_text_corpus(spec, a);
  const auto c2 = synth_text_corpus(spec, b);
  EXPECT_EQ(c1, c2);
  EXPECT_EQ(c1.classes.size(), 10u);
  EXPECT_EQ(c1.indices(Split::train).size(), 200u);
  for (const auto& d : c1.docs) {
    ASSERT_GE(d.tokens.size(), 50u);
    ASSERT_LE(d.tokens.size(), 200u);
    for (const auto& t : d.tokens) {
      ASSERT_NE(t, "sig0");
      if (t[0] == 'c') {
        EXPECT_EQ(t.substr(0, t.find('_')), "c" + std::to_string(d.label));
      }
    }
  }
}

TEST(SyntheticCorpus, RoundTripsThroughTsv) {
  CorpusSpec spec;
  spec.train_size = 30;
  spec.test_size = 10;
  Rng r(1);
  const auto c = synth_text_corpus(spec, r);
  const auto dir = temp_dir("corpus_rt");
  write(dir / "train.tsv", serialize_text_corpus(c, Split::train));
  write(dir / "test.tsv", serialize_text_corpus(c, Split::test));
  const auto back = load_text_corpus(dir, TextCorpusLayout{c.classes, 30, 10});
  EXPECT_EQ(back, c);
}

TEST(SyntheticCorpus, InvalidSpec) {
  CorpusSpec spec;
  spec.doc_length_min = 10;
  spec.doc_length_max = 5;
  EXPECT_THROW(spec.validate(), ValidationError);
  spec = {};
  spec.background_signal_rate = 0.5;
  EXPECT_THROW(spec.validate(), ValidationError);
}
