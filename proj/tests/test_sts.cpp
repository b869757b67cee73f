#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "metaeol/mock_backend.hpp"
#include "metaeol/sts.hpp"
#include "support.hpp"

using namespace metaeol;
namespace ts = testing_support;

TEST(Spearman, HandDerivedTieCase) {
  const std::vector<double> a{1, 2, 2, 3}, b{1, 2, 3, 4};
  // ranks 1, 2.5, 2.5, 4 against 1..4: 4.5 / sqrt(4.5 * 5) = 3 / sqrt(10)
  EXPECT_NEAR(spearman(a, b), 3.0 / std::sqrt(10.0), 1e-15);
  EXPECT_NEAR(spearman(a, b), 0.9486832980505138, 1e-15);
}

TEST(Spearman, AgreesWithBruteForceOracle) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng() % 60;
    const bool ties = trial % 2 == 0;
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = ties ? double(rng() % 5) : std::uniform_real_distribution<double>(-1, 1)(rng);
      b[i] = ties ? double(rng() % 4) : std::uniform_real_distribution<double>(-1, 1)(rng);
    }
    a[0] = -100;
    b[1] = -100;  // never constant
    EXPECT_NEAR(spearman(a, b), ts::brute_spearman(a, b), 1e-12) << trial;
  }
}

TEST(Spearman, Properties) {
  const std::vector<double> x{0.3, 0.1, 0.9, 0.5};
  const std::vector<double> mono{3, 1, 9, 5}, anti{-3, -1, -9, -5};
  EXPECT_DOUBLE_EQ(spearman(x, mono), 1.0);
  EXPECT_DOUBLE_EQ(spearman(x, anti), -1.0);
  const std::vector<double> flat{1, 1, 1, 1};
  EXPECT_THROW(spearman(x, flat), Error);
  const std::vector<double> one{1};
  EXPECT_THROW(spearman(one, one), Error);
}

TEST(AverageRanks, Ties) {
  const std::vector<double> v{10, 20, 20, 5, 20};
  EXPECT_EQ(average_ranks(v), (std::vector<double>{2, 4, 4, 1, 4}));
}

TEST(Cosine, Basics) {
  const std::vector<float> u{1, 0}, v{0, 2}, w{-3, 0};
  EXPECT_DOUBLE_EQ(cosine(u, u), 1.0);
  EXPECT_DOUBLE_EQ(cosine(u, v), 0.0);
  EXPECT_DOUBLE_EQ(cosine(u, w), -1.0);
  const std::vector<float> z{0, 0}, short_v{1};
  EXPECT_THROW(cosine(u, z), Error);
  EXPECT_THROW(cosine(u, short_v), Error);
}

TEST(ParseSts, SkipsUngradedAndValidates) {
  std::istringstream ok("4.2\ta\tb\tx\n\tc\td\tx\r\n0\te\tf\ty\n");
  const auto ds = parse_sts(ok, "sts12");
  EXPECT_EQ(ds.pairs.size(), 2u);
  EXPECT_EQ(ds.skipped_ungraded, 1u);
  EXPECT_EQ(ds.pairs[1].subset, "y");

  auto kind = [](const std::string& text) {
    std::istringstream in(text);
    try {
      parse_sts(in, "stsb");
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Usage;
  };
  EXPECT_EQ(kind("abc\ta\tb\tx\n"), ErrorKind::ParseError);
  EXPECT_EQ(kind("5.5\ta\tb\tx\n"), ErrorKind::ParseError);
  EXPECT_EQ(kind("1\ta\tb\n"), ErrorKind::ParseError);
  EXPECT_EQ(kind("\ta\tb\tx\n"), ErrorKind::EmptyInput);
  std::istringstream in("1\ta\tb\tx\n");
  EXPECT_THROW(parse_sts(in, "sts99"), Error);
}

TEST(ParseSts, ErrorNamesLine) {
  std::istringstream in("1\ta\tb\tx\nbad\ta\tb\tx\n");
  try {
    parse_sts(in, "stsb", "f.tsv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("f.tsv:2"), std::string::npos);
  }
}

TEST(ConvertRawSts, WritesCanonicalRows) {
  ts::TempDir dir;
  ts::write_file(dir / "STS.input.news.txt", "a b\tc d\ne\tf\n");
  ts::write_file(dir / "STS.gs.news.txt", "3.5\n\n");
  std::ostringstream out;
  EXPECT_EQ(convert_raw_sts(dir.path(), out), 2u);
  EXPECT_EQ(out.str(), "3.5\ta b\tc d\tnews\n\te\tf\tnews\n");
}

TEST(EvaluateSts, ScoresMatchIndependentComputation) {
  const auto ds = load_sts(ts::data_dir() / "sts12.tsv", "sts12");
  MockBackend mock(0, 32, 16);
  Embedder e(mock, PromptRegistry::builtin());
  EmbedConfig cfg;
  const std::vector<STSDataset> all{ds};
  const auto report = evaluate_sts(e, all, cfg, PromptRegistry::builtin().load_builtin("metaeol8"));
  ASSERT_EQ(report.per_dataset.size(), 1u);

  std::vector<double> gold, pred;
  for (const auto& p : ds.pairs) {
    gold.push_back(p.gold);
    pred.push_back(cosine(e.embed_sentence(p.s1, cfg).embedding.values,
                          e.embed_sentence(p.s2, cfg).embedding.values));
  }
  EXPECT_DOUBLE_EQ(*report.per_dataset[0].spearman100, 100.0 * ts::brute_spearman(pred, gold));
  EXPECT_DOUBLE_EQ(*report.average, *report.per_dataset[0].spearman100);
}

TEST(EvaluateSts, AverageOverPresentDatasets) {
  std::istringstream a("1\tx\ty\ts\n2\tp\tq\ts\n3\tm\tn\ts\n");
  std::istringstream b("1\tsame\tsame\ts\n");
  const std::vector<STSDataset> all{parse_sts(a, "sts12"), parse_sts(b, "sts13")};
  MockBackend mock(0, 4, 8);
  Embedder e(mock, PromptRegistry::builtin());
  const auto report = evaluate_sts(e, all, EmbedConfig{}, PromptRegistry::builtin().load_builtin("eol"));
  ASSERT_EQ(report.per_dataset.size(), 2u);
  EXPECT_TRUE(report.per_dataset[0].spearman100.has_value());
  EXPECT_FALSE(report.per_dataset[1].spearman100.has_value());
  EXPECT_DOUBLE_EQ(*report.average, *report.per_dataset[0].spearman100);
}
