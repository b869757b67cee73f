#include <gtest/gtest.h>

#include <sstream>

#include "metaeol/mock_backend.hpp"
#include "metaeol/probe.hpp"

using namespace metaeol;

TEST(StopWords, InventorySize) {
  EXPECT_EQ(stop_words().size(), 120u);
  for (const auto& w : stop_words()) EXPECT_EQ(normalize_token(w), w);
}

TEST(StopWords, NormalizationStripsMarkers) {
  EXPECT_EQ(normalize_token("▁The"), "the");
  EXPECT_EQ(normalize_token("ĠIt"), "it");
  EXPECT_EQ(normalize_token("  ▁A"), "a");
  EXPECT_TRUE(is_stop_word("▁THE"));
  EXPECT_FALSE(is_stop_word("▁positive"));
  EXPECT_FALSE(is_stop_word("the▁"));
}

TEST(StopwordMass, BoundedByTotalMass) {
  TopKPrediction p{{{"▁the", 0.4, 1}, {"positive", 0.3, 2}, {"Ġof", 0.1, 3}}};
  EXPECT_DOUBLE_EQ(stopword_mass(p), 0.5);
  EXPECT_LE(stopword_mass(p), p.total_mass());
}

TEST(Probe, OneRowPerTemplateSortedById) {
  MockBackend mock(0, 4, 4);
  const auto& reg = PromptRegistry::builtin();
  const auto report = probe_top_tokens(mock, reg, "A man is playing a guitar.", reg.load_builtin("metaeol8"), 10);
  ASSERT_EQ(report.rows.size(), 8u);
  EXPECT_TRUE(std::is_sorted(report.rows.begin(), report.rows.end(),
                             [](const auto& a, const auto& b) { return a.template_id < b.template_id; }));
  for (const auto& r : report.rows) {
    EXPECT_EQ(r.prediction.entries.size(), 10u);
    EXPECT_GE(r.stopword_mass, 0.0);
    EXPECT_LE(r.stopword_mass, r.prediction.total_mass() + 1e-12);
  }
}

TEST(Probe, MassIsMonotoneInK) {
  MockBackend mock(1, 4, 4);
  const auto& reg = PromptRegistry::builtin();
  const auto set = reg.load_builtin("eol");
  double prev = 0;
  for (int k = 0; k <= 32; ++k) {
    const auto r = probe_top_tokens(mock, reg, "s", set, k);
    EXPECT_GE(r.rows[0].stopword_mass, prev);
    prev = r.rows[0].stopword_mass;
  }
}

TEST(Probe, ZeroKGivesEmptyRows) {
  MockBackend mock(0, 4, 4);
  const auto& reg = PromptRegistry::builtin();
  const auto r = probe_top_tokens(mock, reg, "s", reg.load_builtin("sa5"), 0);
  ASSERT_EQ(r.rows.size(), 5u);
  for (const auto& row : r.rows) EXPECT_TRUE(row.prediction.entries.empty());
  std::ostringstream out;
  r.write_table(out);
  EXPECT_NE(out.str().find(" | top tokens | stopword_mass\n"), std::string::npos);
}

TEST(Probe, NotSupportedBeforeAnyRow) {
  MockBackend mock(0, 4, 4, {false, 0});
  const auto& reg = PromptRegistry::builtin();
  EXPECT_THROW(probe_top_tokens(mock, reg, "s", reg.load_builtin("eol"), 3), Error);
}
