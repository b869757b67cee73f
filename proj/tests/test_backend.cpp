#include <gtest/gtest.h>

#include <bit>
#include <random>

#include "metaeol/backend.hpp"
#include "metaeol/hash.hpp"
#include "metaeol/mock_backend.hpp"

using namespace metaeol;

TEST(ResolveLayer, ProportionalMatchesReferenceDepths) {
  const auto p = LayerSelector::proportional(0.1);
  EXPECT_EQ(resolve_layer(p, 32), -3);
  EXPECT_EQ(resolve_layer(p, 40), -4);
  EXPECT_EQ(resolve_layer(p, 80), -8);
}

TEST(ResolveLayer, ResultAlwaysInRange) {
  for (int L = 1; L <= 10000; ++L) {
    for (double f : {1e-9, 0.05, 0.1, 0.5, 0.999, 1.0}) {
      const int r = resolve_layer(LayerSelector::proportional(f), L);
      ASSERT_GE(-r, 1) << L << ' ' << f;
      ASSERT_LE(-r, L) << L << ' ' << f;
    }
  }
}

TEST(ResolveLayer, FractionOutsideUnitIntervalRejected) {
  EXPECT_THROW(resolve_layer(LayerSelector::proportional(0.0), 32), Error);
  EXPECT_THROW(resolve_layer(LayerSelector::proportional(1.5), 32), Error);
}

TEST(ResolveLayer, FinalAndNegativeIndex) {
  EXPECT_EQ(resolve_layer(LayerSelector::final_layer(), 1), -1);
  EXPECT_EQ(resolve_layer(LayerSelector::neg_index(5), 32), -5);
  EXPECT_EQ(resolve_layer(LayerSelector::neg_index(32), 32), -32);
  try {
    resolve_layer(LayerSelector::neg_index(33), 32);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::LayerOutOfRange);
  }
}

TEST(LayerSelector, Parse) {
  EXPECT_EQ(resolve_layer(LayerSelector::parse("final"), 10), -1);
  EXPECT_EQ(resolve_layer(LayerSelector::parse("-3"), 10), -3);
  EXPECT_EQ(resolve_layer(LayerSelector::parse("prop"), 32), -3);
  EXPECT_EQ(resolve_layer(LayerSelector::parse("prop:0.25"), 32), -8);
  EXPECT_THROW(LayerSelector::parse("3"), Error);
  EXPECT_THROW(LayerSelector::parse("middle"), Error);
  EXPECT_THROW(LayerSelector::parse("prop:2"), Error);
}

TEST(Hash, KnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(mix64(42), 0xbdd732262feb6e95ULL);
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

// Bit patterns computed by an independent implementation of the generator.
TEST(MockBackend, FrozenVectors) {
  const auto a = MockBackend::hidden_state(0, "hello", -1, 4);
  const std::vector<std::uint32_t> a_bits{0x3f1e779d, 0x3e8bc469, 0x3d19fdf3, 0x3e65cc64};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(std::bit_cast<std::uint32_t>(a[i]), a_bits[i]) << i;
  const auto b = MockBackend::hidden_state(7, "This sentence : \"A cat.\" means in one word:\"", -3, 4);
  const std::vector<std::uint32_t> b_bits{0x3e45c1f9, 0xbf2e9689, 0x3f112884, 0xbe79ba92};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(std::bit_cast<std::uint32_t>(b[i]), b_bits[i]) << i;
}

TEST(MockBackend, DeterministicAndBatchIndependent) {
  MockBackend m(3, 8, 16);
  const std::vector<std::string> batch{"p1", "p2", "p1"};
  const auto r = m.hidden_states(batch, -2);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r[0].values, r[2].values);
  const std::vector<std::string> single{"p2"};
  EXPECT_EQ(m.hidden_states(single, -2)[0].values, r[1].values);
  EXPECT_NE(m.hidden_states(single, -1)[0].values, r[1].values);
  EXPECT_EQ(m.info().model_id, "mock-s3-L8-d16");
}

TEST(MockBackend, ValuesAreBoundedWithCenteredMean) {
  double sum = 0;
  std::size_t n = 0;
  for (int i = 0; i < 2000; ++i) {
    for (float v : MockBackend::hidden_state(1, "prompt " + std::to_string(i), -1, 16)) {
      ASSERT_GE(v, -1.0f);
      ASSERT_LE(v, 1.0f);
      sum += v;
      ++n;
    }
  }
  EXPECT_LT(std::abs(sum / n), 0.02);
}

TEST(MockBackend, OverflowIsPerPrompt) {
  MockBackend m(0, 4, 8, {true, 10});
  const std::vector<std::string> prompts{"short", "this prompt is too long"};
  const auto r = m.hidden_states(prompts, -1);
  EXPECT_TRUE(r[0].ok());
  EXPECT_TRUE(r[1].context_overflow);
  EXPECT_FALSE(r[1].diagnostic.empty());
}

TEST(LastTokenHiddenStates, RejectsOutOfRangeLayer) {
  MockBackend m(0, 4, 8);
  const std::vector<std::string> prompts{"x"};
  EXPECT_THROW(last_token_hidden_states(m, prompts, LayerSelector::neg_index(5)), Error);
  EXPECT_EQ(last_token_hidden_states(m, prompts, LayerSelector::neg_index(4))[0].values.size(), 8u);
}

TEST(TopK, WellFormedAndMonotone) {
  MockBackend m(0, 4, 8);
  const auto full = top_k_next_tokens(m, "prompt", 32);
  EXPECT_NEAR(full.total_mass(), 1.0, 1e-12);
  double prev = -1;
  for (int k = 0; k <= 32; ++k) {
    const auto p = top_k_next_tokens(m, "prompt", k);
    ASSERT_EQ(p.entries.size(), static_cast<std::size_t>(k));
    EXPECT_TRUE(p.well_formed());
    EXPECT_GE(p.total_mass(), prev);
    prev = p.total_mass();
  }
  EXPECT_TRUE(top_k_next_tokens(m, "prompt", 0).entries.empty());
  EXPECT_THROW(top_k_next_tokens(m, "prompt", -1), Error);
}

TEST(TopK, NotSupportedSurfaces) {
  MockBackend m(0, 4, 8, {false, 0});
  try {
    top_k_next_tokens(m, "p", 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotSupported);
    EXPECT_EQ(exit_code_for(e.kind()), ExitCode::Backend);
  }
}
