#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "metaeol/mock_backend.hpp"
#include "metaeol/transfer.hpp"
#include "support.hpp"

using namespace metaeol;
namespace ts = testing_support;

namespace {

// Two well-separated Gaussian blobs in d dimensions.
LabeledData blobs(std::size_t n, std::size_t d, std::uint64_t seed, double gap = 4.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0, 0.5);
  LabeledData data{Matrix(n, d), std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    data.y[i] = static_cast<int>(i % 2);
    for (std::size_t j = 0; j < d; ++j) data.x(i, j) = g(rng) + (j == 0 ? (data.y[i] ? gap : -gap) : 0.0);
  }
  return data;
}

}  // namespace

TEST(StableFold, MatchesIndependentHash) {
  const std::vector<int> outer{3, 0, 1, 6, 3, 5, 7, 2, 9, 2, 2, 2};
  for (std::size_t i = 0; i < outer.size(); ++i) EXPECT_EQ(stable_fold(i, 10), outer[i]) << i;
  const std::vector<int> inner{3, 3, 4, 3, 4, 0, 4, 3, 3, 4, 4, 1};
  for (std::size_t i = 0; i < inner.size(); ++i) EXPECT_EQ(stable_fold(i, 5, inner_fold_seed()), inner[i]) << i;
}

TEST(PairFeatures, Layout) {
  const std::vector<float> u{1, -2}, v{3, 4};
  EXPECT_EQ(pair_features(u, v), (std::vector<double>{2, 6, 3, -8}));
  const std::vector<float> w{1};
  EXPECT_THROW(pair_features(u, w), Error);
}

TEST(EvaluateFeatures, SeparableCrossValidationIsPerfect) {
  const auto data = blobs(60, 3, 1);
  const auto r = evaluate_features("mr", data, {}, 2);
  ASSERT_TRUE(r.accuracy100);
  EXPECT_DOUBLE_EQ(*r.accuracy100, 100.0);
  EXPECT_EQ(r.chosen_lambdas.size(), 10u);
  // Every lambda is perfect on separable data, so ties keep the smallest.
  for (double l : r.chosen_lambdas) EXPECT_EQ(l, 1e-4);
}

TEST(EvaluateFeatures, DevSplitDrivesSelection) {
  const auto data = blobs(40, 2, 2);
  std::vector<Split> splits(40, Split::Train);
  for (std::size_t i = 20; i < 30; ++i) splits[i] = Split::Dev;
  for (std::size_t i = 30; i < 40; ++i) splits[i] = Split::Test;
  const auto r = evaluate_features("mrpc", data, splits, 2);
  EXPECT_EQ(r.protocol, "train/dev/test, lambda selected on dev");
  EXPECT_DOUBLE_EQ(*r.accuracy100, 100.0);
  ASSERT_EQ(r.chosen_lambdas.size(), 1u);
}

TEST(EvaluateFeatures, SplitWithoutDevUsesInnerCv) {
  const auto data = blobs(30, 2, 3);
  std::vector<Split> splits(30, Split::Train);
  for (std::size_t i = 24; i < 30; ++i) splits[i] = Split::Test;
  const auto r = evaluate_features("trec", data, splits, 2);
  EXPECT_EQ(r.protocol, "train/test, lambda selected by 5-fold CV on train");
  EXPECT_DOUBLE_EQ(*r.accuracy100, 100.0);
}

TEST(EvaluateFeatures, ParallelismDoesNotChangeResult) {
  const auto data = blobs(50, 4, 4, 0.3);
  const auto a = evaluate_features("cr", data, {}, 2, default_lambda_grid(), 1);
  const auto b = evaluate_features("cr", data, {}, 2, default_lambda_grid(), 3);
  EXPECT_EQ(*a.accuracy100, *b.accuracy100);
  EXPECT_EQ(a.chosen_lambdas, b.chosen_lambdas);
}

TEST(SelectLambda, PicksBestMeanAccuracy) {
  // Labels are noise, so larger lambda cannot overfit as badly; the choice
  // must equal the argmax of the per-lambda CV mean computed here.
  auto data = blobs(40, 6, 5, 0.0);
  const std::vector<double> grid{1e-4, 1.0};
  const auto choice = select_lambda_cv(data, 2, grid, 5, 7, 1);
  ASSERT_TRUE(choice);
  double best = -1, best_l = 0;
  for (double l : grid) {
    double sum = 0;
    int n = 0;
    for (int f = 0; f < 5; ++f) {
      std::vector<std::size_t> tr, te;
      for (std::size_t i = 0; i < 40; ++i) (stable_fold(i, 5, 7) == f ? te : tr).push_back(i);
      if (te.empty()) continue;
      const auto fit = train_logreg(subset(data, tr).x, subset(data, tr).y, 2, l);
      sum += accuracy(predict(fit.model, subset(data, te).x), subset(data, te).y);
      ++n;
    }
    if (sum / n > best) {
      best = sum / n;
      best_l = l;
    }
  }
  EXPECT_EQ(choice->lambda, best_l);
  EXPECT_DOUBLE_EQ(choice->score, best);
}

TEST(ParseTransfer, Formats) {
  std::istringstream single("0\tbad film\n1\tgood film\n");
  const auto mr = parse_transfer(single, "mr");
  EXPECT_EQ(mr.items.size(), 2u);
  EXPECT_EQ(mr.num_classes, 2u);
  EXPECT_FALSE(mr.has_split());

  std::istringstream pair("1\ta\tb\ttrain\n0\tc\td\ttest\n");
  const auto mrpc = parse_transfer(pair, "mrpc");
  EXPECT_TRUE(mrpc.is_pair());
  EXPECT_EQ(mrpc.items[1].split, Split::Test);
  EXPECT_EQ(mrpc.items[0].text2, "b");

  std::istringstream trec("0\tq1\t\ttrain\n2\tq2\ttest\n1\tq3\tdev\n");
  EXPECT_EQ(parse_transfer(trec, "trec").num_classes, 3u);

  auto kind = [](const std::string& text, const std::string& name) {
    std::istringstream in(text);
    try {
      parse_transfer(in, name);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Usage;
  };
  EXPECT_EQ(kind("0\ta\n2\tb\n", "mr"), ErrorKind::MissingClass);
  EXPECT_EQ(kind("0\ta\n0\tb\n", "mr"), ErrorKind::MissingClass);
  EXPECT_EQ(kind("x\ta\n1\tb\n", "mr"), ErrorKind::ParseError);
  EXPECT_EQ(kind("0\ta\tb\n1\tb\n", "cr"), ErrorKind::ParseError);
  EXPECT_EQ(kind("0\ta\tb\tval\n", "mrpc"), ErrorKind::ParseError);
  EXPECT_EQ(kind("0\ta\n", "imdb"), ErrorKind::Usage);
}

TEST(EvaluateTransfer, PairTaskUsesPairFeatures) {
  const auto ds = load_transfer(ts::data_dir() / "mrpc.tsv", "mrpc");
  MockBackend mock(0, 32, 16);
  Embedder e(mock, PromptRegistry::builtin());
  EmbedConfig cfg;
  const auto set = PromptRegistry::builtin().resolve_set("transfer:mrpc");
  const auto r = evaluate_transfer(e, ds, cfg, set);

  // Rebuild the features by hand and score them the same way.
  LabeledData data;
  std::vector<Split> splits;
  std::vector<std::vector<double>> rows;
  for (const auto& item : ds.items) {
    rows.push_back(pair_features(e.embed_sentence(item.text, cfg, set).embedding.values,
                                 e.embed_sentence(item.text2, cfg, set).embedding.values));
    data.y.push_back(item.label);
    splits.push_back(item.split);
  }
  data.x = Matrix(rows.size(), 32);
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].begin(), rows[i].end(), data.x.row(i).begin());
  const auto expect = evaluate_features("mrpc", data, splits, 2);
  EXPECT_EQ(*r.accuracy100, *expect.accuracy100);
  EXPECT_EQ(r.chosen_lambdas, expect.chosen_lambdas);
}
