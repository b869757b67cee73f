#ifndef METAEOL_TRANSFER_HPP
#define METAEOL_TRANSFER_HPP

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "metaeol/embedding.hpp"
#include "metaeol/error.hpp"
#include "metaeol/format.hpp"
#include "metaeol/hash.hpp"
#include "metaeol/logreg.hpp"
#include "metaeol/report.hpp"

namespace metaeol {

enum class Split { None, Train, Dev, Test };

struct TransferItem {
  std::string text;
  std::string text2;  // pair tasks only
  int label = 0;
  Split split = Split::None;
};

struct TransferDataset {
  std::string name;
  std::vector<TransferItem> items;
  std::size_t num_classes = 0;

  bool is_pair() const { return name == "mrpc"; }
  bool has_split() const { return !items.empty() && items.front().split != Split::None; }
};

inline bool is_split_task(const std::string& name) { return name == "sst" || name == "trec" || name == "mrpc"; }

inline bool is_transfer_task(const std::string& name) {
  const auto& t = transfer_tasks();
  return std::find(t.begin(), t.end(), name) != t.end();
}

inline const std::vector<double>& default_lambda_grid() {
  static const std::vector<double> grid{1e-4, 1e-3, 1e-2, 1e-1, 1.0};
  return grid;
}

inline constexpr std::uint64_t kFoldSeed = 42;
inline constexpr int kOuterFolds = 10;
inline constexpr int kInnerFolds = 5;

// Stable fold of an item index: splitmix64(seed + index) mod folds.
inline int stable_fold(std::size_t index, int folds, std::uint64_t seed = kFoldSeed) {
  return static_cast<int>(mix64(seed + index) % static_cast<std::uint64_t>(folds));
}

inline std::uint64_t inner_fold_seed() { return mix64(kFoldSeed); }

// single-text tasks: label<TAB>text; mrpc: label<TAB>text1<TAB>text2;
// sst/trec/mrpc end with a split field train|dev|test (an empty text2 field
// before it is accepted for single-text split tasks).
inline TransferDataset parse_transfer(std::istream& in, const std::string& name, const std::string& origin = "<input>") {
  if (!is_transfer_task(name)) throw Error(ErrorKind::Usage, "unknown transfer task '" + name + "'");
  TransferDataset ds{name, {}, 0};
  const bool pair = ds.is_pair();
  const bool split_task = is_split_task(name);
  std::string raw;
  std::size_t lineno = 0;
  int max_label = -1;
  std::set<int> labels;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto line = strip_cr(raw);
    if (line.empty()) continue;
    auto f = split(line, '\t');
    const auto where = origin + ":" + std::to_string(lineno);
    TransferItem item;
    if (split_task) {
      const auto& s = f.back();
      if (s == "train") item.split = Split::Train;
      else if (s == "dev") item.split = Split::Dev;
      else if (s == "test") item.split = Split::Test;
      else throw Error(ErrorKind::ParseError, where + ": split must be train, dev or test");
      f.pop_back();
      if (!pair && f.size() == 3 && f[2].empty()) f.pop_back();
    }
    const std::size_t expected = pair ? 3 : 2;
    if (f.size() != expected) {
      throw Error(ErrorKind::ParseError, where + ": expected " + std::to_string(expected + (split_task ? 1 : 0)) +
                                             " tab-separated fields");
    }
    const auto* end = f[0].data() + f[0].size();
    auto [ptr, ec] = std::from_chars(f[0].data(), end, item.label);
    if (ec != std::errc() || ptr != end || item.label < 0) {
      throw Error(ErrorKind::ParseError, where + ": label must be a non-negative integer");
    }
    item.text = std::move(f[1]);
    if (pair) item.text2 = std::move(f[2]);
    max_label = std::max(max_label, item.label);
    labels.insert(item.label);
    ds.items.push_back(std::move(item));
  }
  if (ds.items.empty()) throw Error(ErrorKind::EmptyInput, origin + ": no items");
  ds.num_classes = static_cast<std::size_t>(max_label + 1);
  if (labels.size() != ds.num_classes || ds.num_classes < 2) {
    throw Error(ErrorKind::MissingClass, origin + ": class ids must be dense in [0, C) with C >= 2");
  }
  return ds;
}

inline TransferDataset load_transfer(const std::filesystem::path& path, const std::string& name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  return parse_transfer(in, name, path.string());
}

// [|u - v|; u * v]
inline std::vector<double> pair_features(std::span<const float> u, std::span<const float> v) {
  if (u.size() != v.size()) throw Error(ErrorKind::DimensionMismatch, "pair features need equal lengths");
  std::vector<double> out(2 * u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    out[i] = std::abs(static_cast<double>(u[i]) - static_cast<double>(v[i]));
    out[u.size() + i] = static_cast<double>(u[i]) * static_cast<double>(v[i]);
  }
  return out;
}

namespace detail {

template <typename Fn>
void parallel_for(std::size_t n, int parallelism, Fn&& fn) {
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, parallelism)), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
}

}  // namespace detail

struct LabeledData {
  Matrix x;
  std::vector<int> y;
};

inline LabeledData subset(const LabeledData& data, std::span<const std::size_t> idx) {
  LabeledData out{data.x.select_rows(idx), {}};
  out.y.reserve(idx.size());
  for (auto i : idx) out.y.push_back(data.y[i]);
  return out;
}

// Test accuracy of a model trained on `train`; nullopt when the training
// portion lacks a class.
inline std::optional<double> train_and_score(const LabeledData& train, const LabeledData& test,
                                             std::size_t num_classes, double lambda) {
  try {
    const auto fit = train_logreg(train.x, train.y, num_classes, lambda);
    return accuracy(predict(fit.model, test.x), test.y);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::MissingClass) return std::nullopt;
    throw;
  }
}

struct LambdaChoice {
  double lambda = 0.0;
  double score = 0.0;
  std::vector<std::string> diagnostics;
};

// Grid search by k-fold CV over `data`. Ties keep the earlier (smaller) lambda.
inline std::optional<LambdaChoice> select_lambda_cv(const LabeledData& data, std::size_t num_classes,
                                                    std::span<const double> grid, int folds, std::uint64_t seed,
                                                    int parallelism) {
  std::vector<std::vector<std::size_t>> train_idx(folds), test_idx(folds);
  for (std::size_t i = 0; i < data.y.size(); ++i) {
    const int f = stable_fold(i, folds, seed);
    for (int g = 0; g < folds; ++g) (g == f ? test_idx : train_idx)[g].push_back(i);
  }
  const std::size_t jobs = grid.size() * static_cast<std::size_t>(folds);
  std::vector<std::optional<double>> scores(jobs);
  detail::parallel_for(jobs, parallelism, [&](std::size_t job) {
    const auto g = job % static_cast<std::size_t>(folds);
    if (test_idx[g].empty()) return;
    scores[job] = train_and_score(subset(data, train_idx[g]), subset(data, test_idx[g]), num_classes,
                                  grid[job / static_cast<std::size_t>(folds)]);
  });
  std::optional<LambdaChoice> best;
  std::vector<std::string> diagnostics;
  for (std::size_t l = 0; l < grid.size(); ++l) {
    double sum = 0;
    int n = 0;
    for (int g = 0; g < folds; ++g) {
      const auto& s = scores[l * static_cast<std::size_t>(folds) + static_cast<std::size_t>(g)];
      if (s) {
        sum += *s;
        ++n;
      } else if (!test_idx[static_cast<std::size_t>(g)].empty()) {
        diagnostics.push_back("lambda " + shortest(grid[l]) + " inner fold " + std::to_string(g) +
                              ": missing class, excluded");
      }
    }
    if (n == 0) continue;
    const double mean = sum / n;
    if (!best || mean > best->score) best = LambdaChoice{grid[l], mean, {}};
  }
  if (best) best->diagnostics = std::move(diagnostics);
  return best;
}

struct TransferTaskResult {
  std::string name;
  std::optional<double> accuracy100;
  std::vector<double> chosen_lambdas;  // one per outer fold, or one for split tasks
  std::string protocol;
  std::vector<std::string> diagnostics;
};

// Scores already-featurized data under the task's protocol.
inline TransferTaskResult evaluate_features(const std::string& name, const LabeledData& data,
                                            std::span<const Split> splits, std::size_t num_classes,
                                            std::span<const double> grid = default_lambda_grid(),
                                            int parallelism = 1) {
  TransferTaskResult result;
  result.name = name;
  const bool has_split = !splits.empty() && splits.front() != Split::None;
  if (!has_split) {
    result.protocol = "10-fold CV (seed 42), inner 5-fold lambda selection";
    double sum = 0;
    int used = 0;
    for (int f = 0; f < kOuterFolds; ++f) {
      std::vector<std::size_t> tr, te;
      for (std::size_t i = 0; i < data.y.size(); ++i) (stable_fold(i, kOuterFolds) == f ? te : tr).push_back(i);
      if (te.empty()) continue;
      const auto train = subset(data, tr);
      const auto choice = select_lambda_cv(train, num_classes, grid, kInnerFolds, inner_fold_seed(), parallelism);
      if (!choice) {
        result.diagnostics.push_back("outer fold " + std::to_string(f) + ": no lambda trainable, excluded");
        continue;
      }
      for (const auto& d : choice->diagnostics) result.diagnostics.push_back("outer fold " + std::to_string(f) + ", " + d);
      const auto acc = train_and_score(train, subset(data, te), num_classes, choice->lambda);
      if (!acc) {
        result.diagnostics.push_back("outer fold " + std::to_string(f) + ": missing class, excluded");
        continue;
      }
      result.chosen_lambdas.push_back(choice->lambda);
      sum += *acc;
      ++used;
    }
    if (used > 0) result.accuracy100 = 100.0 * sum / used;
    return result;
  }

  std::vector<std::size_t> tr, dev, te;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    (splits[i] == Split::Train ? tr : splits[i] == Split::Dev ? dev : te).push_back(i);
  }
  if (tr.empty() || te.empty()) throw Error(ErrorKind::EmptyInput, name + ": split task needs train and test items");
  const auto train = subset(data, tr);
  std::optional<LambdaChoice> choice;
  if (!dev.empty()) {
    result.protocol = "train/dev/test, lambda selected on dev";
    const auto dv = subset(data, dev);
    std::vector<std::optional<double>> scores(grid.size());
    detail::parallel_for(grid.size(), parallelism,
                         [&](std::size_t l) { scores[l] = train_and_score(train, dv, num_classes, grid[l]); });
    for (std::size_t l = 0; l < grid.size(); ++l) {
      if (scores[l] && (!choice || *scores[l] > choice->score)) choice = LambdaChoice{grid[l], *scores[l], {}};
    }
  } else {
    result.protocol = "train/test, lambda selected by 5-fold CV on train";
    choice = select_lambda_cv(train, num_classes, grid, kInnerFolds, inner_fold_seed(), parallelism);
  }
  if (!choice) throw Error(ErrorKind::MissingClass, name + ": no lambda trainable on the train split");
  const auto acc = train_and_score(train, subset(data, te), num_classes, choice->lambda);
  if (!acc) throw Error(ErrorKind::MissingClass, name + ": train split lacks a class");
  result.chosen_lambdas.push_back(choice->lambda);
  result.accuracy100 = 100.0 * *acc;
  return result;
}

inline TransferTaskResult evaluate_transfer(Embedder& embedder, const TransferDataset& dataset,
                                            const EmbedConfig& config, const PromptSet& set,
                                            std::span<const double> grid = default_lambda_grid()) {
  std::vector<std::string> sentences;
  std::map<std::string_view, std::size_t> index;
  for (const auto& item : dataset.items) {
    for (const std::string* s : {&item.text, &item.text2}) {
      if (s == &item.text2 && !dataset.is_pair()) continue;
      if (index.emplace(*s, sentences.size()).second) sentences.push_back(*s);
    }
  }
  const auto corpus = embedder.embed_corpus(sentences, config, set, FailurePolicy::SkipAndReport);
  LabeledData data;
  std::vector<Split> splits;
  std::vector<std::string> diagnostics;
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < dataset.items.size(); ++i) {
    const auto& item = dataset.items[i];
    const auto& a = corpus.rows[index.at(item.text)];
    if (!a) {
      diagnostics.push_back("item " + std::to_string(i) + " failed to embed, excluded");
      continue;
    }
    if (dataset.is_pair()) {
      const auto& b = corpus.rows[index.at(item.text2)];
      if (!b) {
        diagnostics.push_back("item " + std::to_string(i) + " failed to embed, excluded");
        continue;
      }
      rows.push_back(pair_features(a->values, b->values));
    } else {
      rows.emplace_back(a->values.begin(), a->values.end());
    }
    data.y.push_back(item.label);
    splits.push_back(item.split);
  }
  if (rows.empty()) throw Error(ErrorKind::EmptyInput, dataset.name + ": no embeddable items");
  data.x = Matrix(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].begin(), rows[i].end(), data.x.row(i).begin());
  auto result = evaluate_features(dataset.name, data, splits, dataset.num_classes, grid, embedder.parallelism());
  result.diagnostics.insert(result.diagnostics.begin(), diagnostics.begin(), diagnostics.end());
  return result;
}

struct TransferReport {
  std::vector<TransferTaskResult> per_task;
  std::optional<double> average;
  ConfigSnapshot config;

  Report to_report() const {
    Report r;
    r.title = "Transfer evaluation (accuracy x100)";
    r.config = config;
    for (const auto& t : per_task) {
      std::string note = t.protocol;
      if (!t.chosen_lambdas.empty()) {
        note += "; lambda";
        for (double l : t.chosen_lambdas) note += " " + shortest(l);
      }
      r.rows.push_back({t.name, t.accuracy100, note});
      for (const auto& d : t.diagnostics) r.diagnostics.push_back(t.name + ": " + d);
    }
    r.average = average;
    return r;
  }
};

inline void finalize(TransferReport& report) {
  std::vector<ReportRow> rows;
  for (const auto& t : report.per_task) rows.push_back({t.name, t.accuracy100, ""});
  report.average = mean_of_present(rows);
}

}  // namespace metaeol

#endif  // METAEOL_TRANSFER_HPP
