#ifndef METAEOL_STS_HPP
#define METAEOL_STS_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <vector>

#include "metaeol/embedding.hpp"
#include "metaeol/error.hpp"
#include "metaeol/format.hpp"
#include "metaeol/report.hpp"

namespace metaeol {

struct SentencePair {
  std::string s1;
  std::string s2;
  double gold = 0.0;
  std::string subset;
};

struct STSDataset {
  std::string name;
  std::vector<SentencePair> pairs;
  std::size_t skipped_ungraded = 0;
};

inline const std::vector<std::string>& sts_dataset_names() {
  static const std::vector<std::string> names{"sts12", "sts13", "sts14", "sts15", "sts16", "stsb", "sickr"};
  return names;
}

inline bool is_sts_dataset(const std::string& name) {
  const auto& n = sts_dataset_names();
  return std::find(n.begin(), n.end(), name) != n.end();
}

inline std::optional<double> parse_double(std::string_view text) {
  double v = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

// Canonical TSV: gold<TAB>sentence1<TAB>sentence2<TAB>subset; gold may be empty.
inline STSDataset parse_sts(std::istream& in, const std::string& name, const std::string& origin = "<input>") {
  if (!is_sts_dataset(name)) throw Error(ErrorKind::Usage, "unknown STS dataset '" + name + "'");
  STSDataset ds{name, {}, 0};
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto line = strip_cr(raw);
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    const auto where = origin + ":" + std::to_string(lineno);
    if (fields.size() != 4) {
      throw Error(ErrorKind::ParseError, where + ": expected 4 tab-separated fields, found " + std::to_string(fields.size()));
    }
    if (fields[0].empty()) {
      ++ds.skipped_ungraded;
      continue;
    }
    const auto gold = parse_double(fields[0]);
    if (!gold) throw Error(ErrorKind::ParseError, where + ": non-numeric gold score '" + fields[0] + "'");
    if (*gold < 0.0 || *gold > 5.0) throw Error(ErrorKind::ParseError, where + ": gold score outside [0, 5]");
    ds.pairs.push_back({std::move(fields[1]), std::move(fields[2]), *gold, std::move(fields[3])});
  }
  if (ds.pairs.empty()) throw Error(ErrorKind::EmptyInput, origin + ": no graded pairs");
  return ds;
}

inline STSDataset load_sts(const std::filesystem::path& path, const std::string& name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  return parse_sts(in, name, path.string());
}

// Converts the raw distribution layout (STS.input.<subset>.txt with two
// tab-separated sentences per line, STS.gs.<subset>.txt with one score per
// line) into canonical TSV rows. Returns the number of rows written.
inline std::size_t convert_raw_sts(const std::filesystem::path& dir, std::ostream& out) {
  static const std::regex input_re(R"(STS\.input\.(.+)\.txt)");
  std::vector<std::pair<std::string, std::filesystem::path>> inputs;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    std::smatch m;
    const auto fname = entry.path().filename().string();
    if (std::regex_match(fname, m, input_re)) inputs.emplace_back(m[1].str(), entry.path());
  }
  std::sort(inputs.begin(), inputs.end());
  std::size_t rows = 0;
  for (const auto& [subset, input_path] : inputs) {
    std::ifstream sentences(input_path, std::ios::binary);
    std::ifstream scores(dir / ("STS.gs." + subset + ".txt"), std::ios::binary);
    if (!scores) continue;
    std::string sline, gline;
    while (std::getline(sentences, sline)) {
      if (!std::getline(scores, gline)) gline.clear();
      auto fields = split(strip_cr(sline), '\t');
      if (fields.size() < 2) continue;
      out << strip_cr(gline) << '\t' << fields[0] << '\t' << fields[1] << '\t' << subset << '\n';
      ++rows;
    }
  }
  return rows;
}

inline double cosine(std::span<const float> u, std::span<const float> v) {
  if (u.size() != v.size()) {
    throw Error(ErrorKind::DimensionMismatch, "cosine of lengths " + std::to_string(u.size()) + " and " +
                                                  std::to_string(v.size()));
  }
  double dot = 0, uu = 0, vv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += static_cast<double>(u[i]) * v[i];
    uu += static_cast<double>(u[i]) * u[i];
    vv += static_cast<double>(v[i]) * v[i];
  }
  if (uu == 0.0 || vv == 0.0) throw Error(ErrorKind::ZeroVector, "cosine of a zero vector");
  return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

// 1-based ranks; tied values share the mean of the positions they occupy.
inline std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && xs[order[j]] == xs[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = rank;
    i = j;
  }
  return ranks;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  const auto n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw Error(ErrorKind::DegenerateInput, "constant input");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

inline double spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw Error(ErrorKind::DimensionMismatch, "spearman over lists of different length");
  if (xs.size() < 2) throw Error(ErrorKind::DegenerateInput, "spearman needs at least two observations");
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
  };
  if (constant(xs) || constant(ys)) throw Error(ErrorKind::DegenerateInput, "spearman over a constant list");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  return pearson(rx, ry);
}

struct STSDatasetScore {
  std::string name;
  std::optional<double> spearman100;
  std::size_t pairs_used = 0;
  std::size_t skipped_ungraded = 0;
  std::size_t failed_pairs = 0;
  std::string diagnostic;
};

struct STSReport {
  std::vector<STSDatasetScore> per_dataset;
  std::optional<double> average;
  ModelInfo model;
  ConfigSnapshot config;

  Report to_report() const {
    Report r;
    r.title = "STS evaluation (Spearman x100, all setting)";
    r.config = config;
    for (const auto& d : per_dataset) {
      std::string note;
      if (d.skipped_ungraded > 0) note = std::to_string(d.skipped_ungraded) + " ungraded skipped";
      if (d.failed_pairs > 0) {
        note += (note.empty() ? "" : ", ") + std::to_string(d.failed_pairs) + " pairs failed to embed";
      }
      r.rows.push_back({d.name, d.spearman100, note});
      if (!d.diagnostic.empty()) r.diagnostics.push_back(d.name + ": " + d.diagnostic);
    }
    r.average = average;
    return r;
  }
};

// One Spearman per dataset over all of its subsets concatenated.
inline STSDatasetScore evaluate_sts_dataset(Embedder& embedder, const STSDataset& ds, const EmbedConfig& config,
                                            const PromptSet& set) {
  STSDatasetScore score{ds.name, std::nullopt, 0, ds.skipped_ungraded, 0, ""};
  std::vector<std::string> sentences;
  std::map<std::string_view, std::size_t> index;
  for (const auto& p : ds.pairs) {
    for (const std::string* s : {&p.s1, &p.s2}) {
      if (index.emplace(*s, sentences.size()).second) sentences.push_back(*s);
    }
  }
  const auto corpus = embedder.embed_corpus(sentences, config, set, FailurePolicy::SkipAndReport);
  std::vector<double> predicted, gold;
  for (const auto& p : ds.pairs) {
    const auto& a = corpus.rows[index.at(p.s1)];
    const auto& b = corpus.rows[index.at(p.s2)];
    if (!a || !b) {
      ++score.failed_pairs;
      continue;
    }
    try {
      predicted.push_back(cosine(a->values, b->values));
      gold.push_back(p.gold);
    } catch (const Error&) {
      ++score.failed_pairs;
    }
  }
  for (const auto& f : corpus.failures) {
    if (score.diagnostic.empty()) score.diagnostic = f.message;
  }
  score.pairs_used = predicted.size();
  if (predicted.size() < 2) {
    score.diagnostic = "fewer than 2 usable pairs";
    return score;
  }
  try {
    score.spearman100 = 100.0 * spearman(predicted, gold);
  } catch (const Error& e) {
    score.diagnostic = e.what();
  }
  return score;
}

inline STSReport evaluate_sts(Embedder& embedder, std::span<const STSDataset> datasets, const EmbedConfig& config,
                              const PromptSet& set, ConfigSnapshot snapshot = {}) {
  if (datasets.empty()) throw Error(ErrorKind::EmptyInput, "no STS datasets");
  STSReport report;
  report.model = embedder.model_info();
  report.config = std::move(snapshot);
  std::vector<ReportRow> rows;
  for (const auto& ds : datasets) {
    report.per_dataset.push_back(evaluate_sts_dataset(embedder, ds, config, set));
    rows.push_back({ds.name, report.per_dataset.back().spearman100, ""});
  }
  report.average = mean_of_present(rows);
  return report;
}

inline STSReport evaluate_sts(Embedder& embedder, std::span<const STSDataset> datasets, const EmbedConfig& config,
                              ConfigSnapshot snapshot = {}) {
  return evaluate_sts(embedder, datasets, config, embedder.registry().resolve_set(config.prompt_set_id),
                      std::move(snapshot));
}

}  // namespace metaeol

#endif  // METAEOL_STS_HPP
