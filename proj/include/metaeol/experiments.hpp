#ifndef METAEOL_EXPERIMENTS_HPP
#define METAEOL_EXPERIMENTS_HPP

#include <cmath>
#include <filesystem>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "metaeol/embedding.hpp"
#include "metaeol/error.hpp"
#include "metaeol/format.hpp"
#include "metaeol/prompt_registry.hpp"
#include "metaeol/report.hpp"
#include "metaeol/run_config.hpp"
#include "metaeol/storage.hpp"
#include "metaeol/sts.hpp"
#include "metaeol/transfer.hpp"

namespace metaeol {

// Backend, cache and embedder wired from a RunConfig.
struct Session {
  RunConfig config;
  const PromptRegistry* registry = nullptr;
  std::unique_ptr<Backend> owned_backend;
  Backend* backend = nullptr;
  std::unique_ptr<EmbeddingCache> cache;
  std::unique_ptr<Embedder> embedder;

  // When `backend_override` is given it is used instead of building one.
  static Session open(const RunConfig& config, const PromptRegistry& registry = PromptRegistry::builtin(),
                      Backend* backend_override = nullptr) {
    Session s;
    s.config = config;
    s.registry = &registry;
    if (backend_override != nullptr) {
      s.backend = backend_override;
    } else {
      s.owned_backend = make_backend(config);
      s.backend = s.owned_backend.get();
    }
    // Ablations re-aggregate the same per-prompt vectors, so there is
    // always at least an in-memory cache.
    s.cache = config.cache.empty() ? std::make_unique<EmbeddingCache>()
                                   : std::make_unique<EmbeddingCache>(std::filesystem::path(config.cache));
    s.embedder = std::make_unique<Embedder>(*s.backend, registry, s.cache.get(), config.parallelism);
    return s;
  }

  ConfigSnapshot snapshot() const { return config.snapshot(); }
};

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  for (auto& item : split(text, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::string join(const std::vector<std::string>& items, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? sep : "") + items[i];
  return out;
}

inline std::vector<STSDataset> load_sts_dir(const std::filesystem::path& dir, const std::vector<std::string>& names) {
  std::vector<STSDataset> out;
  for (const auto& name : names) {
    if (!is_sts_dataset(name)) throw Error(ErrorKind::Usage, "unknown STS dataset '" + name + "'");
    const auto path = dir / (name + ".tsv");
    if (!std::filesystem::exists(path)) throw Error(ErrorKind::IoError, "missing dataset '" + name + "' (" + path.string() + ")");
    out.push_back(load_sts(path, name));
  }
  return out;
}

inline std::vector<TransferDataset> load_transfer_dir(const std::filesystem::path& dir,
                                                      const std::vector<std::string>& names) {
  std::vector<TransferDataset> out;
  for (const auto& name : names) {
    if (!is_transfer_task(name)) throw Error(ErrorKind::Usage, "unknown transfer task '" + name + "'");
    const auto path = dir / (name + ".tsv");
    if (!std::filesystem::exists(path)) throw Error(ErrorKind::IoError, "missing dataset '" + name + "' (" + path.string() + ")");
    out.push_back(load_transfer(path, name));
  }
  return out;
}

inline std::vector<std::string> dataset_names(const std::vector<STSDataset>& ds) {
  std::vector<std::string> out;
  for (const auto& d : ds) out.push_back(d.name);
  return out;
}

inline Report run_eval_sts(Session& session, const std::vector<STSDataset>& datasets) {
  auto snapshot = session.snapshot();
  snapshot.emplace_back("datasets", join(dataset_names(datasets), ","));
  const auto config = session.config.embed_config();
  return evaluate_sts(*session.embedder, datasets, config, session.registry->resolve_set(config.prompt_set_id),
                      snapshot)
      .to_report();
}

// STS average for one prompt set; nullopt when no dataset produced a score.
inline std::optional<double> sts_average(Session& session, const std::vector<STSDataset>& datasets,
                                         const PromptSet& set, const EmbedConfig& config) {
  return evaluate_sts(*session.embedder, datasets, config, set).average;
}

// "--prompts transfer" gives every task its own task-specific prompt;
// any other set (including "transfer:<task>") is used for all tasks.
inline TransferReport evaluate_transfer_suite(Session& session, const std::vector<TransferDataset>& datasets) {
  TransferReport report;
  report.config = session.snapshot();
  std::vector<std::string> names;
  for (const auto& d : datasets) names.push_back(d.name);
  report.config.emplace_back("tasks", join(names, ","));
  const auto config = session.config.embed_config();
  for (const auto& ds : datasets) {
    const auto set = config.prompt_set_id == "transfer"
                         ? session.registry->resolve_set("transfer:" + ds.name)
                         : session.registry->resolve_set(config.prompt_set_id);
    report.per_task.push_back(evaluate_transfer(*session.embedder, ds, config, set));
  }
  finalize(report);
  return report;
}

inline Report run_eval_transfer(Session& session, const std::vector<TransferDataset>& datasets) {
  return evaluate_transfer_suite(session, datasets).to_report();
}

// Cumulative meta-task sets drawn from metaeol8: TC, TC+SA, TC+SA+PI, TC+SA+PI+IE.
inline std::vector<std::pair<std::string, PromptSet>> cumulative_task_sets(const PromptRegistry& registry) {
  const auto& base = registry.load_builtin("metaeol8");
  const std::vector<std::pair<std::string, MetaTask>> order{{"TC", MetaTask::TextClassification},
                                                            {"SA", MetaTask::SentimentAnalysis},
                                                            {"PI", MetaTask::ParaphraseIdentification},
                                                            {"IE", MetaTask::InformationExtraction}};
  std::vector<std::pair<std::string, PromptSet>> out;
  std::vector<std::string> ids;
  std::string label;
  for (const auto& [name, task] : order) {
    for (const auto& id : base.template_ids) {
      if (registry.get_template(id).meta_task == task) ids.push_back(id);
    }
    label += (label.empty() ? "" : "+") + name;
    out.emplace_back(label, PromptSet("metaeol8[" + label + "]", ids));
  }
  return out;
}

struct SubsetResult {
  std::vector<std::string> template_ids;
  std::optional<double> average;
};

struct PromptAblation {
  std::vector<SubsetResult> subsets;  // every non-empty subset of sa5
  Report report;                      // per-size means
};

inline PromptAblation run_ablate_prompts(Session& session, const std::vector<STSDataset>& datasets) {
  const auto& sa5 = session.registry->load_builtin("sa5");
  const auto config = session.config.embed_config();
  const std::size_t n = sa5.size();
  PromptAblation out;
  out.report.title = "Prompt-count ablation over sa5 (mean STS average per subset size)";
  out.report.config = session.snapshot();
  out.report.config.emplace_back("datasets", join(dataset_names(datasets), ","));
  out.report.config.emplace_back("ablate.mode", "prompts");
  std::vector<double> sum(n + 1, 0.0);
  std::vector<int> count(n + 1, 0), total(n + 1, 0);
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    std::vector<std::string> ids;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask & (1u << j)) ids.push_back(sa5.template_ids[j]);
    }
    const PromptSet set("sa5[" + join(ids, "+") + "]", ids);
    const auto avg = sts_average(session, datasets, set, config);
    ++total[ids.size()];
    if (avg) {
      sum[ids.size()] += *avg;
      ++count[ids.size()];
    }
    out.subsets.push_back({ids, avg});
  }
  for (std::size_t k = 1; k <= n; ++k) {
    std::optional<double> mean;
    if (count[k] > 0) mean = sum[k] / count[k];
    out.report.rows.push_back({"size=" + std::to_string(k), mean, "subsets: " + std::to_string(total[k])});
  }
  return out;
}

inline Report run_ablate_tasks(Session& session, const std::vector<STSDataset>& datasets) {
  Report r;
  r.title = "Meta-task ablation (cumulative, STS average)";
  r.config = session.snapshot();
  r.config.emplace_back("datasets", join(dataset_names(datasets), ","));
  r.config.emplace_back("ablate.mode", "tasks");
  const auto config = session.config.embed_config();
  for (const auto& [label, set] : cumulative_task_sets(*session.registry)) {
    r.rows.push_back({label, sts_average(session, datasets, set, config), std::to_string(set.size()) + " prompts"});
  }
  return r;
}

// "-1..-8" -> {-1, -2, ..., -8}; either order accepted.
inline std::vector<int> parse_layer_range(const std::string& text) {
  const auto dots = text.find("..");
  if (dots == std::string::npos) throw Error(ErrorKind::Usage, "layer range must look like -1..-8");
  int a = 0, b = 0;
  try {
    a = std::stoi(text.substr(0, dots));
    b = std::stoi(text.substr(dots + 2));
  } catch (const std::exception&) {
    throw Error(ErrorKind::Usage, "bad layer range '" + text + "'");
  }
  if (a >= 0 || b >= 0) throw Error(ErrorKind::Usage, "layer indices must be negative");
  std::vector<int> out;
  const int step = a >= b ? -1 : 1;
  for (int l = a;; l += step) {
    out.push_back(l);
    if (l == b) break;
  }
  return out;
}

inline Report run_ablate_layers(Session& session, const std::vector<STSDataset>& datasets, const std::string& range) {
  Report r;
  r.title = "Layer sweep (STS average)";
  r.config = session.snapshot();
  r.config.emplace_back("datasets", join(dataset_names(datasets), ","));
  r.config.emplace_back("ablate.mode", "layers");
  r.config.emplace_back("ablate.range", range);
  auto config = session.config.embed_config();
  const auto set = session.registry->resolve_set(config.prompt_set_id);
  for (int layer : parse_layer_range(range)) {
    config.layer = layer == -1 ? LayerSelector::final_layer() : LayerSelector::neg_index(-layer);
    r.rows.push_back({"layer=" + std::to_string(layer), sts_average(session, datasets, set, config), ""});
  }
  return r;
}

struct VarianceResult {
  std::vector<std::pair<std::string, std::optional<double>>> runs;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
  Report report;
};

// One STS run per variant, each substituting the variant for the
// review-rating sentiment prompt inside metaeol8.
inline VarianceResult run_variance(Session& session, const std::vector<STSDataset>& datasets,
                                   const std::string& variant_set) {
  const auto variants = session.registry->resolve_set(variant_set);
  const auto& base = session.registry->load_builtin("metaeol8");
  auto config = session.config.embed_config();
  VarianceResult out;
  std::vector<double> values;
  for (const auto& variant : variants.template_ids) {
    std::vector<std::string> ids;
    for (const auto& id : base.template_ids) ids.push_back(id == "sa-review-rating" ? variant : id);
    const PromptSet set("metaeol8[sa=" + variant + "]", ids);
    const auto avg = sts_average(session, datasets, set, config);
    out.runs.emplace_back(variant, avg);
    if (avg) values.push_back(*avg);
  }
  if (values.empty()) throw Error(ErrorKind::EmptyInput, "no variant produced an STS score");
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.stddev = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;

  out.report.title = "Prompt sensitivity (STS average per variant)";
  out.report.config = session.snapshot();
  out.report.config.emplace_back("datasets", join(dataset_names(datasets), ","));
  out.report.config.emplace_back("variants", variant_set);
  for (const auto& [id, avg] : out.runs) out.report.rows.push_back({id, avg, ""});
  out.report.rows.push_back({"mean", out.mean, ""});
  out.report.rows.push_back({"std", out.stddev, ""});
  out.report.diagnostics.push_back(fixed2(out.mean) + " ± " + fixed2(out.stddev) + " over " +
                                   std::to_string(values.size()) + " runs");
  return out;
}

struct EmbedSummary {
  std::size_t sentences = 0;
  std::size_t records = 0;
  std::size_t prompts_per_sentence = 0;
  std::uint32_t dim = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t cache_lookups = 0;
  std::vector<SentenceFailure> failures;

  double hit_rate() const {
    return cache_lookups == 0 ? 0.0 : static_cast<double>(cache_hits) / static_cast<double>(cache_lookups);
  }
};

// Aggregated embeddings keyed model_id|<set>@<agg>|layer|sha256(sentence).
// Repeated sentences are written once.
inline EmbedSummary run_embed(Session& session, const std::vector<std::string>& sentences,
                              const std::filesystem::path& out_path) {
  const auto config = session.config.embed_config();
  const auto set = session.registry->resolve_set(config.prompt_set_id);
  const auto hits0 = session.cache->hits(), misses0 = session.cache->misses();
  const auto corpus = session.embedder->embed_corpus(sentences, config, set, FailurePolicy::SkipAndReport);
  session.cache->flush();

  EmbedSummary summary;
  summary.sentences = sentences.size();
  summary.prompts_per_sentence = set.size();
  summary.cache_hits = session.cache->hits() - hits0;
  summary.cache_lookups = summary.cache_hits + (session.cache->misses() - misses0);
  summary.failures = corpus.failures;
  std::vector<EmbeddingRecord> records;
  std::unordered_set<std::string> written;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto& row = corpus.rows[i];
    if (!row) continue;
    const auto key = cache_key(row->provenance.model_id, set.id + "@" + row->provenance.aggregation,
                               row->provenance.layer, sentences[i]);
    if (!written.insert(key.canonical).second) continue;
    records.push_back({key.canonical, row->values});
  }
  summary.dim = static_cast<std::uint32_t>(corpus.dim());
  summary.records = records.size();
  write_embeddings(out_path, records, summary.dim, kFlagAggregated);
  return summary;
}

}  // namespace metaeol

#endif  // METAEOL_EXPERIMENTS_HPP
