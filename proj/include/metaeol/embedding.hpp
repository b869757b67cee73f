#ifndef METAEOL_EMBEDDING_HPP
#define METAEOL_EMBEDDING_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "metaeol/backend.hpp"
#include "metaeol/error.hpp"
#include "metaeol/prompt_registry.hpp"
#include "metaeol/storage.hpp"

namespace metaeol {

enum class Aggregation { Mean, Concat, MaxPool };

inline std::string to_string(Aggregation a) {
  switch (a) {
    case Aggregation::Mean: return "mean";
    case Aggregation::Concat: return "concat";
    case Aggregation::MaxPool: return "max";
  }
  return "";
}

inline Aggregation parse_aggregation(const std::string& text) {
  if (text == "mean") return Aggregation::Mean;
  if (text == "concat") return Aggregation::Concat;
  if (text == "max") return Aggregation::MaxPool;
  throw Error(ErrorKind::Usage, "unknown aggregation '" + text + "' (mean|concat|max)");
}

// Mean and MaxPool keep dimension d; Concat joins the inputs in the given
// order into K*d values.
inline std::vector<float> aggregate(std::span<const std::vector<float>> embeddings, Aggregation method) {
  if (embeddings.empty()) throw Error(ErrorKind::EmptyInput, "nothing to aggregate");
  const std::size_t d = embeddings.front().size();
  for (const auto& e : embeddings) {
    if (e.size() != d) {
      throw Error(ErrorKind::DimensionMismatch,
                  "cannot aggregate vectors of length " + std::to_string(d) + " and " + std::to_string(e.size()));
    }
  }
  const std::size_t k = embeddings.size();
  std::vector<float> out;
  switch (method) {
    case Aggregation::Concat:
      out.reserve(k * d);
      for (const auto& e : embeddings) out.insert(out.end(), e.begin(), e.end());
      break;
    case Aggregation::MaxPool:
      out = embeddings.front();
      for (const auto& e : embeddings) {
        for (std::size_t i = 0; i < d; ++i) out[i] = std::max(out[i], e[i]);
      }
      break;
    case Aggregation::Mean: {
      out.resize(d);
      std::vector<double> column(k);
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < k; ++j) column[j] = embeddings[j][i];
        // Summing in sorted order makes the result independent of input order.
        std::sort(column.begin(), column.end());
        double sum = 0;
        for (double v : column) sum += v;
        out[i] = static_cast<float>(sum / static_cast<double>(k));
      }
      break;
    }
  }
  return out;
}

inline void l2_normalize(std::vector<float>& v) {
  double ss = 0;
  for (float x : v) ss += static_cast<double>(x) * x;
  if (ss <= 0) return;
  const double inv = 1.0 / std::sqrt(ss);
  for (auto& x : v) x = static_cast<float>(x * inv);
}

struct EmbedConfig {
  std::string prompt_set_id = "metaeol8";
  LayerSelector layer = LayerSelector::final_layer();
  Aggregation aggregation = Aggregation::Mean;
  // Off by default: per-prompt vectors are averaged raw.
  bool normalize = false;
};

enum class FailurePolicy { FailFast, SkipAndReport };

struct SentenceFailure {
  std::size_t index = 0;
  std::string message;
};

struct SentenceEmbedding {
  Embedding embedding;
  std::vector<std::vector<float>> per_prompt;  // in PromptSet order
};

struct CorpusEmbeddings {
  std::vector<std::optional<Embedding>> rows;
  std::vector<SentenceFailure> failures;

  std::size_t dim() const {
    for (const auto& r : rows) {
      if (r) return r->dim();
    }
    return 0;
  }
};

// Renders prompt sets around sentences, fetches last-token hidden states
// (consulting the cache first) and aggregates them. Thread-safe.
class Embedder {
 public:
  Embedder(Backend& backend, const PromptRegistry& registry, EmbeddingCache* cache = nullptr, int parallelism = 1)
      : backend_(backend),
        registry_(registry),
        cache_(cache),
        parallelism_(std::max(1, parallelism)),
        info_(backend.info()) {}

  const ModelInfo& model_info() const noexcept { return info_; }
  const PromptRegistry& registry() const noexcept { return registry_; }
  int parallelism() const noexcept { return parallelism_; }
  EmbeddingCache* cache() const noexcept { return cache_; }

  // Prompts sent to the backend by this embedder.
  std::uint64_t backend_prompts() const noexcept { return backend_prompts_.load(); }

  SentenceEmbedding embed_sentence(const std::string& sentence, const EmbedConfig& config) {
    return embed_sentence(sentence, config, registry_.resolve_set(config.prompt_set_id));
  }

  SentenceEmbedding embed_sentence(const std::string& sentence, const EmbedConfig& config, const PromptSet& set) {
    const int layer = resolve_layer(config.layer, info_.num_layers);
    auto per_prompt = per_prompt_vectors(sentence, set, layer);
    return {finish(per_prompt, config, set, layer), std::move(per_prompt)};
  }

  CorpusEmbeddings embed_corpus(std::span<const std::string> sentences, const EmbedConfig& config,
                                FailurePolicy policy = FailurePolicy::SkipAndReport) {
    return embed_corpus(sentences, config, registry_.resolve_set(config.prompt_set_id), policy);
  }

  CorpusEmbeddings embed_corpus(std::span<const std::string> sentences, const EmbedConfig& config,
                                const PromptSet& set, FailurePolicy policy = FailurePolicy::SkipAndReport) {
    if (sentences.empty()) throw Error(ErrorKind::EmptyInput, "no sentences to embed");
    const int layer = resolve_layer(config.layer, info_.num_layers);

    // Work on unique sentences; duplicates share a row.
    std::map<std::string_view, std::size_t> slot_of;
    std::vector<std::size_t> slot(sentences.size());
    std::vector<std::string_view> unique;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
      auto [it, inserted] = slot_of.emplace(sentences[i], unique.size());
      if (inserted) unique.push_back(sentences[i]);
      slot[i] = it->second;
    }

    std::vector<std::optional<Embedding>> results(unique.size());
    std::vector<std::string> errors(unique.size());
    std::exception_ptr fatal;
    std::mutex fatal_mutex;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t u = next++; u < unique.size(); u = next++) {
        try {
          auto per_prompt = per_prompt_vectors(std::string(unique[u]), set, layer);
          results[u] = finish(per_prompt, config, set, layer);
        } catch (const Error& e) {
          if (e.kind() == ErrorKind::ContextOverflow) {
            errors[u] = e.what();
          } else {
            std::lock_guard lock(fatal_mutex);
            if (!fatal) fatal = std::current_exception();
          }
        } catch (...) {
          std::lock_guard lock(fatal_mutex);
          if (!fatal) fatal = std::current_exception();
        }
      }
    };
    const auto threads = std::min<std::size_t>(static_cast<std::size_t>(parallelism_), unique.size());
    if (threads <= 1) {
      worker();
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    if (fatal) std::rethrow_exception(fatal);

    CorpusEmbeddings out;
    out.rows.resize(sentences.size());
    for (std::size_t i = 0; i < sentences.size(); ++i) {
      out.rows[i] = results[slot[i]];
      if (!out.rows[i]) {
        out.failures.push_back({i, errors[slot[i]]});
        if (policy == FailurePolicy::FailFast) throw Error(ErrorKind::ContextOverflow, errors[slot[i]]);
      }
    }
    return out;
  }

  // Raw per-template vectors in set order. A context overflow on any member
  // fails the sentence, naming the template.
  std::vector<std::vector<float>> per_prompt_vectors(const std::string& sentence, const PromptSet& set, int layer) {
    const auto templates = registry_.templates_of(set);
    if (templates.empty()) throw Error(ErrorKind::EmptyInput, "prompt set '" + set.id + "' is empty");
    std::vector<std::vector<float>> out(templates.size());
    std::vector<CacheKey> keys(templates.size());
    std::vector<std::size_t> missing;
    std::vector<std::string> prompts;
    for (std::size_t j = 0; j < templates.size(); ++j) {
      if (cache_ != nullptr) {
        keys[j] = cache_key(info_.model_id, templates[j]->id, layer, sentence);
        if (auto hit = cache_->lookup(keys[j])) {
          out[j] = std::move(*hit);
          continue;
        }
      }
      missing.push_back(j);
      prompts.push_back(render(*templates[j], sentence));
    }
    if (missing.empty()) return out;

    backend_prompts_ += prompts.size();
    auto results = backend_.hidden_states(prompts, layer);
    if (results.size() != prompts.size()) {
      throw Error(ErrorKind::BackendUnavailable, "backend returned " + std::to_string(results.size()) +
                                                     " results for " + std::to_string(prompts.size()) + " prompts");
    }
    for (std::size_t m = 0; m < missing.size(); ++m) {
      auto& r = results[m];
      const auto& tmpl = *templates[missing[m]];
      if (!r.ok()) {
        throw Error(ErrorKind::ContextOverflow, "template '" + tmpl.id + "': " + r.diagnostic);
      }
      validate(r.values, tmpl.id);
      out[missing[m]] = std::move(r.values);
    }
    if (cache_ != nullptr) {
      for (auto j : missing) cache_->insert(keys[j], out[j]);
    }
    return out;
  }

 private:
  void validate(const std::vector<float>& v, const std::string& template_id) const {
    if (v.size() != static_cast<std::size_t>(info_.hidden_dim)) {
      throw Error(ErrorKind::DimensionMismatch, "template '" + template_id + "': backend returned length " +
                                                    std::to_string(v.size()) + ", expected " +
                                                    std::to_string(info_.hidden_dim));
    }
    for (float x : v) {
      if (!std::isfinite(x)) throw Error(ErrorKind::NonFinite, "template '" + template_id + "'");
    }
  }

  Embedding finish(std::vector<std::vector<float>> per_prompt, const EmbedConfig& config, const PromptSet& set,
                   int layer) const {
    if (config.normalize) {
      for (auto& v : per_prompt) l2_normalize(v);
    }
    Embedding e;
    e.values = aggregate(per_prompt, config.aggregation);
    e.provenance = {info_.model_id, set.id, layer, to_string(config.aggregation) + (config.normalize ? "+l2" : "")};
    return e;
  }

  Backend& backend_;
  const PromptRegistry& registry_;
  EmbeddingCache* cache_;
  int parallelism_;
  ModelInfo info_;
  std::atomic<std::uint64_t> backend_prompts_{0};
};

}  // namespace metaeol

#endif  // METAEOL_EMBEDDING_HPP
