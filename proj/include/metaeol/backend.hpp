#ifndef METAEOL_BACKEND_HPP
#define METAEOL_BACKEND_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "metaeol/error.hpp"

namespace metaeol {

struct ModelInfo {
  std::string model_id;
  int num_layers = 0;  // transformer blocks
  int hidden_dim = 0;

  bool operator==(const ModelInfo&) const = default;
};

// Which hidden layer to read. Resolves to a negative index, -1 being the
// final (normalized) representation that feeds the LM head.
class LayerSelector {
 public:
  enum class Kind { Final, NegIndex, Proportional };

  static LayerSelector final_layer() { return LayerSelector(Kind::Final, 1, 0.0); }

  static LayerSelector neg_index(int k) {
    if (k < 1) throw Error(ErrorKind::LayerOutOfRange, "layer depth must be >= 1, got " + std::to_string(k));
    return LayerSelector(Kind::NegIndex, k, 0.0);
  }

  static LayerSelector proportional(double fraction = 0.1) {
    if (!(fraction > 0.0 && fraction <= 1.0)) {
      throw Error(ErrorKind::LayerOutOfRange, "proportional fraction must lie in (0, 1]");
    }
    return LayerSelector(Kind::Proportional, 0, fraction);
  }

  // Accepts "final", "-k", "prop" or "prop:<fraction>".
  static LayerSelector parse(const std::string& text) {
    if (text == "final") return final_layer();
    if (text == "prop") return proportional();
    if (text.starts_with("prop:")) {
      const auto tail = text.substr(5);
      std::size_t used = 0;
      double f = 0;
      try {
        f = std::stod(tail, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tail.size() || tail.empty()) throw Error(ErrorKind::Usage, "bad layer selector '" + text + "'");
      return proportional(f);
    }
    int value = 0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end || value >= 0) {
      throw Error(ErrorKind::Usage, "bad layer selector '" + text + "' (use final, -k, or prop:<f>)");
    }
    return value == -1 ? final_layer() : neg_index(-value);
  }

  Kind kind() const noexcept { return kind_; }
  int depth() const noexcept { return depth_; }
  double fraction() const noexcept { return fraction_; }

  std::string to_string() const {
    switch (kind_) {
      case Kind::Final: return "final";
      case Kind::NegIndex: return "-" + std::to_string(depth_);
      case Kind::Proportional: {
        char buf[32];
        auto r = std::to_chars(buf, buf + sizeof buf, fraction_);
        return "prop:" + std::string(buf, r.ptr);
      }
    }
    return "";
  }

  bool operator==(const LayerSelector&) const = default;

 private:
  LayerSelector(Kind kind, int depth, double fraction) : kind_(kind), depth_(depth), fraction_(fraction) {}

  Kind kind_;
  int depth_;
  double fraction_;
};

// Final -> -1, NegIndex(k) -> -k, Proportional(f) -> -max(1, floor(f * L)).
inline int resolve_layer(const LayerSelector& selector, int num_layers) {
  if (num_layers < 1) throw Error(ErrorKind::LayerOutOfRange, "model reports no layers");
  switch (selector.kind()) {
    case LayerSelector::Kind::Final:
      return -1;
    case LayerSelector::Kind::NegIndex:
      if (selector.depth() > num_layers) {
        throw Error(ErrorKind::LayerOutOfRange, "layer -" + std::to_string(selector.depth()) + " exceeds " +
                                                    std::to_string(num_layers) + " layers");
      }
      return -selector.depth();
    case LayerSelector::Kind::Proportional: {
      const auto depth = static_cast<long long>(std::floor(selector.fraction() * num_layers));
      return -static_cast<int>(std::clamp<long long>(depth, 1, num_layers));
    }
  }
  return -1;
}

struct Provenance {
  std::string model_id;
  std::string source;  // prompt set id or template id
  int layer = -1;
  std::string aggregation = "none";

  bool operator==(const Provenance&) const = default;
};

struct Embedding {
  std::vector<float> values;
  Provenance provenance;

  std::size_t dim() const noexcept { return values.size(); }
};

// Outcome of one prompt in a hidden-state batch. A context overflow marks
// only the offending prompt; the rest of the batch is still valid.
struct PromptResult {
  std::vector<float> values;
  bool context_overflow = false;
  std::string diagnostic;

  bool ok() const noexcept { return !context_overflow; }
};

struct TokenProb {
  std::string token;
  double probability = 0.0;
  std::int64_t token_id = -1;
};

struct TopKPrediction {
  std::vector<TokenProb> entries;

  double total_mass() const {
    double s = 0;
    for (const auto& e : entries) s += e.probability;
    return s;
  }

  // Sorted non-increasing, probabilities in [0, 1], total mass <= 1 + 1e-6.
  bool well_formed() const {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const double p = entries[i].probability;
      if (!(p >= 0.0 && p <= 1.0)) return false;
      if (i > 0 && p > entries[i - 1].probability) return false;
    }
    return total_mass() <= 1.0 + 1e-6;
  }
};

// Model backend contract. Implementations must be safe to call from several
// threads at once and must give results independent of batching.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual ModelInfo info() const = 0;

  // One entry per prompt, in order. layer_index is already resolved.
  virtual std::vector<PromptResult> hidden_states(std::span<const std::string> prompts, int layer_index) = 0;

  // Throws NotSupported when the deployment offers hidden states only.
  virtual TopKPrediction top_k(const std::string& prompt, int k) = 0;
};

inline std::vector<PromptResult> last_token_hidden_states(Backend& backend, std::span<const std::string> prompts,
                                                          const LayerSelector& selector) {
  if (prompts.empty()) throw Error(ErrorKind::EmptyInput, "no prompts");
  const auto info = backend.info();
  const int layer = resolve_layer(selector, info.num_layers);
  auto results = backend.hidden_states(prompts, layer);
  if (results.size() != prompts.size()) {
    throw Error(ErrorKind::BackendUnavailable, "backend returned " + std::to_string(results.size()) +
                                                   " results for " + std::to_string(prompts.size()) + " prompts");
  }
  for (const auto& r : results) {
    if (!r.ok()) continue;
    if (r.values.size() != static_cast<std::size_t>(info.hidden_dim)) {
      throw Error(ErrorKind::DimensionMismatch, "backend returned a vector of length " +
                                                    std::to_string(r.values.size()) + ", expected " +
                                                    std::to_string(info.hidden_dim));
    }
    for (float v : r.values) {
      if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, "backend returned a non-finite hidden state");
    }
  }
  return results;
}

inline TopKPrediction top_k_next_tokens(Backend& backend, const std::string& prompt, int k) {
  if (k < 0) throw Error(ErrorKind::Usage, "k must be >= 0");
  if (k == 0) return {};
  auto pred = backend.top_k(prompt, k);
  if (pred.entries.size() > static_cast<std::size_t>(k)) pred.entries.resize(static_cast<std::size_t>(k));
  if (!pred.well_formed()) throw Error(ErrorKind::BackendUnavailable, "malformed top-k response");
  return pred;
}

}  // namespace metaeol

#endif  // METAEOL_BACKEND_HPP
