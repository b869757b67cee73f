#ifndef METAEOL_MOCK_BACKEND_HPP
#define METAEOL_MOCK_BACKEND_HPP

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "metaeol/backend.hpp"
#include "metaeol/hash.hpp"

namespace metaeol {

// Deterministic stand-in for a language model. The hidden state for
// (prompt, layer r) is the splitmix64 stream seeded with
// fnv1a64(prompt) ^ seed ^ uint64(r), mapped to [-1, 1).
class MockBackend final : public Backend {
 public:
  struct Options {
    bool top_k_supported = true;
    std::size_t max_prompt_bytes = 0;  // 0: unlimited
  };

  MockBackend(std::uint64_t seed, int num_layers, int hidden_dim) : MockBackend(seed, num_layers, hidden_dim, Options{}) {}

  MockBackend(std::uint64_t seed, int num_layers, int hidden_dim, Options options)
      : seed_(seed), num_layers_(num_layers), hidden_dim_(hidden_dim), options_(options) {
    if (num_layers < 1 || hidden_dim < 1) throw Error(ErrorKind::Usage, "mock backend needs num_layers, hidden_dim >= 1");
  }

  ModelInfo info() const override {
    return {"mock-s" + std::to_string(seed_) + "-L" + std::to_string(num_layers_) + "-d" + std::to_string(hidden_dim_),
            num_layers_, hidden_dim_};
  }

  static std::vector<float> hidden_state(std::uint64_t seed, const std::string& prompt, int layer_index, int dim) {
    SplitMix64 gen(fnv1a64(prompt) ^ seed ^ static_cast<std::uint64_t>(static_cast<std::int64_t>(layer_index)));
    std::vector<float> out(static_cast<std::size_t>(dim));
    for (auto& v : out) v = static_cast<float>(gen.next_signed());
    return out;
  }

  std::vector<PromptResult> hidden_states(std::span<const std::string> prompts, int layer_index) override {
    if (layer_index >= 0 || -layer_index > num_layers_) {
      throw Error(ErrorKind::LayerOutOfRange, "layer " + std::to_string(layer_index));
    }
    std::vector<PromptResult> out;
    out.reserve(prompts.size());
    for (const auto& p : prompts) {
      prompt_evaluations_.fetch_add(1, std::memory_order_relaxed);
      PromptResult r;
      if (options_.max_prompt_bytes != 0 && p.size() > options_.max_prompt_bytes) {
        r.context_overflow = true;
        r.diagnostic = "prompt of " + std::to_string(p.size()) + " bytes exceeds context of " +
                       std::to_string(options_.max_prompt_bytes);
      } else {
        r.values = hidden_state(seed_, p, layer_index, hidden_dim_);
      }
      out.push_back(std::move(r));
    }
    return out;
  }

  static const std::vector<std::string>& vocabulary() {
    static const std::vector<std::string> vocab{
        "▁the", "▁a",     "▁one",   "▁I",      "▁it",    "▁this",   "▁is",    "▁of",
        "▁and", "▁to",    "▁in",    "▁that",   "positive", "negative", "▁good", "▁bad",
        "joy",  "▁anger", "Culture", "▁Health", "▁fact",  "▁opinion", "smart", "▁clever",
        "gem",  "▁thing", "\"",      "\\n",     "▁very",  "▁small",  "▁news", "▁yes"};
    return vocab;
  }

  TopKPrediction top_k(const std::string& prompt, int k) override {
    if (!options_.top_k_supported) throw Error(ErrorKind::NotSupported, "mock backend configured without top-k");
    top_k_calls_.fetch_add(1, std::memory_order_relaxed);
    const auto& vocab = vocabulary();
    SplitMix64 gen(fnv1a64(prompt) ^ seed_ ^ 0x746f706b00000000ULL);
    std::vector<double> logits(vocab.size());
    for (auto& l : logits) l = 4.0 * gen.next_signed();
    const double top = *std::max_element(logits.begin(), logits.end());
    double z = 0;
    for (auto& l : logits) z += (l = std::exp(l - top));
    std::vector<std::size_t> order(vocab.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
    TopKPrediction pred;
    for (std::size_t i = 0; i < order.size() && i < static_cast<std::size_t>(std::max(k, 0)); ++i) {
      const auto id = order[i];
      pred.entries.push_back({vocab[id], logits[id] / z, static_cast<std::int64_t>(id)});
    }
    return pred;
  }

  std::uint64_t prompt_evaluations() const noexcept { return prompt_evaluations_.load(); }
  std::uint64_t top_k_calls() const noexcept { return top_k_calls_.load(); }
  void reset_counters() noexcept {
    prompt_evaluations_ = 0;
    top_k_calls_ = 0;
  }

 private:
  std::uint64_t seed_;
  int num_layers_;
  int hidden_dim_;
  Options options_;
  std::atomic<std::uint64_t> prompt_evaluations_{0};
  std::atomic<std::uint64_t> top_k_calls_{0};
};

}  // namespace metaeol

#endif  // METAEOL_MOCK_BACKEND_HPP
