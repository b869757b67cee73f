#ifndef METAEOL_PROBE_HPP
#define METAEOL_PROBE_HPP

#include <algorithm>
#include <cctype>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "metaeol/backend.hpp"
#include "metaeol/format.hpp"
#include "metaeol/prompt_registry.hpp"

namespace metaeol {

// Fixed 120-word English stop-word inventory.
inline const std::unordered_set<std::string>& stop_words() {
  static const std::unordered_set<std::string> words{
      "a",       "about",   "above",  "after",   "again",  "against", "all",     "am",      "an",
      "and",     "any",     "are",    "as",      "at",     "be",      "because", "been",    "before",
      "being",   "below",   "between", "both",   "but",    "by",      "can",     "could",   "did",
      "do",      "does",    "doing",  "down",    "during", "each",    "few",     "for",     "from",
      "further", "had",     "has",    "have",    "having", "he",      "her",     "here",    "hers",
      "herself", "him",     "himself", "his",    "how",    "i",       "if",      "in",      "into",
      "is",      "it",      "its",    "itself",  "just",   "me",      "more",    "most",    "my",
      "myself",  "no",      "nor",    "not",     "now",    "of",      "off",     "on",      "once",
      "one",     "only",    "or",     "other",   "our",    "ours",    "ourselves", "out",   "over",
      "own",     "same",    "she",    "should",  "so",     "some",    "such",    "than",    "that",
      "the",     "their",   "theirs", "them",    "themselves", "then", "there",  "these",   "they",
      "this",    "those",   "through", "to",     "too",    "under",   "until",   "up",      "very",
      "was",     "we",      "were",   "what",    "when",   "where",   "which",   "while",   "who",
      "whom",    "why",     "will",
  };
  return words;
}

// Strips subword whitespace markers ("▁", "Ġ", spaces) and lowercases ASCII.
inline std::string normalize_token(std::string_view token) {
  static constexpr std::string_view kMarkers[] = {"▁", "Ġ", " ", "\t"};
  for (bool stripped = true; stripped;) {
    stripped = false;
    for (auto m : kMarkers) {
      if (token.starts_with(m)) {
        token.remove_prefix(m.size());
        stripped = true;
      }
    }
  }
  std::string out(token);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline bool is_stop_word(std::string_view token) { return stop_words().contains(normalize_token(token)); }

inline double stopword_mass(const TopKPrediction& pred) {
  double mass = 0;
  for (const auto& e : pred.entries) {
    if (is_stop_word(e.token)) mass += e.probability;
  }
  return mass;
}

struct ProbeRow {
  std::string template_id;
  TopKPrediction prediction;
  double stopword_mass = 0.0;
};

struct ProbeReport {
  std::vector<ProbeRow> rows;  // sorted by template id

  void write_table(std::ostream& os) const {
    std::size_t width = 11;
    for (const auto& r : rows) width = std::max(width, r.template_id.size());
    os << pad_right("template_id", width) << " | top tokens | stopword_mass\n";
    for (const auto& r : rows) {
      os << pad_right(r.template_id, width) << " |";
      for (const auto& e : r.prediction.entries) os << ' ' << e.token;
      os << " | " << fixed2(r.stopword_mass) << '\n';
    }
  }

  // template_id<TAB>rank<TAB>token<TAB>probability, one line per entry.
  void write_records(std::ostream& os) const {
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.prediction.entries.size(); ++i) {
        const auto& e = r.prediction.entries[i];
        os << r.template_id << '\t' << i + 1 << '\t' << e.token << '\t' << shortest(e.probability) << '\n';
      }
      os << r.template_id << "\tstopword_mass\t" << shortest(r.stopword_mass) << '\n';
    }
  }
};

// Throws NotSupported before producing any row if the backend declines.
inline ProbeReport probe_top_tokens(Backend& backend, const PromptRegistry& registry, const std::string& sentence,
                                    const PromptSet& set, int k) {
  ProbeReport report;
  for (const auto* tmpl : registry.templates_of(set)) {
    auto pred = top_k_next_tokens(backend, render(*tmpl, sentence), k);
    const double mass = stopword_mass(pred);
    report.rows.push_back({tmpl->id, std::move(pred), mass});
  }
  std::sort(report.rows.begin(), report.rows.end(),
            [](const ProbeRow& a, const ProbeRow& b) { return a.template_id < b.template_id; });
  return report;
}

}  // namespace metaeol

#endif  // METAEOL_PROBE_HPP
