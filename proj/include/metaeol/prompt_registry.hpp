#ifndef METAEOL_PROMPT_REGISTRY_HPP
#define METAEOL_PROMPT_REGISTRY_HPP

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "metaeol/error.hpp"

namespace metaeol {

// Sentence slot inside a template body. Rendering replaces it wholesale,
// together with nothing else; the surrounding quotes belong to the body.
inline constexpr std::string_view kPlaceholder = "⟦TEXT⟧";

enum class MetaTask {
  TextClassification,
  SentimentAnalysis,
  ParaphraseIdentification,
  InformationExtraction,
  Baseline,
  TaskSpecific,
  Perturbed,
};

inline constexpr std::string_view to_string(MetaTask task) {
  switch (task) {
    case MetaTask::TextClassification: return "TextClassification";
    case MetaTask::SentimentAnalysis: return "SentimentAnalysis";
    case MetaTask::ParaphraseIdentification: return "ParaphraseIdentification";
    case MetaTask::InformationExtraction: return "InformationExtraction";
    case MetaTask::Baseline: return "Baseline";
    case MetaTask::TaskSpecific: return "TaskSpecific";
    case MetaTask::Perturbed: return "Perturbed";
  }
  return "";
}

inline MetaTask meta_task_from_string(std::string_view name) {
  for (MetaTask t : {MetaTask::TextClassification, MetaTask::SentimentAnalysis,
                     MetaTask::ParaphraseIdentification, MetaTask::InformationExtraction,
                     MetaTask::Baseline, MetaTask::TaskSpecific, MetaTask::Perturbed}) {
    if (to_string(t) == name) return t;
  }
  throw Error(ErrorKind::ParseError, "unknown meta-task '" + std::string(name) + "'");
}

struct PromptTemplate {
  std::string id;
  MetaTask meta_task;
  std::string body;
  std::string source;

  bool operator==(const PromptTemplate&) const = default;
};

// An ordered group of template ids. Members are kept sorted by id so that
// concatenation order is reproducible.
struct PromptSet {
  std::string id;
  std::vector<std::string> template_ids;

  PromptSet() = default;
  PromptSet(std::string set_id, std::vector<std::string> ids)
      : id(std::move(set_id)), template_ids(std::move(ids)) {
    std::sort(template_ids.begin(), template_ids.end());
    template_ids.erase(std::unique(template_ids.begin(), template_ids.end()), template_ids.end());
  }

  std::size_t size() const noexcept { return template_ids.size(); }
  bool operator==(const PromptSet&) const = default;
};

struct SetSummary {
  std::string id;
  std::size_t count = 0;
  std::map<MetaTask, int> breakdown;
};

inline std::size_t count_placeholders(std::string_view body) {
  std::size_t n = 0;
  for (auto pos = body.find(kPlaceholder); pos != std::string_view::npos;
       pos = body.find(kPlaceholder, pos + kPlaceholder.size())) {
    ++n;
  }
  return n;
}

// Substitutes the sentence verbatim. No whitespace is added or removed and no
// trailing newline is appended.
inline std::string render(const PromptTemplate& tmpl, std::string_view sentence) {
  const auto pos = tmpl.body.find(kPlaceholder);
  if (pos == std::string::npos) return tmpl.body;
  std::string out;
  out.reserve(tmpl.body.size() - kPlaceholder.size() + sentence.size());
  out.append(tmpl.body, 0, pos);
  out.append(sentence);
  out.append(tmpl.body, pos + kPlaceholder.size());
  return out;
}

inline const std::vector<std::string>& transfer_tasks() {
  static const std::vector<std::string> tasks{"mr", "cr", "subj", "mpqa", "sst", "trec", "mrpc"};
  return tasks;
}

inline std::string transfer_template_id(std::string_view task) {
  return "task-" + std::string(task);
}

namespace detail {

#define METAEOL_SLOT "\"⟦TEXT⟧\""

inline std::vector<PromptTemplate> builtin_templates() {
  using T = MetaTask;
  const std::string rating =
      "In this task, you're given a review from an online platform. Your task is to generate a "
      "rating for the product based on the review on a scale of 1-5, where 1 means 'extremely "
      "negative' and 5 means 'extremely positive'. For this task, this sentence : " METAEOL_SLOT
      " reflects the sentiment in one word:\"";
  const std::string movie =
      "In this task, you're given a movie review, and you need to classify its sentiment into "
      "positive or negative. For this task, this sentence : " METAEOL_SLOT " means in one word:\"";
  return {
      // Single-prompt baseline and its paraphrases.
      {"eol-base", T::Baseline, "This sentence : " METAEOL_SLOT " means in one word:\"",
       "prompteol/base"},
      {"eol-para-1", T::Baseline, "This sentence : " METAEOL_SLOT " can be rephrased to one word:\"",
       "prompteol/paraphrase-1"},
      {"eol-para-2", T::Baseline, "This sentence : " METAEOL_SLOT " can be expressed as one word:\"",
       "prompteol/paraphrase-2"},
      {"eol-para-3", T::Baseline, "This sentence : " METAEOL_SLOT " implies in one word:\"",
       "prompteol/paraphrase-3"},
      {"eol-para-4", T::Baseline, "This sentence : " METAEOL_SLOT " indicates in one word:\"",
       "prompteol/paraphrase-4"},
      {"eol-para-5", T::Baseline,
       "The meaning of this sentence : " METAEOL_SLOT " can be conveyed in another word:\"",
       "prompteol/paraphrase-5"},
      {"eol-para-6", T::Baseline, "This sentence : " METAEOL_SLOT " can be restated as one word:\"",
       "prompteol/paraphrase-6"},
      {"eol-para-7", T::Baseline,
       "This sentence : " METAEOL_SLOT " can be reformulated as one word:\"",
       "prompteol/paraphrase-7"},

      // Meta-task prompts.
      {"tc-category", T::TextClassification,
       "In this task, you're presented with a text excerpt. Your task is to categorize the excerpt "
       "into a broad category such as 'Education', 'Technology', 'Health', 'Business', "
       "'Environment', 'Politics', or 'Culture'. These categories help in organizing content for "
       "better accessibility and targeting. For this task, this sentence : " METAEOL_SLOT
       " should be classified under one general category in one word:\"",
       "metaeol/text-classification/general-category-identification"},
      {"tc-opinion-fact", T::TextClassification,
       "In this task, you're given a statement and you need to determine whether it's presenting "
       "an 'Opinion' or a 'Fact'. This distinction is vital for information verification, "
       "educational purposes, and content analysis. For this task, this sentence : " METAEOL_SLOT
       " discriminates between opinion and fact in one word:\"",
       "metaeol/text-classification/opinion-vs-fact-discrimination"},
      {"sa-review-rating", T::SentimentAnalysis, rating,
       "metaeol/sentiment-analysis/product-review-rating"},
      {"sa-emotion", T::SentimentAnalysis,
       "In this task, you're reading a personal diary entry. Your task is to identify the "
       "predominant emotion expressed, such as joy, sadness, anger, fear, or love. For this task, "
       "this sentence : " METAEOL_SLOT " conveys the emotion in one word:\"",
       "metaeol/sentiment-analysis/emotion-detection"},
      {"pi-similarity", T::ParaphraseIdentification,
       "In this task, you're presented with two sentences. Your task is to assess whether the "
       "sentences convey the same meaning. Use 'identical', 'similar', 'different', or "
       "'unrelated' to describe the relationship. To enhance the performance of this task, this "
       "sentence : " METAEOL_SLOT " means in one word:\"",
       "metaeol/paraphrase-identification/similarity-check"},
      {"pi-synonym", T::ParaphraseIdentification,
       "In this task, you're given a sentence and a phrase. Your task is to determine if the "
       "phrase can be a contextual synonym within the given sentence. Options include 'yes', "
       "'no', or 'partially'. To enhance the performance of this task, this sentence : " METAEOL_SLOT
       " means in one word:\"",
       "metaeol/paraphrase-identification/contextual-synonym-detection"},
      {"ie-key-fact", T::InformationExtraction,
       "In this task, you're examining a news article. Your task is to extract the most critical "
       "fact from the article. For this task, this sentence : " METAEOL_SLOT
       " encapsulates the key fact in one word:\"",
       "metaeol/information-extraction/key-fact-identification"},
      {"ie-entity-relation", T::InformationExtraction,
       "In this task, you're reviewing a scientific abstract. Your task is to identify the main "
       "entities (e.g., proteins, diseases) and their relations (e.g., causes, treats). For this "
       "task, this sentence : " METAEOL_SLOT
       " highlights the primary entity or relation in one word:\"",
       "metaeol/information-extraction/entity-and-relation-extraction"},

      // Additional sentiment prompts.
      {"sa-polarity", T::SentimentAnalysis,
       "In this task, you're analyzing customer feedback from various platforms. Your task is to "
       "identify the overall sentiment polarity of the feedback. The sentiment polarity means: 1 "
       "for very negative, 2 for negative, 3 for neutral, 4 for positive, and 5 for very "
       "positive. Based on this guidance, this sentence : " METAEOL_SLOT
       " represents in one word:\"",
       "sentiment/sentiment-polarity-detection"},
      {"sa-intensity", T::SentimentAnalysis,
       "In this task, your objective is to gauge the intensity and type of emotion conveyed in a "
       "piece of text, such as a social media post or a product review. This involves not just "
       "identifying whether the sentiment is positive or negative, but also understanding the "
       "strength of that sentiment and the specific emotions involved (e.g., joy, anger, sadness, "
       "surprise). For this task, this sentence : " METAEOL_SLOT
       " conveys an emotion that is best described in one word as:\"",
       "sentiment/sentiment-intensity-and-emotion-detection"},
      {"sa-aspect", T::SentimentAnalysis,
       "In this task, you're given a review of a product or service. Your task is to assess the "
       "sentiment toward specific aspects of the product or service mentioned in the review. For "
       "each mentioned aspect (e.g., quality, price, customer service), classify the sentiment "
       "as: 1 for very negative, 2 for negative, 3 for neutral, 4 for positive, and 5 for very "
       "positive. Based on this instruction, this sentence : " METAEOL_SLOT
       " signifies in one word:\"",
       "sentiment/aspect-based-sentiment-analysis"},

      // Synonym-perturbed variants of the review-rating prompt.
      {"sa-perturbed-1", T::Perturbed,
       "In this task, you're given a reappraisal from an online chopine. Your task is to generate "
       "a rating for the product based on the reappraisal on a scale of 1-5, where 1 think of "
       "'extremely negative' and 5 think of 'extremely positive'. For this task, this sentence : "
       METAEOL_SLOT " reflects the sentiment in one word:\"",
       "perturbed/product-review-rating-1"},
      {"sa-perturbed-2", T::Perturbed,
       "In this task, you're given a review from an online chopine. Your task is to generate a "
       "rating for the product based on the review on a scale of 1-5, where 1 means 'extremely "
       "damaging' and 5 means 'extremely plus'. For this task, this sentence : " METAEOL_SLOT
       " reflects the sentiment in one word:\"",
       "perturbed/product-review-rating-2"},
      {"sa-perturbed-3", T::Perturbed,
       "In this job, you're given a brush up from an online platform. Your job is to generate a "
       "rating for the product based on the brush up on a scale of 1-5, where 1 means 'highly "
       "negative' and 5 means 'highly positive'. For this task, this sentence : " METAEOL_SLOT
       " reflects the sentiment in one word:\"",
       "perturbed/product-review-rating-3"},
      {"sa-perturbed-4", T::Perturbed,
       "In this task, you're reach a refresh from an online platform. Your task is to generate a "
       "rating for the product based on the refresh on a scale of 1-5, where 1 means 'highly "
       "negative' and 5 means 'highly positive'. For this task, this sentence : " METAEOL_SLOT
       " reflects the sentiment in one word:\"",
       "perturbed/product-review-rating-4"},

      // Task-specific prompts for transfer benchmarks; mr and sst share a body.
      {"task-mr", T::TaskSpecific, movie, "transfer/mr"},
      {"task-sst", T::TaskSpecific, movie, "transfer/sst"},
      {"task-cr", T::TaskSpecific,
       "In this task, you're given a customer review of a product sold online, and you need to "
       "classify its sentiment into positive or negative. For this task, this sentence : "
       METAEOL_SLOT " means in one word:\"",
       "transfer/cr"},
      {"task-subj", T::TaskSpecific,
       "In this task, you're analyzing movie reviews to determine their level of subjectivity. A "
       "subjective review is filled with personal opinions, feelings, and preferences of the "
       "reviewer, often expressing likes or dislikes and personal experiences. An objective "
       "review, on the other hand, sticks to factual information, such as plot details or actor "
       "performances, without revealing the reviewer's personal stance. For this task, this "
       "sentence : " METAEOL_SLOT " means in one word:\"",
       "transfer/subj"},
      {"task-mpqa", T::TaskSpecific,
       "In this task, you are given a description of a entity or event expressed in data such as "
       "blogs, newswire, and editorials. You need to classify its sentiment into positive or "
       "negative. For this task, this sentence : " METAEOL_SLOT " means in one word:\"",
       "transfer/mpqa"},
      {"task-trec", T::TaskSpecific,
       "In this task, you are given a question. You need to detect which category better "
       "describes the question. A question belongs to the description category if it asks about "
       "description and abstract concepts. Entity questions are about entities such as animals, "
       "colors, sports, etc. Abbreviation questions ask about abbreviations and expressions "
       "abbreviated. Questions regarding human beings, description of a person, and a group or "
       "organization of persons are categorized as Human. Quantity questions are asking about "
       "numeric values and Location questions ask about locations, cities, and countries. Answer "
       "with \"Description\", \"Entity\", \"Abbreviation\", \"Person\", \"Quantity\", and "
       "\"Location\". For this task, this sentence : " METAEOL_SLOT " means in one word:\"",
       "transfer/trec"},
      {"task-mrpc", T::TaskSpecific,
       "In this task, you are given two sentences(Sentence1 and Sentence2). Answer \"Yes\" if "
       "these sentences are a paraphrase of one another, otherwise answer \"No\". For this task, "
       "this sentence : " METAEOL_SLOT " means in one word:\"",
       "transfer/mrpc"},
  };
}

#undef METAEOL_SLOT

inline std::vector<PromptSet> builtin_sets() {
  std::vector<std::string> transfer;
  for (const auto& task : transfer_tasks()) transfer.push_back(transfer_template_id(task));
  return {
      PromptSet("metaeol8", {"tc-category", "tc-opinion-fact", "sa-review-rating", "sa-emotion",
                             "pi-similarity", "pi-synonym", "ie-key-fact", "ie-entity-relation"}),
      PromptSet("eol", {"eol-base"}),
      PromptSet("eol-paraphrases8", {"eol-base", "eol-para-1", "eol-para-2", "eol-para-3",
                                     "eol-para-4", "eol-para-5", "eol-para-6", "eol-para-7"}),
      PromptSet("sa5",
                {"sa-review-rating", "sa-emotion", "sa-polarity", "sa-intensity", "sa-aspect"}),
      PromptSet("transfer", std::move(transfer)),
      PromptSet("sa-perturbed", {"sa-review-rating", "sa-perturbed-1", "sa-perturbed-2",
                                 "sa-perturbed-3", "sa-perturbed-4"}),
  };
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

// Immutable collection of templates and named sets. Safe for concurrent reads.
class PromptRegistry {
 public:
  PromptRegistry(std::vector<PromptTemplate> templates, std::vector<PromptSet> sets) {
    for (auto& t : templates) {
      if (count_placeholders(t.body) != 1) {
        throw Error(ErrorKind::ParseError, "template '" + t.id + "' must contain the placeholder exactly once");
      }
      auto [it, inserted] = templates_.emplace(t.id, t);
      if (!inserted && !(it->second == t)) {
        throw Error(ErrorKind::DuplicateKey, "conflicting definitions of template '" + t.id + "'");
      }
    }
    for (auto& s : sets) {
      for (const auto& id : s.template_ids) {
        if (!templates_.contains(id)) {
          throw Error(ErrorKind::UnknownTemplate, "set '" + s.id + "' references '" + id + "'");
        }
      }
      if (!sets_.emplace(s.id, s).second) {
        throw Error(ErrorKind::DuplicateKey, "duplicate set '" + s.id + "'");
      }
    }
  }

  static const PromptRegistry& builtin() {
    static const PromptRegistry registry(detail::builtin_templates(), detail::builtin_sets());
    return registry;
  }

  // Reads a corpus laid out as <dir>/<set_id>/manifest.tsv plus one
  // <template_id>.txt per template.
  static PromptRegistry from_directory(const std::filesystem::path& dir) {
    std::vector<PromptTemplate> templates;
    std::vector<PromptSet> sets;
    std::vector<std::filesystem::path> set_dirs;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.is_directory()) set_dirs.push_back(entry.path());
    }
    std::sort(set_dirs.begin(), set_dirs.end());
    for (const auto& set_dir : set_dirs) {
      std::istringstream manifest(detail::read_file(set_dir / "manifest.tsv"));
      std::vector<std::string> ids;
      std::string line;
      int lineno = 0;
      while (std::getline(manifest, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto t1 = line.find('\t');
        const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
        if (t2 == std::string::npos) {
          throw Error(ErrorKind::ParseError,
                      (set_dir / "manifest.tsv").string() + ":" + std::to_string(lineno) + ": expected 3 fields");
        }
        PromptTemplate t{line.substr(0, t1), meta_task_from_string(line.substr(t1 + 1, t2 - t1 - 1)), "",
                         line.substr(t2 + 1)};
        t.body = detail::read_file(set_dir / (t.id + ".txt"));
        ids.push_back(t.id);
        templates.push_back(std::move(t));
      }
      sets.emplace_back(set_dir.filename().string(), std::move(ids));
    }
    return PromptRegistry(std::move(templates), std::move(sets));
  }

  void write_directory(const std::filesystem::path& dir) const {
    for (const auto& [set_id, set] : sets_) {
      const auto set_dir = dir / set_id;
      std::filesystem::create_directories(set_dir);
      std::ofstream manifest(set_dir / "manifest.tsv", std::ios::binary);
      for (const auto& id : set.template_ids) {
        const auto& t = get_template(id);
        manifest << t.id << '\t' << to_string(t.meta_task) << '\t' << t.source << '\n';
        std::ofstream(set_dir / (id + ".txt"), std::ios::binary) << t.body;
      }
    }
  }

  const PromptTemplate& get_template(const std::string& id) const {
    auto it = templates_.find(id);
    if (it == templates_.end()) throw Error(ErrorKind::UnknownTemplate, "'" + id + "'");
    return it->second;
  }

  bool has_set(const std::string& id) const { return sets_.contains(id); }

  // Published set ids only.
  const PromptSet& load_builtin(const std::string& set_id) const {
    auto it = sets_.find(set_id);
    if (it == sets_.end()) throw Error(ErrorKind::UnknownSet, "'" + set_id + "'");
    return it->second;
  }

  // Published ids plus "transfer:<task>" (one task-specific prompt) and
  // "template:<id>" (any single template).
  PromptSet resolve_set(const std::string& spec) const {
    if (spec.starts_with("transfer:")) {
      const auto task = spec.substr(9);
      const auto& tasks = transfer_tasks();
      if (std::find(tasks.begin(), tasks.end(), task) == tasks.end()) {
        throw Error(ErrorKind::UnknownSet, "'" + spec + "': unknown transfer task");
      }
      return PromptSet(spec, {transfer_template_id(task)});
    }
    if (spec.starts_with("template:")) {
      const auto id = spec.substr(9);
      if (!templates_.contains(id)) throw Error(ErrorKind::UnknownSet, "'" + spec + "'");
      return PromptSet(spec, {id});
    }
    return load_builtin(spec);
  }

  std::vector<const PromptTemplate*> templates_of(const PromptSet& set) const {
    std::vector<const PromptTemplate*> out;
    out.reserve(set.size());
    for (const auto& id : set.template_ids) out.push_back(&get_template(id));
    return out;
  }

  std::vector<SetSummary> list_sets() const {
    std::vector<SetSummary> out;
    for (const auto& [id, set] : sets_) {
      SetSummary s{id, set.size(), {}};
      for (const auto& tid : set.template_ids) ++s.breakdown[get_template(tid).meta_task];
      out.push_back(std::move(s));
    }
    return out;
  }

  std::vector<std::string> set_ids() const {
    std::vector<std::string> ids;
    for (const auto& [id, set] : sets_) ids.push_back(id);
    return ids;
  }

 private:
  std::map<std::string, PromptTemplate> templates_;
  std::map<std::string, PromptSet> sets_;
};

}  // namespace metaeol

#endif  // METAEOL_PROMPT_REGISTRY_HPP
