// metaeol: embedding extraction, STS and transfer evaluation, ablations.
//
// Exit codes: 0 ok, 1 usage, 2 data, 3 backend.

#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "metaeol/metaeol.hpp"

namespace {

using namespace metaeol;

// Flags shared by every subcommand. Each one overrides the config file
// only when given explicitly.
struct SharedFlags {
  std::string config_file;
  std::string templates_dir;
  std::vector<std::pair<CLI::Option*, std::string>> overrides;
  std::map<std::string, std::string> values;

  void add(CLI::App& app, const std::string& flag, const std::string& key, const std::string& help) {
    auto* opt = app.add_option(flag, values[key], help);
    overrides.emplace_back(opt, key);
  }

  void attach(CLI::App& app) {
    app.add_option("--config", config_file, "key=value config file (flags override it)");
    app.add_option("--templates", templates_dir, "load templates from a corpus directory instead of the built-in set");
    add(app, "--backend", "backend", "mock | http");
    add(app, "--url", "http.base_url", "bridge base URL");
    add(app, "--prompts", "prompts", "prompt set id, transfer:<task> or template:<id>");
    add(app, "--layer", "layer", "final | -k | prop[:fraction]");
    add(app, "--agg", "agg", "mean | concat | max");
    add(app, "--cache", "cache", "per-prompt embedding cache directory");
    add(app, "--parallelism", "parallelism", "concurrent backend requests");
    add(app, "--out", "out", "output path");
    add(app, "--seed", "seed", "mock backend seed");
    add(app, "--mock-layers", "mock.layers", "mock backend layer count");
    add(app, "--mock-dim", "mock.dim", "mock backend hidden width");
    app.add_flag("--normalize", normalize, "L2-normalize the aggregated embedding");
  }

  RunConfig resolve() const {
    RunConfig config;
    if (!config_file.empty()) config.load_file(config_file);
    for (const auto& [opt, key] : overrides) {
      if (opt->count() > 0) config.set(key, values.at(key));
    }
    if (normalize) config.normalize = true;
    if (config.parallelism < 1) throw Error(ErrorKind::Usage, "--parallelism must be >= 1");
    config.embed_config();  // reject bad --layer/--agg before touching any data
    return config;
  }

  const PromptRegistry& registry() {
    if (templates_dir.empty()) return PromptRegistry::builtin();
    if (!loaded_) loaded_.emplace(PromptRegistry::from_directory(templates_dir));
    return *loaded_;
  }

  bool normalize = false;

 private:
  std::optional<PromptRegistry> loaded_;
};

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    auto s = std::string(strip_cr(line));
    if (!s.empty()) lines.push_back(std::move(s));
  }
  return lines;
}

void emit(const Report& report, const RunConfig& config) {
  report.write_table(std::cout);
  if (!config.out.empty()) {
    std::ofstream out(config.out, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + config.out);
    report.write_records(out);
  }
}

std::vector<std::string> or_default(const std::string& list, const std::vector<std::string>& fallback) {
  auto items = split_list(list);
  return items.empty() ? fallback : items;
}

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGPIPE, SIG_IGN);
  CLI::App app{"Multi-prompt sentence embeddings from causal language models"};
  app.require_subcommand(1);
  SharedFlags shared;

  auto* embed = app.add_subcommand("embed", "embed one sentence per line into an embedding file");
  std::string input;
  embed->add_option("input", input, "sentences file")->required();

  std::string data_dir;
  std::string datasets, tasks, range, variants, mode;
  auto* sts = app.add_subcommand("eval-sts", "STS evaluation (Spearman x100)");
  sts->add_option("--data", data_dir, "directory of <dataset>.tsv files")->required();
  sts->add_option("--datasets", datasets, "comma-separated dataset names");

  auto* transfer = app.add_subcommand("eval-transfer", "transfer-task evaluation (accuracy x100)");
  transfer->add_option("--data", data_dir, "directory of <task>.tsv files")->required();
  transfer->add_option("--tasks", tasks, "comma-separated task names");

  auto* ablate = app.add_subcommand("ablate", "meta-task, prompt-count or layer ablation over STS");
  ablate->add_option("mode", mode, "tasks | prompts | layers")->required()->check(CLI::IsMember({"tasks", "prompts", "layers"}));
  ablate->add_option("--data", data_dir, "directory of <dataset>.tsv files")->required();
  ablate->add_option("--datasets", datasets, "comma-separated dataset names");
  ablate->add_option("--range", range, "layer range for layers mode, e.g. -1..-8");

  auto* variance = app.add_subcommand("variance", "STS mean and std across prompt variants");
  variance->add_option("--data", data_dir, "directory of <dataset>.tsv files")->required();
  variance->add_option("--datasets", datasets, "comma-separated dataset names");
  variance->add_option("--variants", variants, "prompt set of variants (default sa-perturbed)");

  auto* probe = app.add_subcommand("probe", "top-k next tokens per template");
  std::string sentence;
  int k = 10;
  probe->add_option("sentence", sentence, "input sentence")->required();
  probe->add_option("--k", k, "number of tokens");

  auto* cache = app.add_subcommand("cache", "inspect embedding files and caches");
  cache->require_subcommand(1);
  auto* dump = cache->add_subcommand("dump", "print key, dim and leading values per record");
  std::string dump_path;
  dump->add_option("path", dump_path, "embedding file or cache directory")->required();

  auto* list = app.add_subcommand("list-sets", "list prompt sets");

  auto* convert = app.add_subcommand("convert-sts", "convert STS.input/STS.gs files to canonical TSV");
  std::string raw_dir;
  convert->add_option("raw", raw_dir, "directory with STS.input.* and STS.gs.*")->required();

  auto* serve = app.add_subcommand("serve-mock", "serve the mock backend over the bridge protocol");
  std::string host = "127.0.0.1";
  int port = 8000;
  serve->add_option("--host", host);
  serve->add_option("--port", port);

  auto* export_templates = app.add_subcommand("export-templates", "write the template corpus to a directory");
  std::string export_dir;
  export_templates->add_option("dir", export_dir)->required();

  for (auto* sub : {embed, sts, transfer, ablate, variance, probe, dump, list, convert, serve, export_templates}) {
    shared.attach(*sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::Usage);
  }

  try {
    RunConfig config = shared.resolve();
    if (!datasets.empty()) config.set("datasets", datasets);
    if (!tasks.empty()) config.set("tasks", tasks);
    if (!range.empty()) config.set("ablate.range", range);
    if (!variants.empty()) config.set("variants", variants);
    const auto& registry = shared.registry();
    registry.resolve_set(config.prompts);

    if (*embed) {
      if (config.out.empty()) throw Error(ErrorKind::Usage, "embed needs --out");
      auto session = Session::open(config, registry);
      const auto summary = run_embed(session, read_lines(input), config.out);
      for (const auto& f : summary.failures) std::cerr << "warning: " << "sentence " << f.index + 1 << ": " << f.message << '\n';
      std::cout << summary.sentences << " sentences, " << summary.prompts_per_sentence << " prompts, "
                << summary.records << " records of dim " << summary.dim << ", cache hit rate "
                << fixed2(100.0 * summary.hit_rate()) << "%\n";
    } else if (*sts) {
      auto session = Session::open(config, registry);
      const auto ds = load_sts_dir(data_dir, or_default(config.datasets, sts_dataset_names()));
      emit(run_eval_sts(session, ds), config);
    } else if (*transfer) {
      auto session = Session::open(config, registry);
      const auto ds = load_transfer_dir(data_dir, or_default(config.tasks, transfer_tasks()));
      emit(run_eval_transfer(session, ds), config);
    } else if (*ablate) {
      auto session = Session::open(config, registry);
      const auto ds = load_sts_dir(data_dir, or_default(config.datasets, sts_dataset_names()));
      if (mode == "tasks") {
        emit(run_ablate_tasks(session, ds), config);
      } else if (mode == "prompts") {
        emit(run_ablate_prompts(session, ds).report, config);
      } else {
        if (config.ablate_range.empty()) throw Error(ErrorKind::Usage, "layers mode needs --range");
        emit(run_ablate_layers(session, ds, config.ablate_range), config);
      }
    } else if (*variance) {
      auto session = Session::open(config, registry);
      const auto ds = load_sts_dir(data_dir, or_default(config.datasets, sts_dataset_names()));
      emit(run_variance(session, ds, config.variants.empty() ? "sa-perturbed" : config.variants).report, config);
    } else if (*probe) {
      auto backend = make_backend(config);
      const auto set = registry.resolve_set(config.prompts);
      ProbeReport report;
      try {
        report = probe_top_tokens(*backend, registry, sentence, set, k);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::NotSupported) {
          std::cerr << "error: " << e.what() << "\nhint: top-k probing needs a bridge that serves /v1/topk (--backend http)\n";
          return static_cast<int>(ExitCode::Backend);
        }
        throw;
      }
      report.write_table(std::cout);
      if (!config.out.empty()) {
        std::ofstream out(config.out, std::ios::binary);
        report.write_records(out);
      }
    } else if (*dump) {
      if (std::filesystem::is_directory(dump_path)) {
        EmbeddingCache c(dump_path);
        EmbeddingFile file;
        file.records = c.entries();
        dump_records(std::cout, file);
      } else {
        dump_records(std::cout, read_embeddings(dump_path));
      }
    } else if (*list) {
      for (const auto& s : registry.list_sets()) {
        std::cout << pad_right(s.id, 18) << ' ' << s.count << " templates";
        for (const auto& [task, n] : s.breakdown) std::cout << "  " << to_string(task) << '=' << n;
        std::cout << '\n';
      }
    } else if (*convert) {
      std::ofstream file;
      if (!config.out.empty()) {
        file.open(config.out, std::ios::binary);
        if (!file) throw Error(ErrorKind::IoError, "cannot write " + config.out);
      }
      const auto n = convert_raw_sts(raw_dir, config.out.empty() ? std::cout : file);
      std::cerr << n << " pairs\n";
    } else if (*serve) {
      auto backend = make_backend(config);
      BridgeServer server(*backend);
      std::cerr << "serving " << backend->info().model_id << " on " << host << ':' << port << '\n';
      server.listen(host, port);
    } else if (*export_templates) {
      registry.write_directory(export_dir);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(exit_code_for(e.kind()));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::Data);
  }
  return 0;
}
