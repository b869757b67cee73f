#ifndef METAEOL_RUN_CONFIG_HPP
#define METAEOL_RUN_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "metaeol/backend.hpp"
#include "metaeol/embedding.hpp"
#include "metaeol/error.hpp"
#include "metaeol/http_backend.hpp"
#include "metaeol/mock_backend.hpp"
#include "metaeol/report.hpp"

namespace metaeol {

struct RunConfig {
  std::string backend = "mock";
  std::string url = "http://127.0.0.1:8000";
  int timeout_ms = 60000;
  std::string prompts = "metaeol8";
  std::string layer = "final";
  std::string agg = "mean";
  bool normalize = false;
  std::string cache;  // empty: no persistent cache
  int parallelism = 1;
  std::string out;
  std::uint64_t seed = 0;
  int mock_layers = 32;
  int mock_dim = 16;
  // Command-specific selections; empty means the command default.
  std::string datasets;  // comma-separated STS dataset names
  std::string tasks;     // comma-separated transfer task names
  std::string ablate_mode;
  std::string ablate_range;
  std::string variants;
  int k = 10;

  EmbedConfig embed_config() const {
    EmbedConfig c;
    c.prompt_set_id = prompts;
    c.layer = LayerSelector::parse(layer);
    c.aggregation = parse_aggregation(agg);
    c.normalize = normalize;
    return c;
  }

  // Settings that can change results. Output and cache locations and the
  // degree of parallelism are left out; they never affect numbers.
  ConfigSnapshot snapshot() const {
    ConfigSnapshot s{{"backend", backend}};
    if (backend == "http") {
      s.emplace_back("http.base_url", url);
    } else {
      s.emplace_back("seed", std::to_string(seed));
      s.emplace_back("mock.layers", std::to_string(mock_layers));
      s.emplace_back("mock.dim", std::to_string(mock_dim));
    }
    s.emplace_back("prompts", prompts);
    s.emplace_back("layer", layer);
    s.emplace_back("agg", agg);
    if (normalize) s.emplace_back("normalize", "true");
    return s;
  }

  void set(const std::string& key, const std::string& value) {
    auto to_int = [&](const std::string& v) {
      try {
        std::size_t used = 0;
        const long long n = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return n;
      } catch (const std::exception&) {
        throw Error(ErrorKind::Usage, "config key '" + key + "' expects an integer, got '" + v + "'");
      }
    };
    if (key == "backend") {
      if (value != "mock" && value != "http") throw Error(ErrorKind::Usage, "backend must be mock or http");
      backend = value;
    } else if (key == "http.base_url" || key == "url") {
      url = value;
    } else if (key == "http.timeout_ms") {
      timeout_ms = static_cast<int>(to_int(value));
    } else if (key == "http.parallelism" || key == "parallelism") {
      parallelism = static_cast<int>(to_int(value));
    } else if (key == "prompts") {
      prompts = value;
    } else if (key == "layer") {
      layer = value;
    } else if (key == "agg") {
      agg = value;
    } else if (key == "normalize") {
      normalize = value == "true" || value == "1";
    } else if (key == "cache") {
      cache = value;
    } else if (key == "out") {
      out = value;
    } else if (key == "seed") {
      seed = static_cast<std::uint64_t>(to_int(value));
    } else if (key == "mock.layers") {
      mock_layers = static_cast<int>(to_int(value));
    } else if (key == "mock.dim") {
      mock_dim = static_cast<int>(to_int(value));
    } else if (key == "datasets") {
      datasets = value;
    } else if (key == "tasks") {
      tasks = value;
    } else if (key == "ablate.mode") {
      ablate_mode = value;
    } else if (key == "ablate.range") {
      ablate_range = value;
    } else if (key == "variants") {
      variants = value;
    } else if (key == "k") {
      k = static_cast<int>(to_int(value));
    } else {
      throw Error(ErrorKind::Usage, "unknown config key '" + key + "'");
    }
  }

  // Flat key=value lines; '#' starts a comment line. Reading stops at a
  // "---" line so a machine-readable report replays as a config file.
  void load(std::istream& in, const std::string& origin = "<config>") {
    std::string raw;
    int lineno = 0;
    while (std::getline(in, raw)) {
      ++lineno;
      std::string line(strip_cr(raw));
      if (line == "---") break;
      const auto first = line.find_first_not_of(" \t");
      if (first == std::string::npos || line[first] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw Error(ErrorKind::Usage, origin + ":" + std::to_string(lineno) + ": expected key=value");
      }
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }

  void load_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Usage, "cannot read config " + path.string());
    load(in, path.string());
  }
};

inline std::unique_ptr<Backend> make_backend(const RunConfig& config) {
  if (config.backend == "http") return std::make_unique<HttpBackend>(HttpOptions{config.url, config.timeout_ms, 2});
  return std::make_unique<MockBackend>(config.seed, config.mock_layers, config.mock_dim);
}

}  // namespace metaeol

#endif  // METAEOL_RUN_CONFIG_HPP
