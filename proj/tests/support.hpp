#ifndef METAEOL_TESTS_SUPPORT_HPP
#define METAEOL_TESTS_SUPPORT_HPP

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace testing_support {

inline std::filesystem::path data_dir() { return METAEOL_TEST_DATA; }
inline std::filesystem::path golden_dir() { return METAEOL_GOLDEN_DIR; }
inline std::string cli_path() { return METAEOL_CLI; }

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

// Fresh directory under the build tree, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("metaeol-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

struct RunResult {
  int exit_code = -1;
  std::string out;
};

// Runs the CLI through the shell; stderr is discarded.
inline RunResult run_cli(const std::string& args) {
  const std::string cmd = cli_path() + " " + args + " 2>/dev/null";
  RunResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

// Brute-force Spearman: rank by counting (ties share the average of the
// positions they occupy), then the textbook Pearson formula.
inline std::vector<double> brute_ranks(const std::vector<double>& xs) {
  std::vector<double> r(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double less = 0, equal = 0;
    for (double y : xs) {
      if (y < xs[i]) ++less;
      if (y == xs[i]) ++equal;
    }
    r[i] = less + (equal + 1.0) / 2.0;
  }
  return r;
}

inline double brute_spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = brute_ranks(a), rb = brute_ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i] / n;
    mb += rb[i] / n;
  }
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// Reference templates extracted from the source document, one
// id<TAB>text line each, rendered around the literal "input sentence".
inline std::map<std::string, std::string> reference_templates() {
  std::map<std::string, std::string> out;
  std::ifstream in(golden_dir() / "templates.tsv", std::ios::binary);
  std::string line;
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    if (tab != std::string::npos) out[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return out;
}

}  // namespace testing_support



namespace testing_support {

// CLI runs whose machine-readable reports are frozen under golden/.
struct GoldenRun {
  std::string name;
  std::string args;
};

inline std::vector<GoldenRun> golden_runs() {
  const std::string d = "--data " + data_dir().string();
  return {
      {"eval_sts", "eval-sts " + d + " --datasets sts12,stsb"},
      {"eval_sts_concat_prop", "eval-sts " + d + " --datasets sts12,stsb --agg concat --layer prop"},
      {"eval_transfer", "eval-transfer " + d + " --tasks mr,mrpc,trec"},
      {"eval_transfer_task_prompts", "eval-transfer " + d + " --tasks mr,mrpc,trec --prompts transfer"},
      {"ablate_tasks", "ablate tasks " + d + " --datasets sts12,stsb"},
      {"ablate_prompts", "ablate prompts " + d + " --datasets sts12,stsb"},
      {"variance", "variance " + d + " --datasets sts12,stsb"},
  };
}

}  // namespace testing_support

#endif  // METAEOL_TESTS_SUPPORT_HPP
