#ifndef METAEOL_REPORT_HPP
#define METAEOL_REPORT_HPP

#include <algorithm>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "metaeol/format.hpp"

namespace metaeol {

using ConfigSnapshot = std::vector<std::pair<std::string, std::string>>;

struct ReportRow {
  std::string name;
  std::optional<double> value;  // absent rows print as NA
  std::string note;
};

// A titled table of scores. Values keep full precision; rounding to two
// decimals happens only in the human-readable rendering.
struct Report {
  std::string title;
  ConfigSnapshot config;
  std::vector<ReportRow> rows;
  std::optional<double> average;
  std::vector<std::string> diagnostics;

  // Machine-readable form: the config snapshot as key=value lines, a "---"
  // separator, then name<TAB>value records. Valid as a config file.
  void write_records(std::ostream& os) const {
    for (const auto& [k, v] : config) os << k << '=' << v << '\n';
    os << "---\n";
    for (const auto& r : rows) os << r.name << '\t' << (r.value ? shortest(*r.value) : std::string("NA")) << '\n';
    if (average) os << "avg\t" << shortest(*average) << '\n';
  }

  std::string records() const {
    std::ostringstream ss;
    write_records(ss);
    return ss.str();
  }

  void write_table(std::ostream& os) const {
    std::size_t width = 7;
    for (const auto& r : rows) width = std::max(width, r.name.size());
    os << title << '\n';
    for (const auto& [k, v] : config) os << "  " << k << " = " << v << '\n';
    os << pad_right("dataset", width) << "  score\n";
    os << std::string(width + 9, '-') << '\n';
    for (const auto& r : rows) {
      os << pad_right(r.name, width) << "  " << (r.value ? fixed2(*r.value) : std::string("NA"));
      if (!r.note.empty()) os << "  (" << r.note << ')';
      os << '\n';
    }
    if (average) os << pad_right("avg", width) << "  " << fixed2(*average) << '\n';
    for (const auto& d : diagnostics) os << "note: " << d << '\n';
  }
};

inline std::optional<double> mean_of_present(const std::vector<ReportRow>& rows) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.value) {
      sum += *r.value;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

}  // namespace metaeol

#endif  // METAEOL_REPORT_HPP
