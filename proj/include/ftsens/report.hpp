#pragma once

#include "ftsens/dyadic.hpp"
#include "ftsens/errors.hpp"

#include <charconv>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace ftsens {

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error("UsageError", what) {}
};

// ---------------------------------------------------------------------------
// Numbers on the command line

/// Exact paths take fractions p/2^k or integers; sampled paths take decimals.
enum class NumberForm { Exact, Decimal };

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    size_t a = cur.find_first_not_of(" \t"), b = cur.find_last_not_of(" \t");
    if (a == std::string::npos) throw UsageError("empty entry in list '" + s + "'");
    out.push_back(cur.substr(a, b - a + 1));
  }
  return out;
}

inline bool looks_decimal(const std::string& s) {
  return s.find_first_of(".eE") != std::string::npos;
}

inline Dyadic parse_exact(const std::string& s) {
  if (looks_decimal(s)) throw UsageError("'" + s + "' is a decimal; this path takes exact fractions such as 1/8");
  try {
    return Dyadic::parse(s);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

inline double parse_decimal(const std::string& s) {
  if (s.find('/') != std::string::npos)
    throw UsageError("'" + s + "' is a fraction; this path takes decimals such as 0.125");
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw UsageError("not a number: '" + s + "'");
  return v;
}

/// A list must use one form throughout.
inline void reject_mixed(const std::vector<std::string>& items) {
  bool frac = false, dec = false;
  for (const auto& s : items) {
    frac = frac || s.find('/') != std::string::npos;
    dec = dec || looks_decimal(s);
  }
  if (frac && dec) throw UsageError("list mixes fractions and decimals");
}

inline std::vector<Dyadic> parse_exact_list(const std::string& s) {
  auto items = split_list(s);
  reject_mixed(items);
  std::vector<Dyadic> out;
  for (const auto& v : items) out.push_back(parse_exact(v));
  return out;
}

inline std::vector<double> parse_decimal_list(const std::string& s) {
  auto items = split_list(s);
  reject_mixed(items);
  std::vector<double> out;
  for (const auto& v : items) out.push_back(parse_decimal(v));
  return out;
}

// ---------------------------------------------------------------------------
// CSV (RFC 4180)

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline void csv_row(std::ostream& os, const std::vector<std::string>& fields) {
  for (size_t i = 0; i < fields.size(); ++i) {
    if (i) os << ',';
    os << csv_field(fields[i]);
  }
  os << "\r\n";
}

namespace provenance {
inline std::string exact() { return "exact"; }
inline std::string bounded(double err) {
  std::ostringstream s;
  s.precision(3);
  s << "bounded(" << err << ")";
  return s.str();
}
inline std::string sampled(unsigned long seed) { return "sampled(" + std::to_string(seed) + ")"; }
}  // namespace provenance

/// shortest text that reads back to the same double
inline std::string fmt_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, end);
}

// ---------------------------------------------------------------------------
// Plot data: header comments, then "x y" per line

struct PlotPoint {
  std::string x, y;
  std::string note;  // trailing comment, e.g. the reduced fraction of an exact value
};

inline PlotPoint plot_point(long x, const Dyadic& y) { return {std::to_string(x), y.to_decimal(), y.to_fraction()}; }
inline PlotPoint plot_point(long x, double y) { return {std::to_string(x), fmt_double(y), ""}; }

inline void write_plotdata(std::ostream& os, const std::vector<std::pair<std::string, std::string>>& meta,
                           const std::vector<PlotPoint>& series) {
  for (const auto& [k, v] : meta) os << "# " << k << ": " << v << "\n";
  for (const auto& p : series) {
    os << p.x << ' ' << p.y;
    if (!p.note.empty()) os << "  # " << p.note;
    os << "\n";
  }
}

// ---------------------------------------------------------------------------
// Config files: INI-style sections and key = value lines

struct ConfigIssue {
  int line = 0, column = 0;
  std::string message;
};

inline constexpr int kConfigSchema = 1;

/// Lexical check run before the file reaches the option parser, so errors
/// carry a line and column. Also requires `schema_version = 1` at top level.
inline std::optional<ConfigIssue> validate_config(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int no = 0;
  bool in_section = false, schema_seen = false;
  auto is_key_char = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.'; };
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    size_t a = line.find_first_not_of(" \t");
    if (a == std::string::npos || line[a] == '#' || line[a] == ';') continue;
    int col = static_cast<int>(a) + 1;
    if (line[a] == '[') {
      size_t close = line.find(']', a);
      if (close == std::string::npos) return ConfigIssue{no, col, "section header is missing ']'"};
      for (size_t i = a + 1; i < close; ++i)
        if (!is_key_char(line[i])) return ConfigIssue{no, static_cast<int>(i) + 1, "invalid character in section name"};
      if (close == a + 1) return ConfigIssue{no, col, "empty section name"};
      size_t rest = line.find_first_not_of(" \t", close + 1);
      if (rest != std::string::npos && line[rest] != '#')
        return ConfigIssue{no, static_cast<int>(rest) + 1, "unexpected text after section header"};
      in_section = true;
      continue;
    }
    size_t eq = line.find('=', a);
    if (eq == std::string::npos) return ConfigIssue{no, col, "expected 'key = value'"};
    size_t key_end = line.find_last_not_of(" \t", eq - 1);
    if (key_end == std::string::npos || key_end < a) return ConfigIssue{no, col, "missing key before '='"};
    for (size_t i = a; i <= key_end; ++i)
      if (!is_key_char(line[i])) return ConfigIssue{no, static_cast<int>(i) + 1, "invalid character in key"};
    size_t v = line.find_first_not_of(" \t", eq + 1);
    if (v == std::string::npos) return ConfigIssue{no, static_cast<int>(eq) + 2, "missing value after '='"};
    std::string key = line.substr(a, key_end - a + 1);
    if (key == "schema_version") {
      if (in_section) return ConfigIssue{no, col, "schema_version must precede every section"};
      std::string val = line.substr(v);
      size_t e = val.find_last_not_of(" \t");
      val = val.substr(0, e + 1);
      if (val != std::to_string(kConfigSchema))
        return ConfigIssue{no, static_cast<int>(v) + 1, "unsupported schema_version (expected " + std::to_string(kConfigSchema) + ")"};
      schema_seen = true;
    }
  }
  if (!schema_seen) return ConfigIssue{1, 1, "missing 'schema_version = " + std::to_string(kConfigSchema) + "'"};
  return std::nullopt;
}

}  // namespace ftsens
