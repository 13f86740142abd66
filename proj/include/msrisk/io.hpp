#pragma once

// CSV ingestion and artifact writing.

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "msrisk/core.hpp"

namespace msrisk {

// ---------------------------------------------------------------------------
// RFC-4180 reader

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row
};

/// Parses comma-separated text with a header row. Quoted fields may contain
/// commas, doubled quotes and line breaks.
inline CsvTable parse_csv(std::string_view text) {
  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF && static_cast<unsigned char>(text[1]) == 0xBB &&
      static_cast<unsigned char>(text[2]) == 0xBF)
    text.remove_prefix(3);
  std::vector<std::vector<std::string>> records;
  std::vector<std::size_t> lines;
  std::vector<std::string> rec;
  std::string field;
  std::size_t line = 1, rec_line = 1;
  bool in_quotes = false, quoted = false, any = false;
  auto end_field = [&] {
    rec.push_back(std::move(field));
    field.clear();
    quoted = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(rec.size() == 1 && rec[0].empty() && !any)) {
      records.push_back(std::move(rec));
      lines.push_back(rec_line);
    }
    rec.clear();
    any = false;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      if (!field.empty() || quoted)
        fail(ErrorCode::MalformedCsv, "unexpected quote on line " + std::to_string(line));
      in_quotes = quoted = any = true;
    } else if (c == ',') {
      any = true;
      end_field();
    } else if (c == '\r') {
      if (i + 1 < text.size() && text[i + 1] == '\n') continue;
      end_record();
      rec_line = ++line;
    } else if (c == '\n') {
      end_record();
      rec_line = ++line;
    } else {
      if (quoted) fail(ErrorCode::MalformedCsv, "text after closing quote on line " + std::to_string(line));
      field.push_back(c);
      any = true;
    }
  }
  if (in_quotes) fail(ErrorCode::MalformedCsv, "unterminated quoted field starting near line " + std::to_string(rec_line));
  if (any || !field.empty() || !rec.empty()) end_record();
  require(!records.empty(), ErrorCode::MalformedCsv, "file has no header row");
  CsvTable t;
  t.header = std::move(records[0]);
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != t.header.size())
      fail(ErrorCode::MalformedCsv, "line " + std::to_string(lines[r]) + " has " + std::to_string(records[r].size()) +
                                        " fields, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(records[r]));
    t.line_numbers.push_back(lines[r]);
  }
  return t;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) fail(ErrorCode::Io, "error reading '" + path.string() + "'");
  return ss.str();
}

struct IngestOptions {
  std::string date_column = "date";
  std::vector<std::string> asset_columns;  // empty: every other column
  bool to_returns = false;                 // input holds prices; use log returns
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_double(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (*b == '+') ++b;
  const auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline bool is_missing_token(const std::string& raw) {
  const std::string s = trim(raw);
  return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "null" || s == "#N/A";
}

inline bool is_iso_date(const std::string& s) {
  static const std::regex re(R"(^\d{4}-(0[1-9]|1[0-2])-(0[1-9]|[12]\d|3[01])([T ]\d{2}:\d{2}(:\d{2}(\.\d+)?)?(Z|[+-]\d{2}:?\d{2})?)?$)");
  return std::regex_match(s, re);
}

}  // namespace detail

/// Builds a ReturnPanel from CSV text.
inline ReturnPanel panel_from_csv(const CsvTable& table, const IngestOptions& opts = {}) {
  auto find = [&](const std::string& name) -> std::size_t {
    for (std::size_t k = 0; k < table.header.size(); ++k)
      if (detail::trim(table.header[k]) == name) return k;
    fail(ErrorCode::MissingColumn, "column '" + name + "' not found");
  };
  const std::size_t dcol = find(opts.date_column);
  std::vector<std::string> assets = opts.asset_columns;
  if (assets.empty())
    for (std::size_t k = 0; k < table.header.size(); ++k)
      if (k != dcol) assets.push_back(detail::trim(table.header[k]));
  require(!assets.empty(), ErrorCode::MissingColumn, "no asset columns");
  std::vector<std::size_t> cols;
  for (const auto& a : assets) cols.push_back(find(a));

  const std::size_t n = table.rows.size();
  std::vector<std::string> dates;
  Matrix values(static_cast<Index>(n), static_cast<Index>(cols.size()));
  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = table.rows[r];
    const std::string line = std::to_string(table.line_numbers[r]);
    const std::string date = detail::trim(row[dcol]);
    if (date.empty()) fail(ErrorCode::MissingValue, "line " + line + ": missing date");
    if (!detail::is_iso_date(date)) fail(ErrorCode::MalformedCsv, "line " + line + ": '" + date + "' is not an ISO-8601 date");
    if (!dates.empty() && !(dates.back() < date))
      fail(ErrorCode::NonMonotoneDates, "line " + line + ": date " + date + " does not follow " + dates.back());
    dates.push_back(date);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const auto& cell = row[cols[k]];
      if (detail::is_missing_token(cell))
        fail(ErrorCode::MissingValue, "line " + line + ", column '" + assets[k] + "': missing value");
      const auto v = detail::parse_double(cell);
      if (!v) fail(ErrorCode::MalformedCsv, "line " + line + ", column '" + assets[k] + "': '" + cell + "' is not a number");
      values(static_cast<Index>(r), static_cast<Index>(k)) = *v;
    }
  }
  if (opts.to_returns) {
    require(n >= 3, ErrorCode::InsufficientData, "need at least 3 price rows to form returns");
    require((values.array() > 0.0).all(), ErrorCode::MalformedCsv, "prices must be positive to form log returns");
    Matrix ret(static_cast<Index>(n - 1), values.cols());
    for (Index t = 1; t < static_cast<Index>(n); ++t)
      ret.row(t - 1) = (values.row(t).array() / values.row(t - 1).array()).log().matrix();
    dates.erase(dates.begin());
    return ReturnPanel(std::move(dates), std::move(assets), std::move(ret));
  }
  require(n >= 2, ErrorCode::InsufficientData, "need at least 2 data rows");
  return ReturnPanel(std::move(dates), std::move(assets), std::move(values));
}

inline ReturnPanel ingest(const std::filesystem::path& path, const IngestOptions& opts = {}) {
  return panel_from_csv(parse_csv(read_file(path)), opts);
}

// ---------------------------------------------------------------------------
// Writing

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_double(double v) {
  if (!std::isfinite(v)) return "";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// Writes `content` to a temporary sibling and renames it over `path`.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) fail(ErrorCode::Io, "error writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    fail(ErrorCode::Io, "cannot move '" + tmp.string() + "' into place");
  }
}

inline std::string panel_to_csv(const ReturnPanel& panel, const std::string& date_column = "date") {
  std::string out = csv_escape(date_column);
  for (const auto& a : panel.assets()) out += "," + csv_escape(a);
  out += "\n";
  for (Index t = 0; t < panel.T(); ++t) {
    out += csv_escape(panel.timestamps()[static_cast<std::size_t>(t)]);
    for (Index j = 0; j < panel.p(); ++j) out += "," + format_double(panel.values()(t, j));
    out += "\n";
  }
  return out;
}

}  // namespace msrisk
