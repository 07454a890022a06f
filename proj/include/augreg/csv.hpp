#pragma once

// RFC 4180 CSV reading/writing and the mapping from a CSV table to StudyData.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "augreg/error.hpp"
#include "augreg/study.hpp"

namespace augreg {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  }
};

/// Parses CSV text: comma separated, optional double-quoted fields with ""
/// escapes, CRLF or LF line ends, embedded newlines inside quotes. The first
/// record is the header. Every record must have as many fields as the header.
inline CsvTable parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false, field_started = false;
  std::size_t line = 1;

  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    // A blank line is not a record.
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started) {
          throw Error(ErrorKind::Io, "stray quote inside unquoted field on line " + std::to_string(line));
        }
        quoted = true;
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') break;
        end_record();
        ++line;
        break;
      case '\n':
        end_record();
        ++line;
        break;
      default:
        field += c;
        field_started = true;
    }
  }
  if (quoted) throw Error(ErrorKind::Io, "unterminated quoted field at end of input");
  if (field_started || !field.empty() || !record.empty()) end_record();

  if (records.empty()) throw Error(ErrorKind::Io, "CSV input has no header row");
  CsvTable table;
  table.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size()) {
      throw Error(ErrorKind::Io, "data row " + std::to_string(r) + " has " + std::to_string(records[r].size()) +
                                     " fields; header has " + std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline CsvTable read_csv_file(const std::string& path) { return parse_csv(read_file(path)); }

inline std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << csv_escape(fields[i]);
  }
  out << '\n';
}

/// Shortest decimal that reads back to the same double; "NA" for NaN.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline bool is_missing(std::string_view cell) { return cell.empty() || cell == "NA"; }

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

inline std::string cell_location(std::size_t row, const std::string& column) {
  return "row " + std::to_string(row + 1) + ", column '" + column + "'";
}

/// NaN for a missing marker; NonNumericCell for anything that is not a finite number.
inline double parse_cell(const std::string& raw, std::size_t row, const std::string& column) {
  const std::string_view cell = trim(raw);
  if (is_missing(cell)) return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const char* first = cell.data();
  if (!cell.empty() && cell.front() == '+') ++first;
  const auto res = std::from_chars(first, cell.data() + cell.size(), v);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(v)) {
    throw Error(ErrorKind::NonNumericCell, "'" + raw + "' at " + cell_location(row, column));
  }
  return v;
}

inline std::uint8_t parse_flag(const std::string& raw, std::size_t row, const std::string& column) {
  std::string cell(trim(raw));
  std::transform(cell.begin(), cell.end(), cell.begin(), [](unsigned char c) { return std::tolower(c); });
  if (cell == "1" || cell == "true") return 1;
  if (cell == "0" || cell == "false") return 0;
  throw Error(ErrorKind::NonNumericCell, "validation flag '" + raw + "' at " + cell_location(row, column) +
                                             " (expected 0/1 or true/false)");
}

}  // namespace detail

/// Column names the spec reads, in a fixed order, without duplicates.
inline std::vector<std::string> spec_columns(const AnalysisSpec& spec) {
  std::vector<std::string> cols;
  auto add = [&](const std::string& c) {
    if (!c.empty() && std::find(cols.begin(), cols.end(), c) == cols.end()) cols.push_back(c);
  };
  add(spec.validation_column);
  add(spec.outcome.reference);
  if (spec.family == Family::Cox) add(spec.outcome.reference_event);
  add(spec.outcome.surrogate);
  if (spec.family == Family::Cox) add(spec.outcome.surrogate_event);
  for (const auto& pred : spec.predictors) {
    add(pred.reference);
    for (const auto& s : pred.surrogates) add(s);
  }
  add(spec.cluster_column);
  add(spec.weight_column);
  return cols;
}

struct LoadOptions {
  // Error instead of warning when a reference cell is filled outside the
  // validation subsample.
  bool strict_references = false;
};

struct LoadResult {
  StudyData data;
  std::vector<std::string> warnings;
};

/// StudyData from a parsed table. Reference columns are read on validated
/// rows only; a reference column shared with a surrogate (a perfectly
/// measured variable) is taken from the surrogate values there.
inline LoadResult load_study(const CsvTable& table, const AnalysisSpec& spec, const LoadOptions& options = {}) {
  auto require = [&](const std::string& name, const char* role) {
    if (name.empty()) throw Error(ErrorKind::InvalidArgument, std::string("spec does not name the ") + role + " column");
    const auto col = table.column(name);
    if (!col) throw Error(ErrorKind::MissingColumn, std::string(role) + " column '" + name + "' not found in data");
    return *col;
  };

  const std::size_t n = table.rows.size();
  const auto val_col = require(spec.validation_column, "validation");

  std::set<std::string> surrogate_names{spec.outcome.surrogate};
  if (spec.family == Family::Cox) surrogate_names.insert(spec.outcome.surrogate_event);
  for (const auto& pred : spec.predictors) surrogate_names.insert(pred.surrogates.begin(), pred.surrogates.end());

  LoadResult result;
  StudyData& d = result.data;
  d.validated.resize(n);
  for (std::size_t r = 0; r < n; ++r) d.validated[r] = detail::parse_flag(table.rows[r][val_col], r, spec.validation_column);

  auto read_surrogate = [&](const std::string& name, const char* role) {
    const auto col = require(name, role);
    Vector v(static_cast<Index>(n));
    for (std::size_t r = 0; r < n; ++r) {
      v[static_cast<Index>(r)] = detail::parse_cell(table.rows[r][col], r, name);
      if (std::isnan(v[static_cast<Index>(r)])) {
        throw Error(ErrorKind::InvalidStudy, "surrogate value missing at " + detail::cell_location(r, name));
      }
    }
    return v;
  };

  std::size_t ignored_cells = 0;
  auto read_reference = [&](const std::string& name, const char* role) {
    const auto col = require(name, role);
    const bool shared = surrogate_names.count(name) > 0;
    Vector v(static_cast<Index>(n));
    for (std::size_t r = 0; r < n; ++r) {
      const double x = detail::parse_cell(table.rows[r][col], r, name);
      if (d.validated[r]) {
        if (std::isnan(x)) {
          throw Error(ErrorKind::ReferenceMissingInValidation, "validated " + detail::cell_location(r, name) + " is missing");
        }
        v[static_cast<Index>(r)] = x;
      } else {
        if (!shared && !std::isnan(x)) {
          if (options.strict_references) {
            throw Error(ErrorKind::ReferencePresentOutsideValidation,
                        "non-validated " + detail::cell_location(r, name) + " holds a value");
          }
          ++ignored_cells;
        }
        v[static_cast<Index>(r)] = std::numeric_limits<double>::quiet_NaN();
      }
    }
    return v;
  };

  d.ref_outcome = read_reference(spec.outcome.reference, "reference outcome");
  d.sur_outcome = read_surrogate(spec.outcome.surrogate, "surrogate outcome");
  if (spec.family == Family::Cox) {
    d.ref_event = read_reference(spec.outcome.reference_event, "reference event");
    d.sur_event = read_surrogate(spec.outcome.surrogate_event, "surrogate event");
  }
  d.ref_predictors.resize(static_cast<Index>(n), spec.reference_predictor_count());
  d.sur_predictors.resize(static_cast<Index>(n), spec.surrogate_predictor_count());
  Index k = 0;
  for (std::size_t j = 0; j < spec.predictors.size(); ++j) {
    const auto& pred = spec.predictors[j];
    d.ref_predictors.col(static_cast<Index>(j)) = read_reference(pred.reference, "reference predictor");
    for (const auto& s : pred.surrogates) d.sur_predictors.col(k++) = read_surrogate(s, "surrogate predictor");
  }

  if (!spec.cluster_column.empty()) {
    const auto col = require(spec.cluster_column, "cluster");
    std::map<std::string, std::int64_t> ids;
    d.cluster.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
      const std::string key(detail::trim(table.rows[r][col]));
      if (is_missing(key)) {
        throw Error(ErrorKind::InvalidStudy, "cluster id missing at " + detail::cell_location(r, spec.cluster_column));
      }
      d.cluster[r] = ids.try_emplace(key, static_cast<std::int64_t>(ids.size())).first->second;
    }
  }
  if (!spec.weight_column.empty()) d.weight = read_surrogate(spec.weight_column, "weight");

  if (ignored_cells > 0) {
    result.warnings.push_back(std::to_string(ignored_cells) +
                              " reference cell(s) outside the validation subsample were ignored");
  }
  validate_study(d, spec, false);
  return result;
}

inline LoadResult load_csv(const std::string& path, const AnalysisSpec& spec, const LoadOptions& options = {}) {
  return load_study(read_csv_file(path), spec, options);
}

/// Writes the study with the spec's column names; missing cells as NA.
inline void write_study_csv(std::ostream& out, const StudyData& d, const AnalysisSpec& spec) {
  const auto cols = spec_columns(spec);
  write_csv_row(out, cols);

  std::map<std::string, std::function<std::string(Index)>> cell;
  auto vec = [](const Vector& v) { return [&v](Index i) { return format_double(v[i]); }; };
  cell[spec.validation_column] = [&d](Index i) { return d.validated[static_cast<std::size_t>(i)] ? "1" : "0"; };
  // Surrogate entries are assigned after references, so a column shared by
  // both keeps the full-sample values.
  cell[spec.outcome.reference] = vec(d.ref_outcome);
  cell[spec.outcome.surrogate] = vec(d.sur_outcome);
  if (spec.family == Family::Cox) {
    cell[spec.outcome.reference_event] = vec(d.ref_event);
    cell[spec.outcome.surrogate_event] = vec(d.sur_event);
  }
  Index k = 0;
  for (std::size_t j = 0; j < spec.predictors.size(); ++j) {
    const auto& pred = spec.predictors[j];
    cell[pred.reference] = [&d, j](Index i) { return format_double(d.ref_predictors(i, static_cast<Index>(j))); };
    for (const auto& s : pred.surrogates) {
      const Index col = k++;
      cell[s] = [&d, col](Index i) { return format_double(d.sur_predictors(i, col)); };
    }
  }
  if (!spec.cluster_column.empty()) {
    cell[spec.cluster_column] = [&d](Index i) { return std::to_string(d.cluster[static_cast<std::size_t>(i)]); };
  }
  if (!spec.weight_column.empty()) cell[spec.weight_column] = vec(d.weight);

  std::vector<std::string> fields(cols.size());
  for (Index i = 0; i < d.n_full(); ++i) {
    for (std::size_t c = 0; c < cols.size(); ++c) fields[c] = cell.at(cols[c])(i);
    write_csv_row(out, fields);
  }
}

}  // namespace augreg
