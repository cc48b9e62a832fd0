#include "mevo/csv.hpp"

#include <sstream>

#include "mevo/errors.hpp"

namespace mevo::csv {

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw AnalysisError("missing column '" + std::string(name) + "'");
}

namespace {

// Reads one record; returns false at end of input.
bool read_record(std::istream& in, Row& out, std::size_t& line) {
  out.clear();
  int c = in.get();
  if (c == EOF) return false;
  std::string field;
  bool quoted = false;
  bool after_quote = false;
  for (;; c = in.get()) {
    if (quoted) {
      if (c == EOF) throw AnalysisError("unterminated quoted field at line " + std::to_string(line));
      if (c == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get();
        } else {
          quoted = false;
          after_quote = true;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(static_cast<char>(c));
      }
      continue;
    }
    if (c == EOF || c == '\n') {
      if (!field.empty() && field.back() == '\r') field.pop_back();
      out.push_back(std::move(field));
      ++line;
      return true;
    }
    if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
      after_quote = false;
    } else if (c == '"' && field.empty() && !after_quote) {
      quoted = true;
    } else if (c == '\r' && in.peek() == '\n') {
      // CRLF line end
    } else {
      if (after_quote) throw AnalysisError("text after closing quote at line " + std::to_string(line));
      field.push_back(static_cast<char>(c));
    }
  }
}

}  // namespace

Table read(std::istream& in) {
  Table t;
  std::size_t line = 1;
  Row row;
  bool have_header = false;
  while (read_record(in, row, line)) {
    if (row.size() == 1 && row[0].empty()) continue;  // blank line
    if (!have_header) {
      if (!row.empty() && !row[0].empty() && row[0][0] == '#') {
        std::string text = row[0].substr(1);
        for (std::size_t i = 1; i < row.size(); ++i) text += "," + row[i];
        t.comments.push_back(text);
        continue;
      }
      t.header = row;
      have_header = true;
      continue;
    }
    if (row.size() != t.header.size()) {
      throw AnalysisError("row at line " + std::to_string(line - 1) + " has " +
                          std::to_string(row.size()) + " fields, expected " +
                          std::to_string(t.header.size()));
    }
    t.rows.push_back(row);
  }
  if (!have_header) throw AnalysisError("no header row");
  return t;
}

Table read_string(const std::string& text) {
  std::istringstream in(text);
  return read(in);
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (const char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string join(const Row& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    out += escape(fields[i]);
  }
  return out;
}

}  // namespace mevo::csv
