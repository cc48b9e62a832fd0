#pragma once

// Minimal RFC 4180 reader/writer helpers. Lines starting with '#' before the
// header are returned separately as comments.

#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace mevo::csv {

using Row = std::vector<std::string>;

struct Table {
  std::vector<std::string> comments;  // leading '#' lines, without the '#'
  Row header;
  std::vector<Row> rows;

  /// Index of a header column; throws AnalysisError when absent.
  std::size_t column(std::string_view name) const;
};

/// Throws AnalysisError on unterminated quotes or rows whose width differs
/// from the header.
Table read(std::istream& in);
Table read_string(const std::string& text);

/// Quotes a field when it contains a comma, quote, CR or LF.
std::string escape(std::string_view field);
std::string join(const Row& fields);

}  // namespace mevo::csv
