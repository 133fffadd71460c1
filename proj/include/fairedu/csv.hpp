#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace fairedu::csv {

using Row = std::vector<std::string>;

/// Reads RFC 4180 records (quoted fields, doubled quotes, CRLF or LF line
/// ends). A trailing empty line is not a record. Throws ParseError on an
/// unterminated quoted field.
std::vector<Row> read(std::istream& in);

/// Quotes a field when it contains a delimiter, quote or line break.
std::string escape(const std::string& field);

void write_row(std::ostream& out, std::span<const std::string> fields);

}  // namespace fairedu::csv
