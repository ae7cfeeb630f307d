#pragma once

#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace persono::csv {

struct Row {
  std::size_t line = 0;  // 1-based physical line where the record starts
  std::vector<std::string> fields;
};

// RFC 4180 reader: quoted fields may contain commas, CRLF and doubled quotes.
// Blank lines are skipped. Throws ParseError on an unterminated quote.
std::vector<Row> read(std::istream& in);

void write_row(std::ostream& out, std::span<const std::string> fields);

std::string quote(const std::string& field);

}  // namespace persono::csv
