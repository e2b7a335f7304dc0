#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace emtbo {

// Locale-independent number parsing: surrounding blanks and a leading '+'
// are accepted, anything else throws Error(parse_error) naming `where`.
double parse_number(std::string_view field, const std::string& where);
// Shortest text that round-trips the double exactly.
std::string format_number(double v);

std::vector<std::string_view> split_fields(std::string_view line);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;  // 1-based source line per row
};

/// Reads a comma-separated table with a header row. Blank lines are skipped;
/// a row with a different field count than the header throws.
CsvTable read_csv(std::istream& in, const std::string& source);

}  // namespace emtbo
