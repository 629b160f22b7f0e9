#pragma once

#include <string>
#include <vector>

namespace streamqc {

// Minimal delimited-text support for the interchange formats: comma
// separated, header row, plain decimal numbers, empty field = missing.
// No quoting or escapes (site ids and timestamps never contain commas).

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // 0-based column index, -1 when absent.
    int column(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text);

std::vector<std::string> split_csv_line(const std::string& line);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// Fixed-precision decimal rendering used by all artifact writers so reruns
// are byte-identical. NaN renders as the empty string (missing).
std::string format_decimal(double v, int decimals);

}  // namespace streamqc
