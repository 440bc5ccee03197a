// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "tsasan/common.hpp"

namespace tsasan {

struct CsvTable {
    std::vector<std::string> header;
    Matrix values;
};

// Strict numeric CSV with a single header line. Throws ParseError with the
// offending 1-based line number on malformed rows or non-numeric cells.
CsvTable read_numeric_csv(const std::string& path);

// Writes values as decimal text at 17 significant digits.
void write_numeric_csv(const std::string& path, const std::vector<std::string>& header,
                       const Matrix& values);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
void ensure_parent_dir(const std::string& path);
bool file_exists(const std::string& path);

}  // namespace tsasan
