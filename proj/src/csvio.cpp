// SPDX-License-Identifier: Apache-2.0
#include "tsasan/csvio.hpp"

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace tsasan {

namespace {

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

CsvTable read_numeric_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "': " + std::strerror(errno));
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");
    CsvTable table;
    table.header = split_commas(line);
    const size_t cols = table.header.size();
    std::vector<double> values;
    size_t rows = 0;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = split_commas(line);
        if (cells.size() != cols) {
            throw ParseError(path + ": line " + std::to_string(lineno) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(cols));
        }
        for (const auto& cell : cells) {
            char* end = nullptr;
            errno = 0;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0' || errno == ERANGE) {
                throw ParseError(path + ": non-numeric cell '" + cell + "' at line " +
                                 std::to_string(lineno));
            }
            values.push_back(v);
        }
        ++rows;
    }
    table.values.rows = rows;
    table.values.cols = cols;
    table.values.data = std::move(values);
    return table;
}

void write_numeric_csv(const std::string& path, const std::vector<std::string>& header,
                       const Matrix& values) {
    if (!header.empty() && values.rows > 0 && header.size() != values.cols) {
        throw IoError("write_numeric_csv: header width " + std::to_string(header.size()) +
                      " does not match " + std::to_string(values.cols) + " columns");
    }
    ensure_parent_dir(path);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "': " + std::strerror(errno));
    for (size_t i = 0; i < header.size(); ++i) {
        if (i) out << ',';
        out << header[i];
    }
    out << '\n';
    for (size_t r = 0; r < values.rows; ++r) {
        for (size_t c = 0; c < values.cols; ++c) {
            if (c) out << ',';
            out << fmt17(values.at(r, c));
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "': " + std::strerror(errno));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    ensure_parent_dir(path);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "': " + std::strerror(errno));
    out << content;
    if (!out) throw IoError("write failed for '" + path + "'");
}

void ensure_parent_dir(const std::string& path) {
    std::filesystem::path p(path);
    auto parent = p.parent_path();
    if (!parent.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(parent, ec);
        if (ec) throw IoError("cannot create directory '" + parent.string() + "': " + ec.message());
    }
}

bool file_exists(const std::string& path) {
    std::error_code ec;
    return std::filesystem::exists(path, ec);
}

}  // namespace tsasan
