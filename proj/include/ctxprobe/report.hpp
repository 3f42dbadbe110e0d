// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ctxprobe::report {

std::string sha256_hex(std::string_view bytes);
// Throws Error naming the path when it cannot be read.
std::string sha256_file(const std::filesystem::path &path);

// Shortest round-trippable-enough text: "%.6g", "NA" for NaN / absent.
std::string format_number(double v);
std::string format_number(const std::optional<double> &v);
std::string significance_stars(double p);

struct Provenance {
    std::uint64_t seed = 0;
    std::string config_sha256;
    std::vector<std::pair<std::string, std::string>> inputs; // basename, sha256

    void add_input(const std::filesystem::path &path);
};

struct Column {
    std::string name;
    std::string doc;
};

// A tab-separated table preceded by '#' comment lines: title, provenance,
// column documentation and free-form notes.
struct Table {
    std::string name;
    std::string title;
    std::vector<Column> columns;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> notes;

    void add_row(std::vector<std::string> row);
};

std::string render_table(const Table &table, const Provenance &provenance);
void write_table(const std::filesystem::path &path, const Table &table,
                 const Provenance &provenance);

// Reads back the data rows of a rendered table (comment lines skipped, the
// first non-comment line is the column header).
struct ParsedTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> comments;

    std::size_t column(std::string_view name) const;
};
ParsedTable read_table(const std::filesystem::path &path);

void write_text_file(const std::filesystem::path &path, std::string_view text);
std::string read_text_file(const std::filesystem::path &path);

} // namespace ctxprobe::report
