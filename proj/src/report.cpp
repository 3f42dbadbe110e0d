// SPDX-License-Identifier: Apache-2.0
#include "ctxprobe/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include <openssl/evp.h>

#include "ctxprobe/error.hpp"

namespace ctxprobe::report {

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256 failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xF]);
    }
    return out;
}

std::string sha256_file(const std::filesystem::path &path) {
    return sha256_hex(read_text_file(path));
}

std::string format_number(double v) {
    if (std::isnan(v)) return "NA";
    if (v == 0.0) return "0"; // folds -0
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string format_number(const std::optional<double> &v) {
    return v ? format_number(*v) : "NA";
}

std::string significance_stars(double p) {
    if (std::isnan(p)) return "";
    if (p < 0.001) return "***";
    if (p < 0.01) return "**";
    if (p < 0.05) return "*";
    return "";
}

void Provenance::add_input(const std::filesystem::path &path) {
    inputs.emplace_back(path.filename().string(), sha256_file(path));
}

void Table::add_row(std::vector<std::string> row) {
    if (row.size() != columns.size()) {
        throw Error("table " + name + ": row has " + std::to_string(row.size()) +
                    " fields, expected " + std::to_string(columns.size()));
    }
    rows.push_back(std::move(row));
}

std::string render_table(const Table &table, const Provenance &provenance) {
    std::ostringstream out;
    out << "# ctxprobe " << table.name << "\n";
    if (!table.title.empty()) out << "# " << table.title << "\n";
    out << "# seed: " << provenance.seed << "\n";
    out << "# config_sha256: " << provenance.config_sha256 << "\n";
    for (const auto &[name, digest] : provenance.inputs) {
        out << "# input: " << name << " sha256=" << digest << "\n";
    }
    for (const auto &c : table.columns) out << "# column " << c.name << ": " << c.doc << "\n";
    for (const auto &n : table.notes) out << "# note: " << n << "\n";
    for (std::size_t i = 0; i < table.columns.size(); ++i) {
        out << (i ? "\t" : "") << table.columns[i].name;
    }
    out << "\n";
    for (const auto &row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "\t" : "") << row[i];
        out << "\n";
    }
    return out.str();
}

void write_table(const std::filesystem::path &path, const Table &table,
                 const Provenance &provenance) {
    write_text_file(path, render_table(table, provenance));
}

std::size_t ParsedTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw Error("no column '" + std::string(name) + "'");
}

ParsedTable read_table(const std::filesystem::path &path) {
    std::istringstream in(read_text_file(path));
    ParsedTable t;
    std::string line;
    auto split = [](const std::string &s) {
        std::vector<std::string> out;
        std::size_t start = 0;
        for (;;) {
            const auto tab = s.find('\t', start);
            out.push_back(s.substr(start, tab == std::string::npos ? tab : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        return out;
    };
    bool have_header = false;
    while (std::getline(in, line)) {
        if (line.starts_with("#")) {
            t.comments.push_back(line);
        } else if (!have_header) {
            t.header = split(line);
            have_header = true;
        } else if (!line.empty()) {
            t.rows.push_back(split(line));
        }
    }
    return t;
}

void write_text_file(const std::filesystem::path &path, std::string_view text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace ctxprobe::report
