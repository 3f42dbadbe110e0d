// SPDX-License-Identifier: Apache-2.0
#include "ctxprobe/jsonl.hpp"

#include <fstream>
#include <istream>

#include "ctxprobe/error.hpp"

namespace ctxprobe {

void for_each_jsonl(std::istream &in, const std::function<void(const Json &, std::size_t)> &fn) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        Json record;
        try {
            record = Json::parse(line);
        } catch (const Json::exception &e) {
            throw ParseError(e.what(), line_no);
        }
        try {
            fn(record, line_no);
        } catch (const ValidationError &e) {
            throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
        } catch (const Error &) {
            throw;
        } catch (const Json::exception &e) {
            throw ParseError(e.what(), line_no);
        }
    }
}

void for_each_jsonl(const std::filesystem::path &path,
                    const std::function<void(const Json &, std::size_t)> &fn) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    for_each_jsonl(in, fn);
}

std::ofstream open_output(const std::filesystem::path &path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    return out;
}

void write_jsonl_line(std::ostream &out, const OrderedJson &record) {
    out << record.dump() << '\n';
}

} // namespace ctxprobe
