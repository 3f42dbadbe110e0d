// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace ctxprobe {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

// Calls `fn(record, line_number)` for every non-blank line. JSON syntax errors
// become ParseError carrying the 1-based line number; exceptions thrown by
// `fn` that are not already ctxprobe errors are rewrapped the same way.
void for_each_jsonl(std::istream &in, const std::function<void(const Json &, std::size_t)> &fn);
void for_each_jsonl(const std::filesystem::path &path,
                    const std::function<void(const Json &, std::size_t)> &fn);

std::ofstream open_output(const std::filesystem::path &path);

// Writes one compact JSON document per line.
void write_jsonl_line(std::ostream &out, const OrderedJson &record);

} // namespace ctxprobe
