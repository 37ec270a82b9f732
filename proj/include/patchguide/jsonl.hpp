#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace patchguide {

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

/// Calls `fn(record, line_no)` for every non-blank line. Malformed JSON is a
/// ParseError carrying the 1-based line number.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const nlohmann::json&, std::size_t)>& fn);

/// One compact JSON document per line, '\n' terminated.
std::string to_jsonl(const std::vector<nlohmann::ordered_json>& records);

std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t value);

} // namespace patchguide
