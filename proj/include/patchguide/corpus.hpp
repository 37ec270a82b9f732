#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchguide/diff.hpp"

namespace patchguide {

enum class Language { c, cpp, java };
enum class Split { train, valid, test };

std::string_view to_string(Language lang);
std::string_view to_string(Split split);
std::optional<Language> parse_language(std::string_view s);
std::optional<Split> parse_split(std::string_view s);

struct CweLabel {
    std::string id;   // "CWE-<digits>"
    std::string name;

    bool operator==(const CweLabel&) const = default;
};

bool is_valid_cwe_id(std::string_view id);

inline constexpr std::string_view kBugStart = "//bug_start";
inline constexpr std::string_view kBugEnd = "//bug_end";
inline constexpr std::string_view kFixStart = "//fix_start";
inline constexpr std::string_view kFixEnd = "//fix_end";

struct VulFixPair {
    std::string pair_id;
    Language language = Language::c;
    std::string vulnerable_source; // with bug markers
    std::string fixed_source;      // with fix markers
    std::string raw_vulnerable;
    std::string raw_fixed;
    CweLabel cwe;
    std::optional<std::string> cve_description;
    Split split = Split::train;
};

struct Issue {
    std::string code;
    std::string message;
};

struct ValidationReport {
    std::string pair_id;
    bool ok = true;
    std::vector<Issue> issues;

    bool has(std::string_view code) const;
};

/// One marked region. `line` is where the region sits in the unmarked text.
struct Region {
    std::size_t line = 0;
    std::vector<std::string> lines;
};

/// Result of scanning text for one kind of start/end marker pair.
struct MarkedText {
    Lines stripped;              // text with those markers removed
    std::vector<Region> regions; // meaningful only when balanced
    bool balanced = true;
    std::string problem;         // why not balanced
};

/// A line is a marker line when, ignoring surrounding whitespace, it reads
/// "//name" or "// name".
bool is_marker_line(std::string_view line, std::string_view marker);
bool is_any_marker_line(std::string_view line);

MarkedText scan_regions(std::string_view text, std::string_view start_marker, std::string_view end_marker);

/// Removes every bug/fix marker line.
std::string strip_markers(std::string_view text);

struct AnnotatedPair {
    std::string vulnerable_source;
    std::string fixed_source;
};

/// Wraps each changed hunk of raw_vulnerable in bug markers and the matching
/// hunk of raw_fixed in fix markers. Throws NoChangeError when the line diff
/// is empty.
AnnotatedPair annotate_bug_regions(std::string_view raw_vulnerable, std::string_view raw_fixed, Language language);

ValidationReport validate_pair(const VulFixPair& pair);

/// Parses one Dataset Record. Throws ParseError tagged with `line_no`.
VulFixPair pair_from_record(const nlohmann::json& record, std::size_t line_no = 0);
/// Dataset Record with pre_annotated=true, so reloading skips annotation.
nlohmann::ordered_json pair_to_record(const VulFixPair& pair);

/// Reads a JSONL dataset in file order. When `expected_language` is set, a
/// record in another language is a ParseError.
std::vector<VulFixPair> load_dataset(const std::filesystem::path& path,
                                     std::optional<Language> expected_language = std::nullopt);

} // namespace patchguide
