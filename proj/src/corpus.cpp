#include "patchguide/corpus.hpp"

#include <algorithm>
#include <fstream>

#include "patchguide/error.hpp"
#include "patchguide/jsonl.hpp"

namespace patchguide {

std::string_view to_string(Language lang)
{
    switch (lang) {
    case Language::c: return "c";
    case Language::cpp: return "cpp";
    case Language::java: return "java";
    }
    return "c";
}

std::string_view to_string(Split split)
{
    switch (split) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
    }
    return "train";
}

std::optional<Language> parse_language(std::string_view s)
{
    if (s == "c") return Language::c;
    if (s == "cpp") return Language::cpp;
    if (s == "java") return Language::java;
    return std::nullopt;
}

std::optional<Split> parse_split(std::string_view s)
{
    if (s == "train") return Split::train;
    if (s == "valid") return Split::valid;
    if (s == "test") return Split::test;
    return std::nullopt;
}

bool is_valid_cwe_id(std::string_view id)
{
    constexpr std::string_view prefix = "CWE-";
    if (id.size() <= prefix.size() || id.substr(0, prefix.size()) != prefix)
        return false;
    return std::all_of(id.begin() + prefix.size(), id.end(), [](char c) { return c >= '0' && c <= '9'; });
}

bool ValidationReport::has(std::string_view code) const
{
    return std::any_of(issues.begin(), issues.end(), [&](const Issue& i) { return i.code == code; });
}

namespace {

std::string_view trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace

bool is_marker_line(std::string_view line, std::string_view marker)
{
    auto t = trim(line);
    if (t.substr(0, 2) != "//")
        return false;
    t.remove_prefix(2);
    while (!t.empty() && t.front() == ' ')
        t.remove_prefix(1);
    return t == marker.substr(2);
}

bool is_any_marker_line(std::string_view line)
{
    return is_marker_line(line, kBugStart) || is_marker_line(line, kBugEnd) || is_marker_line(line, kFixStart)
        || is_marker_line(line, kFixEnd);
}

MarkedText scan_regions(std::string_view text, std::string_view start_marker, std::string_view end_marker)
{
    MarkedText out;
    const Lines lines = split_lines(text);
    out.stripped.trailing_newline = lines.trailing_newline;
    std::optional<Region> open;
    for (const auto& line : lines.lines) {
        if (is_marker_line(line, start_marker)) {
            if (open && out.balanced) {
                out.balanced = false;
                out.problem = "nested " + std::string(start_marker);
            }
            open = Region{out.stripped.lines.size(), {}};
        } else if (is_marker_line(line, end_marker)) {
            if (!open) {
                if (out.balanced) {
                    out.balanced = false;
                    out.problem = std::string(end_marker) + " without matching start";
                }
            } else {
                out.regions.push_back(std::move(*open));
                open.reset();
            }
        } else {
            if (open)
                open->lines.push_back(line);
            out.stripped.lines.push_back(line);
        }
    }
    if (open && out.balanced) {
        out.balanced = false;
        out.problem = "unterminated " + std::string(start_marker);
    }
    return out;
}

std::string strip_markers(std::string_view text)
{
    const Lines lines = split_lines(text);
    std::vector<std::string> kept;
    kept.reserve(lines.lines.size());
    for (const auto& line : lines.lines)
        if (!is_any_marker_line(line))
            kept.push_back(line);
    return join_lines(kept, lines.trailing_newline);
}

AnnotatedPair annotate_bug_regions(std::string_view raw_vulnerable, std::string_view raw_fixed, Language)
{
    // All supported languages accept // line comments, so the markers are
    // the same everywhere.
    const Lines old_lines = split_lines(raw_vulnerable);
    const Lines new_lines = split_lines(raw_fixed);
    const LineDiff diff = line_diff(old_lines.lines, new_lines.lines);
    if (diff.empty())
        throw NoChangeError("vulnerable and fixed functions have no line-level difference");

    auto wrap = [&](const std::vector<std::string>& source, bool old_side) {
        std::vector<std::string> out;
        std::size_t pos = 0;
        const std::string start(old_side ? kBugStart : kFixStart);
        const std::string end(old_side ? kBugEnd : kFixEnd);
        for (const auto& h : diff.hunks) {
            const std::size_t at = old_side ? h.old_start : h.new_start;
            const auto& body = old_side ? h.deleted : h.added;
            out.insert(out.end(), source.begin() + static_cast<std::ptrdiff_t>(pos),
                       source.begin() + static_cast<std::ptrdiff_t>(at));
            out.push_back(start);
            out.insert(out.end(), body.begin(), body.end());
            out.push_back(end);
            pos = at + body.size();
        }
        out.insert(out.end(), source.begin() + static_cast<std::ptrdiff_t>(pos), source.end());
        return out;
    };

    return {join_lines(wrap(old_lines.lines, true), old_lines.trailing_newline),
            join_lines(wrap(new_lines.lines, false), new_lines.trailing_newline)};
}

ValidationReport validate_pair(const VulFixPair& pair)
{
    ValidationReport report;
    report.pair_id = pair.pair_id;
    auto add = [&](std::string code, std::string message) {
        report.issues.push_back({std::move(code), std::move(message)});
    };

    if (pair.pair_id.empty())
        add("EMPTY_PAIR_ID", "pair_id is empty");
    if (!is_valid_cwe_id(pair.cwe.id))
        add("INVALID_CWE_ID", "CWE id '" + pair.cwe.id + "' does not match CWE-<digits>");
    if (pair.cwe.name.empty())
        add("EMPTY_CWE_NAME", "CWE name is empty");
    if (pair.raw_vulnerable.empty() || pair.raw_fixed.empty())
        add("EMPTY_SOURCE", "vulnerable or fixed function is empty");
    if (pair.raw_vulnerable == pair.raw_fixed)
        add("NO_CHANGE", "vulnerable and fixed functions are identical");

    const MarkedText bug = scan_regions(pair.vulnerable_source, kBugStart, kBugEnd);
    const MarkedText fix = scan_regions(pair.fixed_source, kFixStart, kFixEnd);
    if (!bug.balanced)
        add("MARKER_IMBALANCE", "vulnerable_source: " + bug.problem);
    if (!fix.balanced)
        add("MARKER_IMBALANCE", "fixed_source: " + fix.problem);
    if (bug.balanced && fix.balanced && bug.regions.size() != fix.regions.size())
        add("REGION_COUNT_MISMATCH", std::to_string(bug.regions.size()) + " bug regions vs "
                                         + std::to_string(fix.regions.size()) + " fix regions");
    if (strip_markers(pair.vulnerable_source) != pair.raw_vulnerable)
        add("RAW_MISMATCH", "stripping vulnerable_source does not yield raw_vulnerable");
    if (strip_markers(pair.fixed_source) != pair.raw_fixed)
        add("RAW_MISMATCH", "stripping fixed_source does not yield raw_fixed");

    report.ok = report.issues.empty();
    return report;
}

namespace {

std::string require_string(const nlohmann::json& record, const char* key, std::size_t line_no)
{
    const auto it = record.find(key);
    if (it == record.end() || !it->is_string())
        throw ParseError(std::string("field '") + key + "' missing or not a string", line_no);
    return it->get<std::string>();
}

} // namespace

VulFixPair pair_from_record(const nlohmann::json& record, std::size_t line_no)
{
    if (!record.is_object())
        throw ParseError("dataset record is not a JSON object", line_no);

    VulFixPair pair;
    pair.pair_id = require_string(record, "pair_id", line_no);
    const std::string lang = require_string(record, "language", line_no);
    const auto language = parse_language(lang);
    if (!language)
        throw ParseError("unknown language '" + lang + "'", line_no);
    pair.language = *language;
    const std::string split = require_string(record, "split", line_no);
    const auto parsed_split = parse_split(split);
    if (!parsed_split)
        throw ParseError("unknown split '" + split + "'", line_no);
    pair.split = *parsed_split;
    pair.cwe.id = require_string(record, "cwe_id", line_no);
    pair.cwe.name = require_string(record, "cwe_name", line_no);
    if (auto it = record.find("cve_description"); it != record.end() && it->is_string())
        pair.cve_description = it->get<std::string>();

    const std::string vulnerable = require_string(record, "vulnerable", line_no);
    const std::string fixed = require_string(record, "fixed", line_no);
    const bool pre_annotated = record.value("pre_annotated", false);
    if (pre_annotated) {
        pair.vulnerable_source = vulnerable;
        pair.fixed_source = fixed;
        pair.raw_vulnerable = strip_markers(vulnerable);
        pair.raw_fixed = strip_markers(fixed);
    } else {
        pair.raw_vulnerable = vulnerable;
        pair.raw_fixed = fixed;
        try {
            auto annotated = annotate_bug_regions(vulnerable, fixed, pair.language);
            pair.vulnerable_source = std::move(annotated.vulnerable_source);
            pair.fixed_source = std::move(annotated.fixed_source);
        } catch (const NoChangeError&) {
            // Kept unmarked; validate_pair reports NO_CHANGE.
            pair.vulnerable_source = vulnerable;
            pair.fixed_source = fixed;
        }
    }
    return pair;
}

nlohmann::ordered_json pair_to_record(const VulFixPair& pair)
{
    nlohmann::ordered_json j;
    j["pair_id"] = pair.pair_id;
    j["language"] = to_string(pair.language);
    j["vulnerable"] = pair.vulnerable_source;
    j["fixed"] = pair.fixed_source;
    j["cwe_id"] = pair.cwe.id;
    j["cwe_name"] = pair.cwe.name;
    j["cve_description"] = pair.cve_description ? nlohmann::ordered_json(*pair.cve_description) : nlohmann::ordered_json(nullptr);
    j["split"] = to_string(pair.split);
    j["pre_annotated"] = true;
    return j;
}

std::vector<VulFixPair> load_dataset(const std::filesystem::path& path, std::optional<Language> expected_language)
{
    std::vector<VulFixPair> pairs;
    for_each_jsonl(path, [&](const nlohmann::json& record, std::size_t line_no) {
        auto pair = pair_from_record(record, line_no);
        if (expected_language && pair.language != *expected_language)
            throw ParseError("record language '" + std::string(to_string(pair.language)) + "' differs from expected '"
                                 + std::string(to_string(*expected_language)) + "'",
                             line_no);
        pairs.push_back(std::move(pair));
    });
    return pairs;
}

} // namespace patchguide
