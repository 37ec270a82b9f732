#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace patchguide {

/// Text split into lines on '\n'. A final '\n' is recorded separately so that
/// join(split(text)) == text for every input.
struct Lines {
    std::vector<std::string> lines;
    bool trailing_newline = false;
};

Lines split_lines(std::string_view text);
std::string join_lines(const std::vector<std::string>& lines, bool trailing_newline);
inline std::string join_lines(const Lines& l) { return join_lines(l.lines, l.trailing_newline); }

/// One contiguous block of changes. Positions are 0-based line indexes.
struct Hunk {
    std::size_t old_start = 0;
    std::vector<std::string> deleted;
    std::size_t new_start = 0;
    std::vector<std::string> added;

    bool operator==(const Hunk&) const = default;
};

struct LineDiff {
    std::vector<std::string> old_lines;
    std::vector<std::string> new_lines;
    std::vector<Hunk> hunks;

    bool empty() const noexcept { return hunks.empty(); }
};

struct ChangedLines {
    std::vector<std::string> added;
    std::vector<std::string> deleted;
};

/// LCS line alignment with byte-exact line comparison. Among alignments of
/// maximal length, deletions are placed as early as possible.
LineDiff line_diff(std::string_view old_text, std::string_view new_text);
LineDiff line_diff(const std::vector<std::string>& old_lines, const std::vector<std::string>& new_lines);

/// Replays the hunks of `diff` on `old_lines`.
std::vector<std::string> apply_hunks(const std::vector<std::string>& old_lines, const std::vector<Hunk>& hunks);

ChangedLines collect_changed_lines(const LineDiff& diff);

/// Unified-diff hunks ("@@ -a,b +c,d @@" headers, ' ', '-', '+' prefixes).
/// No "---"/"+++" file header is emitted, so every '+' line is payload.
std::string render_unified(const LineDiff& diff, std::size_t context = 3);

} // namespace patchguide
