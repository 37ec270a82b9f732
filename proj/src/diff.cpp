#include "patchguide/diff.hpp"

#include <algorithm>
#include <cstdint>

namespace patchguide {

Lines split_lines(std::string_view text)
{
    Lines out;
    if (text.empty())
        return out;
    std::size_t pos = 0;
    while (true) {
        const auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) {
            out.lines.emplace_back(text.substr(pos));
            break;
        }
        out.lines.emplace_back(text.substr(pos, nl - pos));
        pos = nl + 1;
        if (pos == text.size()) {
            out.trailing_newline = true;
            break;
        }
    }
    return out;
}

std::string join_lines(const std::vector<std::string>& lines, bool trailing_newline)
{
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i)
            out += '\n';
        out += lines[i];
    }
    if (trailing_newline && !lines.empty())
        out += '\n';
    return out;
}

LineDiff line_diff(std::string_view old_text, std::string_view new_text)
{
    return line_diff(split_lines(old_text).lines, split_lines(new_text).lines);
}

LineDiff line_diff(const std::vector<std::string>& a, const std::vector<std::string>& b)
{
    LineDiff diff{a, b, {}};
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    const std::size_t w = m + 1;

    // suffix[i*w + j] = LCS length of a[i..] and b[j..]
    std::vector<std::uint32_t> suffix((n + 1) * w, 0);
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t j = m; j-- > 0;) {
            suffix[i * w + j] = a[i] == b[j]
                ? suffix[(i + 1) * w + j + 1] + 1
                : std::max(suffix[(i + 1) * w + j], suffix[i * w + j + 1]);
        }
    }

    std::size_t i = 0;
    std::size_t j = 0;
    Hunk current;
    bool open = false;
    auto flush = [&] {
        if (open)
            diff.hunks.push_back(std::move(current));
        current = Hunk{};
        open = false;
    };
    auto start = [&] {
        if (!open) {
            current.old_start = i;
            current.new_start = j;
            open = true;
        }
    };

    while (i < n || j < m) {
        const std::uint32_t here = suffix[i * w + j];
        if (i < n && suffix[(i + 1) * w + j] == here) {
            start();
            current.deleted.push_back(a[i++]);
        } else if (i < n && j < m && a[i] == b[j]) {
            flush();
            ++i;
            ++j;
        } else {
            start();
            current.added.push_back(b[j++]);
        }
    }
    flush();
    return diff;
}

std::vector<std::string> apply_hunks(const std::vector<std::string>& old_lines, const std::vector<Hunk>& hunks)
{
    std::vector<std::string> out;
    std::size_t pos = 0;
    for (const auto& h : hunks) {
        out.insert(out.end(), old_lines.begin() + static_cast<std::ptrdiff_t>(pos),
                   old_lines.begin() + static_cast<std::ptrdiff_t>(h.old_start));
        out.insert(out.end(), h.added.begin(), h.added.end());
        pos = h.old_start + h.deleted.size();
    }
    out.insert(out.end(), old_lines.begin() + static_cast<std::ptrdiff_t>(pos), old_lines.end());
    return out;
}

ChangedLines collect_changed_lines(const LineDiff& diff)
{
    ChangedLines out;
    for (const auto& h : diff.hunks) {
        out.added.insert(out.added.end(), h.added.begin(), h.added.end());
        out.deleted.insert(out.deleted.end(), h.deleted.begin(), h.deleted.end());
    }
    return out;
}

namespace {

std::string format_range(std::size_t start, std::size_t length)
{
    if (length == 1)
        return std::to_string(start + 1);
    // An empty range names the line before it.
    return std::to_string(length ? start + 1 : start) + "," + std::to_string(length);
}

} // namespace

std::string render_unified(const LineDiff& diff, std::size_t context)
{
    std::string out;
    const auto& hunks = diff.hunks;
    std::size_t g = 0;
    while (g < hunks.size()) {
        // Group hunks whose surrounding context would touch or overlap.
        std::size_t last = g;
        while (last + 1 < hunks.size()) {
            const auto& prev = hunks[last];
            const std::size_t gap = hunks[last + 1].old_start - (prev.old_start + prev.deleted.size());
            if (gap > 2 * context)
                break;
            ++last;
        }
        const std::size_t lead = std::min(context, hunks[g].old_start);
        const std::size_t old_begin = hunks[g].old_start - lead;
        const std::size_t new_begin = hunks[g].new_start - lead;
        const std::size_t old_tail_start = hunks[last].old_start + hunks[last].deleted.size();
        const std::size_t old_end = std::min(diff.old_lines.size(), old_tail_start + context);
        const std::size_t trail = old_end - old_tail_start;
        const std::size_t new_end = hunks[last].new_start + hunks[last].added.size() + trail;

        out += "@@ -" + format_range(old_begin, old_end - old_begin) + " +"
            + format_range(new_begin, new_end - new_begin) + " @@\n";
        std::size_t pos = old_begin;
        for (std::size_t h = g; h <= last; ++h) {
            for (; pos < hunks[h].old_start; ++pos)
                out += " " + diff.old_lines[pos] + "\n";
            for (const auto& line : hunks[h].deleted)
                out += "-" + line + "\n";
            for (const auto& line : hunks[h].added)
                out += "+" + line + "\n";
            pos = hunks[h].old_start + hunks[h].deleted.size();
        }
        for (; pos < old_end; ++pos)
            out += " " + diff.old_lines[pos] + "\n";
        g = last + 1;
    }
    return out;
}

} // namespace patchguide
