#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "patchguide/corpus.hpp"
#include "patchguide/diff.hpp"
#include "patchguide/gateway.hpp"
#include "patchguide/pattern.hpp"

namespace patchguide {

struct ExtractionOptions {
    int max_attempts = 3;
    double temperature = 0.0;
    int max_tokens = 128;
    /// Truncate the rendered diff to this many bytes; unset means no limit.
    std::optional<std::size_t> max_diff_chars;
};

/// Instruction prompt asking for one `action:key_element` line.
/// Throws NoChangeError when `diff` is empty.
std::string build_extraction_prompt(const VulFixPair& pair, const LineDiff& diff, const ActionInventory& inventory,
                                    const ExtractionOptions& options = {});

struct ParsedPattern {
    std::string action;
    std::string key_element;

    bool operator==(const ParsedPattern&) const = default;
};

/// Accepts exactly one non-empty line, optionally wrapped in one pair of
/// braces, split on the first ':'. Throws MalformedOutputError otherwise.
ParsedPattern parse_extraction_output(std::string_view text);
std::string format_extraction_output(std::string_view action, std::string_view key_element);

SourceSide source_side_for(std::string_view action);
/// Newline-joined lines from the side of `diff` that `action` draws from.
std::string validation_text_for(std::string_view action, const LineDiff& diff);

/// Key element must be a non-empty byte-exact substring of the joined added
/// lines, or deleted lines for the removal action.
bool validate_key_element(std::string_view action, std::string_view key_element, const LineDiff& diff);

struct ExtractionAttempt {
    int attempt = 0;
    std::string output;
    std::string failure; // empty when the attempt produced the pattern
};

struct ExtractionResult {
    std::optional<RepairPattern> pattern;
    bool novel_action = false;
    std::vector<ExtractionAttempt> attempts;

    bool discarded() const noexcept { return !pattern.has_value(); }
};

/// prompt -> instruct call -> parse -> validate, up to max_attempts times.
/// Labels outside the inventory are accepted and flagged as novel. When every
/// attempt failed in the transport, the last GatewayError is rethrown.
ExtractionResult extract_pattern(const VulFixPair& pair, const LineDiff& diff, const ActionInventory& inventory,
                                 Gateway& gateway, const ExtractionOptions& options = {});

struct MergeLogEntry {
    enum class Kind { automatic, review };
    Kind kind = Kind::automatic;
    std::vector<std::string> members;
    std::optional<std::string> canonical;

    bool operator==(const MergeLogEntry&) const = default;
};

nlohmann::ordered_json merge_entry_to_record(const MergeLogEntry& entry);

struct CanonicalizationResult {
    ActionInventory inventory;
    std::vector<MergeLogEntry> merge_log;
};

/// Folds novel labels into the inventory. Labels equal after normalization
/// merge automatically; labels whose word sets coincide with an existing or
/// another novel label only in order go to review; the rest are appended as
/// non-seed actions. The version is bumped iff an action was appended.
CanonicalizationResult canonicalize_actions(const std::vector<std::string>& novel_labels,
                                            const ActionInventory& inventory);

} // namespace patchguide
