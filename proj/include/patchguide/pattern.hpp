#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchguide/corpus.hpp"

namespace patchguide {

/// Lowercase, trimmed, internal whitespace collapsed to one space. Two action
/// labels are the same action iff their normalized forms are equal.
std::string normalize_label(std::string_view label);

inline constexpr std::string_view kRemoveBuggyStatement = "Remove Buggy Statement";

/// Removal is the one action whose key element comes from deleted lines.
bool is_remove_action(std::string_view label);

struct RepairAction {
    std::string label;
    bool seed = false;
    std::string definition;

    bool operator==(const RepairAction&) const = default;
};

class ActionInventory {
public:
    ActionInventory() = default;

    /// The 18 actions of the repair-action table, in table order. Entries
    /// that were part of the initial option set carry seed=true.
    static ActionInventory standard();

    const std::vector<RepairAction>& actions() const noexcept { return actions_; }
    int version() const noexcept { return version_; }
    std::vector<std::string> labels() const;

    const RepairAction* find(std::string_view label) const;

    /// False (and no change) if the label is already present.
    bool add(RepairAction action);
    void bump_version() noexcept { ++version_; }

    static ActionInventory load(const std::filesystem::path& path);
    std::string to_jsonl() const;

    bool operator==(const ActionInventory&) const = default;

private:
    std::vector<RepairAction> actions_;
    int version_ = 1;
};

enum class SourceSide { added, deleted };
std::string_view to_string(SourceSide side);

struct RepairPattern {
    std::string pattern_id;
    std::string pair_id;
    CweLabel cwe;
    std::string action;
    std::string key_element;
    SourceSide source_side = SourceSide::added;
    /// Newline-joined added (or deleted) lines the key element was checked
    /// against.
    std::string validation_text;

    bool operator==(const RepairPattern&) const = default;
};

nlohmann::ordered_json pattern_to_record(const RepairPattern& pattern);
RepairPattern pattern_from_record(const nlohmann::json& record, std::size_t line_no = 0);

} // namespace patchguide
