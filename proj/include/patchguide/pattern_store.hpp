#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "patchguide/error.hpp"
#include "patchguide/pattern.hpp"

namespace patchguide {

class StoreError : public Error {
public:
    using Error::Error;
};

struct StoreStats {
    struct CweCount {
        std::string cwe_id;
        std::string cwe_name;
        std::size_t count = 0;
    };
    std::size_t total = 0;
    std::vector<CweCount> per_cwe;                  // sorted by cwe_id
    std::map<std::string, std::size_t> action_histogram;

    bool empty() const noexcept { return total == 0; }
};

/// CWE-indexed pattern knowledge base. At most one pattern per pair; a second
/// put for the same pair replaces the first. Single writer, many readers.
class PatternStore {
public:
    /// Rejects (StoreError) a pattern whose key element does not validate
    /// against its own validation_text snapshot, whose source side disagrees
    /// with its action, or whose pattern_id belongs to another pair.
    void put(RepairPattern pattern);

    std::optional<RepairPattern> get(std::string_view pattern_id) const;
    std::optional<RepairPattern> get_by_pair(std::string_view pair_id) const;

    /// Insertion order; empty for unknown CWEs.
    std::vector<RepairPattern> query_by_cwe(std::string_view cwe_id) const;

    const std::vector<RepairPattern>& patterns() const noexcept { return patterns_; }
    std::size_t size() const noexcept { return patterns_.size(); }
    bool empty() const noexcept { return patterns_.empty(); }

    StoreStats stats() const;

    std::string to_jsonl() const;
    void save(const std::filesystem::path& path) const;
    static PatternStore load(const std::filesystem::path& path);

private:
    void reindex();

    std::vector<RepairPattern> patterns_;
    std::map<std::string, std::vector<std::size_t>, std::less<>> by_cwe_;
    std::map<std::string, std::size_t, std::less<>> by_pair_;
    std::map<std::string, std::size_t, std::less<>> by_id_;
};

} // namespace patchguide
