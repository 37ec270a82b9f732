#include "patchguide/pattern_store.hpp"

#include "patchguide/jsonl.hpp"

namespace patchguide {

void PatternStore::put(RepairPattern pattern)
{
    if (pattern.key_element.empty())
        throw StoreError("pattern " + pattern.pattern_id + ": empty key element");
    if (pattern.validation_text.find(pattern.key_element) == std::string::npos)
        throw StoreError("pattern " + pattern.pattern_id + ": key element is not a substring of its validation text");
    const auto expected_side = is_remove_action(pattern.action) ? SourceSide::deleted : SourceSide::added;
    if (pattern.source_side != expected_side)
        throw StoreError("pattern " + pattern.pattern_id + ": source_side '" + std::string(to_string(pattern.source_side))
                         + "' does not fit action '" + pattern.action + "'");
    if (auto it = by_id_.find(pattern.pattern_id);
        it != by_id_.end() && patterns_[it->second].pair_id != pattern.pair_id)
        throw StoreError("pattern id " + pattern.pattern_id + " already used by pair " + patterns_[it->second].pair_id);

    if (auto it = by_pair_.find(pattern.pair_id); it != by_pair_.end()) {
        patterns_.erase(patterns_.begin() + static_cast<std::ptrdiff_t>(it->second));
        patterns_.push_back(std::move(pattern));
        reindex();
        return;
    }
    const std::size_t index = patterns_.size();
    by_cwe_[pattern.cwe.id].push_back(index);
    by_pair_[pattern.pair_id] = index;
    by_id_[pattern.pattern_id] = index;
    patterns_.push_back(std::move(pattern));
}

void PatternStore::reindex()
{
    by_cwe_.clear();
    by_pair_.clear();
    by_id_.clear();
    for (std::size_t i = 0; i < patterns_.size(); ++i) {
        by_cwe_[patterns_[i].cwe.id].push_back(i);
        by_pair_[patterns_[i].pair_id] = i;
        by_id_[patterns_[i].pattern_id] = i;
    }
}

std::optional<RepairPattern> PatternStore::get(std::string_view pattern_id) const
{
    if (auto it = by_id_.find(pattern_id); it != by_id_.end())
        return patterns_[it->second];
    return std::nullopt;
}

std::optional<RepairPattern> PatternStore::get_by_pair(std::string_view pair_id) const
{
    if (auto it = by_pair_.find(pair_id); it != by_pair_.end())
        return patterns_[it->second];
    return std::nullopt;
}

std::vector<RepairPattern> PatternStore::query_by_cwe(std::string_view cwe_id) const
{
    std::vector<RepairPattern> out;
    if (auto it = by_cwe_.find(cwe_id); it != by_cwe_.end())
        for (auto i : it->second)
            out.push_back(patterns_[i]);
    return out;
}

StoreStats PatternStore::stats() const
{
    StoreStats s;
    s.total = patterns_.size();
    for (const auto& [cwe, indexes] : by_cwe_)
        s.per_cwe.push_back({cwe, patterns_[indexes.front()].cwe.name, indexes.size()});
    for (const auto& p : patterns_)
        ++s.action_histogram[p.action];
    return s;
}

std::string PatternStore::to_jsonl() const
{
    std::vector<nlohmann::ordered_json> records;
    records.reserve(patterns_.size());
    for (const auto& p : patterns_)
        records.push_back(pattern_to_record(p));
    return patchguide::to_jsonl(records);
}

void PatternStore::save(const std::filesystem::path& path) const
{
    write_text_file(path, to_jsonl());
}

PatternStore PatternStore::load(const std::filesystem::path& path)
{
    PatternStore store;
    for_each_jsonl(path, [&](const nlohmann::json& r, std::size_t line_no) {
        try {
            store.put(pattern_from_record(r, line_no));
        } catch (const StoreError& e) {
            throw ParseError(path.string() + ": " + e.what(), line_no);
        }
    });
    return store;
}

} // namespace patchguide
