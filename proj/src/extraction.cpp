#include "patchguide/extraction.hpp"

#include <algorithm>
#include <exception>
#include <map>
#include <set>
#include <sstream>

#include "patchguide/error.hpp"

namespace patchguide {

namespace {

std::string python_repr(std::string_view s)
{
    const char quote = (s.find('\'') != std::string_view::npos && s.find('"') == std::string_view::npos) ? '"' : '\'';
    std::string out(1, quote);
    for (char c : s) {
        if (c == '\\' || c == quote)
            out += '\\';
        out += c;
    }
    out += quote;
    return out;
}

std::string python_list(const std::vector<std::string>& items)
{
    std::string out = "[";
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i)
            out += ", ";
        out += python_repr(items[i]);
    }
    return out + "]";
}

std::string_view trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string join(const std::vector<std::string>& lines)
{
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i)
            out += '\n';
        out += lines[i];
    }
    return out;
}

} // namespace

std::string build_extraction_prompt(const VulFixPair& pair, const LineDiff& diff, const ActionInventory& inventory,
                                    const ExtractionOptions& options)
{
    if (diff.empty())
        throw NoChangeError("pair " + pair.pair_id + " has an empty diff");

    std::string rendered = render_unified(diff, 3);
    if (!rendered.empty() && rendered.back() == '\n')
        rendered.pop_back();
    if (options.max_diff_chars && rendered.size() > *options.max_diff_chars)
        rendered.resize(*options.max_diff_chars);

    std::string p;
    p += rendered + "\n";
    p += pair.cve_description.value_or("") + "\n";
    p += "You are a security vulnerability repair expert reviewing the patch commit for " + pair.cwe.id + " "
        + pair.cwe.name + ".\n";
    p += "Analyze the patch diff and extract ONE security repair pattern.\n";
    p += "\n";
    p += "Step 1 (Select Action): choose ONE action from: " + python_list(inventory.labels())
        + " that best describes the syntactic edit operator embodying the core security repair principle of this "
          "patch; if none fits, create a new action label in the same style.\n";
    p += "\n";
    p += "Step 2 (Extract Key Element): given the selected action, choose ONE key element from the added lines "
         "(\"+\" lines) that semantically instantiates the action (for Remove Buggy Statement, choose from the "
         "deleted lines (\"-\" lines) instead).\n";
    p += "- It MUST be copied verbatim from the added code and be a short contiguous snippet.\n";
    p += "- Pick the smallest self-contained fragment that best captures the security mechanism/constraint "
         "introduced by the fix; e.g., a guard predicate or a security-critical call.\n";
    p += "- Avoid low-signal noise, e.g., large blocks, logging, comments, and temporary variables, and favor "
         "security-relevant calls/checks/types over incidental implementation details.\n";
    p += "\n";
    p += "Output (STRICT): output EXACTLY ONE line in the form: action:key_element (no extra text).\n";
    p += "\n";
    p += "Example output: {Insert Release Resource:delete}";
    return p;
}

ParsedPattern parse_extraction_output(std::string_view text)
{
    std::string_view line;
    std::size_t non_empty = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos)
            nl = text.size();
        const auto candidate = trim(text.substr(pos, nl - pos));
        if (!candidate.empty()) {
            ++non_empty;
            line = candidate;
        }
        pos = nl + 1;
    }
    if (non_empty != 1)
        throw MalformedOutputError("expected exactly one non-empty line, got " + std::to_string(non_empty));

    if (line.size() >= 2 && line.front() == '{' && line.back() == '}')
        line = trim(line.substr(1, line.size() - 2));
    const auto colon = line.find(':');
    if (colon == std::string_view::npos)
        throw MalformedOutputError("no ':' separator in '" + std::string(line) + "'");
    ParsedPattern out{std::string(trim(line.substr(0, colon))), std::string(trim(line.substr(colon + 1)))};
    if (out.action.empty() || out.key_element.empty())
        throw MalformedOutputError("empty action or key element in '" + std::string(line) + "'");
    return out;
}

std::string format_extraction_output(std::string_view action, std::string_view key_element)
{
    return std::string(action) + ":" + std::string(key_element);
}

SourceSide source_side_for(std::string_view action)
{
    return is_remove_action(action) ? SourceSide::deleted : SourceSide::added;
}

std::string validation_text_for(std::string_view action, const LineDiff& diff)
{
    const auto changed = collect_changed_lines(diff);
    return join(source_side_for(action) == SourceSide::deleted ? changed.deleted : changed.added);
}

bool validate_key_element(std::string_view action, std::string_view key_element, const LineDiff& diff)
{
    if (key_element.empty())
        return false;
    return validation_text_for(action, diff).find(key_element) != std::string::npos;
}

ExtractionResult extract_pattern(const VulFixPair& pair, const LineDiff& diff, const ActionInventory& inventory,
                                 Gateway& gateway, const ExtractionOptions& options)
{
    if (options.max_attempts < 1)
        throw ConfigError("max_attempts must be >= 1");

    ModelRequest request;
    request.capability = Capability::instruct;
    request.prompt = build_extraction_prompt(pair, diff, inventory, options);
    request.temperature = options.temperature;
    request.max_tokens = options.max_tokens;

    ExtractionResult result;
    std::exception_ptr last_transport;
    int transport_failures = 0;
    for (int attempt = 1; attempt <= options.max_attempts; ++attempt) {
        ExtractionAttempt record{attempt, {}, {}};
        try {
            const auto response = gateway.call(request);
            record.output = response.outputs.empty() ? std::string() : response.outputs.front().text;
        } catch (const GatewayError& e) {
            record.failure = std::string("transport: ") + e.what();
            last_transport = std::current_exception();
            ++transport_failures;
            result.attempts.push_back(std::move(record));
            continue;
        }

        ParsedPattern parsed;
        try {
            parsed = parse_extraction_output(record.output);
        } catch (const MalformedOutputError& e) {
            record.failure = std::string("malformed: ") + e.what();
            result.attempts.push_back(std::move(record));
            continue;
        }

        std::string action = parsed.action;
        const RepairAction* known = inventory.find(action);
        if (known)
            action = known->label;
        if (!validate_key_element(action, parsed.key_element, diff)) {
            record.failure = std::string("key element is not a substring of the ")
                + (source_side_for(action) == SourceSide::deleted ? "deleted" : "added") + " lines";
            result.attempts.push_back(std::move(record));
            continue;
        }

        result.attempts.push_back(std::move(record));
        result.novel_action = known == nullptr;
        result.pattern = RepairPattern{"pat:" + pair.pair_id, pair.pair_id, pair.cwe, action, parsed.key_element,
                                       source_side_for(action), validation_text_for(action, diff)};
        return result;
    }
    if (transport_failures == options.max_attempts)
        std::rethrow_exception(last_transport);
    return result;
}

nlohmann::ordered_json merge_entry_to_record(const MergeLogEntry& entry)
{
    nlohmann::ordered_json j;
    j["kind"] = entry.kind == MergeLogEntry::Kind::automatic ? "AUTO" : "REVIEW";
    j["members"] = entry.members;
    j["canonical"] = entry.canonical ? nlohmann::ordered_json(*entry.canonical) : nlohmann::ordered_json(nullptr);
    return j;
}

namespace {

std::set<std::string> token_set(std::string_view normalized)
{
    std::set<std::string> out;
    std::istringstream in{std::string(normalized)};
    std::string word;
    while (in >> word)
        out.insert(word);
    return out;
}

std::string display_form(std::string_view label)
{
    std::istringstream in{std::string(label)};
    std::string word, out;
    while (in >> word)
        out += (out.empty() ? "" : " ") + word;
    return out;
}

} // namespace

CanonicalizationResult canonicalize_actions(const std::vector<std::string>& novel_labels,
                                            const ActionInventory& inventory)
{
    CanonicalizationResult result{inventory, {}};

    // Group raw labels by normalized form, in first-appearance order.
    std::vector<std::pair<std::string, std::vector<std::string>>> groups;
    for (const auto& raw : novel_labels) {
        const auto key = normalize_label(raw);
        if (key.empty())
            continue;
        auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == key; });
        if (it == groups.end()) {
            groups.push_back({key, {}});
            it = std::prev(groups.end());
        }
        if (std::find(it->second.begin(), it->second.end(), raw) == it->second.end())
            it->second.push_back(raw);
    }

    std::vector<std::size_t> deferred;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto& [key, members] = groups[g];
        if (const RepairAction* existing = inventory.find(key)) {
            result.merge_log.push_back({MergeLogEntry::Kind::automatic, members, existing->label});
            continue;
        }
        const auto words = token_set(key);
        const auto same_words = std::find_if(inventory.actions().begin(), inventory.actions().end(),
                                             [&](const RepairAction& a) { return token_set(normalize_label(a.label)) == words; });
        if (same_words != inventory.actions().end()) {
            auto review = members;
            review.push_back(same_words->label);
            result.merge_log.push_back({MergeLogEntry::Kind::review, std::move(review), std::nullopt});
            continue;
        }
        deferred.push_back(g);
    }

    // Novel labels that only differ from each other in word order.
    std::map<std::set<std::string>, std::vector<std::size_t>> by_words;
    for (auto g : deferred)
        by_words[token_set(groups[g].first)].push_back(g);

    bool changed = false;
    std::set<std::set<std::string>> reviewed;
    for (auto g : deferred) {
        const auto words = token_set(groups[g].first);
        const auto& cluster = by_words[words];
        if (cluster.size() > 1) {
            if (reviewed.insert(words).second) {
                std::vector<std::string> members;
                for (auto c : cluster)
                    members.insert(members.end(), groups[c].second.begin(), groups[c].second.end());
                result.merge_log.push_back({MergeLogEntry::Kind::review, std::move(members), std::nullopt});
            }
            continue;
        }
        const auto label = display_form(groups[g].second.front());
        result.inventory.add({label, false, ""});
        result.merge_log.push_back({MergeLogEntry::Kind::automatic, groups[g].second, label});
        changed = true;
    }
    if (changed)
        result.inventory.bump_version();
    return result;
}

} // namespace patchguide
