#include "patchguide/generator.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "patchguide/evaluation.hpp"
#include "patchguide/matcher.hpp"

namespace patchguide {

std::string_view to_string(PromptKind kind)
{
    switch (kind) {
    case PromptKind::base: return "base";
    case PromptKind::cwe_prefix: return "cwe_prefix";
    case PromptKind::few_shot_random: return "few_shot_random";
    case PromptKind::few_shot_rag: return "few_shot_rag";
    case PromptKind::guided: return "guided";
    }
    return "base";
}

std::optional<PromptKind> parse_prompt_kind(std::string_view s)
{
    for (auto k : {PromptKind::base, PromptKind::cwe_prefix, PromptKind::few_shot_random, PromptKind::few_shot_rag,
                   PromptKind::guided})
        if (to_string(k) == s)
            return k;
    return std::nullopt;
}

void validate(const PromptMode& mode)
{
    if (mode.kind == PromptKind::guided && !mode.guidance)
        throw ConfigError("guided prompt requires a guidance candidate");
    if (is_few_shot(mode.kind) && mode.exemplars.empty())
        throw ConfigError("few-shot prompt requires at least one exemplar");
}

std::string render_exemplar(const VulFixPair& exemplar)
{
    return "Input: " + exemplar.vulnerable_source + "\nOutput: " + exemplar.fixed_source;
}

std::string build_repair_prompt(const VulFixPair& pair, const PromptMode& mode)
{
    validate(mode);
    switch (mode.kind) {
    case PromptKind::base:
        return pair.vulnerable_source;
    case PromptKind::cwe_prefix:
        return pair.cwe.id + " " + pair.cwe.name + "\n" + pair.vulnerable_source;
    case PromptKind::guided:
        return pair.vulnerable_source + "\n// action: " + mode.guidance->action + "\n// key_element: "
            + mode.guidance->key_element;
    case PromptKind::few_shot_random:
    case PromptKind::few_shot_rag: {
        std::string p = pair.vulnerable_source;
        p += "\n If you are a software engineer tasked with repairing vulnerabilities for " + pair.cwe.id + " "
            + pair.cwe.name
            + ", generate fixed code to substitute each code segment enclosed by // bug_start and // bug_end. You "
              "can delete, update, or insert code inside. Please limit your response to the fixed code of the "
              "vulnerable function exclusively. Here's an example: ";
        for (const auto& ex : mode.exemplars)
            p += "\n" + render_exemplar(ex);
        return p;
    }
    }
    return pair.vulnerable_source;
}

std::vector<VulFixPair> select_exemplars(const VulFixPair& target, const std::vector<VulFixPair>& pool,
                                         ExemplarStrategy strategy, std::size_t budget_chars, std::uint64_t seed)
{
    if (budget_chars == 0)
        throw ConfigError("exemplar budget must be > 0");
    std::vector<const VulFixPair*> candidates;
    for (const auto& p : pool)
        if (p.cwe.id == target.cwe.id && p.pair_id != target.pair_id)
            candidates.push_back(&p);

    if (strategy == ExemplarStrategy::random) {
        // Fisher-Yates over mt19937_64 so the order is identical on every
        // standard library.
        std::mt19937_64 rng(seed);
        for (std::size_t i = candidates.size(); i > 1; --i)
            std::swap(candidates[i - 1], candidates[rng() % i]);
    } else {
        std::vector<std::pair<std::string, std::string>> docs;
        for (const auto* p : candidates)
            docs.emplace_back(p->pair_id, p->raw_vulnerable);
        const auto ranked = bm25_rank(target.raw_vulnerable, docs);
        std::vector<const VulFixPair*> ordered;
        for (const auto& r : ranked)
            ordered.push_back(*std::find_if(candidates.begin(), candidates.end(),
                                            [&](const VulFixPair* p) { return p->pair_id == r.id; }));
        candidates = std::move(ordered);
    }

    std::vector<VulFixPair> out;
    std::size_t used = 0;
    for (const auto* p : candidates) {
        const std::size_t size = render_exemplar(*p).size() + 1; // joined by '\n'
        if (used + size > budget_chars)
            break;
        used += size;
        out.push_back(*p);
    }
    return out;
}

std::vector<double> default_temperature_schedule()
{
    std::vector<double> out;
    for (int i = 1; i <= 10; ++i)
        out.push_back(i / 10.0);
    return out;
}

std::size_t plan_budget(const SamplingPlan& plan, bool guided)
{
    const auto samples = static_cast<std::size_t>(std::max(plan.samples_per_guidance, 0));
    return guided ? static_cast<std::size_t>(std::max(plan.guidance_count, 0)) * samples
                  : plan.temperature_schedule.size() * samples;
}

namespace {

std::string dedup_key(const std::string& text, Language language)
{
    try {
        const auto seq = normalize_code(text, language);
        std::string key = "tok:";
        for (const auto& t : seq.tokens) {
            key += t;
            key += '\x1f';
        }
        return key;
    } catch (const LexError&) {
        return "raw:" + text;
    }
}

} // namespace

GenerationResult generate_patches(const VulFixPair& pair, const std::vector<RepairPrompt>& prompts,
                                  const SamplingPlan& plan, Gateway& gateway)
{
    if (plan.samples_per_guidance < 1)
        throw ConfigError("samples_per_guidance must be >= 1");
    GenerationResult result;
    std::set<std::string> seen;
    int sample_index = 0;

    auto request_samples = [&](int prompt_index, const RepairPrompt& prompt, double temperature) {
        ModelRequest request;
        request.capability = Capability::complete;
        request.prompt = prompt.text;
        request.n = plan.samples_per_guidance;
        request.temperature = temperature;
        request.max_tokens = plan.max_tokens;
        result.requested_samples += static_cast<std::size_t>(request.n);
        const int first_index = sample_index;
        sample_index += request.n;

        ModelResponse response;
        try {
            response = gateway.call(request);
        } catch (const GatewayError& e) {
            result.failures.push_back({prompt_index, temperature, e.what()});
            return;
        }
        for (std::size_t i = 0; i < response.outputs.size(); ++i) {
            ++result.received_samples;
            const auto& text = response.outputs[i].text;
            if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
                ++result.empty_samples;
                continue;
            }
            if (!seen.insert(dedup_key(text, pair.language)).second) {
                ++result.duplicates;
                continue;
            }
            result.candidates.push_back(
                {pair.pair_id, text, prompt.guidance, temperature, prompt_index, first_index + static_cast<int>(i)});
        }
    };

    for (std::size_t p = 0; p < prompts.size(); ++p) {
        const int prompt_index = static_cast<int>(p);
        if (prompts[p].guidance) {
            request_samples(prompt_index, prompts[p], plan.temperature);
        } else {
            for (double t : plan.temperature_schedule)
                request_samples(prompt_index, prompts[p], t);
        }
    }
    return result;
}

std::string extract_fix_region(std::string_view completion, const VulFixPair& pair)
{
    const Lines lines = split_lines(completion);
    const bool has_fix_markers = std::any_of(lines.lines.begin(), lines.lines.end(), [](const std::string& l) {
        return is_marker_line(l, kFixStart) || is_marker_line(l, kFixEnd);
    });
    if (!has_fix_markers)
        return strip_markers(completion);

    const MarkedText fix = scan_regions(completion, kFixStart, kFixEnd);
    if (!fix.balanced)
        throw MalformedCompletionError("completion fix markers: " + fix.problem);
    const MarkedText bug = scan_regions(pair.vulnerable_source, kBugStart, kBugEnd);
    if (!bug.balanced)
        throw MalformedCompletionError("pair " + pair.pair_id + " bug markers: " + bug.problem);
    if (fix.regions.size() != bug.regions.size())
        throw MalformedCompletionError("completion has " + std::to_string(fix.regions.size()) + " fix regions, pair has "
                                       + std::to_string(bug.regions.size()) + " bug regions");

    std::vector<std::string> out;
    std::size_t pos = 0;
    const auto& base = bug.stripped.lines;
    for (std::size_t r = 0; r < bug.regions.size(); ++r) {
        const auto& region = bug.regions[r];
        out.insert(out.end(), base.begin() + static_cast<std::ptrdiff_t>(pos),
                   base.begin() + static_cast<std::ptrdiff_t>(region.line));
        for (const auto& line : fix.regions[r].lines)
            if (!is_any_marker_line(line))
                out.push_back(line);
        pos = region.line + region.lines.size();
    }
    out.insert(out.end(), base.begin() + static_cast<std::ptrdiff_t>(pos), base.end());
    return join_lines(out, bug.stripped.trailing_newline);
}

nlohmann::ordered_json candidate_to_record(const PatchCandidate& c)
{
    nlohmann::ordered_json j;
    j["pair_id"] = c.pair_id;
    j["text"] = c.text;
    if (c.guidance)
        j["guidance"] = {{"action", c.guidance->action}, {"key_element", c.guidance->key_element}};
    else
        j["guidance"] = nullptr;
    j["temperature"] = c.temperature;
    j["prompt_index"] = c.prompt_index;
    j["sample_index"] = c.sample_index;
    return j;
}

PatchCandidate candidate_from_record(const nlohmann::json& r, std::size_t line_no)
{
    try {
        PatchCandidate c;
        c.pair_id = r.at("pair_id").get<std::string>();
        c.text = r.at("text").get<std::string>();
        if (auto it = r.find("guidance"); it != r.end() && it->is_object())
            c.guidance = ParsedPattern{it->at("action").get<std::string>(), it->at("key_element").get<std::string>()};
        c.temperature = r.value("temperature", 0.0);
        c.prompt_index = r.value("prompt_index", 0);
        c.sample_index = r.value("sample_index", 0);
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed candidate record: ") + e.what(), line_no);
    }
}

} // namespace patchguide
