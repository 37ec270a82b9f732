#include "patchguide/matcher.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

#include "patchguide/extraction.hpp"
#include "patchguide/jsonl.hpp"

namespace patchguide {

std::string_view to_string(GuidanceOrigin origin)
{
    switch (origin) {
    case GuidanceOrigin::remote: return "remote";
    case GuidanceOrigin::retrieval: return "retrieval";
    case GuidanceOrigin::retrieval_global: return "retrieval_global";
    }
    return "remote";
}

void validate(const MatchRequest& request)
{
    if (request.k < 1 || request.k > request.beam_width)
        throw ConfigError("match request needs 1 <= k <= beam_width (k=" + std::to_string(request.k)
                          + ", beam_width=" + std::to_string(request.beam_width) + ")");
}

std::vector<std::string> tokenize_code(std::string_view text)
{
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) || c == '_') {
            current += static_cast<char>(std::tolower(c));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty())
        tokens.push_back(std::move(current));
    return tokens;
}

std::vector<ScoredDoc> bm25_rank(std::string_view query, const std::vector<std::pair<std::string, std::string>>& docs,
                                 const Bm25Params& params)
{
    const std::size_t n = docs.size();
    std::vector<std::unordered_map<std::string, std::size_t>> tf(n);
    std::vector<std::size_t> length(n, 0);
    std::unordered_map<std::string, std::size_t> df;
    double total_length = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& t : tokenize_code(docs[i].second)) {
            ++tf[i][t];
            ++length[i];
        }
        total_length += static_cast<double>(length[i]);
        for (const auto& [term, count] : tf[i])
            ++df[term];
    }
    const double avgdl = n ? total_length / static_cast<double>(n) : 0.0;
    const auto query_tokens = tokenize_code(query);

    std::vector<ScoredDoc> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        double score = 0.0;
        for (const auto& term : query_tokens) {
            const auto it = tf[i].find(term);
            if (it == tf[i].end())
                continue;
            const auto f = static_cast<double>(it->second);
            const auto d = static_cast<double>(df[term]);
            const double idf = std::log(1.0 + (static_cast<double>(n) - d + 0.5) / (d + 0.5));
            const double norm = params.k1 * (1.0 - params.b + params.b * static_cast<double>(length[i]) / avgdl);
            score += idf * f * (params.k1 + 1.0) / (f + norm);
        }
        out.push_back({docs[i].first, score});
    }
    std::stable_sort(out.begin(), out.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
        if (a.score != b.score)
            return a.score > b.score;
        return a.id < b.id;
    });
    return out;
}

namespace {

void rank_and_truncate(std::vector<GuidanceCandidate>& candidates, int k)
{
    std::set<std::pair<std::string, std::string>> seen;
    std::vector<GuidanceCandidate> unique;
    for (auto& c : candidates) {
        if (!seen.insert({c.action, c.key_element}).second)
            continue;
        unique.push_back(std::move(c));
        if (static_cast<int>(unique.size()) == k)
            break;
    }
    for (std::size_t i = 0; i < unique.size(); ++i)
        unique[i].rank = static_cast<int>(i) + 1;
    candidates = std::move(unique);
}

} // namespace

std::vector<GuidanceCandidate> match_remote(const MatchRequest& request, Gateway& gateway, int max_tokens)
{
    validate(request);
    ModelRequest model_request;
    model_request.capability = Capability::seq2seq;
    model_request.cwe_id = request.cwe.id;
    model_request.cwe_name = request.cwe.name;
    model_request.code = request.vulnerable_source;
    model_request.n = request.beam_width;
    model_request.max_tokens = max_tokens;
    const auto response = gateway.call(model_request);

    std::vector<GuidanceCandidate> candidates;
    for (const auto& beam : response.outputs) {
        try {
            auto parsed = parse_extraction_output(beam.text);
            candidates.push_back({std::move(parsed.action), std::move(parsed.key_element), beam.score.value_or(0.0), 0,
                                  GuidanceOrigin::remote, {}});
        } catch (const MalformedOutputError&) {
        }
    }
    if (candidates.empty())
        throw EmptyGuidanceError("no parseable beam among " + std::to_string(response.outputs.size()) + " outputs");
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const GuidanceCandidate& a, const GuidanceCandidate& b) { return a.score > b.score; });
    rank_and_truncate(candidates, request.k);
    return candidates;
}

std::vector<GuidanceCandidate> match_retrieval(const MatchRequest& request, const PatternStore& store,
                                               const Bm25Params& params)
{
    validate(request);
    if (store.empty())
        throw EmptyGuidanceError("pattern store is empty");

    auto pool = store.query_by_cwe(request.cwe.id);
    GuidanceOrigin origin = GuidanceOrigin::retrieval;
    if (pool.empty()) {
        pool = store.patterns();
        origin = GuidanceOrigin::retrieval_global;
    }

    std::vector<std::pair<std::string, std::string>> docs;
    std::map<std::string, const RepairPattern*> by_id;
    docs.reserve(pool.size());
    for (const auto& p : pool) {
        docs.emplace_back(p.pattern_id, p.validation_text);
        by_id[p.pattern_id] = &p;
    }

    std::vector<GuidanceCandidate> candidates;
    for (const auto& scored : bm25_rank(request.vulnerable_source, docs, params)) {
        const RepairPattern& p = *by_id.at(scored.id);
        candidates.push_back({p.action, p.key_element, scored.score, 0, origin, p.pattern_id});
    }
    rank_and_truncate(candidates, request.k);
    return candidates;
}

std::string normalize_spaces(std::string_view s)
{
    std::string out;
    bool pending = false;
    for (char ch : s) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            pending = !out.empty();
            continue;
        }
        if (pending)
            out += ' ';
        pending = false;
        out += ch;
    }
    return out;
}

MatchReport evaluate_matching(const std::vector<InstanceGuidance>& predictions, const std::vector<GoldPattern>& gold,
                              MatchMode mode, int k)
{
    if (k < 1)
        throw ConfigError("k must be >= 1");
    std::map<std::string, const GoldPattern*> gold_by_id;
    for (const auto& g : gold)
        if (!gold_by_id.emplace(g.instance_id, &g).second)
            throw Error("duplicate gold instance id " + g.instance_id);
    if (gold_by_id.size() != predictions.size())
        throw Error("predictions and gold cover different instances");

    MatchReport report;
    report.n = predictions.size();
    report.k = k;
    double hits = 0.0;
    double precision_sum = 0.0;
    std::set<std::string> seen;
    for (const auto& pred : predictions) {
        const auto it = gold_by_id.find(pred.instance_id);
        if (it == gold_by_id.end() || !seen.insert(pred.instance_id).second)
            throw Error("prediction instance id " + pred.instance_id + " does not align with gold");
        const GoldPattern& g = *it->second;
        const auto gold_action = normalize_spaces(g.action);
        const auto gold_key = normalize_spaces(g.key_element);

        int correct = 0;
        const std::size_t limit = std::min(pred.candidates.size(), static_cast<std::size_t>(k));
        for (std::size_t i = 0; i < limit; ++i) {
            const auto& c = pred.candidates[i];
            const bool action_ok = normalize_spaces(c.action) == gold_action;
            const bool key_ok = normalize_spaces(c.key_element) == gold_key;
            const bool ok = mode == MatchMode::full ? action_ok && key_ok
                : mode == MatchMode::action_only  ? action_ok
                                                  : key_ok;
            correct += ok ? 1 : 0;
        }
        hits += correct > 0 ? 1.0 : 0.0;
        precision_sum += static_cast<double>(correct) / static_cast<double>(k);
    }
    if (report.n) {
        report.recall_at_k = hits / static_cast<double>(report.n);
        report.precision_at_k = precision_sum / static_cast<double>(report.n);
    }
    return report;
}

nlohmann::ordered_json guidance_to_record(const InstanceGuidance& guidance)
{
    nlohmann::ordered_json j;
    j["pair_id"] = guidance.instance_id;
    auto candidates = nlohmann::ordered_json::array();
    for (const auto& c : guidance.candidates) {
        nlohmann::ordered_json cj;
        cj["action"] = c.action;
        cj["key_element"] = c.key_element;
        cj["score"] = c.score;
        cj["origin"] = to_string(c.origin);
        candidates.push_back(std::move(cj));
    }
    j["candidates"] = std::move(candidates);
    return j;
}

InstanceGuidance guidance_from_record(const nlohmann::json& r, std::size_t line_no)
{
    if (!r.is_object() || !r.contains("pair_id") || !r["pair_id"].is_string() || !r.contains("candidates")
        || !r["candidates"].is_array())
        throw ParseError("guidance record needs 'pair_id' and 'candidates'", line_no);
    InstanceGuidance g;
    g.instance_id = r["pair_id"].get<std::string>();
    int rank = 0;
    for (const auto& c : r["candidates"]) {
        if (!c.is_object() || !c.contains("action") || !c.contains("key_element"))
            throw ParseError("guidance candidate needs 'action' and 'key_element'", line_no);
        GuidanceCandidate cand;
        cand.action = c["action"].get<std::string>();
        cand.key_element = c["key_element"].get<std::string>();
        cand.score = c.value("score", 0.0);
        const auto origin = c.value("origin", std::string("remote"));
        cand.origin = origin == "retrieval" ? GuidanceOrigin::retrieval
            : origin == "retrieval_global"  ? GuidanceOrigin::retrieval_global
                                            : GuidanceOrigin::remote;
        cand.rank = ++rank;
        g.candidates.push_back(std::move(cand));
    }
    return g;
}

std::vector<InstanceGuidance> load_guidance(const std::filesystem::path& path)
{
    std::vector<InstanceGuidance> out;
    for_each_jsonl(path, [&](const nlohmann::json& r, std::size_t line_no) {
        out.push_back(guidance_from_record(r, line_no));
    });
    return out;
}

} // namespace patchguide
