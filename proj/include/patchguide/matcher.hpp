#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchguide/corpus.hpp"
#include "patchguide/gateway.hpp"
#include "patchguide/pattern_store.hpp"

namespace patchguide {

enum class GuidanceOrigin {
    remote,
    retrieval,
    retrieval_global, // same-CWE pool was empty; drawn from the whole store
};

std::string_view to_string(GuidanceOrigin origin);

struct GuidanceCandidate {
    std::string action;
    std::string key_element;
    double score = 0.0;
    int rank = 0; // 1-based
    GuidanceOrigin origin = GuidanceOrigin::remote;
    std::string source_id; // pattern id for retrieval, empty for remote
};

struct MatchRequest {
    CweLabel cwe;
    std::string vulnerable_source;
    int k = 10;
    int beam_width = 10;
};

/// Throws ConfigError unless 1 <= k <= beam_width.
void validate(const MatchRequest& request);

/// Maximal runs of [A-Za-z0-9_], lowercased.
std::vector<std::string> tokenize_code(std::string_view text);

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

struct ScoredDoc {
    std::string id;
    double score = 0.0;
};

/// Okapi BM25 with idf = ln(1 + (N - df + 0.5) / (df + 0.5)). Every query
/// token occurrence contributes. Sorted by score descending, ties by id.
std::vector<ScoredDoc> bm25_rank(std::string_view query, const std::vector<std::pair<std::string, std::string>>& docs,
                                 const Bm25Params& params = {});

/// Beam-search candidates from the seq2seq endpoint. Unparseable beams are
/// dropped; throws EmptyGuidanceError when none survive.
std::vector<GuidanceCandidate> match_remote(const MatchRequest& request, Gateway& gateway, int max_tokens = 128);

/// Same-CWE patterns ranked by BM25 of their validation text against the
/// vulnerable function. Falls back to the whole store when no pattern shares
/// the CWE. Throws EmptyGuidanceError on an empty store.
std::vector<GuidanceCandidate> match_retrieval(const MatchRequest& request, const PatternStore& store,
                                               const Bm25Params& params = {});

enum class MatchMode { full, action_only, key_only };

struct MatchReport {
    std::size_t n = 0;
    double precision_at_k = 0.0;
    double recall_at_k = 0.0;
    int k = 0;
};

struct InstanceGuidance {
    std::string instance_id;
    std::vector<GuidanceCandidate> candidates;
};

struct GoldPattern {
    std::string instance_id;
    std::string action;
    std::string key_element;
};

/// Collapses whitespace runs to one space and trims.
std::string normalize_spaces(std::string_view s);

/// Recall@k: share of instances with a correct candidate in the top k.
/// Precision@k: mean of (correct in top k) / k. Throws Error when the
/// instance ids of predictions and gold differ.
MatchReport evaluate_matching(const std::vector<InstanceGuidance>& predictions, const std::vector<GoldPattern>& gold,
                              MatchMode mode, int k);

nlohmann::ordered_json guidance_to_record(const InstanceGuidance& guidance);
InstanceGuidance guidance_from_record(const nlohmann::json& record, std::size_t line_no = 0);
std::vector<InstanceGuidance> load_guidance(const std::filesystem::path& path);

} // namespace patchguide
