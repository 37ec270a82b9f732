#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchguide/corpus.hpp"

namespace patchguide {

struct TokenSeq {
    std::vector<std::string> tokens;

    bool operator==(const TokenSeq&) const = default;
};

/// Lexes C, C++ or Java source into tokens with comments and whitespace
/// removed. String and character literals stay single, byte-exact tokens;
/// operators use maximal munch for the language. Throws LexError on an
/// unterminated comment or literal.
TokenSeq normalize_code(std::string_view source, Language language);

/// Token-sequence equality. A side that fails to lex never matches.
bool exact_match(std::string_view candidate, std::string_view ground_truth, Language language);

/// True iff one of the first k candidates exact-matches. nullopt entries are
/// candidates that could not be turned into a function; they take a slot but
/// never match.
bool em_at_k(const std::vector<std::optional<std::string>>& candidates, std::string_view ground_truth,
             Language language, int k);
bool em_at_k(const std::vector<std::string>& candidates, std::string_view ground_truth, Language language, int k);

/// Percentage with two decimals, rounded half up, from an exact ratio.
std::string format_rate(std::size_t success, std::size_t total);
/// Difference of two exact rates as "↑x.xx%", "↓x.xx%" or "0.00%".
std::string format_rate_change(std::size_t base_success, std::size_t base_total, std::size_t success,
                               std::size_t total);

struct CweRow {
    std::string cwe_id;
    std::string cwe_name;
    std::size_t success = 0;
    std::size_t total = 0;
    double rate = 0.0; // percent
};

struct EvalReport {
    std::size_t n = 0;
    int k = 1;
    std::size_t em_true = 0;
    double em_percent = 0.0;
    std::vector<CweRow> per_cwe; // total descending, then cwe_id
    std::vector<std::pair<int, double>> em_at_k_curve;
};

using CandidateLists = std::map<std::string, std::vector<std::optional<std::string>>>;

/// EM@k per pair, overall and per CWE. Pairs without results count as
/// failures; a result for an unknown pair id is an Error. `curve_ks` adds
/// EM@k' for each listed k'.
EvalReport evaluate_dataset(const CandidateLists& results, const std::vector<VulFixPair>& pairs, int k,
                            const std::vector<int>& curve_ks = {});

nlohmann::ordered_json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);
/// Aligned columns: CWE ID, Name, Success, Total, Rate.
std::string render_report_table(const EvalReport& report);
/// Two runs side by side with a Rate Change column (run relative to base).
std::string render_comparison_table(const EvalReport& base, const EvalReport& run, std::string_view base_label,
                                    std::string_view run_label);

/// Ratcliff/Obershelp: 2*M / (|a| + |b|) where M is the total size of the
/// recursively found longest common substrings. 1.0 for two empty strings.
double ratcliff_obershelp(std::string_view a, std::string_view b);

struct SimilarityScore {
    std::size_t index = 0; // position in the input list
    double score = 0.0;
};

/// Top `top_n` candidates by raw-text similarity, stable on ties.
std::vector<SimilarityScore> similarity_rank(const std::vector<std::string>& candidates, std::string_view ground_truth,
                                             std::size_t top_n = 5);

/// (p_o - p_e) / (1 - p_e). Throws Error on length mismatch, empty input, or
/// p_e == 1 with disagreement.
double cohens_kappa(const std::vector<std::string>& labels_a, const std::vector<std::string>& labels_b);

} // namespace patchguide
