#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchguide/corpus.hpp"
#include "patchguide/extraction.hpp"
#include "patchguide/gateway.hpp"

namespace patchguide {

enum class PromptKind { base, cwe_prefix, few_shot_random, few_shot_rag, guided };

std::string_view to_string(PromptKind kind);
std::optional<PromptKind> parse_prompt_kind(std::string_view s);
inline bool is_few_shot(PromptKind k) { return k == PromptKind::few_shot_random || k == PromptKind::few_shot_rag; }

struct PromptMode {
    PromptKind kind = PromptKind::base;
    std::optional<ParsedPattern> guidance;  // guided only
    std::vector<VulFixPair> exemplars;      // few-shot only
};

/// Throws ConfigError when the payload does not fit the kind.
void validate(const PromptMode& mode);

/// Deterministic prompt text for one pair:
///   base        vulnerable function
///   cwe_prefix  "<CWE id> <name>\n" + vulnerable function
///   few-shot    repair instruction followed by Input/Output exemplars
///   guided      vulnerable function + "\n// action: A\n// key_element: K"
std::string build_repair_prompt(const VulFixPair& pair, const PromptMode& mode);

/// "Input: <marked vulnerable>\nOutput: <marked fixed>"
std::string render_exemplar(const VulFixPair& exemplar);

enum class ExemplarStrategy { random, bm25 };

/// Same-CWE pairs other than `target`, ordered by a seeded shuffle or by BM25
/// similarity of vulnerable code, packed greedily until the next exemplar
/// would exceed `budget_chars`.
std::vector<VulFixPair> select_exemplars(const VulFixPair& target, const std::vector<VulFixPair>& pool,
                                         ExemplarStrategy strategy, std::size_t budget_chars, std::uint64_t seed);

/// 0.1, 0.2, ..., 1.0
std::vector<double> default_temperature_schedule();

struct SamplingPlan {
    int guidance_count = 10;
    int samples_per_guidance = 1; // per temperature in base modes
    double temperature = 1.0;     // guided mode
    std::vector<double> temperature_schedule = default_temperature_schedule();
    int max_tokens = 1024;
};

/// guidance_count * samples (guided) or |schedule| * samples (other modes).
std::size_t plan_budget(const SamplingPlan& plan, bool guided);

struct RepairPrompt {
    std::string text;
    std::optional<ParsedPattern> guidance;
};

struct PatchCandidate {
    std::string pair_id;
    std::string text;
    std::optional<ParsedPattern> guidance;
    double temperature = 0.0;
    int prompt_index = 0;
    int sample_index = 0; // position among all samples requested for the pair

    bool operator==(const PatchCandidate&) const = default;
};

struct PromptFailure {
    int prompt_index = 0;
    double temperature = 0.0;
    std::string message;
};

struct GenerationResult {
    std::vector<PatchCandidate> candidates;
    std::vector<PromptFailure> failures;
    std::size_t requested_samples = 0;
    std::size_t received_samples = 0;
    std::size_t duplicates = 0;
    std::size_t empty_samples = 0;
};

/// Guided prompts (those carrying guidance) get samples_per_guidance
/// completions at plan.temperature; other prompts get samples_per_guidance
/// completions at each scheduled temperature. A failing request is recorded
/// and the rest continue. Candidates are deduplicated on their normalized
/// token sequence.
GenerationResult generate_patches(const VulFixPair& pair, const std::vector<RepairPrompt>& prompts,
                                  const SamplingPlan& plan, Gateway& gateway);

/// Turns a completion into a full candidate function. Fix regions in the
/// completion replace the pair's bug regions in order; a completion without
/// markers is taken as the whole function. Throws MalformedCompletionError on
/// unbalanced markers or a region count that differs from the pair's.
std::string extract_fix_region(std::string_view completion, const VulFixPair& pair);

nlohmann::ordered_json candidate_to_record(const PatchCandidate& candidate);
PatchCandidate candidate_from_record(const nlohmann::json& record, std::size_t line_no = 0);

} // namespace patchguide
