#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "patchguide/gateway.hpp"
#include "patchguide/run_config.hpp"

namespace patchguide {

namespace artifacts {
inline constexpr const char* kPairs = "pairs.jsonl";
inline constexpr const char* kIngestManifest = "ingest_manifest.json";
inline constexpr const char* kPatterns = "patterns.jsonl";
inline constexpr const char* kDiscards = "discards.jsonl";
inline constexpr const char* kMergeLog = "merge_log.jsonl";
inline constexpr const char* kActions = "actions.jsonl";
inline constexpr const char* kExtractManifest = "extract_manifest.json";
inline constexpr const char* kGuidance = "guidance.jsonl";
inline constexpr const char* kMatchManifest = "match_manifest.json";
inline constexpr const char* kCandidates = "candidates.jsonl";
inline constexpr const char* kGenerateManifest = "generate_manifest.json";
inline constexpr const char* kEvalReport = "eval_report.json";
inline constexpr const char* kEvalTable = "eval_report.txt";
inline constexpr const char* kComparison = "comparison.txt";
} // namespace artifacts

/// Gateways a stage should use instead of building them from the config.
struct StageGateways {
    std::shared_ptr<Gateway> instruct;
    std::shared_ptr<Gateway> complete;
    std::shared_ptr<Gateway> seq2seq;
};

struct StageOutcome {
    int exit_code = 0;
    std::string summary;
};

/// Each stage reads its inputs from config.out_dir (the dataset for ingest)
/// and writes its artifacts there. Missing inputs and other hard errors throw;
/// per-item failures are counted in the stage manifest.
StageOutcome cmd_ingest(const RunConfig& config);
StageOutcome cmd_extract(const RunConfig& config, const StageGateways& gateways = {});
StageOutcome cmd_match(const RunConfig& config, const StageGateways& gateways = {});
StageOutcome cmd_generate(const RunConfig& config, const StageGateways& gateways = {});
StageOutcome cmd_evaluate(const RunConfig& config);

/// Compares two eval_report.json files and writes the table to `out_dir`.
StageOutcome cmd_report(const std::filesystem::path& base_report, const std::filesystem::path& run_report,
                        const std::filesystem::path& out_dir, const std::string& base_label = "base",
                        const std::string& run_label = "run");

} // namespace patchguide
