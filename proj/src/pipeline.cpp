#include "patchguide/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "patchguide/corpus.hpp"
#include "patchguide/diff.hpp"
#include "patchguide/error.hpp"
#include "patchguide/evaluation.hpp"
#include "patchguide/extraction.hpp"
#include "patchguide/generator.hpp"
#include "patchguide/jsonl.hpp"
#include "patchguide/matcher.hpp"
#include "patchguide/pattern_store.hpp"

namespace patchguide {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

// Runs fn(i) for i in [0, n) on up to `workers` threads. Callers write into
// slot i of a pre-sized vector, so output order never depends on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn fn)
{
    const auto threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (auto i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure)
                        failure = std::current_exception();
                }
            }
        });
    for (auto& th : pool)
        th.join();
    if (failure)
        std::rethrow_exception(failure);
}

ojson manifest_header(const RunConfig& config, std::string_view stage)
{
    ojson m;
    m["stage"] = stage;
    m["config_hash"] = config.config_hash;
    m["seed"] = config.seed;
    return m;
}

void write_json(const fs::path& path, const ojson& j)
{
    write_text_file(path, j.dump(2) + "\n");
}

void require_input(const fs::path& path)
{
    if (!fs::is_regular_file(path))
        throw IoError("missing input '" + path.filename().string() + "'; run the previous stage first");
}

std::shared_ptr<Gateway> pick(const std::shared_ptr<Gateway>& given, const GatewayConfig& cfg,
                              const RunConfig& config, std::string_view name)
{
    if (given)
        return given;
    if (cfg.endpoint.empty())
        throw ConfigError("gateway." + std::string(name) + ".endpoint is not configured");
    return Gateway::from_config(cfg, config.base_dir);
}

// Ingested pairs that downstream stages may use.
std::vector<VulFixPair> usable_pairs(const RunConfig& config, const std::vector<Split>& splits)
{
    const auto path = config.out_dir / artifacts::kPairs;
    require_input(path);
    std::vector<VulFixPair> out;
    for (auto& p : load_dataset(path)) {
        if (std::find(splits.begin(), splits.end(), p.split) == splits.end())
            continue;
        if (!config.include_invalid && !validate_pair(p).ok)
            continue;
        out.push_back(std::move(p));
    }
    return out;
}

std::string endpoint_id(const Gateway& g)
{
    return g.config().endpoint;
}

} // namespace

StageOutcome cmd_ingest(const RunConfig& config)
{
    const auto pairs = load_dataset(config.dataset, config.language);
    std::set<std::string> seen;
    std::vector<ojson> records;
    auto invalid = ojson::array();
    std::map<std::string, std::size_t> per_split;
    std::size_t valid = 0;
    for (const auto& p : pairs) {
        if (!seen.insert(p.pair_id).second)
            throw ParseError("duplicate pair_id '" + p.pair_id + "'", 0);
        records.push_back(pair_to_record(p));
        const auto report = validate_pair(p);
        if (report.ok) {
            ++valid;
            ++per_split[std::string(to_string(p.split))];
            continue;
        }
        ojson entry;
        entry["pair_id"] = p.pair_id;
        auto issues = ojson::array();
        for (const auto& issue : report.issues)
            issues.push_back({{"code", issue.code}, {"message", issue.message}});
        entry["issues"] = std::move(issues);
        invalid.push_back(std::move(entry));
    }
    write_text_file(config.out_dir / artifacts::kPairs, to_jsonl(records));

    auto m = manifest_header(config, "ingest");
    m["total"] = pairs.size();
    m["valid"] = valid;
    m["invalid"] = pairs.size() - valid;
    m["valid_per_split"] = per_split;
    m["invalid_pairs"] = std::move(invalid);
    write_json(config.out_dir / artifacts::kIngestManifest, m);
    return {0, "ingested " + std::to_string(pairs.size()) + " pairs (" + std::to_string(valid) + " valid)"};
}

StageOutcome cmd_extract(const RunConfig& config, const StageGateways& gateways)
{
    const auto pairs = usable_pairs(config, config.extract_splits);
    auto gateway = pick(gateways.instruct, config.instruct, config, "instruct");
    const auto inventory = ActionInventory::standard();

    struct Slot {
        LineDiff diff;
        ExtractionResult result;
        std::string transport_error;
    };
    std::vector<Slot> slots(pairs.size());
    parallel_for(pairs.size(), config.parallelism, [&](std::size_t i) {
        auto& slot = slots[i];
        slot.diff = line_diff(pairs[i].raw_vulnerable, pairs[i].raw_fixed);
        try {
            slot.result = extract_pattern(pairs[i], slot.diff, inventory, *gateway, config.extraction);
        } catch (const GatewayError& e) {
            slot.transport_error = e.what();
        }
    });

    std::vector<ojson> discards;
    auto discard = [&](std::size_t i, std::string_view reason, const std::string& detail) {
        ojson d;
        d["pair_id"] = pairs[i].pair_id;
        d["reason"] = reason;
        if (!detail.empty())
            d["detail"] = detail;
        auto transcripts = ojson::array();
        for (const auto& a : slots[i].result.attempts)
            transcripts.push_back({{"attempt", a.attempt}, {"output", a.output}, {"failure", a.failure}});
        d["transcripts"] = std::move(transcripts);
        discards.push_back(std::move(d));
    };

    std::vector<std::string> novel;
    for (const auto& slot : slots)
        if (slot.result.pattern && slot.result.novel_action)
            novel.push_back(slot.result.pattern->action);
    const auto canon = canonicalize_actions(novel, inventory);
    std::map<std::string, std::string> rename;
    for (const auto& entry : canon.merge_log)
        if (entry.kind == MergeLogEntry::Kind::automatic && entry.canonical)
            for (const auto& member : entry.members)
                rename[member] = *entry.canonical;

    PatternStore store;
    std::size_t transport_failures = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        auto& slot = slots[i];
        if (!slot.transport_error.empty()) {
            ++transport_failures;
            discard(i, "transport", slot.transport_error);
            continue;
        }
        if (!slot.result.pattern) {
            discard(i, "validation", "");
            continue;
        }
        auto pattern = *slot.result.pattern;
        if (slot.result.novel_action) {
            const auto it = rename.find(pattern.action);
            if (it != rename.end() && it->second != pattern.action) {
                pattern.action = it->second;
                pattern.source_side = source_side_for(pattern.action);
                pattern.validation_text = validation_text_for(pattern.action, slot.diff);
            }
        }
        try {
            store.put(pattern);
        } catch (const StoreError& e) {
            discard(i, "store", e.what());
        }
    }

    std::vector<ojson> merge_log;
    for (const auto& entry : canon.merge_log)
        merge_log.push_back(merge_entry_to_record(entry));

    store.save(config.out_dir / artifacts::kPatterns);
    write_text_file(config.out_dir / artifacts::kDiscards, to_jsonl(discards));
    write_text_file(config.out_dir / artifacts::kMergeLog, to_jsonl(merge_log));
    write_text_file(config.out_dir / artifacts::kActions, canon.inventory.to_jsonl());

    const auto stats = store.stats();
    auto m = manifest_header(config, "extract");
    m["instruct_endpoint"] = endpoint_id(*gateway);
    m["pairs"] = pairs.size();
    m["patterns"] = store.size();
    m["discarded"] = discards.size();
    m["transport_failures"] = transport_failures;
    m["novel_labels"] = novel.size();
    m["inventory_version"] = canon.inventory.version();
    m["action_histogram"] = stats.action_histogram;
    write_json(config.out_dir / artifacts::kExtractManifest, m);
    return {0, "extracted " + std::to_string(store.size()) + " patterns from " + std::to_string(pairs.size()) +
                   " pairs (" + std::to_string(discards.size()) + " discarded)"};
}

StageOutcome cmd_match(const RunConfig& config, const StageGateways& gateways)
{
    const auto pairs = usable_pairs(config, {config.target_split});
    std::optional<PatternStore> store;
    std::shared_ptr<Gateway> gateway;
    if (config.backend == MatcherBackend::retrieval) {
        require_input(config.out_dir / artifacts::kPatterns);
        store = PatternStore::load(config.out_dir / artifacts::kPatterns);
    } else {
        gateway = pick(gateways.seq2seq, config.seq2seq, config, "seq2seq");
    }

    std::vector<InstanceGuidance> results(pairs.size());
    std::vector<std::string> errors(pairs.size());
    parallel_for(pairs.size(), config.parallelism, [&](std::size_t i) {
        results[i].instance_id = pairs[i].pair_id;
        MatchRequest request{pairs[i].cwe, pairs[i].vulnerable_source, config.match_k, config.beam_width};
        try {
            results[i].candidates = store ? match_retrieval(request, *store)
                                          : match_remote(request, *gateway, config.match_max_tokens);
        } catch (const EmptyGuidanceError& e) {
            errors[i] = e.what();
        } catch (const GatewayError& e) {
            errors[i] = e.what();
        }
    });

    std::vector<ojson> records;
    auto failures = ojson::array();
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        records.push_back(guidance_to_record(results[i]));
        if (!errors[i].empty())
            failures.push_back({{"pair_id", pairs[i].pair_id}, {"error", errors[i]}});
    }
    write_text_file(config.out_dir / artifacts::kGuidance, to_jsonl(records));

    auto m = manifest_header(config, "match");
    m["backend"] = to_string(config.backend);
    if (gateway)
        m["seq2seq_endpoint"] = endpoint_id(*gateway);
    m["k"] = config.match_k;
    m["beam_width"] = config.beam_width;
    m["pairs"] = pairs.size();
    m["failures"] = std::move(failures);
    write_json(config.out_dir / artifacts::kMatchManifest, m);
    return {0, "matched " + std::to_string(pairs.size()) + " pairs with " + std::string(to_string(config.backend))};
}

StageOutcome cmd_generate(const RunConfig& config, const StageGateways& gateways)
{
    const auto pairs = usable_pairs(config, {config.target_split});
    auto gateway = pick(gateways.complete, config.complete, config, "complete");
    const bool guided = config.mode == PromptKind::guided;

    std::map<std::string, std::vector<GuidanceCandidate>> guidance;
    if (guided) {
        require_input(config.out_dir / artifacts::kGuidance);
        for (auto& g : load_guidance(config.out_dir / artifacts::kGuidance))
            guidance[g.instance_id] = std::move(g.candidates);
    }
    std::vector<VulFixPair> pool;
    if (is_few_shot(config.mode))
        pool = usable_pairs(config, {Split::train});
    const auto strategy = config.mode == PromptKind::few_shot_rag ? ExemplarStrategy::bm25 : ExemplarStrategy::random;

    std::vector<GenerationResult> results(pairs.size());
    std::vector<std::size_t> prompt_counts(pairs.size());
    std::vector<std::string> skipped(pairs.size());
    parallel_for(pairs.size(), config.parallelism, [&](std::size_t i) {
        const auto& pair = pairs[i];
        std::vector<RepairPrompt> prompts;
        if (guided) {
            const auto it = guidance.find(pair.pair_id);
            if (it != guidance.end()) {
                const auto n = std::min<std::size_t>(it->second.size(), config.plan.guidance_count);
                for (std::size_t g = 0; g < n; ++g) {
                    PromptMode mode{PromptKind::guided, ParsedPattern{it->second[g].action, it->second[g].key_element}, {}};
                    prompts.push_back({build_repair_prompt(pair, mode), mode.guidance});
                }
            }
        } else {
            PromptMode mode{config.mode, std::nullopt, {}};
            if (is_few_shot(config.mode))
                mode.exemplars = select_exemplars(pair, pool, strategy, config.exemplar_budget_chars,
                                                  config.seed ^ fnv1a64(pair.pair_id));
            if (!is_few_shot(config.mode) || !mode.exemplars.empty())
                prompts.push_back({build_repair_prompt(pair, mode), std::nullopt});
        }
        prompt_counts[i] = prompts.size();
        if (prompts.empty())
            skipped[i] = guided ? "no guidance for pair" : "no same-CWE exemplar fits the budget";
        if (!prompts.empty())
            results[i] = generate_patches(pair, prompts, config.plan, *gateway);
    });

    std::vector<ojson> records;
    auto per_pair = ojson::array();
    std::size_t total = 0;
    std::size_t failed_prompts = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& r = results[i];
        for (const auto& c : r.candidates)
            records.push_back(candidate_to_record(c));
        total += r.candidates.size();
        failed_prompts += r.failures.size();
        ojson entry;
        entry["pair_id"] = pairs[i].pair_id;
        entry["prompts"] = prompt_counts[i];
        entry["requested_samples"] = r.requested_samples;
        entry["received_samples"] = r.received_samples;
        entry["candidates"] = r.candidates.size();
        entry["duplicates"] = r.duplicates;
        entry["empty_samples"] = r.empty_samples;
        auto failures = ojson::array();
        for (const auto& f : r.failures)
            failures.push_back({{"prompt_index", f.prompt_index}, {"temperature", f.temperature}, {"error", f.message}});
        if (!skipped[i].empty())
            failures.push_back({{"prompt_index", -1}, {"temperature", 0.0}, {"error", skipped[i]}});
        entry["failures"] = std::move(failures);
        per_pair.push_back(std::move(entry));
    }
    write_text_file(config.out_dir / artifacts::kCandidates, to_jsonl(records));

    auto m = manifest_header(config, "generate");
    m["mode"] = to_string(config.mode);
    ojson plan;
    plan["guidance_count"] = config.plan.guidance_count;
    plan["samples_per_guidance"] = config.plan.samples_per_guidance;
    plan["temperature"] = config.plan.temperature;
    plan["temperature_schedule"] = config.plan.temperature_schedule;
    plan["max_tokens"] = config.plan.max_tokens;
    plan["budget"] = plan_budget(config.plan, guided);
    m["plan"] = std::move(plan);
    if (is_few_shot(config.mode)) {
        m["exemplar_strategy"] = strategy == ExemplarStrategy::bm25 ? "bm25" : "random";
        m["exemplar_budget_chars"] = config.exemplar_budget_chars;
    }
    m["complete_endpoint"] = endpoint_id(*gateway);
    m["pairs"] = per_pair.size();
    m["candidates"] = total;
    m["failed_prompts"] = failed_prompts;
    m["per_pair"] = std::move(per_pair);
    write_json(config.out_dir / artifacts::kGenerateManifest, m);
    return {0, "generated " + std::to_string(total) + " candidates for " + std::to_string(pairs.size()) +
                   " pairs in " + std::string(to_string(config.mode)) + " mode"};
}

StageOutcome cmd_evaluate(const RunConfig& config)
{
    const auto pairs = usable_pairs(config, {config.target_split});
    const auto path = config.out_dir / artifacts::kCandidates;
    require_input(path);

    std::map<std::string, const VulFixPair*> by_id;
    for (const auto& p : pairs)
        by_id[p.pair_id] = &p;
    CandidateLists lists;
    std::size_t malformed = 0;
    std::size_t largest = 1;
    for_each_jsonl(path, [&](const nlohmann::json& record, std::size_t line_no) {
        const auto c = candidate_from_record(record, line_no);
        const auto it = by_id.find(c.pair_id);
        if (it == by_id.end())
            throw ParseError("candidate for unknown pair '" + c.pair_id + "'", line_no);
        auto& list = lists[c.pair_id];
        try {
            list.emplace_back(extract_fix_region(c.text, *it->second));
        } catch (const MalformedCompletionError&) {
            ++malformed;
            list.emplace_back(std::nullopt);
        }
        largest = std::max(largest, list.size());
    });

    const int k = config.eval_k > 0 ? config.eval_k : static_cast<int>(largest);
    const auto report = evaluate_dataset(lists, pairs, k, config.eval_curve);

    auto j = manifest_header(config, "evaluate");
    j["mode"] = to_string(config.mode);
    j["malformed_candidates"] = malformed;
    j["report"] = report_to_json(report);
    write_json(config.out_dir / artifacts::kEvalReport, j);
    const auto table = render_report_table(report);
    write_text_file(config.out_dir / artifacts::kEvalTable, table);
    return {0, table};
}

StageOutcome cmd_report(const fs::path& base_report, const fs::path& run_report, const fs::path& out_dir,
                        const std::string& base_label, const std::string& run_label)
{
    auto load = [](const fs::path& p) {
        require_input(p);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_text_file(p));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(p.filename().string() + ": " + e.what(), 0);
        }
        return report_from_json(j.contains("report") ? j["report"] : j);
    };
    const auto table = render_comparison_table(load(base_report), load(run_report), base_label, run_label);
    write_text_file(out_dir / artifacts::kComparison, table);
    return {0, table};
}

} // namespace patchguide
