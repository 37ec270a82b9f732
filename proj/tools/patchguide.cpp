// Command-line driver for the repair pipeline. Each subcommand runs one stage.

#include <iostream>

#include <CLI11.hpp>

#include "patchguide/error.hpp"
#include "patchguide/pipeline.hpp"
#include "patchguide/run_config.hpp"

namespace pg = patchguide;

namespace {

enum ExitCode { kOk = 0, kFailed = 1, kBadConfig = 2 };

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Pattern-guided vulnerability repair pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    pg::ConfigOverrides overrides;
    std::uint64_t seed = 0;
    std::string out, backend, mode;
    int k = 0, samples = 0;

    app.add_option("--config", config_path, "Run config file")->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", seed, "Override the config seed");
    auto* out_opt = app.add_option("--out", out, "Override the output directory");
    auto* backend_opt = app.add_option("--backend", backend, "Matcher backend")
                            ->check(CLI::IsMember({"remote", "retrieval", "mock"}));
    auto* mode_opt = app.add_option("--mode", mode, "Prompt mode")
                         ->check(CLI::IsMember({"base", "cwe_prefix", "few_shot_random", "few_shot_rag", "guided"}));
    auto* k_opt = app.add_option("--k", k, "Guidance candidates per pair")->check(CLI::PositiveNumber);
    auto* samples_opt = app.add_option("--samples", samples, "Samples per prompt")->check(CLI::PositiveNumber);

    auto* ingest = app.add_subcommand("ingest", "Load and validate the dataset");
    auto* extract = app.add_subcommand("extract", "Mine repair patterns from training pairs");
    auto* match = app.add_subcommand("match", "Predict guidance for target pairs");
    auto* generate = app.add_subcommand("generate", "Sample candidate patches");
    auto* evaluate = app.add_subcommand("evaluate", "Score candidates by exact match");
    auto* report = app.add_subcommand("report", "Compare two evaluation reports");

    std::string base_report, run_report, base_label = "base", run_label = "run";
    report->add_option("--base", base_report, "Baseline eval_report.json")->required()->check(CLI::ExistingFile);
    report->add_option("--run", run_report, "Compared eval_report.json")->required()->check(CLI::ExistingFile);
    report->add_option("--base-label", base_label, "Column label for the baseline");
    report->add_option("--run-label", run_label, "Column label for the compared run");

    CLI11_PARSE(app, argc, argv);

    if (*seed_opt) overrides.seed = seed;
    if (*out_opt) overrides.out = out;
    if (*backend_opt) overrides.backend = backend;
    if (*mode_opt) overrides.mode = mode;
    if (*k_opt) overrides.k = k;
    if (*samples_opt) overrides.samples = samples;

    try {
        pg::StageOutcome outcome;
        if (report->parsed()) {
            const std::filesystem::path dir = !out.empty() ? std::filesystem::path(out)
                                            : config_path.empty() ? std::filesystem::path(".")
                                                                  : pg::load_run_config(config_path, overrides).out_dir;
            outcome = pg::cmd_report(base_report, run_report, dir, base_label, run_label);
        } else {
            if (config_path.empty())
                throw pg::ConfigError("--config is required");
            const auto config = pg::load_run_config(config_path, overrides);
            if (ingest->parsed())
                outcome = pg::cmd_ingest(config);
            else if (extract->parsed())
                outcome = pg::cmd_extract(config);
            else if (match->parsed())
                outcome = pg::cmd_match(config);
            else if (generate->parsed())
                outcome = pg::cmd_generate(config);
            else if (evaluate->parsed())
                outcome = pg::cmd_evaluate(config);
        }
        std::cout << outcome.summary;
        if (!outcome.summary.empty() && outcome.summary.back() != '\n')
            std::cout << '\n';
        return outcome.exit_code;
    } catch (const pg::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kBadConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailed;
    }
}
