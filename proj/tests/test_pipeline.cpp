#include <gtest/gtest.h>

#include "patchguide/error.hpp"
#include "patchguide/jsonl.hpp"
#include "patchguide/pipeline.hpp"
#include "test_util.hpp"

using namespace patchguide;
using nlohmann::json;

namespace {

RunConfig fixture_config(const std::filesystem::path& out, ConfigOverrides o = {})
{
    o.out = out.string();
    return load_run_config(testutil::fixture("pipeline.toml"), o);
}

std::vector<json> read_jsonl(const std::filesystem::path& p)
{
    std::vector<json> out;
    for_each_jsonl(p, [&](const json& j, std::size_t) { out.push_back(j); });
    return out;
}

void run_all(const RunConfig& c)
{
    ASSERT_EQ(cmd_ingest(c).exit_code, 0);
    ASSERT_EQ(cmd_extract(c).exit_code, 0);
    ASSERT_EQ(cmd_match(c).exit_code, 0);
    ASSERT_EQ(cmd_generate(c).exit_code, 0);
    ASSERT_EQ(cmd_evaluate(c).exit_code, 0);
}

} // namespace

TEST(Pipeline, FixtureRun)
{
    testutil::TempDir dir;
    const auto c = fixture_config(dir.path());
    run_all(c);

    const auto ingest = json::parse(read_text_file(dir / artifacts::kIngestManifest));
    EXPECT_EQ(ingest["total"], 6);
    EXPECT_EQ(ingest["valid"], 6);
    EXPECT_EQ(ingest["config_hash"], c.config_hash);
    EXPECT_EQ(ingest["seed"], 7);

    const auto discards = read_jsonl(dir / artifacts::kDiscards);
    ASSERT_EQ(discards.size(), 1u);
    EXPECT_EQ(discards[0]["pair_id"], "tr3");
    EXPECT_EQ(discards[0]["transcripts"].size(), 3u);

    const auto patterns = read_jsonl(dir / artifacts::kPatterns);
    ASSERT_EQ(patterns.size(), 2u);
    EXPECT_EQ(patterns[0]["key_element"], "== NULL");
    EXPECT_EQ(patterns[1]["action"], "Nullify Freed Pointer");

    const auto merges = read_jsonl(dir / artifacts::kMergeLog);
    ASSERT_EQ(merges.size(), 1u);
    EXPECT_EQ(merges[0]["kind"], "AUTO");
    EXPECT_EQ(read_jsonl(dir / artifacts::kActions).size(), 19u);

    const auto guidance = read_jsonl(dir / artifacts::kGuidance);
    ASSERT_EQ(guidance.size(), 3u);
    EXPECT_EQ(guidance[0]["candidates"][0]["key_element"], "== NULL");
    EXPECT_EQ(guidance[2]["candidates"][0]["origin"], "retrieval_global");

    const auto report = json::parse(read_text_file(dir / artifacts::kEvalReport));
    EXPECT_EQ(report["report"]["n"], 3);
    EXPECT_EQ(report["report"]["em_true"], 1);
    EXPECT_EQ(report["mode"], "guided");
}

TEST(Pipeline, RerunIsByteIdentical)
{
    testutil::TempDir a, b;
    run_all(fixture_config(a.path()));
    run_all(fixture_config(b.path()));
    std::size_t files = 0;
    for (const auto& entry : std::filesystem::directory_iterator(a.path())) {
        const auto name = entry.path().filename().string();
        EXPECT_EQ(read_text_file(entry.path()), read_text_file(b / name)) << name;
        ++files;
    }
    EXPECT_EQ(files, 13u);
}

TEST(Pipeline, MockMatcherAndBaseMode)
{
    testutil::TempDir dir;
    ConfigOverrides o;
    o.backend = "mock";
    auto c = fixture_config(dir.path(), o);
    run_all(c);
    const auto guidance = read_jsonl(dir / artifacts::kGuidance);
    ASSERT_EQ(guidance[0]["candidates"].size(), 2u);
    EXPECT_EQ(guidance[0]["candidates"][0]["origin"], "remote");

    ConfigOverrides base = o;
    base.mode = "base";
    c = fixture_config(dir.path(), base);
    ASSERT_EQ(cmd_generate(c).exit_code, 0);
    const auto manifest = json::parse(read_text_file(dir / artifacts::kGenerateManifest));
    EXPECT_EQ(manifest["mode"], "base");
    EXPECT_EQ(manifest["plan"]["budget"], 10);
    EXPECT_EQ(manifest["per_pair"][0]["requested_samples"], 10);
}

TEST(Pipeline, ReportComparesRuns)
{
    testutil::TempDir guided, base;
    run_all(fixture_config(guided.path()));
    ConfigOverrides o;
    o.mode = "base";
    const auto c = fixture_config(base.path(), o);
    run_all(c);
    const auto out = cmd_report(base / artifacts::kEvalReport, guided / artifacts::kEvalReport, base.path(), "base",
                                "guided");
    EXPECT_NE(out.summary.find("Rate Change"), std::string::npos);
    EXPECT_NE(out.summary.find("↑"), std::string::npos);
    EXPECT_TRUE(std::filesystem::exists(base / artifacts::kComparison));
}

TEST(Pipeline, MissingInputsAreHardErrors)
{
    testutil::TempDir dir;
    const auto c = fixture_config(dir.path());
    EXPECT_THROW(cmd_extract(c), IoError);
    ASSERT_EQ(cmd_ingest(c).exit_code, 0);
    EXPECT_THROW(cmd_generate(c), IoError);
    EXPECT_THROW(cmd_evaluate(c), IoError);
}
