#include <gtest/gtest.h>

#include "patchguide/error.hpp"
#include "patchguide/jsonl.hpp"
#include "patchguide/pattern_store.hpp"
#include "test_util.hpp"

using namespace patchguide;

namespace {

RepairPattern pattern(std::string pair, std::string cwe, std::string action = "Insert Range Checker",
                      std::string key = "len < max")
{
    RepairPattern p;
    p.pattern_id = "pat:" + pair;
    p.pair_id = std::move(pair);
    p.cwe = {std::move(cwe), "Some Weakness"};
    p.action = std::move(action);
    p.key_element = std::move(key);
    p.source_side = is_remove_action(p.action) ? SourceSide::deleted : SourceSide::added;
    p.validation_text = "if (" + p.key_element + ")\n  return -1;";
    return p;
}

} // namespace

TEST(PatternStore, PutThenGet)
{
    PatternStore s;
    s.put(pattern("a", "CWE-787"));
    ASSERT_TRUE(s.get("pat:a"));
    EXPECT_EQ(*s.get("pat:a"), pattern("a", "CWE-787"));
    EXPECT_EQ(s.get_by_pair("a")->pattern_id, "pat:a");
    EXPECT_FALSE(s.get("pat:zz"));
}

TEST(PatternStore, SecondPutForPairReplaces)
{
    PatternStore s;
    s.put(pattern("a", "CWE-416", "Insert Range Checker", "len < max"));
    s.put(pattern("b", "CWE-416"));
    s.put(pattern("a", "CWE-416", "Insert Null Pointer Checker", "p != NULL"));
    EXPECT_EQ(s.size(), 2u);
    const auto q = s.query_by_cwe("CWE-416");
    ASSERT_EQ(q.size(), 2u);
    EXPECT_EQ(q[0].pair_id, "b");
    EXPECT_EQ(q[1].action, "Insert Null Pointer Checker");
    EXPECT_EQ(s.get_by_pair("a")->key_element, "p != NULL");
}

TEST(PatternStore, Rejections)
{
    PatternStore s;
    auto bad_key = pattern("a", "CWE-1");
    bad_key.key_element = "not there";
    EXPECT_THROW(s.put(bad_key), StoreError);
    auto wrong_side = pattern("a", "CWE-1");
    wrong_side.source_side = SourceSide::deleted;
    EXPECT_THROW(s.put(wrong_side), StoreError);
    auto empty = pattern("a", "CWE-1");
    empty.key_element.clear();
    EXPECT_THROW(s.put(empty), StoreError);
    s.put(pattern("a", "CWE-1"));
    auto clash = pattern("b", "CWE-1");
    clash.pattern_id = "pat:a";
    EXPECT_THROW(s.put(clash), StoreError);
    EXPECT_EQ(s.size(), 1u);
}

TEST(PatternStore, QueryByCwe)
{
    PatternStore s;
    for (const auto& id : {"1", "2", "3"})
        s.put(pattern(std::string("x") + id, "CWE-787"));
    s.put(pattern("y1", "CWE-416"));
    s.put(pattern("y2", "CWE-416"));
    const auto q = s.query_by_cwe("CWE-416");
    ASSERT_EQ(q.size(), 2u);
    EXPECT_EQ(q[0].pair_id, "y1");
    EXPECT_EQ(q[1].pair_id, "y2");
    EXPECT_TRUE(s.query_by_cwe("CWE-20").empty());
}

TEST(PatternStore, StatsConserveCounts)
{
    PatternStore s;
    EXPECT_TRUE(s.stats().empty());
    s.put(pattern("a", "CWE-787"));
    s.put(pattern("b", "CWE-787"));
    s.put(pattern("c", "CWE-416"));
    s.put(pattern("d", "CWE-416", "Remove Buggy Statement", "free(p);"));
    s.put(pattern("e", "CWE-20", "Insert Null Pointer Checker", "p"));
    const auto st = s.stats();
    EXPECT_EQ(st.total, 5u);
    EXPECT_EQ(st.action_histogram.at("Insert Range Checker"), 3u);
    std::size_t sum = 0;
    for (const auto& row : st.per_cwe)
        sum += row.count;
    EXPECT_EQ(sum, st.total);
    ASSERT_EQ(st.per_cwe.size(), 3u);
    EXPECT_EQ(st.per_cwe[0].cwe_id, "CWE-20");
}

TEST(PatternStore, SaveLoadIsByteStable)
{
    testutil::TempDir dir;
    PatternStore s;
    s.put(pattern("a", "CWE-787", "Insert Range Checker", "len < \"max\"\t\\"));
    s.put(pattern("b", "CWE-416", "Remove Buggy Statement", "free(p);"));
    s.put(pattern("c", "CWE-787", "Insert Null Pointer Checker", "ptr\xc3\xa9"));
    s.save(dir / "p.jsonl");
    const auto loaded = PatternStore::load(dir / "p.jsonl");
    EXPECT_EQ(loaded.patterns(), s.patterns());
    loaded.save(dir / "q.jsonl");
    EXPECT_EQ(read_text_file(dir / "p.jsonl"), read_text_file(dir / "q.jsonl"));
    EXPECT_EQ(loaded.query_by_cwe("CWE-787").size(), 2u);
}

TEST(PatternStore, LoadRejectsInvalidRecords)
{
    testutil::TempDir dir;
    auto rec = pattern_to_record(pattern("a", "CWE-1"));
    rec["key_element"] = "nope";
    write_text_file(dir / "bad.jsonl", rec.dump() + "\n");
    try {
        PatternStore::load(dir / "bad.jsonl");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 1u);
    }
}
