#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "patchguide/corpus.hpp"
#include "patchguide/extraction.hpp"
#include "patchguide/gateway.hpp"
#include "patchguide/generator.hpp"

namespace patchguide {

/// Flat view of a key/value config file:
///
///   # comment
///   seed = 7
///   [gateway.instruct]
///   endpoint = "mock:fixtures/instruct.jsonl"
///   [generate]
///   temperature_schedule = [0.1, 0.5, 1.0]
///
/// Section headers prefix the keys that follow ("gateway.instruct.endpoint").
/// Values are kept as written, minus string quotes.
class KeyValueConfig {
public:
    static KeyValueConfig parse(std::string_view text, const std::string& source = "<config>");
    static KeyValueConfig load(const std::filesystem::path& path);

    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    bool has(const std::string& key) const { return values_.count(key) > 0; }
    const std::map<std::string, std::string>& values() const noexcept { return values_; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;

    /// "key=value\n" lines in key order.
    std::string canonical_text() const;

private:
    std::map<std::string, std::string> values_;
};

enum class MatcherBackend { remote, retrieval, mock };
std::string_view to_string(MatcherBackend backend);
std::optional<MatcherBackend> parse_backend(std::string_view s);

struct RunConfig {
    std::filesystem::path base_dir; // relative paths resolve here
    std::filesystem::path dataset;
    std::optional<Language> language;
    bool include_invalid = false;
    std::filesystem::path out_dir = "out";
    std::uint64_t seed = 0;
    int parallelism = 4;

    GatewayConfig instruct;
    GatewayConfig complete;
    GatewayConfig seq2seq;

    ExtractionOptions extraction;
    std::vector<Split> extract_splits{Split::train};

    MatcherBackend backend = MatcherBackend::retrieval;
    int match_k = 10;
    int beam_width = 10;
    int match_max_tokens = 128;
    Split target_split = Split::test;

    PromptKind mode = PromptKind::guided;
    SamplingPlan plan;
    std::size_t exemplar_budget_chars = 8000;

    int eval_k = 0; // 0: every candidate counts
    std::vector<int> eval_curve;

    /// FNV-1a over the canonical key/value text, excluding the output dir.
    std::string config_hash;
};

/// Command-line overrides, applied on top of the file before validation.
struct ConfigOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> backend;
    std::optional<std::string> mode;
    std::optional<int> k;
    std::optional<int> samples;
};

/// Parses and validates. Unknown keys, bad values and missing referenced
/// files are ConfigErrors.
RunConfig make_run_config(KeyValueConfig kv, const std::filesystem::path& base_dir, const ConfigOverrides& overrides = {});
RunConfig load_run_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

} // namespace patchguide
