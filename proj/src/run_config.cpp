#include "patchguide/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <set>

#include "patchguide/error.hpp"
#include "patchguide/jsonl.hpp"

namespace patchguide {

namespace {

std::string_view trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Strips a trailing '#' comment that is not inside a quoted string.
std::string_view drop_comment(std::string_view line)
{
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '\\' && quoted) {
            ++i;
            continue;
        }
        if (line[i] == '"')
            quoted = !quoted;
        else if (line[i] == '#' && !quoted)
            return line.substr(0, i);
    }
    return line;
}

std::string unquote(std::string_view v, const std::string& where)
{
    if (v.size() < 2 || v.front() != '"' || v.back() != '"')
        return std::string(v);
    std::string out;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
        char c = v[i];
        if (c == '\\') {
            if (i + 2 >= v.size())
                throw ConfigError(where + ": dangling escape");
            const char e = v[++i];
            c = e == 'n' ? '\n' : e == 't' ? '\t' : e;
        }
        out += c;
    }
    return out;
}

const std::set<std::string>& known_keys()
{
    static const std::set<std::string> keys = [] {
        std::set<std::string> k = {
            "seed", "out", "parallelism",
            "dataset.path", "dataset.language", "dataset.include_invalid",
            "extract.splits", "extract.max_attempts", "extract.temperature", "extract.max_tokens",
            "extract.max_diff_chars",
            "match.backend", "match.k", "match.beam_width", "match.split", "match.max_tokens",
            "generate.mode", "generate.guidance_count", "generate.samples", "generate.temperature",
            "generate.temperature_schedule", "generate.max_tokens", "generate.exemplar_budget_chars",
            "evaluate.k", "evaluate.curve",
        };
        for (const char* cap : {"instruct", "complete", "seq2seq"})
            for (const char* field : {"endpoint", "api_key_env", "max_in_flight", "timeout_ms", "retries", "backoff_ms"})
                k.insert(std::string("gateway.") + cap + "." + field);
        return k;
    }();
    return keys;
}

} // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text, const std::string& source)
{
    KeyValueConfig cfg;
    std::string section;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos)
            nl = text.size();
        const auto line = trim(drop_comment(text.substr(pos, nl - pos)));
        pos = nl + 1;
        ++line_no;
        const std::string where = source + ":" + std::to_string(line_no);
        if (line.empty())
            continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(where + ": unterminated section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError(where + ": expected key = value");
        const auto key = std::string(trim(line.substr(0, eq)));
        if (key.empty())
            throw ConfigError(where + ": empty key");
        const auto full = section.empty() ? key : section + "." + key;
        if (cfg.values_.count(full))
            throw ConfigError(where + ": duplicate key '" + full + "'");
        cfg.values_[full] = unquote(trim(line.substr(eq + 1)), where);
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path)
{
    return parse(read_text_file(path), path.string());
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const
{
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const
{
    const auto it = values_.find(key);
    if (it == values_.end())
        return fallback;
    long long v = 0;
    const auto& s = it->second;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw ConfigError("'" + key + "' must be an integer, got '" + s + "'");
    return v;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const
{
    const auto it = values_.find(key);
    if (it == values_.end())
        return fallback;
    try {
        std::size_t used = 0;
        const double v = std::stod(it->second, &used);
        if (used != it->second.size())
            throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("'" + key + "' must be a number, got '" + it->second + "'");
    }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const
{
    const auto it = values_.find(key);
    if (it == values_.end())
        return fallback;
    if (it->second == "true")
        return true;
    if (it->second == "false")
        return false;
    throw ConfigError("'" + key + "' must be true or false, got '" + it->second + "'");
}

std::vector<std::string> KeyValueConfig::get_list(const std::string& key, const std::vector<std::string>& fallback) const
{
    const auto it = values_.find(key);
    if (it == values_.end())
        return fallback;
    std::string_view v = trim(it->second);
    if (v.size() < 2 || v.front() != '[' || v.back() != ']')
        throw ConfigError("'" + key + "' must be a [list]");
    v = v.substr(1, v.size() - 2);
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= v.size()) {
        auto comma = v.find(',', pos);
        if (comma == std::string_view::npos)
            comma = v.size();
        const auto item = trim(v.substr(pos, comma - pos));
        if (!item.empty())
            out.push_back(unquote(item, key));
        pos = comma + 1;
    }
    return out;
}

std::string KeyValueConfig::canonical_text() const
{
    std::string out;
    for (const auto& [k, v] : values_)
        out += k + "=" + v + "\n";
    return out;
}

std::string_view to_string(MatcherBackend backend)
{
    switch (backend) {
    case MatcherBackend::remote: return "remote";
    case MatcherBackend::retrieval: return "retrieval";
    case MatcherBackend::mock: return "mock";
    }
    return "retrieval";
}

std::optional<MatcherBackend> parse_backend(std::string_view s)
{
    if (s == "remote") return MatcherBackend::remote;
    if (s == "retrieval") return MatcherBackend::retrieval;
    if (s == "mock") return MatcherBackend::mock;
    return std::nullopt;
}

namespace {

GatewayConfig gateway_from(const KeyValueConfig& kv, const std::string& cap)
{
    const std::string p = "gateway." + cap + ".";
    GatewayConfig g;
    g.endpoint = kv.get_string(p + "endpoint", "");
    g.api_key_env = kv.get_string(p + "api_key_env", "");
    g.max_in_flight = static_cast<int>(kv.get_int(p + "max_in_flight", g.max_in_flight));
    g.timeout_ms = static_cast<int>(kv.get_int(p + "timeout_ms", g.timeout_ms));
    g.retries = static_cast<int>(kv.get_int(p + "retries", g.retries));
    g.backoff_ms = static_cast<int>(kv.get_int(p + "backoff_ms", g.backoff_ms));
    if (!g.endpoint.empty())
        validate(g);
    return g;
}

void require_file(const std::filesystem::path& path, const std::string& what)
{
    if (!std::filesystem::is_regular_file(path))
        throw ConfigError(what + " '" + path.string() + "' does not exist");
}

} // namespace

RunConfig make_run_config(KeyValueConfig kv, const std::filesystem::path& base_dir, const ConfigOverrides& o)
{
    if (o.seed) kv.set("seed", std::to_string(*o.seed));
    if (o.out) kv.set("out", *o.out);
    if (o.backend) kv.set("match.backend", *o.backend);
    if (o.mode) kv.set("generate.mode", *o.mode);
    if (o.k) kv.set("match.k", std::to_string(*o.k));
    if (o.samples) kv.set("generate.samples", std::to_string(*o.samples));

    for (const auto& [key, _] : kv.values())
        if (!known_keys().count(key))
            throw ConfigError("unknown config key '" + key + "'");

    RunConfig c;
    c.base_dir = base_dir;
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_relative() ? base_dir / path : path;
    };

    const auto dataset = kv.get_string("dataset.path", "");
    if (dataset.empty())
        throw ConfigError("dataset.path is required");
    c.dataset = resolve(dataset);
    require_file(c.dataset, "dataset");
    if (kv.has("dataset.language")) {
        c.language = parse_language(kv.get_string("dataset.language", ""));
        if (!c.language)
            throw ConfigError("dataset.language must be c, cpp or java");
    }
    c.include_invalid = kv.get_bool("dataset.include_invalid", false);
    c.out_dir = resolve(kv.get_string("out", "out"));
    const auto seed = kv.get_int("seed", 0);
    if (seed < 0)
        throw ConfigError("seed must be >= 0");
    c.seed = static_cast<std::uint64_t>(seed);
    c.parallelism = static_cast<int>(kv.get_int("parallelism", 4));
    if (c.parallelism < 1)
        throw ConfigError("parallelism must be >= 1");

    c.instruct = gateway_from(kv, "instruct");
    c.complete = gateway_from(kv, "complete");
    c.seq2seq = gateway_from(kv, "seq2seq");
    for (const GatewayConfig* g : {&c.instruct, &c.complete, &c.seq2seq})
        if (g->endpoint.rfind("mock:", 0) == 0)
            require_file(resolve(g->endpoint.substr(5)), "mock fixture");

    c.extraction.max_attempts = static_cast<int>(kv.get_int("extract.max_attempts", 3));
    if (c.extraction.max_attempts < 1)
        throw ConfigError("extract.max_attempts must be >= 1");
    c.extraction.temperature = kv.get_double("extract.temperature", 0.0);
    c.extraction.max_tokens = static_cast<int>(kv.get_int("extract.max_tokens", 128));
    if (kv.has("extract.max_diff_chars"))
        c.extraction.max_diff_chars = static_cast<std::size_t>(kv.get_int("extract.max_diff_chars", 0));
    c.extract_splits.clear();
    for (const auto& s : kv.get_list("extract.splits", {"train"})) {
        const auto split = parse_split(s);
        if (!split)
            throw ConfigError("extract.splits: unknown split '" + s + "'");
        c.extract_splits.push_back(*split);
    }

    const auto backend = parse_backend(kv.get_string("match.backend", "retrieval"));
    if (!backend)
        throw ConfigError("match.backend must be remote, retrieval or mock");
    c.backend = *backend;
    c.match_k = static_cast<int>(kv.get_int("match.k", 10));
    c.beam_width = static_cast<int>(kv.get_int("match.beam_width", std::max(10, c.match_k)));
    if (c.match_k < 1 || c.match_k > c.beam_width)
        throw ConfigError("match.k must be in [1, match.beam_width]");
    c.match_max_tokens = static_cast<int>(kv.get_int("match.max_tokens", 128));
    const auto target = parse_split(kv.get_string("match.split", "test"));
    if (!target)
        throw ConfigError("match.split must be train, valid or test");
    c.target_split = *target;
    if (c.backend == MatcherBackend::mock && c.seq2seq.endpoint.rfind("mock:", 0) != 0)
        throw ConfigError("match.backend = mock needs a mock: endpoint for gateway.seq2seq");

    const auto mode = parse_prompt_kind(kv.get_string("generate.mode", "guided"));
    if (!mode)
        throw ConfigError("generate.mode must be base, cwe_prefix, few_shot_random, few_shot_rag or guided");
    c.mode = *mode;
    c.plan.guidance_count = static_cast<int>(kv.get_int("generate.guidance_count", c.match_k));
    c.plan.samples_per_guidance = static_cast<int>(kv.get_int("generate.samples", 1));
    c.plan.temperature = kv.get_double("generate.temperature", 1.0);
    c.plan.max_tokens = static_cast<int>(kv.get_int("generate.max_tokens", 1024));
    if (kv.has("generate.temperature_schedule")) {
        c.plan.temperature_schedule.clear();
        for (const auto& t : kv.get_list("generate.temperature_schedule", {})) {
            KeyValueConfig one;
            one.set("t", t);
            c.plan.temperature_schedule.push_back(one.get_double("t", 0.0));
        }
    }
    if (c.plan.guidance_count < 1 || c.plan.samples_per_guidance < 1 || c.plan.temperature_schedule.empty())
        throw ConfigError("generate: guidance_count and samples must be >= 1 and the schedule non-empty");
    c.exemplar_budget_chars = static_cast<std::size_t>(kv.get_int("generate.exemplar_budget_chars", 8000));
    if (c.exemplar_budget_chars == 0)
        throw ConfigError("generate.exemplar_budget_chars must be > 0");

    c.eval_k = static_cast<int>(kv.get_int("evaluate.k", 0));
    if (c.eval_k < 0)
        throw ConfigError("evaluate.k must be >= 0");
    for (const auto& v : kv.get_list("evaluate.curve", {})) {
        KeyValueConfig one;
        one.set("k", v);
        c.eval_curve.push_back(static_cast<int>(one.get_int("k", 1)));
    }

    KeyValueConfig hashed = kv;
    auto values = hashed.values();
    values.erase("out");
    std::string canonical;
    for (const auto& [k, v] : values)
        canonical += k + "=" + v + "\n";
    c.config_hash = hex64(fnv1a64(canonical));
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path, const ConfigOverrides& overrides)
{
    const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    return make_run_config(KeyValueConfig::load(path), base, overrides);
}

} // namespace patchguide
