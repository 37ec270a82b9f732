#include "patchguide/gateway.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "patchguide/jsonl.hpp"

namespace patchguide {

std::string_view to_string(Capability capability)
{
    switch (capability) {
    case Capability::instruct: return "instruct";
    case Capability::complete: return "complete";
    case Capability::seq2seq: return "seq2seq";
    }
    return "instruct";
}

std::optional<Capability> parse_capability(std::string_view s)
{
    if (s == "instruct") return Capability::instruct;
    if (s == "complete") return Capability::complete;
    if (s == "seq2seq") return Capability::seq2seq;
    return std::nullopt;
}

std::string endpoint_path(Capability capability)
{
    return "/v1/" + std::string(to_string(capability));
}

nlohmann::ordered_json request_body(const ModelRequest& r)
{
    nlohmann::ordered_json j;
    switch (r.capability) {
    case Capability::instruct:
        j["prompt"] = r.prompt;
        j["temperature"] = r.temperature;
        j["max_tokens"] = r.max_tokens;
        break;
    case Capability::complete:
        j["prompt"] = r.prompt;
        j["n"] = r.n;
        j["temperature"] = r.temperature;
        j["max_tokens"] = r.max_tokens;
        break;
    case Capability::seq2seq:
        j["cwe_id"] = r.cwe_id;
        j["cwe_name"] = r.cwe_name;
        j["code"] = r.code;
        j["beams"] = r.n;
        j["max_tokens"] = r.max_tokens;
        break;
    }
    return j;
}

std::string_view request_subject(const ModelRequest& request)
{
    return request.capability == Capability::seq2seq ? std::string_view(request.code) : std::string_view(request.prompt);
}

std::uint64_t request_hash(const ModelRequest& request)
{
    return fnv1a64(std::string(to_string(request.capability)) + "\n" + request_body(request).dump());
}

namespace {

std::size_t expected_outputs(const ModelRequest& r)
{
    return r.capability == Capability::instruct ? 1 : static_cast<std::size_t>(std::max(r.n, 0));
}

} // namespace

ModelResponse parse_response_body(const nlohmann::json& body, const ModelRequest& request)
{
    if (!body.is_object() || !body.contains("outputs") || !body["outputs"].is_array())
        throw ProtocolError("response lacks an 'outputs' array");
    ModelResponse response;
    for (const auto& o : body["outputs"]) {
        if (!o.is_object() || !o.contains("text") || !o["text"].is_string())
            throw ProtocolError("output without string 'text'");
        ModelOutput out{o["text"].get<std::string>(), std::nullopt};
        if (auto it = o.find("score"); it != o.end() && it->is_number())
            out.score = it->get<double>();
        response.usage.output_chars += out.text.size();
        response.outputs.push_back(std::move(out));
    }
    if (response.outputs.size() > expected_outputs(request))
        throw ProtocolError("response carries " + std::to_string(response.outputs.size()) + " outputs, at most "
                            + std::to_string(expected_outputs(request)) + " requested");
    if (request.capability == Capability::seq2seq) {
        for (std::size_t i = 0; i < response.outputs.size(); ++i) {
            if (!response.outputs[i].score)
                throw ProtocolError("seq2seq output without score");
            if (i && *response.outputs[i].score > *response.outputs[i - 1].score)
                throw ProtocolError("seq2seq outputs not sorted by score");
        }
    }
    response.usage.prompt_chars = request_subject(request).size();
    return response;
}

void validate(const GatewayConfig& config)
{
    if (config.endpoint.empty())
        throw ConfigError("gateway endpoint is empty");
    if (config.max_in_flight < 1)
        throw ConfigError("gateway max_in_flight must be >= 1");
    if (config.retries < 0)
        throw ConfigError("gateway retries must be >= 0");
    if (config.timeout_ms < 1)
        throw ConfigError("gateway timeout_ms must be >= 1");
    if (config.backoff_ms < 0)
        throw ConfigError("gateway backoff_ms must be >= 0");
}

// ---------------------------------------------------------------- mock

MockTransport::MockTransport(const std::filesystem::path& fixture)
{
    for_each_jsonl(fixture, [&](const nlohmann::json& entry, std::size_t line_no) {
        if (!entry.is_object() || !entry.contains("capability") || !entry["capability"].is_string()
            || !parse_capability(entry["capability"].get<std::string>()))
            throw ParseError(fixture.string() + ": fixture entry needs a known 'capability'", line_no);
        if (!entry.contains("responses") || !entry["responses"].is_array())
            throw ParseError(fixture.string() + ": fixture entry needs a 'responses' array", line_no);
        entries_.push_back(entry);
    });
}

MockTransport::MockTransport(std::vector<nlohmann::json> entries) : entries_(std::move(entries)) {}

ModelResponse MockTransport::send(const ModelRequest& request)
{
    const auto subject = request_subject(request);
    const auto capability = to_string(request.capability);
    std::size_t index = entries_.size();
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& e = entries_[i];
        if (e["capability"].get<std::string>() != capability)
            continue;
        const auto match = e.find("match");
        if (match != e.end() && match->is_object()) {
            const std::string needle = match->value("contains", "");
            if (subject.find(needle) == std::string_view::npos)
                continue;
        }
        index = i;
        break;
    }
    if (index == entries_.size())
        throw FixtureExhaustedError("no fixture entry answers this " + std::string(capability) + " request");

    std::size_t call_index = 0;
    {
        std::lock_guard lock(mutex_);
        call_index = cursor_[{index, request_hash(request)}]++;
    }
    const auto& responses = entries_[index]["responses"];
    if (call_index >= responses.size())
        throw FixtureExhaustedError("fixture entry " + std::to_string(index + 1) + " exhausted after "
                                    + std::to_string(responses.size()) + " responses");

    const auto& scripted = responses[call_index];
    nlohmann::json body;
    if (scripted.is_string()) {
        body = {{"outputs", nlohmann::json::array({{{"text", scripted}}})}};
    } else if (scripted.is_object() && scripted.contains("error")) {
        const auto& err = scripted["error"];
        throw StatusError(err.value("status", 500), err.value("message", std::string("scripted error")));
    } else if (scripted.is_object() && scripted.value("timeout", false)) {
        throw TimeoutError("scripted timeout");
    } else {
        body = scripted;
    }

    if (!body.is_object() || !body.contains("outputs") || !body["outputs"].is_array())
        throw ProtocolError("fixture response lacks an 'outputs' array");
    auto& outputs = body["outputs"];
    if (request.capability == Capability::seq2seq) {
        for (const auto& o : outputs)
            if (!o.contains("score") || !o["score"].is_number())
                throw ProtocolError("seq2seq fixture output without score");
        std::stable_sort(outputs.begin(), outputs.end(), [](const nlohmann::json& a, const nlohmann::json& b) {
            return a["score"].get<double>() > b["score"].get<double>();
        });
    }
    const std::size_t limit = expected_outputs(request);
    if (outputs.size() > limit)
        outputs.erase(outputs.begin() + static_cast<std::ptrdiff_t>(limit), outputs.end());
    return parse_response_body(body, request);
}

// ---------------------------------------------------------------- http

HttpTransport::HttpTransport(GatewayConfig config) : config_(std::move(config))
{
    const auto& url = config_.endpoint;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw ConfigError("endpoint '" + url + "' is not a URL");
    const auto path_start = url.find('/', scheme_end + 3);
    host_ = url.substr(0, path_start);
    if (path_start != std::string::npos) {
        prefix_ = url.substr(path_start);
        while (!prefix_.empty() && prefix_.back() == '/')
            prefix_.pop_back();
    }
}

ModelResponse HttpTransport::send(const ModelRequest& request)
{
    httplib::Client client(host_);
    const auto seconds = config_.timeout_ms / 1000;
    const auto micros = (config_.timeout_ms % 1000) * 1000;
    client.set_connection_timeout(seconds, micros);
    client.set_read_timeout(seconds, micros);
    client.set_write_timeout(seconds, micros);

    httplib::Headers headers;
    if (!config_.api_key_env.empty()) {
        if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key)
            headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    const auto res = client.Post(prefix_ + endpoint_path(request.capability), headers, request_body(request).dump(),
                                 "application/json");
    if (!res) {
        const auto err = res.error();
        if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read || err == httplib::Error::Write)
            throw TimeoutError("transport timeout or I/O failure: " + httplib::to_string(err));
        throw GatewayError("transport failure: " + httplib::to_string(err), true);
    }
    if (res->status != 200)
        throw StatusError(res->status, res->body.substr(0, 200));
    nlohmann::json body;
    try {
        body = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
        throw ProtocolError(std::string("response is not JSON: ") + e.what());
    }
    return parse_response_body(body, request);
}

// ---------------------------------------------------------------- client

Gateway::Gateway(GatewayConfig config, std::unique_ptr<Transport> transport)
    : config_(std::move(config)), transport_(std::move(transport))
{
    validate(config_);
}

std::shared_ptr<Gateway> Gateway::from_config(const GatewayConfig& config, const std::filesystem::path& base_dir)
{
    validate(config);
    constexpr std::string_view mock_prefix = "mock:";
    if (config.endpoint.rfind(mock_prefix, 0) == 0) {
        std::filesystem::path fixture = config.endpoint.substr(mock_prefix.size());
        if (fixture.is_relative() && !base_dir.empty())
            fixture = base_dir / fixture;
        return std::make_shared<Gateway>(config, std::make_unique<MockTransport>(fixture));
    }
    return std::make_shared<Gateway>(config, std::make_unique<HttpTransport>(config));
}

ModelResponse Gateway::call(const ModelRequest& request)
{
    {
        std::unique_lock lock(mutex_);
        slot_free_.wait(lock, [&] { return in_flight_ < static_cast<std::size_t>(config_.max_in_flight); });
        ++in_flight_;
        ++calls_;
        peak_ = std::max(peak_, in_flight_);
    }
    struct Release {
        Gateway& g;
        ~Release()
        {
            {
                std::lock_guard lock(g.mutex_);
                --g.in_flight_;
            }
            g.slot_free_.notify_one();
        }
    } release{*this};

    for (int attempt = 0;; ++attempt) {
        {
            std::lock_guard lock(mutex_);
            ++attempts_;
        }
        try {
            auto response = transport_->send(request);
            response.usage.attempts = static_cast<std::size_t>(attempt) + 1;
            return response;
        } catch (const GatewayError& e) {
            if (!e.transient() || attempt >= config_.retries)
                throw;
        }
        const auto delay = std::chrono::milliseconds(static_cast<long long>(config_.backoff_ms) << attempt);
        std::this_thread::sleep_for(delay);
    }
}

std::size_t Gateway::calls() const
{
    std::lock_guard lock(mutex_);
    return calls_;
}

std::size_t Gateway::transport_attempts() const
{
    std::lock_guard lock(mutex_);
    return attempts_;
}

std::size_t Gateway::peak_in_flight() const
{
    std::lock_guard lock(mutex_);
    return peak_;
}

} // namespace patchguide
