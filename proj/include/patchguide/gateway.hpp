#pragma once

#include <condition_variable>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchguide/error.hpp"

namespace patchguide {

enum class Capability { instruct, complete, seq2seq };

std::string_view to_string(Capability capability);
std::optional<Capability> parse_capability(std::string_view s);
/// "/v1/instruct", "/v1/complete" or "/v1/seq2seq".
std::string endpoint_path(Capability capability);

struct ModelRequest {
    Capability capability = Capability::instruct;
    std::string prompt;   // instruct, complete
    std::string cwe_id;   // seq2seq
    std::string cwe_name; // seq2seq
    std::string code;     // seq2seq
    int n = 1;            // samples (complete) or beams (seq2seq)
    double temperature = 0.0;
    int max_tokens = 512;
};

struct ModelOutput {
    std::string text;
    std::optional<double> score;
};

struct Usage {
    std::size_t attempts = 0;
    std::size_t prompt_chars = 0;
    std::size_t output_chars = 0;
};

struct ModelResponse {
    std::vector<ModelOutput> outputs;
    Usage usage;
};

/// Wire body for a request, keys in protocol order.
nlohmann::ordered_json request_body(const ModelRequest& request);
/// Parses and checks a wire response body against the request it answers.
ModelResponse parse_response_body(const nlohmann::json& body, const ModelRequest& request);
/// Text the mock's "contains" rules are matched against.
std::string_view request_subject(const ModelRequest& request);
std::uint64_t request_hash(const ModelRequest& request);

class GatewayError : public Error {
public:
    GatewayError(const std::string& what, bool transient) : Error(what), transient_(transient) {}
    bool transient() const noexcept { return transient_; }

private:
    bool transient_;
};

class TimeoutError : public GatewayError {
public:
    explicit TimeoutError(const std::string& what) : GatewayError(what, true) {}
};

class StatusError : public GatewayError {
public:
    StatusError(int status, const std::string& what)
        : GatewayError("HTTP " + std::to_string(status) + ": " + what, status == 429 || status >= 500), status_(status) {}
    int status() const noexcept { return status_; }

private:
    int status_;
};

class FixtureExhaustedError : public GatewayError {
public:
    explicit FixtureExhaustedError(const std::string& what) : GatewayError(what, false) {}
};

class ProtocolError : public GatewayError {
public:
    explicit ProtocolError(const std::string& what) : GatewayError(what, false) {}
};

struct GatewayConfig {
    std::string endpoint;    // http://host:port[/prefix] or mock:<fixture-path>
    std::string api_key_env; // bearer token source; empty for none
    int max_in_flight = 4;
    int timeout_ms = 60000;
    int retries = 2;
    int backoff_ms = 200; // first retry delay, doubled each time
};

/// Throws ConfigError on invariant violations.
void validate(const GatewayConfig& config);

/// One transport attempt. Throws GatewayError subclasses.
class Transport {
public:
    virtual ~Transport() = default;
    virtual ModelResponse send(const ModelRequest& request) = 0;
};

/// Replays a JSONL fixture script. Each line:
///   {"capability": str, "match": {"contains": str}|null, "responses": [...]}
/// The first line whose capability matches and whose `contains` occurs in the
/// request subject answers. Each distinct request (by hash) walks that
/// line's responses from the start; running past the end is an error.
/// A response is a string (one output), a wire response object
/// {"outputs": [...]}, {"error": {"status": int, "message": str}} or
/// {"timeout": true}.
class MockTransport : public Transport {
public:
    explicit MockTransport(const std::filesystem::path& fixture);
    explicit MockTransport(std::vector<nlohmann::json> entries);

    ModelResponse send(const ModelRequest& request) override;

private:
    std::vector<nlohmann::json> entries_;
    std::mutex mutex_;
    std::map<std::pair<std::size_t, std::uint64_t>, std::size_t> cursor_;
};

class HttpTransport : public Transport {
public:
    explicit HttpTransport(GatewayConfig config);
    ModelResponse send(const ModelRequest& request) override;

private:
    GatewayConfig config_;
    std::string host_; // scheme://host:port
    std::string prefix_;
};

/// Adapts a callable; used for rule-based fakes.
class FunctionTransport : public Transport {
public:
    using Fn = std::function<ModelResponse(const ModelRequest&)>;
    explicit FunctionTransport(Fn fn) : fn_(std::move(fn)) {}
    ModelResponse send(const ModelRequest& request) override { return fn_(request); }

private:
    Fn fn_;
};

/// Thread-safe client: bounded in-flight transport calls, retries with
/// exponential backoff on transient errors.
class Gateway {
public:
    Gateway(GatewayConfig config, std::unique_ptr<Transport> transport);

    /// Picks MockTransport for "mock:" endpoints, HttpTransport otherwise.
    /// Relative mock paths resolve against `base_dir`.
    static std::shared_ptr<Gateway> from_config(const GatewayConfig& config,
                                                const std::filesystem::path& base_dir = {});

    ModelResponse call(const ModelRequest& request);

    const GatewayConfig& config() const noexcept { return config_; }
    std::size_t calls() const;
    std::size_t transport_attempts() const;
    std::size_t peak_in_flight() const;

private:
    GatewayConfig config_;
    std::unique_ptr<Transport> transport_;
    mutable std::mutex mutex_;
    std::condition_variable slot_free_;
    std::size_t in_flight_ = 0;
    std::size_t peak_ = 0;
    std::size_t calls_ = 0;
    std::size_t attempts_ = 0;
};

} // namespace patchguide
