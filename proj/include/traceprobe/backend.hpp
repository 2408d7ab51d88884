#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "traceprobe/core.hpp"

namespace traceprobe {

struct BackendEndpoint {
    std::string base_url;
    std::string credential_env;  // env var holding the bearer token, empty = none
    double request_timeout_s = 60.0;
    int max_inflight = 4;
    int retry_max_attempts = 5;
    int retry_base_ms = 1000;  // doubled per attempt
};

/// Transport-level failure; the retry loop reissues these.
struct TransportError : std::runtime_error {
    TransportError(const std::string& message, int attempts)
        : std::runtime_error(message + " (after " + std::to_string(attempts) + " attempt(s))"),
          attempts(attempts) {}
    int attempts = 0;
};

/// Misconfiguration or contract breach; never retried.
struct BackendContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TokenCandidate {
    std::string token;
    double logprob = 0.0;
    std::optional<double> exact_prob;  // mock fixtures bypass the exp() path
};

struct CompletionRequest {
    std::string model_id;
    std::string prompt;
    SamplingParams sampling;
    int logprobs = 0;  // top candidates requested at the first position, 0 = none
    std::vector<Letter> choice_set;
    std::string fixture_key;  // mock routing; ignored by HTTP backends
};

struct CompletionResult {
    std::string text;
    std::string stop_reason;  // backend-native: "stop" or "length"
    bool has_logprobs = false;
    std::vector<TokenCandidate> first_token_candidates;
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual CompletionResult complete(const CompletionRequest& request) = 0;
    virtual std::string name() const = 0;
};

/// Completion-style HTTP backend: POST /v1/completions with
/// {model, prompt, max_tokens, temperature, top_p, top_k, logprobs, echo:false};
/// the response must carry per-candidate log-probabilities at the first
/// generated position when logprobs are requested.
std::unique_ptr<Backend> make_http_backend(const BackendEndpoint& endpoint);

/// Scripted offline backend. Rows are matched by explicit key, then by
/// prompt digest ("fnv:<hex>"), then the fallback applies: probes get a
/// uniform distribution over the request's choice set, generations fail.
class MockBackend : public Backend {
public:
    MockBackend(const std::filesystem::path& script_path, uint64_t seed,
                bool uniform_fallback = true);
    MockBackend(const std::vector<json>& rows, uint64_t seed, bool uniform_fallback = true);

    CompletionResult complete(const CompletionRequest& request) override;
    std::string name() const override { return "mock"; }

    static std::string prompt_digest_key(const std::string& prompt);

private:
    void load_rows(const std::vector<json>& rows);
    CompletionResult result_from_row(const json& row) const;

    std::map<std::string, json> rows_;
    uint64_t seed_ = 0;
    bool uniform_fallback_ = true;
};

struct ProbeRequest {
    std::string prompt;
    std::vector<Letter> choice_set;
    int logprob_budget = 0;  // 0 = |choice_set| + default headroom
    std::string fixture_key;
};

constexpr int kLogprobHeadroom = 16;
constexpr size_t kNonChoiceTopKeep = 16;

struct GenerationOutcome {
    std::string raw;
    FinishReason finish_reason = FinishReason::closed;
};

/// One full-trace completion with the model's sampling parameters. Retries
/// transport failures with exponential backoff per the endpoint policy.
GenerationOutcome generate_trace(Backend& backend, const BackendEndpoint& endpoint,
                                 const ModelSpec& model, const std::string& prompt,
                                 const std::string& fixture_key = {});

/// Single-token probe. Log-probabilities are exponentiated as returned; no
/// sampling reweighting is applied. Letters missing from the candidate set
/// get probability 0 and a below_topk flag.
AnswerDistribution probe_distribution(Backend& backend, const BackendEndpoint& endpoint,
                                      const ModelSpec& model, const ProbeRequest& request);

/// Runs fn(0..count) on up to max_inflight threads. Results keep task order;
/// the first captured exception is rethrown after all tasks finish.
void bounded_parallel_for(int max_inflight, size_t count,
                          const std::function<void(size_t)>& fn);

}  // namespace traceprobe
