#include "traceprobe/backend.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "traceprobe/records.hpp"
#include "traceprobe/util.hpp"

namespace traceprobe {

namespace {

FinishReason map_stop_reason(const std::string& reason) {
    if (reason == "length" || reason == "max_tokens" || reason == "budget_exhausted") {
        return FinishReason::budget_exhausted;
    }
    return FinishReason::closed;
}

template <typename Fn>
CompletionResult with_retries(const BackendEndpoint& endpoint, Fn&& call) {
    int attempt = 0;
    int delay_ms = endpoint.retry_base_ms;
    for (;;) {
        ++attempt;
        try {
            return call();
        } catch (const TransportError& e) {
            if (attempt >= endpoint.retry_max_attempts) {
                throw TransportError(e.what(), attempt);
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
            delay_ms *= 2;
        }
    }
}

class HttpBackend : public Backend {
public:
    explicit HttpBackend(const BackendEndpoint& endpoint) : endpoint_(endpoint) {}

    CompletionResult complete(const CompletionRequest& request) override {
        httplib::Client client(endpoint_.base_url);
        client.set_read_timeout(std::chrono::milliseconds(
            static_cast<int64_t>(endpoint_.request_timeout_s * 1000)));
        client.set_connection_timeout(std::chrono::milliseconds(
            static_cast<int64_t>(endpoint_.request_timeout_s * 1000)));

        httplib::Headers headers;
        if (!endpoint_.credential_env.empty()) {
            const char* token = std::getenv(endpoint_.credential_env.c_str());
            if (token == nullptr) {
                throw BackendContractError("credential env var not set: " +
                                           endpoint_.credential_env);
            }
            headers.emplace("Authorization", std::string("Bearer ") + token);
        }

        json body{{"model", request.model_id},
                  {"prompt", request.prompt},
                  {"max_tokens", request.sampling.max_tokens},
                  {"temperature", request.sampling.temperature},
                  {"top_p", request.sampling.top_p},
                  {"echo", false}};
        if (request.sampling.top_k > 0) body["top_k"] = request.sampling.top_k;
        if (request.logprobs > 0) body["logprobs"] = request.logprobs;

        auto res = client.Post("/v1/completions", headers, body.dump(), "application/json");
        if (!res) {
            throw TransportError("no response from " + endpoint_.base_url, 1);
        }
        if (res->status >= 500) {
            throw TransportError("server error " + std::to_string(res->status), 1);
        }
        if (res->status != 200) {
            throw BackendContractError("backend returned status " + std::to_string(res->status) +
                                       ": " + res->body);
        }

        json payload;
        try {
            payload = json::parse(res->body);
        } catch (const std::exception& e) {
            throw TransportError(std::string("unparseable response body: ") + e.what(), 1);
        }
        const auto& choice = payload.at("choices").at(0);

        CompletionResult result;
        result.text = choice.value("text", "");
        result.stop_reason = choice.value("finish_reason", "stop");
        if (choice.contains("logprobs") && !choice.at("logprobs").is_null()) {
            const auto& lp = choice.at("logprobs");
            if (lp.contains("top_logprobs") && !lp.at("top_logprobs").empty()) {
                result.has_logprobs = true;
                for (const auto& [token, value] : lp.at("top_logprobs").at(0).items()) {
                    result.first_token_candidates.push_back(
                        TokenCandidate{token, value.get<double>(), std::nullopt});
                }
            }
        }
        return result;
    }

    std::string name() const override { return endpoint_.base_url; }

private:
    BackendEndpoint endpoint_;
};

}  // namespace

std::unique_ptr<Backend> make_http_backend(const BackendEndpoint& endpoint) {
    return std::make_unique<HttpBackend>(endpoint);
}

MockBackend::MockBackend(const std::filesystem::path& script_path, uint64_t seed,
                         bool uniform_fallback)
    : seed_(seed), uniform_fallback_(uniform_fallback) {
    std::vector<json> rows;
    try {
        JsonlFile file = read_jsonl(script_path);
        rows = std::move(file.records);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("mock fixture: ") + e.what());
    }
    load_rows(rows);
}

MockBackend::MockBackend(const std::vector<json>& rows, uint64_t seed, bool uniform_fallback)
    : seed_(seed), uniform_fallback_(uniform_fallback) {
    load_rows(rows);
}

void MockBackend::load_rows(const std::vector<json>& rows) {
    for (const auto& row : rows) {
        try {
            rows_[row.at("key").get<std::string>()] = row;
        } catch (const std::exception& e) {
            throw ConfigError(std::string("mock fixture row without key: ") + e.what());
        }
    }
}

std::string MockBackend::prompt_digest_key(const std::string& prompt) {
    return "fnv:" + hex64(fnv1a64(prompt));
}

CompletionResult MockBackend::result_from_row(const json& row) const {
    CompletionResult result;
    result.stop_reason = row.value("stop_reason", "stop");
    if (row.contains("raw")) {
        result.text = row.at("raw").get<std::string>();
        return result;
    }
    result.has_logprobs = true;
    if (row.contains("logits")) {
        // log-softmax; exercises the exponentiation path end to end.
        double max_logit = -HUGE_VAL;
        for (const auto& [token, value] : row.at("logits").items()) {
            (void)token;
            max_logit = std::max(max_logit, value.get<double>());
        }
        double z = 0.0;
        for (const auto& [token, value] : row.at("logits").items()) {
            (void)token;
            z += std::exp(value.get<double>() - max_logit);
        }
        const double log_z = std::log(z) + max_logit;
        for (const auto& [token, value] : row.at("logits").items()) {
            result.first_token_candidates.push_back(
                TokenCandidate{token, value.get<double>() - log_z, std::nullopt});
        }
    } else {
        for (const auto& entry : row.at("candidates")) {
            const auto token = entry.at(0).get<std::string>();
            const double p = entry.at(1).get<double>();
            result.first_token_candidates.push_back(TokenCandidate{token, std::log(p), p});
        }
    }
    if (!result.first_token_candidates.empty()) {
        const auto top = std::max_element(
            result.first_token_candidates.begin(), result.first_token_candidates.end(),
            [](const TokenCandidate& a, const TokenCandidate& b) { return a.logprob < b.logprob; });
        result.text = top->token;
    }
    return result;
}

CompletionResult MockBackend::complete(const CompletionRequest& request) {
    auto it = rows_.end();
    if (!request.fixture_key.empty()) it = rows_.find(request.fixture_key);
    if (it == rows_.end()) it = rows_.find(prompt_digest_key(request.prompt));
    if (it != rows_.end()) return result_from_row(it->second);

    if (request.logprobs > 0 && uniform_fallback_ && !request.choice_set.empty()) {
        CompletionResult result;
        result.has_logprobs = true;
        result.stop_reason = "stop";
        const double p = 1.0 / static_cast<double>(request.choice_set.size());
        for (Letter letter : request.choice_set) {
            result.first_token_candidates.push_back(
                TokenCandidate{std::string(1, letter), std::log(p), p});
        }
        result.text = std::string(1, request.choice_set.front());
        return result;
    }
    throw BackendContractError("mock fixture has no row for key '" + request.fixture_key +
                               "' / " + prompt_digest_key(request.prompt));
}

GenerationOutcome generate_trace(Backend& backend, const BackendEndpoint& endpoint,
                                 const ModelSpec& model, const std::string& prompt,
                                 const std::string& fixture_key) {
    CompletionRequest request;
    request.model_id = model.model_id;
    request.prompt = prompt;
    request.sampling = model.sampling;
    request.fixture_key = fixture_key;
    const CompletionResult result =
        with_retries(endpoint, [&] { return backend.complete(request); });
    return GenerationOutcome{result.text, map_stop_reason(result.stop_reason)};
}

AnswerDistribution probe_distribution(Backend& backend, const BackendEndpoint& endpoint,
                                      const ModelSpec& model, const ProbeRequest& request) {
    if (request.choice_set.empty()) {
        throw BackendContractError("probe request without a choice set");
    }
    CompletionRequest completion;
    completion.model_id = model.model_id;
    completion.prompt = request.prompt;
    completion.sampling = model.sampling;
    completion.sampling.max_tokens = 1;
    completion.logprobs = request.logprob_budget > 0
                              ? request.logprob_budget
                              : static_cast<int>(request.choice_set.size()) + kLogprobHeadroom;
    if (completion.logprobs < static_cast<int>(request.choice_set.size())) {
        throw BackendContractError("logprob budget smaller than the choice set");
    }
    completion.choice_set = request.choice_set;
    completion.fixture_key = request.fixture_key;

    const CompletionResult result =
        with_retries(endpoint, [&] { return backend.complete(completion); });
    if (!result.has_logprobs) {
        throw BackendContractError("backend returned no log-probabilities for probe");
    }

    AnswerDistribution dist;
    double choice_sum = 0.0;
    for (Letter letter : request.choice_set) dist.choice_probs[letter] = 0.0;
    for (const auto& candidate : result.first_token_candidates) {
        const double p =
            candidate.exact_prob ? *candidate.exact_prob : std::exp(candidate.logprob);
        const bool is_choice =
            candidate.token.size() == 1 &&
            std::find(request.choice_set.begin(), request.choice_set.end(),
                      candidate.token[0]) != request.choice_set.end();
        if (is_choice) {
            dist.choice_probs[candidate.token[0]] = p;
        } else {
            dist.non_choice_top.emplace_back(candidate.token, p);
        }
    }
    for (const auto& [letter, p] : dist.choice_probs) {
        choice_sum += p;
        bool seen = false;
        for (const auto& candidate : result.first_token_candidates) {
            if (candidate.token.size() == 1 && candidate.token[0] == letter) {
                seen = true;
                break;
            }
        }
        if (!seen) dist.below_topk.push_back(letter);
    }
    std::stable_sort(dist.non_choice_top.begin(), dist.non_choice_top.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    if (dist.non_choice_top.size() > kNonChoiceTopKeep) {
        dist.non_choice_top.resize(kNonChoiceTopKeep);
    }
    dist.non_choice_mass = std::clamp(1.0 - choice_sum, 0.0, 1.0);
    return dist;
}

void bounded_parallel_for(int max_inflight, size_t count,
                          const std::function<void(size_t)>& fn) {
    if (count == 0) return;
    const int workers = std::max(1, std::min<int>(max_inflight, static_cast<int>(count)));
    if (workers == 1) {
        for (size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        threads.emplace_back([&, w] {
            for (;;) {
                const size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    errors[static_cast<size_t>(w)] = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace traceprobe
