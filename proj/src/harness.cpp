#include "traceprobe/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <iostream>
#include <mutex>
#include <set>

#include "traceprobe/stats.hpp"
#include "traceprobe/util.hpp"

namespace traceprobe {

SamplingParams default_sampling(Family family) {
    if (family == Family::think_tag) return SamplingParams{0.6, 0.95, 20, 28000};
    return SamplingParams{1.0, 1.0, 50, 126000};
}

const ModelSpec& RunConfig::model(const std::string& model_id) const {
    for (const auto& m : models) {
        if (m.model_id == model_id) return m;
    }
    throw ConfigError("unknown model_id: " + model_id);
}

std::filesystem::path RunConfig::resolve(const std::string& path) const {
    std::filesystem::path p(path);
    if (p.is_absolute()) return p;
    return base_dir / p;
}

namespace {

std::vector<int> parse_decile_list(const json& j) {
    auto deciles = j.get<std::vector<int>>();
    for (int d : deciles) {
        if (!is_valid_decile(d)) {
            throw ConfigError("decile outside the grid: " + std::to_string(d));
        }
    }
    std::sort(deciles.begin(), deciles.end());
    deciles.erase(std::unique(deciles.begin(), deciles.end()), deciles.end());
    return deciles;
}

ModelSpec model_from_json(const json& j) {
    ModelSpec model;
    model.model_id = j.at("model_id").get<std::string>();
    model.family = family_from_string(j.at("family").get<std::string>());
    model.context_length = j.at("context_length").get<int>();
    model.sampling = default_sampling(model.family);
    if (j.contains("sampling")) {
        const auto& s = j.at("sampling");
        model.sampling.temperature = s.value("temperature", model.sampling.temperature);
        model.sampling.top_p = s.value("top_p", model.sampling.top_p);
        model.sampling.top_k = s.value("top_k", model.sampling.top_k);
        model.sampling.max_tokens = s.value("max_tokens", model.sampling.max_tokens);
    }
    model.trace_max_tokens = j.value("trace_max_tokens", model.sampling.max_tokens);
    model.tokenizer_path = j.at("tokenizer").get<std::string>();

    if (model.sampling.temperature < 0.0) throw ConfigError("temperature must be >= 0");
    if (!(model.sampling.top_p > 0.0 && model.sampling.top_p <= 1.0)) {
        throw ConfigError("top_p must be in (0, 1]");
    }
    if (model.trace_max_tokens + kReservedPromptTokens > model.context_length) {
        throw ConfigError(model.model_id + ": trace_max_tokens " +
                          std::to_string(model.trace_max_tokens) + " + reserved prompt budget " +
                          std::to_string(kReservedPromptTokens) + " exceeds context length " +
                          std::to_string(model.context_length));
    }
    return model;
}

json model_to_json(const ModelSpec& model) {
    return json{{"model_id", model.model_id},
                {"family", to_string(model.family)},
                {"context_length", model.context_length},
                {"trace_max_tokens", model.trace_max_tokens},
                {"tokenizer", model.tokenizer_path},
                {"sampling", json{{"temperature", model.sampling.temperature},
                                  {"top_p", model.sampling.top_p},
                                  {"top_k", model.sampling.top_k},
                                  {"max_tokens", model.sampling.max_tokens}}}};
}

}  // namespace

RunConfig load_run_config(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path.string()));
    } catch (const std::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }

    RunConfig config;
    config.base_dir = std::filesystem::absolute(path).parent_path();
    try {
        const auto& dataset = j.at("dataset");
        config.dataset_path = dataset.at("path").get<std::string>();
        if (dataset.contains("format")) {
            const auto fmt = dataset.at("format").get<std::string>();
            if (fmt == "jsonl") config.dataset_format = DatasetFormat::jsonl;
            else if (fmt == "csv") config.dataset_format = DatasetFormat::csv;
            else if (fmt != "auto") throw ConfigError("unknown dataset format: " + fmt);
        }
        for (const auto& m : j.at("models")) config.models.push_back(model_from_json(m));
        if (config.models.empty()) throw ConfigError("config lists no models");
        if (j.contains("deciles")) config.deciles = parse_decile_list(j.at("deciles"));
        if (j.contains("conditions")) {
            config.conditions.clear();
            for (const auto& c : j.at("conditions")) {
                config.conditions.push_back(condition_from_string(c.get<std::string>()));
            }
        }
        if (j.contains("suffix")) {
            config.suffix = suffix_kind_from_string(j.at("suffix").get<std::string>());
        }
        if (j.contains("run_seeds")) {
            config.run_seeds = j.at("run_seeds").get<std::vector<uint64_t>>();
        } else if (j.contains("runs")) {
            config.run_seeds.clear();
            for (int r = 1; r <= j.at("runs").get<int>(); ++r) {
                config.run_seeds.push_back(static_cast<uint64_t>(r));
            }
        }
        if (config.run_seeds.empty()) throw ConfigError("no run seeds configured");
        if (j.contains("backend")) {
            const auto& b = j.at("backend");
            config.backend.base_url = b.value("base_url", "");
            config.backend.credential_env = b.value("credential_env", "");
            config.backend.request_timeout_s = b.value("request_timeout_s", 60.0);
            config.backend.max_inflight = b.value("max_inflight", 4);
            config.backend.retry_max_attempts = b.value("retry_max_attempts", 5);
            config.backend.retry_base_ms = b.value("retry_base_ms", 1000);
            if (config.backend.max_inflight < 1) throw ConfigError("max_inflight must be >= 1");
        }
        config.mock_fixture = j.value("mock_fixture", "");
        config.mock_seed = j.value("mock_seed", 0);
        config.output_dir = j.value("output_dir", "outputs");
        config.run_id = j.value("run_id", "");
        if (j.contains("prompt")) {
            const auto& p = j.at("prompt");
            config.prompt_base.current_date = p.value("date", config.prompt_base.current_date);
            config.prompt_base.knowledge_cutoff =
                p.value("knowledge_cutoff", config.prompt_base.knowledge_cutoff);
            config.prompt_base.reasoning_effort =
                p.value("reasoning_effort", config.prompt_base.reasoning_effort);
        }
        if (j.contains("transfer")) {
            const auto& t = j.at("transfer");
            for (const auto& pair : t.at("pairs")) {
                config.transfer_pairs.push_back(
                    TransferPairConfig{pair.at("source").get<std::string>(),
                                       pair.at("target").get<std::string>()});
            }
            if (t.contains("deciles")) config.transfer_deciles = parse_decile_list(t.at("deciles"));
            if (t.contains("modes")) {
                config.transfer_modes.clear();
                for (const auto& m : t.at("modes")) {
                    config.transfer_modes.push_back(
                        transfer_mode_from_string(m.get<std::string>()));
                }
            }
            for (const auto& pair : config.transfer_pairs) {
                config.model(pair.source_model_id);
                config.model(pair.target_model_id);
            }
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return config;
}

std::string config_digest(const RunConfig& config) {
    json canonical;
    canonical["dataset"] = json{{"path", config.dataset_path},
                                {"format", static_cast<int>(config.dataset_format)}};
    canonical["models"] = json::array();
    for (const auto& model : config.models) canonical["models"].push_back(model_to_json(model));
    canonical["deciles"] = config.deciles;
    canonical["conditions"] = json::array();
    for (Condition c : config.conditions) canonical["conditions"].push_back(to_string(c));
    canonical["suffix"] = to_string(config.suffix);
    canonical["run_seeds"] = config.run_seeds;
    canonical["backend"] = json{{"base_url", config.backend.base_url},
                                {"credential_env", config.backend.credential_env},
                                {"max_inflight", config.backend.max_inflight}};
    canonical["mock_fixture"] = config.mock_fixture;
    canonical["mock_seed"] = config.mock_seed;
    canonical["prompt"] = json{{"date", config.prompt_base.current_date},
                               {"knowledge_cutoff", config.prompt_base.knowledge_cutoff},
                               {"reasoning_effort", config.prompt_base.reasoning_effort}};
    canonical["transfer_deciles"] = config.transfer_deciles;
    json pairs = json::array();
    for (const auto& pair : config.transfer_pairs) {
        pairs.push_back(json{{"source", pair.source_model_id},
                             {"target", pair.target_model_id}});
    }
    canonical["transfer_pairs"] = pairs;
    json modes = json::array();
    for (TransferMode m : config.transfer_modes) modes.push_back(to_string(m));
    canonical["transfer_modes"] = modes;
    return hex64(fnv1a64(canonical.dump()));
}

void apply_overrides(RunConfig& config, const CliOverrides& overrides) {
    if (overrides.runs) {
        config.run_seeds.clear();
        for (int r = 1; r <= *overrides.runs; ++r) {
            config.run_seeds.push_back(static_cast<uint64_t>(r));
        }
    }
    if (overrides.deciles) config.deciles = *overrides.deciles;
    if (overrides.conditions) config.conditions = *overrides.conditions;
    if (overrides.suffix) config.suffix = *overrides.suffix;
    if (overrides.mock_fixture) config.mock_fixture = *overrides.mock_fixture;
    if (overrides.run_id) config.run_id = *overrides.run_id;
    if (overrides.output_dir) config.output_dir = *overrides.output_dir;
    if (overrides.resume) config.resume = true;
    if (overrides.allow_mixed_digest) config.allow_mixed_digest = true;
}

// ---------------------------------------------------------------------------

namespace {

/// Flushes records strictly in task order as their prefixes complete, so an
/// interrupted sweep leaves a clean resumable prefix on disk.
class OrderedSink {
public:
    OrderedSink(JsonlWriter& writer, size_t task_count) : writer_(writer), slots_(task_count) {}

    void complete(size_t index, std::optional<json> record) {
        std::lock_guard<std::mutex> lock(mutex_);
        slots_[index].done = true;
        slots_[index].record = std::move(record);
        while (next_ < slots_.size() && slots_[next_].done) {
            if (slots_[next_].record) writer_.write(*slots_[next_].record);
            slots_[next_].record.reset();
            ++next_;
        }
    }

private:
    struct Slot {
        bool done = false;
        std::optional<json> record;
    };
    JsonlWriter& writer_;
    std::vector<Slot> slots_;
    size_t next_ = 0;
    std::mutex mutex_;
};

class GapList {
public:
    void add(const std::string& key, const std::string& reason) {
        std::lock_guard<std::mutex> lock(mutex_);
        gaps_.emplace_back(key, reason);
    }
    std::vector<std::pair<std::string, std::string>> take() {
        std::lock_guard<std::mutex> lock(mutex_);
        return std::move(gaps_);
    }

private:
    std::vector<std::pair<std::string, std::string>> gaps_;
    std::mutex mutex_;
};

std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%SZ", &tm_utc);
    return buf;
}

std::string gen_key(const ModelSpec& model, const std::string& item_id, uint64_t run) {
    return "gen|" + model.model_id + "|" + item_id + "|" + std::to_string(run);
}

std::string probe_key(const std::string& model_id, const std::string& item_id, int decile,
                      const std::string& condition, uint64_t run) {
    return "probe|" + model_id + "|" + item_id + "|" + std::to_string(decile) + "|" + condition +
           "|" + std::to_string(run);
}

std::string transfer_probe_key(const std::string& target, const std::string& item_id, int decile,
                               TransferMode mode, const std::string& source, uint64_t run) {
    return "probe|" + target + "|" + item_id + "|" + std::to_string(decile) + "|" +
           (mode == TransferMode::base ? "tbase" : "tfree") + "|" + source + "|" +
           std::to_string(run);
}

std::string continuation_key(const std::string& target, const std::string& item_id, int decile,
                             const std::string& source, uint64_t run) {
    return "cont|" + target + "|" + item_id + "|" + std::to_string(decile) + "|" + source + "|" +
           std::to_string(run);
}

}  // namespace

Harness::Harness(RunConfig config) : config_(std::move(config)) {
    digest_ = config_digest(config_);
    items_ = load_dataset(config_.resolve(config_.dataset_path).string(), config_.dataset_format);
    for (const auto& item : items_) items_by_id_[item.item_id] = item;
}

Backend& Harness::backend() {
    if (!backend_) {
        if (!config_.mock_fixture.empty()) {
            backend_ = std::make_unique<MockBackend>(config_.resolve(config_.mock_fixture),
                                                     config_.mock_seed);
        } else if (!config_.backend.base_url.empty()) {
            backend_ = make_http_backend(config_.backend);
        } else {
            throw ConfigError("no backend configured: set backend.base_url or mock_fixture");
        }
    }
    return *backend_;
}

FileHeader Harness::header(const std::string& kind) const {
    FileHeader h;
    h.config_digest = digest_;
    h.kind = kind;
    return h;
}

const Tokenizer& Harness::tokenizer_for(const ModelSpec& model) {
    auto it = tokenizers_.find(model.model_id);
    if (it == tokenizers_.end()) {
        it = tokenizers_
                 .emplace(model.model_id,
                          Tokenizer::load(config_.resolve(model.tokenizer_path).string()))
                 .first;
    }
    return it->second;
}

PromptTemplate Harness::template_for(const ModelSpec& model) const {
    PromptTemplate tmpl = config_.prompt_base;
    tmpl.family = model.family;
    return tmpl;
}

SuffixVariant Harness::suffix_for(const ModelSpec& model) const {
    return suffix_for_family(model.family, config_.suffix);
}

std::filesystem::path Harness::run_dir() const {
    const std::filesystem::path base = config_.resolve(config_.output_dir);
    if (!config_.run_id.empty()) return base / config_.run_id;
    if (!resolved_run_id_.empty()) return base / resolved_run_id_;

    // Reuse a lone existing run directory; otherwise start a fresh one.
    std::vector<std::string> existing;
    if (std::filesystem::exists(base)) {
        for (const auto& entry : std::filesystem::directory_iterator(base)) {
            if (entry.is_directory()) existing.push_back(entry.path().filename().string());
        }
    }
    if (existing.size() == 1) {
        resolved_run_id_ = existing.front();
    } else if (existing.empty()) {
        resolved_run_id_ = timestamp_utc() + "-" + digest_.substr(0, 8);
    } else {
        throw ConfigError("multiple run directories under " + base.string() +
                          "; pass --run-id to pick one");
    }
    return base / resolved_run_id_;
}

std::vector<ReasoningTrace> Harness::load_traces(const ModelSpec& model) const {
    const auto path = run_dir() / "traces" / (model.model_id + ".jsonl");
    if (!std::filesystem::exists(path)) {
        throw ConfigError("no trace file for " + model.model_id + " at " + path.string() +
                          "; run `generate` first");
    }
    std::vector<ReasoningTrace> traces;
    for (const auto& j : read_jsonl(path).records) {
        if (j.value("type", "") == "trace") traces.push_back(trace_from_json(j));
    }
    return traces;
}

std::vector<ProbeRecord> Harness::load_probes(const std::filesystem::path& file) const {
    std::vector<ProbeRecord> records;
    for (const auto& j : read_jsonl(file).records) {
        if (j.value("type", "") == "probe") records.push_back(probe_from_json(j));
    }
    return records;
}

int Harness::finish_stage(const std::string& stage,
                          const std::vector<std::pair<std::string, std::string>>& gaps,
                          const std::optional<std::filesystem::path>& base_dir) {
    const auto gap_dir = (base_dir ? *base_dir : run_dir()) / "gaps";
    const auto gap_file = gap_dir / (stage + ".jsonl");
    if (gaps.empty()) {
        std::error_code ec;
        std::filesystem::remove(gap_file, ec);
        return 0;
    }
    std::filesystem::create_directories(gap_dir);
    std::filesystem::remove(gap_file);
    JsonlWriter writer(gap_file, header("gaps"));
    for (const auto& [key, reason] : gaps) {
        writer.write(json{{"type", "gap"}, {"stage", stage}, {"key", key}, {"reason", reason}});
    }
    std::cerr << stage << ": " << gaps.size() << " gap(s) recorded in " << gap_file.string()
              << "\n";
    return 1;
}

int Harness::cmd_generate() {
    GapList gaps;
    for (const auto& model : config_.models) {
        const Tokenizer& tok = tokenizer_for(model);
        const PromptTemplate tmpl = template_for(model);
        JsonlWriter writer(run_dir() / "traces" / (model.model_id + ".jsonl"), header("traces"));

        std::set<std::string> existing;
        for (const auto& j : read_jsonl(writer.path()).records) {
            if (j.value("type", "") == "trace") {
                existing.insert(j.at("item_id").get<std::string>() + "|" +
                                std::to_string(j.at("run_seed").get<uint64_t>()));
            }
        }

        struct Task {
            uint64_t run;
            const BenchmarkItem* item;
        };
        std::vector<Task> tasks;
        for (uint64_t run : config_.run_seeds) {
            for (const auto& item : items_) {
                if (!existing.count(item.item_id + "|" + std::to_string(run))) {
                    tasks.push_back(Task{run, &item});
                }
            }
        }

        OrderedSink sink(writer, tasks.size());
        bounded_parallel_for(config_.backend.max_inflight, tasks.size(), [&](size_t i) {
            const Task& task = tasks[i];
            const std::string key = gen_key(model, task.item->item_id, task.run);
            try {
                const std::string prompt = build_generation_prompt(tmpl, *task.item);
                const int prompt_tokens = tok.count_tokens(prompt);
                if (prompt_tokens + model.sampling.max_tokens > model.context_length) {
                    throw PromptBudgetError(prompt_tokens,
                                            model.context_length - model.sampling.max_tokens);
                }
                const GenerationOutcome outcome =
                    generate_trace(backend(), config_.backend, model, prompt, key);
                const ParsedGeneration parsed = parse_trace(model.family, outcome.raw);

                ReasoningTrace trace;
                trace.item_id = task.item->item_id;
                trace.model_id = model.model_id;
                trace.run_seed = task.run;
                trace.text = parsed.trace_text;
                trace.token_len = tok.count_tokens(parsed.trace_text);
                trace.finish_reason = parsed.finish_reason;
                trace.final_letter_raw = parsed.final_letter;
                sink.complete(i, to_json(trace));
            } catch (const std::exception& e) {
                gaps.add(key, e.what());
                sink.complete(i, std::nullopt);
            }
        });
    }
    return finish_stage("generate", gaps.take());
}

int Harness::cmd_control() {
    GapList gaps;
    for (const auto& model : config_.models) {
        const Tokenizer& tok = tokenizer_for(model);
        const auto traces = load_traces(model);
        std::map<uint64_t, std::vector<ReasoningTrace>> by_run;
        for (const auto& trace : traces) by_run[trace.run_seed].push_back(trace);

        for (Condition condition : config_.conditions) {
            if (condition == Condition::original) continue;
            JsonlWriter writer(run_dir() / "slices" /
                                   (model.model_id + "__" + to_string(condition) + ".jsonl"),
                               header("slices"));
            std::set<std::string> existing;
            for (const auto& j : read_jsonl(writer.path()).records) {
                if (j.value("type", "") == "slice") {
                    existing.insert(j.at("item_id").get<std::string>() + "|" +
                                    std::to_string(j.at("run_seed").get<uint64_t>()) + "|" +
                                    std::to_string(j.at("decile").get<int>()));
                }
            }
            for (uint64_t run : config_.run_seeds) {
                const auto it = by_run.find(run);
                if (it == by_run.end()) continue;
                SweepPlan plan;
                plan.deciles = config_.deciles;
                plan.conditions = {condition};
                plan.run_seed = run;
                for (auto& slice : build_slice_sweep_parallel(it->second, tok, plan)) {
                    slice.run_seed = run;
                    const std::string key = slice.item_id + "|" + std::to_string(run) + "|" +
                                            std::to_string(slice.decile);
                    if (existing.count(key)) continue;
                    writer.write(to_json(slice));
                }
            }
        }
    }
    return finish_stage("control", gaps.take());
}

int Harness::cmd_probe() {
    GapList gaps;
    for (const auto& model : config_.models) {
        const Tokenizer& tok = tokenizer_for(model);
        const PromptTemplate tmpl = template_for(model);
        const SuffixVariant suffix = suffix_for(model);
        const auto traces = load_traces(model);
        std::map<uint64_t, std::vector<ReasoningTrace>> by_run;
        for (const auto& trace : traces) {
            if (!slicing_roundtrip_stable(tok, trace.text)) {
                gaps.add(gen_key(model, trace.item_id, trace.run_seed),
                         "tokenizer round-trip unstable; trace excluded from slicing");
                continue;
            }
            by_run[trace.run_seed].push_back(trace);
        }

        for (Condition condition : config_.conditions) {
            JsonlWriter writer(run_dir() / "probes" /
                                   (model.model_id + "__" + to_string(condition) + ".jsonl"),
                               header("probes"));
            std::set<std::string> existing;
            for (const auto& j : read_jsonl(writer.path()).records) {
                if (j.value("type", "") == "probe") existing.insert(j.at("idem").get<std::string>());
            }

            std::vector<int> deciles = config_.deciles;
            if (condition != Condition::original) {
                deciles.erase(std::remove(deciles.begin(), deciles.end(), 0), deciles.end());
            }
            if (deciles.empty()) continue;

            struct Task {
                uint64_t run;
                TraceSlice slice;
            };
            std::vector<Task> tasks;
            for (uint64_t run : config_.run_seeds) {
                const auto it = by_run.find(run);
                if (it == by_run.end()) continue;
                SweepPlan plan;
                plan.deciles = deciles;
                plan.conditions = {condition};
                plan.run_seed = run;
                for (auto& slice : build_slice_sweep_parallel(it->second, tok, plan)) {
                    slice.run_seed = run;
                    ProbeRecord probe;  // key preview for resume skip
                    probe.item_id = slice.item_id;
                    probe.probe_model_id = model.model_id;
                    probe.source_model_id = model.model_id;
                    probe.decile = slice.decile;
                    probe.condition = condition;
                    probe.mode = ProbeMode::standard;
                    probe.run_seed = run;
                    probe.suffix_variant = suffix.kind;
                    if (existing.count(probe.idempotency_key())) continue;
                    tasks.push_back(Task{run, std::move(slice)});
                }
            }

            OrderedSink sink(writer, tasks.size());
            bounded_parallel_for(config_.backend.max_inflight, tasks.size(), [&](size_t i) {
                const Task& task = tasks[i];
                const std::string key = probe_key(model.model_id, task.slice.item_id,
                                                  task.slice.decile, to_string(condition),
                                                  task.run);
                try {
                    const BenchmarkItem& item = items_by_id_.at(task.slice.item_id);
                    const std::string prompt = build_probe_prompt(tmpl, item, task.slice, suffix);
                    check_context_budget(prompt, tok, model.context_length);

                    ProbeRequest request;
                    request.prompt = prompt;
                    request.choice_set = item.choice_set;
                    request.fixture_key = key;
                    ProbeRecord record;
                    record.item_id = item.item_id;
                    record.probe_model_id = model.model_id;
                    record.source_model_id = model.model_id;
                    record.decile = task.slice.decile;
                    record.condition = condition;
                    record.mode = ProbeMode::standard;
                    record.run_seed = task.run;
                    record.suffix_variant = suffix.kind;
                    record.distribution =
                        probe_distribution(backend(), config_.backend, model, request);
                    record.argmax_letter =
                        argmax_answer(record.distribution, item.choice_set, record.argmax_tie);
                    record.correct = record.argmax_letter == item.gold_letter;
                    if (task.slice.lossy_decode) record.flags.push_back("lossy_decode");
                    if (task.slice.swap_padded) record.flags.push_back("swap_padded");
                    sink.complete(i, to_json(record));
                } catch (const std::exception& e) {
                    gaps.add(key, e.what());
                    sink.complete(i, std::nullopt);
                }
            });
        }
    }
    return finish_stage("probe", gaps.take());
}

int Harness::cmd_transfer() {
    GapList gaps;
    for (const auto& pair : config_.transfer_pairs) {
        const ModelSpec& source = config_.model(pair.source_model_id);
        const ModelSpec& target = config_.model(pair.target_model_id);
        const Tokenizer& source_tok = tokenizer_for(source);
        const Tokenizer& target_tok = tokenizer_for(target);
        const PromptTemplate target_tmpl = template_for(target);
        const SuffixVariant target_suffix = suffix_for(target);

        const auto source_probe_file =
            run_dir() / "probes" / (source.model_id + "__original.jsonl");
        if (!std::filesystem::exists(source_probe_file)) {
            throw ConfigError("transfer needs source probes at " + source_probe_file.string());
        }
        auto eligible =
            select_rescue_candidates(load_probes(source_probe_file), config_.transfer_deciles);
        std::sort(eligible.begin(), eligible.end(),
                  [](const EligiblePair& a, const EligiblePair& b) {
                      if (a.run_seed != b.run_seed) return a.run_seed < b.run_seed;
                      if (a.item_id != b.item_id) return a.item_id < b.item_id;
                      return a.decile < b.decile;
                  });

        std::map<std::pair<uint64_t, std::string>, ReasoningTrace> source_traces;
        for (auto& trace : load_traces(source)) {
            source_traces[{trace.run_seed, trace.item_id}] = std::move(trace);
        }

        for (TransferMode mode : config_.transfer_modes) {
            JsonlWriter writer(run_dir() / "transfers" /
                                   (source.model_id + "__" + target.model_id + "__" +
                                    to_string(mode) + ".jsonl"),
                               header("transfers"));
            if (eligible.empty()) {
                writer.write(json{{"type", "note"},
                                  {"message", "no eligible pairs: source answered every "
                                              "requested decile correctly"}});
                continue;
            }
            std::set<std::string> existing;
            for (const auto& j : read_jsonl(writer.path()).records) {
                if (j.value("type", "") == "probe") existing.insert(j.at("idem").get<std::string>());
            }

            std::vector<const EligiblePair*> tasks;
            for (const auto& pair_record : eligible) {
                ProbeRecord preview;
                preview.item_id = pair_record.item_id;
                preview.probe_model_id = target.model_id;
                preview.source_model_id = source.model_id;
                preview.decile = pair_record.decile;
                preview.condition = Condition::original;
                preview.mode = mode == TransferMode::base ? ProbeMode::transfer_base
                                                          : ProbeMode::transfer_free;
                preview.run_seed = pair_record.run_seed;
                preview.suffix_variant = target_suffix.kind;
                if (!existing.count(preview.idempotency_key())) tasks.push_back(&pair_record);
            }

            OrderedSink sink(writer, tasks.size());
            bounded_parallel_for(config_.backend.max_inflight, tasks.size(), [&](size_t i) {
                const EligiblePair& cell = *tasks[i];
                const std::string key = transfer_probe_key(target.model_id, cell.item_id,
                                                           cell.decile, mode, source.model_id,
                                                           cell.run_seed);
                try {
                    const auto trace_it = source_traces.find({cell.run_seed, cell.item_id});
                    if (trace_it == source_traces.end()) {
                        throw std::runtime_error("source trace missing");
                    }
                    const BenchmarkItem& item = items_by_id_.at(cell.item_id);
                    TraceSlice slice = slice_prefix(trace_it->second, source_tok, cell.decile);
                    slice.run_seed = cell.run_seed;

                    const TransferProbe rendered = render_transfer_probe(
                        target_tmpl, source.family, item, slice, mode, target_suffix);

                    ProbeRecord record;
                    record.item_id = item.item_id;
                    record.probe_model_id = target.model_id;
                    record.source_model_id = source.model_id;
                    record.decile = cell.decile;
                    record.condition = Condition::original;
                    record.run_seed = cell.run_seed;
                    record.suffix_variant = target_suffix.kind;
                    if (rendered.normalized_markers > 0) {
                        record.flags.push_back("tag_normalized:" +
                                               std::to_string(rendered.normalized_markers));
                    }

                    std::string probe_prompt;
                    if (mode == TransferMode::base) {
                        record.mode = ProbeMode::transfer_base;
                        probe_prompt = rendered.prompt;
                    } else {
                        record.mode = ProbeMode::transfer_free;
                        const int prompt_tokens = target_tok.count_tokens(rendered.prompt);
                        const int budget =
                            continuation_budget(target.context_length, prompt_tokens);
                        ModelSpec continuation_model = target;
                        continuation_model.sampling.max_tokens = budget;
                        const GenerationOutcome outcome = generate_trace(
                            backend(), config_.backend, continuation_model, rendered.prompt,
                            continuation_key(target.model_id, cell.item_id, cell.decile,
                                             source.model_id, cell.run_seed));
                        const ContinuationSplit split =
                            split_continuation(target.family, outcome.raw);
                        if (!split.closed_naturally &&
                            outcome.finish_reason == FinishReason::budget_exhausted) {
                            record.flags.push_back("continuation_truncated");
                        }
                        record.continuation_tokens = target_tok.count_tokens(split.reasoning);
                        probe_prompt = rendered.prompt + split.reasoning + target_suffix.text;
                    }
                    check_context_budget(probe_prompt, target_tok, target.context_length);

                    ProbeRequest request;
                    request.prompt = probe_prompt;
                    request.choice_set = item.choice_set;
                    request.fixture_key = key;
                    record.distribution =
                        probe_distribution(backend(), config_.backend, target, request);
                    record.argmax_letter =
                        argmax_answer(record.distribution, item.choice_set, record.argmax_tie);
                    record.correct = record.argmax_letter == item.gold_letter;
                    sink.complete(i, to_json(record));
                } catch (const std::exception& e) {
                    gaps.add(key, e.what());
                    sink.complete(i, std::nullopt);
                }
            });
        }
    }
    return finish_stage("transfer", gaps.take());
}

namespace {

std::vector<std::pair<std::string, bool>> correctness_at(
    const std::vector<ProbeRecord>& records, int decile,
    const std::function<bool(const ProbeRecord&)>& outcome) {
    std::vector<std::pair<std::string, bool>> out;
    for (const auto& record : records) {
        if (record.decile != decile) continue;
        out.emplace_back(record.item_id + "|" + std::to_string(record.run_seed), outcome(record));
    }
    return out;
}

double mean_outcome(const std::vector<std::pair<std::string, bool>>& entries) {
    if (entries.empty()) return 0.0;
    int64_t hits = 0;
    for (const auto& [key, value] : entries) {
        (void)key;
        if (value) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(entries.size());
}

bool record_correct(const ProbeRecord& r) { return r.correct; }

}  // namespace

MetricsBundle Harness::compute_metrics(const std::filesystem::path& records_dir,
                                       std::vector<std::string>* digests_seen) const {
    MetricsBundle bundle;
    int64_t invalid_count = 0;
    auto note_digest = [&](const FileHeader& h) {
        if (digests_seen) digests_seen->push_back(h.config_digest);
    };

    std::map<std::string, std::vector<ProbeRecord>> probes_by_model_condition;
    std::map<std::string, std::vector<ReasoningTrace>> traces_by_model;
    size_t total_records = 0;

    for (const auto& model : config_.models) {
        const auto trace_path = records_dir / "traces" / (model.model_id + ".jsonl");
        if (std::filesystem::exists(trace_path)) {
            const JsonlFile file = read_jsonl(trace_path);
            note_digest(file.header);
            for (const auto& j : file.records) {
                if (j.value("type", "") == "trace") {
                    traces_by_model[model.model_id].push_back(trace_from_json(j));
                }
            }
        }
        for (Condition condition : config_.conditions) {
            const auto probe_path = records_dir / "probes" /
                                    (model.model_id + "__" + to_string(condition) + ".jsonl");
            if (!std::filesystem::exists(probe_path)) continue;
            const JsonlFile file = read_jsonl(probe_path);
            note_digest(file.header);
            std::vector<ProbeRecord> valid;
            for (const auto& j : file.records) {
                if (j.value("type", "") != "probe") continue;
                ProbeRecord record = probe_from_json(j);
                const auto item_it = items_by_id_.find(record.item_id);
                if (item_it == items_by_id_.end()) {
                    ++invalid_count;
                    bundle.validation_notes.push_back(record.item_id + ": unknown item");
                    continue;
                }
                const auto violations = validate_record(record, item_it->second);
                if (!violations.empty()) {
                    ++invalid_count;
                    for (const auto& v : violations) {
                        bundle.validation_notes.push_back(
                            record.item_id + " d" + std::to_string(record.decile) + " " +
                            to_string(condition) + ": " + v);
                    }
                    continue;
                }
                valid.push_back(std::move(record));
            }
            total_records += valid.size();
            probes_by_model_condition[model.model_id + "|" + to_string(condition)] =
                std::move(valid);
        }
    }
    if (total_records == 0) {
        throw ConfigError("empty record set under " + records_dir.string());
    }

    for (const auto& model : config_.models) {
        for (Condition condition : config_.conditions) {
            const auto it =
                probes_by_model_condition.find(model.model_id + "|" + to_string(condition));
            if (it == probes_by_model_condition.end() || it->second.empty()) continue;
            const auto& records = it->second;
            SeriesGroup group;
            group.model_id = model.model_id;
            group.condition = condition;
            group.suffix = records.front().suffix_variant;
            group.series.push_back(accuracy_by_decile(records));
            group.series.push_back(decision_commitment(records));
            group.series.push_back(non_choice_probability(records));
            group.series.push_back(flip_rate(records));
            group.series.push_back(discrimination_gap(records));
            bundle.groups.push_back(std::move(group));
        }

        const auto original_it =
            probes_by_model_condition.find(model.model_id + "|" + to_string(Condition::original));
        if (original_it == probes_by_model_condition.end() || original_it->second.empty()) {
            continue;
        }
        const auto& original = original_it->second;
        bundle.trajectories[model.model_id] = trajectory_categories(original);

        const auto traces_it = traces_by_model.find(model.model_id);
        if (traces_it != traces_by_model.end()) {
            std::vector<ProbeRecord> at_100;
            for (const auto& record : original) {
                if (record.decile == 100) at_100.push_back(record);
            }
            if (!at_100.empty()) {
                bundle.boxed[model.model_id] = boxed_analysis(traces_it->second, at_100);
                try {
                    bundle.quintiles[model.model_id] =
                        length_quintile_accuracy(traces_it->second, at_100);
                } catch (const std::exception& e) {
                    bundle.validation_notes.push_back(model.model_id +
                                                      ": quintiles skipped: " + e.what());
                }
            }
        }

        // Paired accuracy tests for the summary tables.
        const auto base0 = correctness_at(original, 0, record_correct);
        const auto full100 = correctness_at(original, 100, record_correct);
        if (!base0.empty() && !full100.empty()) {
            SignificanceRow row;
            row.model_id = model.model_id;
            row.comparison = "gain_d0_to_d100";
            row.test = paired_condition_test(base0, full100);
            row.delta_pp = (mean_outcome(full100) - mean_outcome(base0)) * 100.0;
            row.n_pairs = static_cast<int64_t>(std::min(base0.size(), full100.size()));
            bundle.significance.push_back(row);
        }
        for (Condition condition :
             {Condition::random, Condition::swap, Condition::shuffle}) {
            const auto control_it =
                probes_by_model_condition.find(model.model_id + "|" + to_string(condition));
            if (control_it == probes_by_model_condition.end()) continue;
            const auto control100 = correctness_at(control_it->second, 100, record_correct);
            if (control100.empty()) continue;
            if (!full100.empty()) {
                SignificanceRow row;
                row.model_id = model.model_id;
                row.comparison = "original_vs_" + to_string(condition) + "_d100";
                row.test = paired_condition_test(control100, full100);
                row.delta_pp = (mean_outcome(full100) - mean_outcome(control100)) * 100.0;
                row.n_pairs = static_cast<int64_t>(std::min(control100.size(), full100.size()));
                bundle.significance.push_back(row);
            }
            if (!base0.empty()) {
                SignificanceRow row;
                row.model_id = model.model_id;
                row.comparison = to_string(condition) + "_d100_vs_baseline";
                row.test = paired_condition_test(base0, control100);
                row.delta_pp = (mean_outcome(control100) - mean_outcome(base0)) * 100.0;
                row.n_pairs = static_cast<int64_t>(std::min(base0.size(), control100.size()));
                bundle.significance.push_back(row);
            }
        }
    }

    for (const auto& pair : config_.transfer_pairs) {
        const auto source_it = probes_by_model_condition.find(pair.source_model_id + "|" +
                                                              to_string(Condition::original));
        if (source_it == probes_by_model_condition.end()) continue;
        RescueReport report;
        report.source_model_id = pair.source_model_id;
        report.target_model_id = pair.target_model_id;

        std::map<TransferMode, std::vector<ProbeRecord>> transfer_records;
        for (TransferMode mode : {TransferMode::base, TransferMode::free}) {
            const auto path = records_dir / "transfers" /
                              (pair.source_model_id + "__" + pair.target_model_id + "__" +
                               to_string(mode) + ".jsonl");
            if (!std::filesystem::exists(path)) continue;
            const JsonlFile file = read_jsonl(path);
            note_digest(file.header);
            for (const auto& j : file.records) {
                if (j.value("type", "") == "probe") {
                    transfer_records[mode].push_back(probe_from_json(j));
                }
            }
        }
        if (transfer_records.empty()) continue;
        report.base = rescue_and_anchor(transfer_records[TransferMode::base], source_it->second,
                                        ProbeMode::transfer_base);
        report.free_mode = rescue_and_anchor(transfer_records[TransferMode::free],
                                             source_it->second, ProbeMode::transfer_free);

        auto transfer_outcomes = [&](TransferMode mode,
                                     const std::function<bool(const ProbeRecord&, Letter)>& fn) {
            std::map<std::tuple<uint64_t, std::string, int>, Letter> anchors;
            for (const auto& record : source_it->second) {
                if (record.mode == ProbeMode::standard && !record.correct) {
                    anchors[{record.run_seed, record.item_id, record.decile}] =
                        record.argmax_letter;
                }
            }
            std::vector<std::pair<std::string, bool>> out;
            for (const auto& record : transfer_records[mode]) {
                const auto it = anchors.find({record.run_seed, record.item_id, record.decile});
                if (it == anchors.end()) continue;
                out.emplace_back(record.item_id + "|" + std::to_string(record.decile) + "|" +
                                     std::to_string(record.run_seed),
                                 fn(record, it->second));
            }
            return out;
        };
        auto rescued = [](const ProbeRecord& r, Letter) { return r.correct; };
        auto anchored = [](const ProbeRecord& r, Letter source) {
            return r.argmax_letter == source;
        };
        try {
            report.rescue_delta_test =
                paired_condition_test(transfer_outcomes(TransferMode::base, rescued),
                                      transfer_outcomes(TransferMode::free, rescued),
                                      Alternative::b_greater);
            report.anchor_delta_test =
                paired_condition_test(transfer_outcomes(TransferMode::base, anchored),
                                      transfer_outcomes(TransferMode::free, anchored),
                                      Alternative::b_less);
        } catch (const std::exception& e) {
            bundle.validation_notes.push_back(pair.source_model_id + "->" +
                                              pair.target_model_id +
                                              ": transfer tests skipped: " + e.what());
        }
        bundle.rescue.push_back(std::move(report));
    }

    if (invalid_count > 0) {
        bundle.validation_notes.push_back(std::to_string(invalid_count) +
                                          " invalid record(s) excluded from analysis");
    }
    return bundle;
}

int Harness::cmd_analyze(const std::vector<std::string>& record_dirs) {
    if (record_dirs.size() > 1) {
        throw ConfigError("analyze expects at most one records directory");
    }
    const std::filesystem::path records_dir =
        record_dirs.empty() ? run_dir() : config_.resolve(record_dirs.front());

    std::vector<std::string> digests;
    const MetricsBundle bundle = compute_metrics(records_dir, &digests);
    std::sort(digests.begin(), digests.end());
    digests.erase(std::unique(digests.begin(), digests.end()), digests.end());
    if (digests.size() > 1 && !config_.allow_mixed_digest) {
        throw ConfigError("record files carry mixed config digests; rerun with "
                          "--allow-mixed-digest to override");
    }

    FileHeader h = header("metrics");
    if (!digests.empty()) h.config_digest = digests.front();
    const auto metrics_dir = records_dir / "metrics";
    std::filesystem::remove_all(metrics_dir);
    write_metrics(metrics_dir, bundle, h);
    std::cout << "metrics written to " << metrics_dir.string() << "\n";

    std::vector<std::pair<std::string, std::string>> gaps;
    for (const auto& note : bundle.validation_notes) gaps.emplace_back("analyze", note);
    return finish_stage("analyze", gaps, records_dir);
}

int Harness::cmd_report() {
    const auto summary = run_dir() / "metrics" / "summary.txt";
    if (!std::filesystem::exists(summary)) {
        throw ConfigError("no metrics summary at " + summary.string() + "; run `analyze` first");
    }
    std::cout << read_text_file(summary.string());
    return 0;
}

}  // namespace traceprobe
