#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "traceprobe/analytics.hpp"
#include "traceprobe/backend.hpp"
#include "traceprobe/controls.hpp"
#include "traceprobe/core.hpp"
#include "traceprobe/prompts.hpp"
#include "traceprobe/tokenizer.hpp"
#include "traceprobe/transfer.hpp"

namespace traceprobe {

struct TransferPairConfig {
    std::string source_model_id;
    std::string target_model_id;
};

/// Paper-reported sampling defaults per family, applied when a model spec
/// omits its sampling block.
SamplingParams default_sampling(Family family);

constexpr int kReservedPromptTokens = 512;

struct RunConfig {
    std::string dataset_path;  // as written in the config file
    DatasetFormat dataset_format = DatasetFormat::auto_detect;
    std::vector<ModelSpec> models;
    std::vector<int> deciles = {0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
    std::vector<Condition> conditions = {Condition::original};
    SuffixKind suffix = SuffixKind::full;
    std::vector<uint64_t> run_seeds = {1};
    BackendEndpoint backend;
    std::string mock_fixture;  // nonempty selects the mock backend
    uint64_t mock_seed = 0;
    std::string output_dir = "outputs";
    std::string run_id;  // empty: timestamp + digest prefix
    PromptTemplate prompt_base;  // family is set per model at render time
    std::vector<TransferPairConfig> transfer_pairs;
    std::vector<int> transfer_deciles = {20, 40, 60, 80};
    std::vector<TransferMode> transfer_modes = {TransferMode::base, TransferMode::free};
    bool resume = false;
    bool allow_mixed_digest = false;

    std::filesystem::path base_dir;  // directory of the config file

    const ModelSpec& model(const std::string& model_id) const;
    std::filesystem::path resolve(const std::string& path) const;
};

RunConfig load_run_config(const std::filesystem::path& path);

/// Stable digest of the effective configuration (as-written paths, filled
/// defaults). Recorded in every output file header.
std::string config_digest(const RunConfig& config);

struct CliOverrides {
    std::optional<int> runs;
    std::optional<std::vector<int>> deciles;
    std::optional<std::vector<Condition>> conditions;
    std::optional<SuffixKind> suffix;
    std::optional<std::string> mock_fixture;
    std::optional<std::string> run_id;
    std::optional<std::string> output_dir;
    bool resume = false;
    bool allow_mixed_digest = false;
};

void apply_overrides(RunConfig& config, const CliOverrides& overrides);

class Harness {
public:
    explicit Harness(RunConfig config);

    // Exit-code semantics: 0 complete, 1 completed with gaps recorded.
    // Configuration problems throw ConfigError (exit 2 at the CLI).
    int cmd_generate();
    int cmd_probe();
    int cmd_control();
    int cmd_transfer();
    int cmd_analyze(const std::vector<std::string>& record_dirs = {});
    int cmd_report();

    const std::string& digest() const { return digest_; }
    std::filesystem::path run_dir() const;

    /// Metric computation over a record directory; shared by cmd_analyze and
    /// the replay tooling.
    MetricsBundle compute_metrics(const std::filesystem::path& records_dir,
                                  std::vector<std::string>* digests_seen = nullptr) const;

private:
    Backend& backend();
    FileHeader header(const std::string& kind) const;
    const Tokenizer& tokenizer_for(const ModelSpec& model);
    PromptTemplate template_for(const ModelSpec& model) const;
    SuffixVariant suffix_for(const ModelSpec& model) const;

    std::vector<ReasoningTrace> load_traces(const ModelSpec& model) const;
    std::vector<ProbeRecord> load_probes(const std::filesystem::path& file) const;

    int finish_stage(const std::string& stage,
                     const std::vector<std::pair<std::string, std::string>>& gaps,
                     const std::optional<std::filesystem::path>& base_dir = std::nullopt);

    RunConfig config_;
    std::string digest_;
    std::vector<BenchmarkItem> items_;
    std::map<std::string, BenchmarkItem> items_by_id_;
    std::unique_ptr<Backend> backend_;
    std::map<std::string, Tokenizer> tokenizers_;  // by model_id
    mutable std::string resolved_run_id_;
};

}  // namespace traceprobe
