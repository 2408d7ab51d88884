#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace traceprobe {

using json = nlohmann::json;

constexpr int kSchemaVersion = 1;
constexpr const char* kToolVersion = "0.1.0";

/// Answer letters are bare uppercase characters, compared case-sensitively.
using Letter = char;

enum class Family { think_tag, channel };
enum class FinishReason { closed, budget_exhausted };
enum class Condition { original, random, swap, shuffle };
enum class ProbeMode { standard, transfer_base, transfer_free };
enum class SuffixKind { full, minimal, channel_close };

std::string to_string(Family f);
std::string to_string(FinishReason r);
std::string to_string(Condition c);
std::string to_string(ProbeMode m);
std::string to_string(SuffixKind s);

Family family_from_string(const std::string& s);
FinishReason finish_reason_from_string(const std::string& s);
Condition condition_from_string(const std::string& s);
ProbeMode probe_mode_from_string(const std::string& s);
SuffixKind suffix_kind_from_string(const std::string& s);

struct BenchmarkItem {
    std::string item_id;
    std::string question_text;
    std::vector<std::string> options;  // aligned with choice_set
    std::vector<Letter> choice_set;    // A.. prefix of the alphabet
    Letter gold_letter = 0;
    std::string category;  // optional, empty when absent

    void validate() const;  // throws on invariant violation
};

struct SamplingParams {
    double temperature = 0.0;
    double top_p = 1.0;
    int top_k = 0;  // 0 = unlimited
    int max_tokens = 0;
};

struct ModelSpec {
    std::string model_id;
    Family family = Family::think_tag;
    int context_length = 0;
    int trace_max_tokens = 0;
    SamplingParams sampling;
    std::string tokenizer_path;
};

struct ReasoningTrace {
    std::string item_id;
    std::string model_id;
    uint64_t run_seed = 0;
    std::string text;  // bare trace, framing markers stripped
    int token_len = 0;
    FinishReason finish_reason = FinishReason::closed;
    std::optional<Letter> final_letter_raw;
};

struct TraceSlice {
    std::string item_id;
    std::string model_id;
    uint64_t run_seed = 0;
    int decile = 0;
    int token_len = 0;
    std::string text;
    Condition condition = Condition::original;
    std::optional<std::string> donor_item_id;  // swap only
    std::optional<uint64_t> seed;              // controls only
    bool lossy_decode = false;
    bool swap_padded = false;
};

struct AnswerDistribution {
    std::map<Letter, double> choice_probs;
    std::vector<std::pair<std::string, double>> non_choice_top;
    double non_choice_mass = 0.0;
    std::vector<Letter> below_topk;  // letters absent from the returned candidates
};

struct ProbeRecord {
    std::string item_id;
    std::string probe_model_id;
    std::string source_model_id;
    int decile = 0;
    Condition condition = Condition::original;
    ProbeMode mode = ProbeMode::standard;
    uint64_t run_seed = 0;
    AnswerDistribution distribution;
    Letter argmax_letter = 0;
    bool correct = false;
    bool argmax_tie = false;
    SuffixKind suffix_variant = SuffixKind::full;
    int continuation_tokens = 0;  // transfer_free only
    std::vector<std::string> flags;

    /// Canonical identity used for resume de-duplication.
    std::string idempotency_key() const;
};

struct ContingencyCounts {
    int64_t n11 = 0;
    int64_t n10 = 0;
    int64_t n01 = 0;
    int64_t n00 = 0;

    int64_t total() const { return n11 + n10 + n01 + n00; }
};

/// Argmax over choice probabilities. Ties resolve to the earliest letter in
/// the choice set; `tie` reports whether the maximum was shared.
Letter argmax_answer(const AnswerDistribution& dist, const std::vector<Letter>& choice_set,
                     bool& tie);

// JSON record forms (one object per JSONL line).
json to_json(const BenchmarkItem& item);
json to_json(const ReasoningTrace& trace);
json to_json(const TraceSlice& slice);
json to_json(const AnswerDistribution& dist);
json to_json(const ProbeRecord& record);
BenchmarkItem item_from_json(const json& j);
ReasoningTrace trace_from_json(const json& j);
TraceSlice slice_from_json(const json& j);
AnswerDistribution distribution_from_json(const json& j);
ProbeRecord probe_from_json(const json& j);

enum class DatasetFormat { auto_detect, jsonl, csv };

/// Loads a dataset export, preserving file order. Throws on malformed
/// records (message names the line), duplicate ids, or gold letters
/// outside the item's choice set.
std::vector<BenchmarkItem> load_dataset(const std::string& path,
                                        DatasetFormat format = DatasetFormat::auto_detect);

/// Invariant check for a stored probe record against its item.
/// Returns human-readable violations; empty means the record is sound.
std::vector<std::string> validate_record(const ProbeRecord& record, const BenchmarkItem& item);

}  // namespace traceprobe
