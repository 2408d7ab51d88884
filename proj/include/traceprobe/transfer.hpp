#pragma once

#include <string>
#include <vector>

#include "traceprobe/core.hpp"
#include "traceprobe/prompts.hpp"

namespace traceprobe {

constexpr int kContinuationSafetyMargin = 128;

struct EligiblePair {
    std::string item_id;
    int decile = 0;
    uint64_t run_seed = 0;
    Letter source_argmax = 0;  // the wrong letter the source committed to
};

struct TransferPlan {
    std::string source_model_id;
    std::string target_model_id;
    std::vector<int> deciles;  // typically {20,40,60,80}
    std::vector<EligiblePair> eligible;
};

/// The (item, decile, run) triples whose source argmax missed the gold
/// letter. Source records must be standard original-condition probes and
/// cover every requested decile; missing coverage is an error listing gaps.
std::vector<EligiblePair> select_rescue_candidates(const std::vector<ProbeRecord>& source_records,
                                                   const std::vector<int>& deciles);

enum class TransferMode { base, free };

std::string to_string(TransferMode mode);
TransferMode transfer_mode_from_string(const std::string& s);

struct TransferProbe {
    std::string prompt;  // probe prompt (base) or continuation prompt (free)
    size_t normalized_markers = 0;
};

/// Renders the target-model prompt for an injected source slice. Base mode
/// yields the immediate-answer probe prompt; free mode the continuation
/// prompt (no early-stopping suffix). Tag normalization runs on the slice
/// text for cross-family pairs.
TransferProbe render_transfer_probe(const PromptTemplate& target_template,
                                    Family source_family, const BenchmarkItem& item,
                                    const TraceSlice& source_slice, TransferMode mode,
                                    const SuffixVariant& target_suffix);

/// Remaining generation budget once the prompt and the 128-token safety
/// margin are accounted for. The prompt must leave the margin free.
int continuation_budget(int context_length, int prompt_token_len);

struct ContinuationSplit {
    std::string reasoning;  // text to keep before appending the suffix
    bool closed_naturally = false;
};

/// Free-mode continuations are re-probed through the early-stopping suffix;
/// anything from the family's reasoning-close marker onward is dropped so
/// the suffix lands on an open reasoning segment.
ContinuationSplit split_continuation(Family target_family, const std::string& raw_continuation);

}  // namespace traceprobe
