#pragma once

#include <optional>
#include <string>

#include "traceprobe/core.hpp"
#include "traceprobe/tokenizer.hpp"

namespace traceprobe {

/// Instruction shared by both families. Conformance-mode templates must
/// carry this string verbatim.
extern const char* const kDefaultSystemInstruction;

struct PromptTemplate {
    Family family = Family::think_tag;
    std::string system_instruction = kDefaultSystemInstruction;
    // Channel-family header fields. The date defaults to a fixed constant so
    // rendered prompts are reproducible; overrides land in the config digest.
    std::string current_date = "2025-12-20";
    std::string knowledge_cutoff = "2024-06";
    std::string reasoning_effort = "medium";
};

struct SuffixVariant {
    SuffixKind kind = SuffixKind::full;
    std::string text;
};

/// Canonical early-stopping suffixes. `full` carries the limited-time
/// sentence; `minimal` is exactly the think-close sequence; `channel_close`
/// closes the analysis channel and opens the final channel.
SuffixVariant make_suffix(SuffixKind kind);

/// Suffix used for a family when the configured kind does not apply
/// (channel prompts always close via the channel suffix).
SuffixVariant suffix_for_family(Family family, SuffixKind configured);

std::string render_options_block(const BenchmarkItem& item);

std::string build_generation_prompt(const PromptTemplate& tmpl, const BenchmarkItem& item);

/// No-reasoning baseline: empty think block (think-tag) or an immediately
/// closed analysis channel plus final-channel opener (channel).
std::string build_baseline_prompt(const PromptTemplate& tmpl, const BenchmarkItem& item);

/// System instruction + question + injected slice + early-stopping suffix.
/// A decile-0 slice renders the baseline prompt regardless of suffix.
std::string build_probe_prompt(const PromptTemplate& tmpl, const BenchmarkItem& item,
                               const TraceSlice& slice, const SuffixVariant& suffix);

/// Probe prompt without the early-stopping suffix, for free continuation.
std::string build_continuation_prompt(const PromptTemplate& tmpl, const BenchmarkItem& item,
                                      const TraceSlice& slice);

struct PromptBudgetError : std::runtime_error {
    PromptBudgetError(int prompt_tokens, int budget)
        : std::runtime_error("prompt of " + std::to_string(prompt_tokens) +
                             " tokens exceeds context budget of " + std::to_string(budget)),
          prompt_tokens(prompt_tokens),
          budget(budget) {}
    int prompt_tokens;
    int budget;
};

/// Token count of the rendered prompt under `tokenizer`; throws
/// PromptBudgetError when it leaves no room for even one generated token.
int check_context_budget(const std::string& prompt, const Tokenizer& tokenizer,
                         int context_length);

struct ParsedGeneration {
    std::string trace_text;  // bare, framing stripped
    std::optional<Letter> final_letter;
    FinishReason finish_reason = FinishReason::closed;
};

/// Extracts the reasoning trace and the final answer letter from a raw
/// completion (no prompt echo). Throws when no reasoning opener is found.
ParsedGeneration parse_trace(Family family, const std::string& raw_generation);

struct NormalizeResult {
    std::string text;
    size_t removed_markers = 0;
};

/// Rewrites framing markers that would corrupt the target family's prompt.
/// Same-family input without stray markers passes through unchanged.
NormalizeResult normalize_tags(Family source, Family target, std::string text);

/// First bare uppercase letter token in a final-response segment, if any.
std::optional<Letter> first_letter_token(std::string_view text);

}  // namespace traceprobe
