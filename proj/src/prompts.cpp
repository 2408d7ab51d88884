#include "traceprobe/prompts.hpp"

#include <array>
#include <cctype>

#include "traceprobe/util.hpp"

namespace traceprobe {

const char* const kDefaultSystemInstruction =
    "Solve the following problem. Please make sure that your response only consists of a "
    "single letter corresponding to the correct answer choice. Do not include anything else "
    "in your final response.";

namespace {

constexpr const char* kThinkOpen = "<think>";
constexpr const char* kThinkClose = "</think>";
constexpr const char* kImStart = "<|im_start|>";
constexpr const char* kImEnd = "<|im_end|>";
constexpr const char* kAnalysisOpen = "<|channel|>analysis<|message|>";
constexpr const char* kFinalOpen = "<|channel|>final<|message|>";
constexpr const char* kChannelEnd = "<|end|>";
constexpr const char* kChannelStart = "<|start|>";

const char* kLimitedTimeSentence =
    "Considering the limited time by the user, I have to give the solution based on the "
    "thinking directly now.";

}  // namespace

SuffixVariant make_suffix(SuffixKind kind) {
    SuffixVariant suffix;
    suffix.kind = kind;
    switch (kind) {
        case SuffixKind::full:
            suffix.text = std::string("\n\n") + kLimitedTimeSentence + "\n</think>\n\n";
            break;
        case SuffixKind::minimal:
            suffix.text = "\n</think>\n\n";
            break;
        case SuffixKind::channel_close:
            suffix.text = std::string(kChannelEnd) + kChannelStart + "assistant" + kFinalOpen;
            break;
    }
    return suffix;
}

SuffixVariant suffix_for_family(Family family, SuffixKind configured) {
    if (family == Family::channel) return make_suffix(SuffixKind::channel_close);
    if (configured == SuffixKind::channel_close) {
        throw ConfigError("channel_close suffix does not apply to the think-tag family");
    }
    return make_suffix(configured);
}

std::string render_options_block(const BenchmarkItem& item) {
    if (item.options.size() > 26) {
        throw std::runtime_error("item " + item.item_id + ": " +
                                 std::to_string(item.options.size()) +
                                 " options exceed the available letters");
    }
    std::string block;
    for (size_t i = 0; i < item.options.size(); ++i) {
        if (i > 0) block += '\n';
        block += static_cast<char>('A' + i);
        block += ". ";
        block += item.options[i];
    }
    return block;
}

std::string build_generation_prompt(const PromptTemplate& tmpl, const BenchmarkItem& item) {
    item.validate();
    const std::string options = render_options_block(item);
    std::string prompt;
    if (tmpl.family == Family::think_tag) {
        prompt += kImStart;
        prompt += "system\n";
        prompt += tmpl.system_instruction;
        prompt += kImEnd;
        prompt += '\n';
        prompt += kImStart;
        prompt += "user\n";
        prompt += item.question_text;
        prompt += "\n\n";
        prompt += options;
        prompt += kImEnd;
        prompt += '\n';
        prompt += kImStart;
        prompt += "assistant\n";
    } else {
        prompt += kChannelStart;
        prompt += "system<|message|>You are ChatGPT, a large language model trained by OpenAI.\n";
        prompt += "Knowledge cutoff: " + tmpl.knowledge_cutoff + "\n";
        prompt += "Current date: " + tmpl.current_date + "\n\n";
        prompt += "Reasoning: " + tmpl.reasoning_effort + "\n\n";
        prompt += "# Valid channels: analysis, commentary, final. Channel must be included "
                  "for every message.";
        prompt += kChannelEnd;
        prompt += kChannelStart;
        prompt += "developer<|message|># Instructions\n\n";
        prompt += tmpl.system_instruction;
        prompt += "\n\n";
        prompt += kChannelEnd;
        prompt += kChannelStart;
        prompt += "user<|message|>";
        prompt += item.question_text;
        prompt += "\n\n";
        prompt += options;
        prompt += kChannelEnd;
        prompt += kChannelStart;
        prompt += "assistant";
    }
    return prompt;
}

std::string build_baseline_prompt(const PromptTemplate& tmpl, const BenchmarkItem& item) {
    std::string prompt = build_generation_prompt(tmpl, item);
    if (tmpl.family == Family::think_tag) {
        prompt += std::string(kThinkOpen) + "\n\n" + kThinkClose + "\n\n";
    } else {
        prompt += kAnalysisOpen;
        prompt += kChannelEnd;
        prompt += kChannelStart;
        prompt += "assistant";
        prompt += kFinalOpen;
    }
    return prompt;
}

std::string build_probe_prompt(const PromptTemplate& tmpl, const BenchmarkItem& item,
                               const TraceSlice& slice, const SuffixVariant& suffix) {
    if (!is_valid_decile(slice.decile)) {
        throw std::runtime_error("slice decile outside the grid: " + std::to_string(slice.decile));
    }
    if (slice.decile == 0) return build_baseline_prompt(tmpl, item);

    std::string prompt = build_generation_prompt(tmpl, item);
    if (tmpl.family == Family::think_tag) {
        if (suffix.kind == SuffixKind::channel_close) {
            throw std::runtime_error("channel_close suffix on a think-tag prompt");
        }
        prompt += kThinkOpen;
        prompt += '\n';
        prompt += slice.text;
        prompt += suffix.text;
    } else {
        prompt += kAnalysisOpen;
        prompt += slice.text;
        prompt += make_suffix(SuffixKind::channel_close).text;
    }
    return prompt;
}

std::string build_continuation_prompt(const PromptTemplate& tmpl, const BenchmarkItem& item,
                                      const TraceSlice& slice) {
    std::string prompt = build_generation_prompt(tmpl, item);
    if (tmpl.family == Family::think_tag) {
        prompt += kThinkOpen;
        prompt += '\n';
        prompt += slice.text;
    } else {
        prompt += kAnalysisOpen;
        prompt += slice.text;
    }
    return prompt;
}

int check_context_budget(const std::string& prompt, const Tokenizer& tokenizer,
                         int context_length) {
    const int prompt_tokens = tokenizer.count_tokens(prompt);
    if (prompt_tokens + 1 > context_length) {
        throw PromptBudgetError(prompt_tokens, context_length);
    }
    return prompt_tokens;
}

std::optional<Letter> first_letter_token(std::string_view text) {
    size_t pos = 0;
    while (pos < text.size()) {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
        size_t end = pos;
        while (end < text.size() && !std::isspace(static_cast<unsigned char>(text[end]))) ++end;
        if (end > pos) {
            std::string_view token = text.substr(pos, end - pos);
            while (!token.empty() && (token.front() == '(' || token.front() == '[' ||
                                      token.front() == '{' || token.front() == '"' ||
                                      token.front() == '\'')) {
                token.remove_prefix(1);
            }
            while (!token.empty()) {
                const char c = token.back();
                if (c == '.' || c == ',' || c == ':' || c == ';' || c == ')' || c == ']' ||
                    c == '}' || c == '"' || c == '\'' || c == '!' || c == '?') {
                    token.remove_suffix(1);
                } else {
                    break;
                }
            }
            if (token.size() == 1 && token[0] >= 'A' && token[0] <= 'Z') return token[0];
        }
        pos = end;
    }
    return std::nullopt;
}

namespace {

// One framing newline on each side of a think trace belongs to the prompt
// format, not the trace.
std::string strip_think_padding(std::string_view body) {
    if (!body.empty() && body.front() == '\n') body.remove_prefix(1);
    if (!body.empty() && body.back() == '\n') body.remove_suffix(1);
    return std::string(body);
}

}  // namespace

ParsedGeneration parse_trace(Family family, const std::string& raw_generation) {
    ParsedGeneration result;
    if (family == Family::think_tag) {
        const size_t open = raw_generation.find(kThinkOpen);
        if (open == std::string::npos) {
            throw std::runtime_error("no reasoning segment: think opener not found");
        }
        const size_t body_start = open + std::string_view(kThinkOpen).size();
        const size_t close = raw_generation.find(kThinkClose, body_start);
        if (close == std::string::npos) {
            result.finish_reason = FinishReason::budget_exhausted;
            result.trace_text =
                strip_think_padding(std::string_view(raw_generation).substr(body_start));
            return result;
        }
        result.trace_text = strip_think_padding(
            std::string_view(raw_generation).substr(body_start, close - body_start));
        result.final_letter = first_letter_token(
            std::string_view(raw_generation).substr(close + std::string_view(kThinkClose).size()));
        return result;
    }

    const size_t open = raw_generation.find(kAnalysisOpen);
    if (open == std::string::npos) {
        throw std::runtime_error("no reasoning segment: analysis channel not found");
    }
    const size_t body_start = open + std::string_view(kAnalysisOpen).size();
    const size_t close = raw_generation.find(kChannelEnd, body_start);
    if (close == std::string::npos) {
        result.finish_reason = FinishReason::budget_exhausted;
        result.trace_text = raw_generation.substr(body_start);
        return result;
    }
    result.trace_text = raw_generation.substr(body_start, close - body_start);
    const size_t final_open = raw_generation.find(kFinalOpen, close);
    if (final_open != std::string::npos) {
        const size_t final_start = final_open + std::string_view(kFinalOpen).size();
        size_t final_end = raw_generation.find(kChannelEnd, final_start);
        if (final_end == std::string::npos) final_end = raw_generation.size();
        result.final_letter = first_letter_token(
            std::string_view(raw_generation).substr(final_start, final_end - final_start));
    }
    return result;
}

NormalizeResult normalize_tags(Family source, Family target, std::string text) {
    static const std::array<const char*, 4> kThinkTagMarkers = {kThinkOpen, kThinkClose, kImStart,
                                                                kImEnd};
    static const std::array<const char*, 5> kChannelMarkers = {
        kChannelEnd, kChannelStart, "<|channel|>", "<|message|>", "<|return|>"};

    NormalizeResult result;
    // Cross-family: the source's framing markers have no meaning in the
    // target format; the probe builder supplies the target framing.
    if (source != target) {
        if (source == Family::think_tag) {
            for (const char* marker : kThinkTagMarkers) {
                result.removed_markers += replace_all(text, marker, "");
            }
        } else {
            for (const char* marker : kChannelMarkers) {
                result.removed_markers += replace_all(text, marker, "");
            }
        }
    }
    // Markers that would prematurely terminate the target's reasoning frame.
    if (target == Family::think_tag) {
        result.removed_markers += replace_all(text, kThinkClose, "");
        result.removed_markers += replace_all(text, kImEnd, "");
        result.removed_markers += replace_all(text, kImStart, "");
    } else {
        for (const char* marker : kChannelMarkers) {
            result.removed_markers += replace_all(text, marker, "");
        }
    }
    result.text = std::move(text);
    return result;
}

}  // namespace traceprobe
