#include "traceprobe/transfer.hpp"

#include <algorithm>
#include <set>

namespace traceprobe {

std::string to_string(TransferMode mode) {
    return mode == TransferMode::base ? "base" : "free";
}

TransferMode transfer_mode_from_string(const std::string& s) {
    if (s == "base") return TransferMode::base;
    if (s == "free") return TransferMode::free;
    throw std::runtime_error("unknown transfer mode: " + s);
}

std::vector<EligiblePair> select_rescue_candidates(const std::vector<ProbeRecord>& source_records,
                                                   const std::vector<int>& deciles) {
    std::set<int> wanted(deciles.begin(), deciles.end());
    std::set<int> seen;
    std::vector<EligiblePair> eligible;
    for (const auto& record : source_records) {
        if (record.mode != ProbeMode::standard || record.condition != Condition::original) {
            continue;
        }
        if (!wanted.count(record.decile)) continue;
        seen.insert(record.decile);
        if (record.correct) continue;
        eligible.push_back(EligiblePair{record.item_id, record.decile, record.run_seed,
                                        record.argmax_letter});
    }
    std::vector<int> missing;
    for (int d : wanted) {
        if (!seen.count(d)) missing.push_back(d);
    }
    if (!missing.empty()) {
        std::string gaps;
        for (int d : missing) {
            if (!gaps.empty()) gaps += ", ";
            gaps += std::to_string(d);
        }
        throw std::runtime_error("source records missing decile coverage: " + gaps);
    }
    return eligible;
}

TransferProbe render_transfer_probe(const PromptTemplate& target_template,
                                    Family source_family, const BenchmarkItem& item,
                                    const TraceSlice& source_slice, TransferMode mode,
                                    const SuffixVariant& target_suffix) {
    NormalizeResult normalized =
        normalize_tags(source_family, target_template.family, source_slice.text);
    TraceSlice injected = source_slice;
    injected.text = std::move(normalized.text);

    TransferProbe probe;
    probe.normalized_markers = normalized.removed_markers;
    if (mode == TransferMode::base) {
        probe.prompt = build_probe_prompt(target_template, item, injected, target_suffix);
    } else {
        probe.prompt = build_continuation_prompt(target_template, item, injected);
    }
    return probe;
}

int continuation_budget(int context_length, int prompt_token_len) {
    if (prompt_token_len > context_length - kContinuationSafetyMargin) {
        throw PromptBudgetError(prompt_token_len,
                                context_length - kContinuationSafetyMargin);
    }
    return context_length - prompt_token_len - kContinuationSafetyMargin;
}

ContinuationSplit split_continuation(Family target_family, const std::string& raw_continuation) {
    const std::string close_marker =
        target_family == Family::think_tag ? "</think>" : "<|end|>";
    ContinuationSplit split;
    const size_t close = raw_continuation.find(close_marker);
    if (close == std::string::npos) {
        split.reasoning = raw_continuation;
        return split;
    }
    split.reasoning = raw_continuation.substr(0, close);
    split.closed_naturally = true;
    return split;
}

}  // namespace traceprobe
