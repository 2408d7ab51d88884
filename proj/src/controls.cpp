#include "traceprobe/controls.hpp"

#include <algorithm>

#include "traceprobe/util.hpp"

namespace traceprobe {

namespace {

std::vector<int> allowed_ids(const Tokenizer& tokenizer) {
    std::vector<int> ids;
    ids.reserve(static_cast<size_t>(tokenizer.vocab_size()));
    for (int id = 0; id < tokenizer.vocab_size(); ++id) {
        if (!tokenizer.is_special(id)) ids.push_back(id);
    }
    return ids;
}

TraceSlice finish_slice(std::string item_id, std::string model_id, int decile,
                        Condition condition, std::span<const int> ids,
                        const Tokenizer& tokenizer, uint64_t seed) {
    TraceSlice slice;
    slice.item_id = std::move(item_id);
    slice.model_id = std::move(model_id);
    slice.decile = decile;
    slice.condition = condition;
    slice.token_len = static_cast<int>(ids.size());
    slice.seed = seed;
    if (!ids.empty()) {
        auto decoded = tokenizer.decode(ids);
        slice.text = std::move(decoded.text);
        slice.lossy_decode = decoded.lossy;
    }
    return slice;
}

TraceSlice random_control_from_ids(const std::string& item_id, const std::string& model_id,
                                   int decile, int target_len,
                                   const std::vector<int>& allowed,
                                   const Tokenizer& tokenizer, uint64_t seed) {
    if (allowed.empty()) {
        throw std::runtime_error("random control: vocabulary has no non-special tokens");
    }
    Rng rng(seed);
    std::vector<int> ids(static_cast<size_t>(target_len));
    for (auto& id : ids) id = allowed[rng.below(allowed.size())];
    return finish_slice(item_id, model_id, decile, Condition::random, ids, tokenizer, seed);
}

struct Corpus {
    const std::vector<ReasoningTrace>* traces;
    std::vector<std::vector<int>> ids;  // encode(trace.text), aligned with traces
};

TraceSlice swap_control_from_corpus(const std::string& item_id, const std::string& model_id,
                                    int decile, const Corpus& corpus, int target_len,
                                    const Tokenizer& tokenizer, uint64_t seed) {
    if (corpus.traces->empty()) throw std::runtime_error("swap control: empty corpus");
    std::vector<size_t> eligible;
    std::vector<size_t> others;
    for (size_t j = 0; j < corpus.traces->size(); ++j) {
        if ((*corpus.traces)[j].item_id == item_id) continue;
        others.push_back(j);
        if (static_cast<int>(corpus.ids[j].size()) >= target_len) eligible.push_back(j);
    }
    if (others.empty()) {
        throw std::runtime_error("swap control: no donor other than " + item_id);
    }

    Rng rng(seed);
    TraceSlice slice;
    if (!eligible.empty()) {
        const size_t donor = eligible[rng.below(eligible.size())];
        const auto& donor_ids = corpus.ids[donor];
        slice = finish_slice(item_id, model_id, decile, Condition::swap,
                             std::span<const int>(donor_ids.data(),
                                                  static_cast<size_t>(target_len)),
                             tokenizer, seed);
        slice.donor_item_id = (*corpus.traces)[donor].item_id;
        return slice;
    }

    // No donor long enough: take the longest and cycle its tokens out to the
    // target length so the length-matching contract still holds.
    size_t longest = others.front();
    for (size_t j : others) {
        const size_t len_j = corpus.ids[j].size();
        const size_t len_best = corpus.ids[longest].size();
        if (len_j > len_best ||
            (len_j == len_best &&
             (*corpus.traces)[j].item_id < (*corpus.traces)[longest].item_id)) {
            longest = j;
        }
    }
    const auto& donor_ids = corpus.ids[longest];
    if (donor_ids.empty()) {
        throw std::runtime_error("swap control: every donor trace is empty");
    }
    std::vector<int> ids(static_cast<size_t>(target_len));
    for (size_t k = 0; k < ids.size(); ++k) ids[k] = donor_ids[k % donor_ids.size()];
    slice = finish_slice(item_id, model_id, decile, Condition::swap, ids, tokenizer, seed);
    slice.donor_item_id = (*corpus.traces)[longest].item_id;
    slice.swap_padded = true;
    return slice;
}

TraceSlice shuffle_control_from_ids(const TraceSlice& original, std::vector<int> ids,
                                    const Tokenizer& tokenizer, uint64_t seed) {
    Rng rng(seed);
    size_t start = 0;
    if (!ids.empty() && tokenizer.is_special(ids[0])) start = 1;  // pinned marker
    // Fisher-Yates over ids[start..].
    for (size_t i = ids.size(); i > start + 1; --i) {
        const size_t j = start + static_cast<size_t>(rng.below(i - start));
        std::swap(ids[i - 1], ids[j]);
    }
    TraceSlice slice = finish_slice(original.item_id, original.model_id, original.decile,
                                    Condition::shuffle, ids, tokenizer, seed);
    return slice;
}

}  // namespace

TraceSlice make_random_control(const std::string& item_id, const std::string& model_id,
                               int decile, int target_len, const Tokenizer& tokenizer,
                               uint64_t seed) {
    if (target_len < 0) throw std::runtime_error("random control: negative target length");
    return random_control_from_ids(item_id, model_id, decile, target_len,
                                   allowed_ids(tokenizer), tokenizer, seed);
}

TraceSlice make_swap_control(const std::string& item_id, const std::string& model_id, int decile,
                             const std::vector<ReasoningTrace>& corpus, int target_len,
                             const Tokenizer& tokenizer, uint64_t seed) {
    Corpus indexed;
    indexed.traces = &corpus;
    indexed.ids.reserve(corpus.size());
    for (const auto& trace : corpus) indexed.ids.push_back(tokenizer.encode(trace.text));
    return swap_control_from_corpus(item_id, model_id, decile, indexed, target_len, tokenizer,
                                    seed);
}

TraceSlice make_shuffle_control(const TraceSlice& slice, const Tokenizer& tokenizer,
                                uint64_t seed) {
    if (slice.condition != Condition::original) {
        throw std::runtime_error("shuffle control requires an original slice");
    }
    return shuffle_control_from_ids(slice, tokenizer.encode(slice.text), tokenizer, seed);
}

namespace {

struct SweepLayout {
    std::vector<Condition> conditions;
    std::vector<int> deciles;
    size_t cells_per_trace = 0;

    size_t cell_count(size_t n_traces) const { return n_traces * cells_per_trace; }
};

SweepLayout make_layout(const SweepPlan& plan) {
    SweepLayout layout;
    layout.deciles = plan.deciles;
    std::sort(layout.deciles.begin(), layout.deciles.end());
    layout.deciles.erase(std::unique(layout.deciles.begin(), layout.deciles.end()),
                         layout.deciles.end());
    for (int d : layout.deciles) {
        if (!is_valid_decile(d)) {
            throw std::runtime_error("decile outside the grid: " + std::to_string(d));
        }
    }
    layout.conditions = plan.conditions;
    for (int d : layout.deciles) {
        for (Condition c : layout.conditions) {
            if (c == Condition::original || d != 0) ++layout.cells_per_trace;
            (void)c;
        }
    }
    return layout;
}

template <bool Parallel>
std::vector<TraceSlice> build_slice_sweep_impl(const std::vector<ReasoningTrace>& traces,
                                               const Tokenizer& tokenizer,
                                               const SweepPlan& plan) {
    const SweepLayout layout = make_layout(plan);
    const size_t n = traces.size();

    Corpus corpus;
    corpus.traces = &traces;
    corpus.ids.resize(n);
    const bool needs_corpus =
        std::find(layout.conditions.begin(), layout.conditions.end(), Condition::swap) !=
        layout.conditions.end();

    const std::vector<int> allowed = allowed_ids(tokenizer);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (Parallel)
#endif
    for (size_t i = 0; i < n; ++i) {
        corpus.ids[i] = tokenizer.encode(traces[i].text);
    }

    std::vector<TraceSlice> out(layout.cell_count(n));

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (Parallel)
#endif
    for (size_t i = 0; i < n; ++i) {
        const ReasoningTrace& trace = traces[i];
        const auto& ids = corpus.ids[i];
        const int total = static_cast<int>(ids.size());
        size_t cell = i * layout.cells_per_trace;
        for (int d : layout.deciles) {
            const int target_len = decile_token_count(d, total);
            TraceSlice original;
            bool have_original = false;
            auto make_original = [&]() -> const TraceSlice& {
                if (!have_original) {
                    original = finish_slice(trace.item_id, trace.model_id, d,
                                            Condition::original,
                                            std::span<const int>(ids.data(),
                                                                 static_cast<size_t>(target_len)),
                                            tokenizer, 0);
                    original.seed.reset();
                    have_original = true;
                }
                return original;
            };
            for (Condition c : layout.conditions) {
                if (c != Condition::original && d == 0) continue;
                const uint64_t seed = cell_seed(plan.run_seed, trace.item_id, d, to_string(c));
                switch (c) {
                    case Condition::original:
                        out[cell++] = make_original();
                        break;
                    case Condition::random:
                        out[cell++] = random_control_from_ids(trace.item_id, trace.model_id, d,
                                                              target_len, allowed, tokenizer,
                                                              seed);
                        break;
                    case Condition::swap:
                        if (needs_corpus) {
                            out[cell++] =
                                swap_control_from_corpus(trace.item_id, trace.model_id, d,
                                                         corpus, target_len, tokenizer, seed);
                        }
                        break;
                    case Condition::shuffle: {
                        std::vector<int> prefix(ids.begin(),
                                                ids.begin() + target_len);
                        out[cell++] =
                            shuffle_control_from_ids(make_original(), std::move(prefix),
                                                     tokenizer, seed);
                        break;
                    }
                }
            }
        }
    }
    return out;
}

}  // namespace

std::vector<TraceSlice> build_slice_sweep_serial(const std::vector<ReasoningTrace>& traces,
                                                 const Tokenizer& tokenizer,
                                                 const SweepPlan& plan) {
    return build_slice_sweep_impl<false>(traces, tokenizer, plan);
}

std::vector<TraceSlice> build_slice_sweep_parallel(const std::vector<ReasoningTrace>& traces,
                                                   const Tokenizer& tokenizer,
                                                   const SweepPlan& plan) {
    return build_slice_sweep_impl<true>(traces, tokenizer, plan);
}

}  // namespace traceprobe
