#pragma once

#include <set>
#include <span>
#include <string>
#include <vector>

#include "traceprobe/core.hpp"
#include "traceprobe/tokenizer.hpp"

namespace traceprobe {

struct ControlSpec {
    Condition kind = Condition::random;
    uint64_t seed = 0;
    std::set<int> excluded_token_ids;  // must be a subset of the tokenizer's specials
};

/// Length-matched sequence of tokens drawn uniformly from the vocabulary
/// minus special tokens.
TraceSlice make_random_control(const std::string& item_id, const std::string& model_id,
                               int decile, int target_len, const Tokenizer& tokenizer,
                               uint64_t seed);

/// The first target_len tokens of another item's trace. The donor is drawn
/// uniformly from items j != i whose trace is long enough; when none is,
/// the longest donor is cycle-padded and the slice flagged `swap_padded`.
TraceSlice make_swap_control(const std::string& item_id, const std::string& model_id, int decile,
                             const std::vector<ReasoningTrace>& corpus, int target_len,
                             const Tokenizer& tokenizer, uint64_t seed);

/// Uniform permutation of the original slice's tokens; the multiset is
/// preserved exactly. A leading special token (e.g. a think-start marker on
/// transferred text) is pinned in place.
TraceSlice make_shuffle_control(const TraceSlice& slice, const Tokenizer& tokenizer,
                                uint64_t seed);

// ---------------------------------------------------------------------------
// Sweep kernels. The serial and OpenMP variants produce identical output:
// every cell derives its RNG stream from cell_seed(run_seed, item, decile,
// condition), so thread scheduling cannot leak into the results. The serial
// form is the reference the parallel one is tested against.

struct SweepPlan {
    std::vector<int> deciles;          // ascending grid values
    std::vector<Condition> conditions; // any subset including original
    uint64_t run_seed = 0;
};

/// All (trace x decile x condition) slices in canonical order: traces in
/// input order, then deciles ascending, then conditions in plan order.
/// Original slices at decile 0 are included; controls skip decile 0.
std::vector<TraceSlice> build_slice_sweep_serial(const std::vector<ReasoningTrace>& traces,
                                                 const Tokenizer& tokenizer,
                                                 const SweepPlan& plan);
std::vector<TraceSlice> build_slice_sweep_parallel(const std::vector<ReasoningTrace>& traces,
                                                   const Tokenizer& tokenizer,
                                                   const SweepPlan& plan);

}  // namespace traceprobe
