#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "traceprobe/core.hpp"
#include "traceprobe/records.hpp"
#include "traceprobe/stats.hpp"

namespace traceprobe {

/// A per-decile metric. Values aggregate items within a run first, then
/// macro-average across runs; `n` counts the records behind each value.
struct DecileSeries {
    std::string metric_name;
    std::map<int, double> values;
    std::map<int, int64_t> n;
    std::vector<uint64_t> run_ids;
    std::map<int, std::string> notes;  // exclusions and omissions, per decile
};

struct TrajectoryTally {
    int64_t stable_correct = 0;
    int64_t gained = 0;
    int64_t lost = 0;
    int64_t stable_wrong = 0;

    int64_t pairs() const { return stable_correct + gained + lost + stable_wrong; }
};

struct BoxedStats {
    int64_t n_boxed = 0;
    int64_t n_non = 0;
    double p_boxed = 0.0;
    std::optional<double> p_a_boxed;  // absent when the group is empty
    std::optional<double> acc_boxed;
    std::optional<double> p_a_non;
    std::optional<double> acc_non;
};

struct QuintileBin {
    double accuracy = 0.0;
    int64_t n = 0;
    int min_len = 0;
    int max_len = 0;
};

struct QuintileStats {
    std::array<QuintileBin, 5> bins;
    bool tied_lengths = false;  // a length tie straddles a bin boundary
};

struct RescueStats {
    std::map<int, double> rescue_by_decile;
    std::map<int, double> anchor_by_decile;
    std::map<int, int64_t> n_by_decile;
    double rescue_pooled = 0.0;
    double anchor_pooled = 0.0;
    int64_t n_pooled = 0;
    int64_t skipped_ineligible = 0;  // transfer records without a wrong source anchor
};

// Every function below is a pure, deterministic map from its record inputs;
// records are re-sorted internally, so permuting the input changes nothing.

DecileSeries accuracy_by_decile(const std::vector<ProbeRecord>& records);

/// Probability assigned at each decile to the answer the model commits to
/// at decile 100. Items without a decile-100 anchor are excluded and
/// counted; tied anchors are excluded from the decile-100 point only.
DecileSeries decision_commitment(const std::vector<ProbeRecord>& records);

DecileSeries non_choice_probability(const std::vector<ProbeRecord>& records);

/// Fraction of items whose argmax changed from the previous grid decile.
DecileSeries flip_rate(const std::vector<ProbeRecord>& records);

/// Outcome categories between the decile-0 and decile-100 records of each
/// (item, run) pair: correct->correct = stable_correct, wrong->correct =
/// gained, correct->wrong = lost, wrong->wrong = stable_wrong.
TrajectoryTally trajectory_categories(const std::vector<ProbeRecord>& records);

/// Mean argmax confidence on correct records minus mean on incorrect ones.
DecileSeries discrimination_gap(const std::vector<ProbeRecord>& records);

/// Splits full traces by presence of the literal "\boxed{" substring and
/// reports per-group first-choice bias and accuracy from the decile-100
/// records. Empty groups report absent values.
BoxedStats boxed_analysis(const std::vector<ReasoningTrace>& traces,
                          const std::vector<ProbeRecord>& records_at_100);

/// Accuracy per trace-length quintile; rows rank by token length ascending
/// with item-id tiebreak, remainder rows go to earlier bins.
QuintileStats length_quintile_accuracy(const std::vector<ReasoningTrace>& traces,
                                       const std::vector<ProbeRecord>& records_at_100);

/// Rescue: target answers correctly given an incorrect source answer.
/// Anchor: target repeats the source's specific wrong answer. Mutually
/// exclusive per record; per-decile and pooled values are record-level
/// proportions over the eligible set.
RescueStats rescue_and_anchor(const std::vector<ProbeRecord>& transfer_records,
                              const std::vector<ProbeRecord>& source_records, ProbeMode mode);

// ---------------------------------------------------------------------------
// Emission. The same writer serves the pipeline and test oracles, so two
// MetricsBundles serialize identically iff they agree bit-for-bit.

struct SeriesGroup {
    std::string model_id;
    Condition condition = Condition::original;
    SuffixKind suffix = SuffixKind::full;
    std::vector<DecileSeries> series;
};

struct SignificanceRow {
    std::string model_id;
    std::string comparison;
    double delta_pp = 0.0;
    int64_t n_pairs = 0;
    TestResult test;
};

struct RescueReport {
    std::string source_model_id;
    std::string target_model_id;
    RescueStats base;
    RescueStats free_mode;
    TestResult rescue_delta_test;  // one-sided, free better
    TestResult anchor_delta_test;  // one-sided, free lower
};

struct MetricsBundle {
    std::vector<SeriesGroup> groups;
    std::map<std::string, TrajectoryTally> trajectories;
    std::map<std::string, BoxedStats> boxed;
    std::map<std::string, QuintileStats> quintiles;
    std::vector<SignificanceRow> significance;
    std::vector<RescueReport> rescue;
    std::vector<std::string> validation_notes;
};

/// Writes the metric tables: one series file per group, per-model
/// trajectory/boxed/quintile files, significance and rescue tables, a flat
/// CSV of every series point, and a human-readable summary.
void write_metrics(const std::filesystem::path& dir, const MetricsBundle& bundle,
                   const FileHeader& header);

}  // namespace traceprobe
