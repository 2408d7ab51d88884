#include "traceprobe/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

namespace traceprobe {

namespace {

using RunItem = std::pair<uint64_t, std::string>;

std::vector<ProbeRecord> canonical_order(std::vector<ProbeRecord> records) {
    std::sort(records.begin(), records.end(), [](const ProbeRecord& a, const ProbeRecord& b) {
        if (a.run_seed != b.run_seed) return a.run_seed < b.run_seed;
        if (a.item_id != b.item_id) return a.item_id < b.item_id;
        if (a.decile != b.decile) return a.decile < b.decile;
        return a.idempotency_key() < b.idempotency_key();
    });
    return records;
}

double argmax_prob(const ProbeRecord& record) {
    const auto it = record.distribution.choice_probs.find(record.argmax_letter);
    return it == record.distribution.choice_probs.end() ? 0.0 : it->second;
}

// Accumulates per-(run, decile) sums and finishes with the macro mean:
// items within a run first, then across runs.
class MacroSeries {
public:
    void add(uint64_t run, int decile, double value) {
        auto& cell = cells_[decile][run];
        cell.first += value;
        cell.second += 1;
    }

    DecileSeries finish(std::string metric_name) const {
        DecileSeries series;
        series.metric_name = std::move(metric_name);
        std::set<uint64_t> runs;
        for (const auto& [decile, by_run] : cells_) {
            double run_mean_sum = 0.0;
            int64_t run_count = 0;
            int64_t records = 0;
            for (const auto& [run, cell] : by_run) {
                runs.insert(run);
                run_mean_sum += cell.first / static_cast<double>(cell.second);
                ++run_count;
                records += cell.second;
            }
            series.values[decile] = run_mean_sum / static_cast<double>(run_count);
            series.n[decile] = records;
        }
        series.run_ids.assign(runs.begin(), runs.end());
        return series;
    }

private:
    std::map<int, std::map<uint64_t, std::pair<double, int64_t>>> cells_;
};

}  // namespace

DecileSeries accuracy_by_decile(const std::vector<ProbeRecord>& records) {
    MacroSeries acc;
    for (const auto& record : canonical_order(records)) {
        acc.add(record.run_seed, record.decile, record.correct ? 1.0 : 0.0);
    }
    return acc.finish("accuracy");
}

DecileSeries decision_commitment(const std::vector<ProbeRecord>& records) {
    const auto sorted = canonical_order(records);
    std::map<RunItem, std::pair<Letter, bool>> anchors;  // letter, tied
    for (const auto& record : sorted) {
        if (record.decile == 100) {
            anchors[{record.run_seed, record.item_id}] = {record.argmax_letter,
                                                          record.argmax_tie};
        }
    }

    MacroSeries acc;
    std::set<RunItem> missing_anchor;
    int64_t tied_excluded = 0;
    for (const auto& record : sorted) {
        const auto it = anchors.find({record.run_seed, record.item_id});
        if (it == anchors.end()) {
            missing_anchor.insert({record.run_seed, record.item_id});
            continue;
        }
        const auto [anchor, tied] = it->second;
        if (record.decile == 100 && tied) {
            ++tied_excluded;
            continue;
        }
        const auto prob_it = record.distribution.choice_probs.find(anchor);
        const double p = prob_it == record.distribution.choice_probs.end() ? 0.0
                                                                           : prob_it->second;
        acc.add(record.run_seed, record.decile, p);
    }
    DecileSeries series = acc.finish("decision_commitment");
    if (!missing_anchor.empty()) {
        series.notes[0] = "excluded " + std::to_string(missing_anchor.size()) +
                          " item-run pair(s) without a decile-100 anchor";
    }
    if (tied_excluded > 0) {
        series.notes[100] =
            "excluded " + std::to_string(tied_excluded) + " tied anchor record(s)";
    }
    return series;
}

DecileSeries non_choice_probability(const std::vector<ProbeRecord>& records) {
    MacroSeries acc;
    for (const auto& record : canonical_order(records)) {
        acc.add(record.run_seed, record.decile, record.distribution.non_choice_mass);
    }
    return acc.finish("non_choice_probability");
}

DecileSeries flip_rate(const std::vector<ProbeRecord>& records) {
    const auto sorted = canonical_order(records);
    std::map<RunItem, std::map<int, Letter>> paths;
    for (const auto& record : sorted) {
        paths[{record.run_seed, record.item_id}][record.decile] = record.argmax_letter;
    }
    MacroSeries acc;
    for (const auto& [key, path] : paths) {
        for (const auto& [decile, letter] : path) {
            if (decile < 10) continue;
            const auto prev = path.find(decile - 10);
            if (prev == path.end()) continue;
            acc.add(key.first, decile, letter != prev->second ? 1.0 : 0.0);
        }
    }
    return acc.finish("flip_rate");
}

TrajectoryTally trajectory_categories(const std::vector<ProbeRecord>& records) {
    std::map<RunItem, std::pair<std::optional<bool>, std::optional<bool>>> endpoints;
    for (const auto& record : canonical_order(records)) {
        if (record.decile == 0) endpoints[{record.run_seed, record.item_id}].first = record.correct;
        if (record.decile == 100) {
            endpoints[{record.run_seed, record.item_id}].second = record.correct;
        }
    }
    TrajectoryTally tally;
    for (const auto& [key, pair] : endpoints) {
        (void)key;
        if (!pair.first || !pair.second) continue;
        const bool at0 = *pair.first;
        const bool at100 = *pair.second;
        if (at0 && at100) ++tally.stable_correct;
        else if (!at0 && at100) ++tally.gained;
        else if (at0 && !at100) ++tally.lost;
        else ++tally.stable_wrong;
    }
    return tally;
}

DecileSeries discrimination_gap(const std::vector<ProbeRecord>& records) {
    struct Split {
        double correct_sum = 0.0;
        int64_t correct_n = 0;
        double wrong_sum = 0.0;
        int64_t wrong_n = 0;
    };
    std::map<int, std::map<uint64_t, Split>> cells;
    for (const auto& record : canonical_order(records)) {
        auto& split = cells[record.decile][record.run_seed];
        if (record.correct) {
            split.correct_sum += argmax_prob(record);
            ++split.correct_n;
        } else {
            split.wrong_sum += argmax_prob(record);
            ++split.wrong_n;
        }
    }

    DecileSeries series;
    series.metric_name = "discrimination_gap";
    std::set<uint64_t> runs;
    for (const auto& [decile, by_run] : cells) {
        double sum = 0.0;
        int64_t contributing = 0;
        int64_t omitted = 0;
        int64_t n = 0;
        for (const auto& [run, split] : by_run) {
            runs.insert(run);
            if (split.correct_n == 0 || split.wrong_n == 0) {
                ++omitted;
                continue;
            }
            sum += split.correct_sum / static_cast<double>(split.correct_n) -
                   split.wrong_sum / static_cast<double>(split.wrong_n);
            ++contributing;
            n += split.correct_n + split.wrong_n;
        }
        if (contributing > 0) {
            series.values[decile] = sum / static_cast<double>(contributing);
            series.n[decile] = n;
        }
        if (omitted > 0) {
            series.notes[decile] = std::to_string(omitted) +
                                   " run(s) omitted: one-sided correctness at this decile";
        }
    }
    series.run_ids.assign(runs.begin(), runs.end());
    return series;
}

namespace {

struct JoinedRow {
    uint64_t run_seed;
    std::string item_id;
    int token_len;
    bool boxed;
    Letter argmax;
    bool correct;
};

std::vector<JoinedRow> join_traces_records(const std::vector<ReasoningTrace>& traces,
                                           const std::vector<ProbeRecord>& records_at_100) {
    std::map<RunItem, const ProbeRecord*> by_key;
    for (const auto& record : records_at_100) {
        if (record.decile != 100) continue;
        by_key[{record.run_seed, record.item_id}] = &record;
    }
    std::vector<JoinedRow> rows;
    for (const auto& trace : traces) {
        const auto it = by_key.find({trace.run_seed, trace.item_id});
        if (it == by_key.end()) continue;
        rows.push_back(JoinedRow{trace.run_seed, trace.item_id, trace.token_len,
                                 trace.text.find("\\boxed{") != std::string::npos,
                                 it->second->argmax_letter, it->second->correct});
    }
    std::sort(rows.begin(), rows.end(), [](const JoinedRow& a, const JoinedRow& b) {
        if (a.run_seed != b.run_seed) return a.run_seed < b.run_seed;
        return a.item_id < b.item_id;
    });
    return rows;
}

}  // namespace

BoxedStats boxed_analysis(const std::vector<ReasoningTrace>& traces,
                          const std::vector<ProbeRecord>& records_at_100) {
    const auto rows = join_traces_records(traces, records_at_100);
    BoxedStats stats;
    int64_t a_boxed = 0;
    int64_t a_non = 0;
    int64_t correct_boxed = 0;
    int64_t correct_non = 0;
    for (const auto& row : rows) {
        if (row.boxed) {
            ++stats.n_boxed;
            if (row.argmax == 'A') ++a_boxed;
            if (row.correct) ++correct_boxed;
        } else {
            ++stats.n_non;
            if (row.argmax == 'A') ++a_non;
            if (row.correct) ++correct_non;
        }
    }
    const int64_t total = stats.n_boxed + stats.n_non;
    if (total > 0) stats.p_boxed = static_cast<double>(stats.n_boxed) / static_cast<double>(total);
    if (stats.n_boxed > 0) {
        stats.p_a_boxed = static_cast<double>(a_boxed) / static_cast<double>(stats.n_boxed);
        stats.acc_boxed = static_cast<double>(correct_boxed) / static_cast<double>(stats.n_boxed);
    }
    if (stats.n_non > 0) {
        stats.p_a_non = static_cast<double>(a_non) / static_cast<double>(stats.n_non);
        stats.acc_non = static_cast<double>(correct_non) / static_cast<double>(stats.n_non);
    }
    return stats;
}

QuintileStats length_quintile_accuracy(const std::vector<ReasoningTrace>& traces,
                                       const std::vector<ProbeRecord>& records_at_100) {
    auto rows = join_traces_records(traces, records_at_100);
    if (rows.size() < 5) {
        throw std::runtime_error("length quintiles need at least 5 joined traces, got " +
                                 std::to_string(rows.size()));
    }
    std::sort(rows.begin(), rows.end(), [](const JoinedRow& a, const JoinedRow& b) {
        if (a.token_len != b.token_len) return a.token_len < b.token_len;
        if (a.item_id != b.item_id) return a.item_id < b.item_id;
        return a.run_seed < b.run_seed;
    });

    QuintileStats stats;
    const size_t total = rows.size();
    const size_t base = total / 5;
    const size_t remainder = total % 5;
    size_t cursor = 0;
    for (size_t bin = 0; bin < 5; ++bin) {
        const size_t size = base + (bin < remainder ? 1 : 0);
        QuintileBin& out = stats.bins[bin];
        out.n = static_cast<int64_t>(size);
        int64_t correct = 0;
        for (size_t k = 0; k < size; ++k) {
            const JoinedRow& row = rows[cursor + k];
            if (k == 0) out.min_len = row.token_len;
            out.max_len = row.token_len;
            if (row.correct) ++correct;
        }
        out.accuracy = size == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(size);
        if (bin > 0 && size > 0 && rows[cursor - 1].token_len == rows[cursor].token_len) {
            stats.tied_lengths = true;
        }
        cursor += size;
    }
    return stats;
}

RescueStats rescue_and_anchor(const std::vector<ProbeRecord>& transfer_records,
                              const std::vector<ProbeRecord>& source_records, ProbeMode mode) {
    if (mode != ProbeMode::transfer_base && mode != ProbeMode::transfer_free) {
        throw std::runtime_error("rescue_and_anchor expects a transfer mode");
    }
    struct SourceOutcome {
        Letter argmax;
        bool correct;
    };
    std::map<std::tuple<uint64_t, std::string, int>, SourceOutcome> sources;
    for (const auto& record : source_records) {
        if (record.mode != ProbeMode::standard || record.condition != Condition::original) {
            continue;
        }
        sources[{record.run_seed, record.item_id, record.decile}] =
            SourceOutcome{record.argmax_letter, record.correct};
    }

    RescueStats stats;
    std::map<int, std::pair<int64_t, int64_t>> decile_counts;  // rescued, anchored
    std::map<int, int64_t> decile_n;
    int64_t rescued_total = 0;
    int64_t anchored_total = 0;
    for (const auto& record : canonical_order(transfer_records)) {
        if (record.mode != mode) continue;
        const auto it = sources.find({record.run_seed, record.item_id, record.decile});
        if (it == sources.end() || it->second.correct) {
            ++stats.skipped_ineligible;
            continue;
        }
        const bool rescued = record.correct;
        const bool anchored = record.argmax_letter == it->second.argmax;
        ++decile_n[record.decile];
        if (rescued) {
            ++decile_counts[record.decile].first;
            ++rescued_total;
        }
        if (anchored) {
            ++decile_counts[record.decile].second;
            ++anchored_total;
        }
        ++stats.n_pooled;
    }
    for (const auto& [decile, n] : decile_n) {
        stats.n_by_decile[decile] = n;
        stats.rescue_by_decile[decile] =
            static_cast<double>(decile_counts[decile].first) / static_cast<double>(n);
        stats.anchor_by_decile[decile] =
            static_cast<double>(decile_counts[decile].second) / static_cast<double>(n);
    }
    if (stats.n_pooled > 0) {
        stats.rescue_pooled =
            static_cast<double>(rescued_total) / static_cast<double>(stats.n_pooled);
        stats.anchor_pooled =
            static_cast<double>(anchored_total) / static_cast<double>(stats.n_pooled);
    }
    return stats;
}

}  // namespace traceprobe
