#include <cstdio>
#include <fstream>

#include "traceprobe/analytics.hpp"
#include "traceprobe/util.hpp"

namespace traceprobe {

namespace {

std::string pct(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f%%", value * 100.0);
    return buf;
}

json to_json(const TestResult& test) {
    return json{{"method", to_string(test.method)}, {"statistic", test.statistic},
                {"p", test.p_value},               {"n01", test.n01},
                {"n10", test.n10},                 {"stars", to_string(test.stars)},
                {"alternative", to_string(test.alternative)}};
}

json series_meta_row(const DecileSeries& series) {
    json notes = json::object();
    for (const auto& [decile, note] : series.notes) notes[std::to_string(decile)] = note;
    return json{{"type", "series_meta"},
                {"metric", series.metric_name},
                {"runs", series.run_ids},
                {"notes", notes}};
}

std::string group_file_name(const SeriesGroup& group) {
    return "series__" + group.model_id + "__" + to_string(group.condition) + "__" +
           to_string(group.suffix) + ".jsonl";
}

void write_series_csv(const std::filesystem::path& path, const MetricsBundle& bundle) {
    std::ofstream csv(path, std::ios::binary | std::ios::trunc);
    csv << "metric,model,condition,suffix,decile,value,n\n";
    for (const auto& group : bundle.groups) {
        for (const auto& series : group.series) {
            for (const auto& [decile, value] : series.values) {
                csv << series.metric_name << ',' << group.model_id << ','
                    << to_string(group.condition) << ',' << to_string(group.suffix) << ','
                    << decile << ',' << json(value).dump() << ',' << series.n.at(decile)
                    << '\n';
            }
        }
    }
}

void write_summary(const std::filesystem::path& path, const MetricsBundle& bundle) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "METRIC SUMMARY\n==============\n";
    for (const auto& group : bundle.groups) {
        out << "\n[" << group.model_id << " | " << to_string(group.condition) << " | suffix="
            << to_string(group.suffix) << "]\n";
        for (const auto& series : group.series) {
            out << "  " << series.metric_name << ":";
            for (const auto& [decile, value] : series.values) {
                out << " d" << decile << "=" << pct(value);
            }
            out << "\n";
            for (const auto& [decile, note] : series.notes) {
                out << "    note(d" << decile << "): " << note << "\n";
            }
        }
    }
    for (const auto& [model, tally] : bundle.trajectories) {
        out << "\n[" << model << " | trajectories d0 -> d100 over " << tally.pairs()
            << " item-run pair(s)]\n";
        const double total = static_cast<double>(std::max<int64_t>(1, tally.pairs()));
        out << "  stable correct: " << tally.stable_correct << " ("
            << pct(static_cast<double>(tally.stable_correct) / total) << ")\n";
        out << "  gained:         " << tally.gained << " ("
            << pct(static_cast<double>(tally.gained) / total) << ")\n";
        out << "  lost:           " << tally.lost << " ("
            << pct(static_cast<double>(tally.lost) / total) << ")\n";
        out << "  stable wrong:   " << tally.stable_wrong << " ("
            << pct(static_cast<double>(tally.stable_wrong) / total) << ")\n";
    }
    for (const auto& [model, boxed] : bundle.boxed) {
        out << "\n[" << model << " | boxed-format diagnostics]\n";
        out << "  P(boxed) = " << pct(boxed.p_boxed) << " (" << boxed.n_boxed << "/"
            << boxed.n_boxed + boxed.n_non << ")\n";
        out << "  P(A|boxed) = " << (boxed.p_a_boxed ? pct(*boxed.p_a_boxed) : "-")
            << "  P(A|non) = " << (boxed.p_a_non ? pct(*boxed.p_a_non) : "-") << "\n";
        out << "  acc(boxed) = " << (boxed.acc_boxed ? pct(*boxed.acc_boxed) : "-")
            << "  acc(non) = " << (boxed.acc_non ? pct(*boxed.acc_non) : "-") << "\n";
    }
    for (const auto& [model, quintiles] : bundle.quintiles) {
        out << "\n[" << model << " | accuracy by trace-length quintile]\n  ";
        for (size_t i = 0; i < quintiles.bins.size(); ++i) {
            const auto& bin = quintiles.bins[i];
            out << "Q" << i + 1 << "=" << pct(bin.accuracy) << " (n=" << bin.n << ", len "
                << bin.min_len << ".." << bin.max_len << ") ";
        }
        out << (quintiles.tied_lengths ? "[tied lengths at bin boundary]" : "") << "\n";
    }
    if (!bundle.significance.empty()) {
        out << "\n[significance]\n";
        for (const auto& row : bundle.significance) {
            char line[256];
            std::snprintf(line, sizeof(line), "  %s %s: %+.1fpp%s (p=%.5g, %s, n=%lld)\n",
                          row.model_id.c_str(), row.comparison.c_str(), row.delta_pp,
                          to_string(row.test.stars) == "ns" ? ""
                                                            : to_string(row.test.stars).c_str(),
                          row.test.p_value, to_string(row.test.method).c_str(),
                          static_cast<long long>(row.n_pairs));
            out << line;
        }
    }
    for (const auto& report : bundle.rescue) {
        out << "\n[transfer " << report.source_model_id << " -> " << report.target_model_id
            << " | n=" << report.base.n_pooled << "]\n";
        out << "  rescue: base " << pct(report.base.rescue_pooled) << ", free "
            << pct(report.free_mode.rescue_pooled) << " (delta "
            << pct(report.free_mode.rescue_pooled - report.base.rescue_pooled) << ", p="
            << json(report.rescue_delta_test.p_value).dump() << " "
            << to_string(report.rescue_delta_test.stars) << ")\n";
        out << "  anchor: base " << pct(report.base.anchor_pooled) << ", free "
            << pct(report.free_mode.anchor_pooled) << " (delta "
            << pct(report.free_mode.anchor_pooled - report.base.anchor_pooled) << ", p="
            << json(report.anchor_delta_test.p_value).dump() << " "
            << to_string(report.anchor_delta_test.stars) << ")\n";
    }
    if (!bundle.validation_notes.empty()) {
        out << "\n[validation]\n";
        for (const auto& note : bundle.validation_notes) out << "  " << note << "\n";
    }
}

json rescue_stats_rows(const RescueStats& stats, const std::string& mode) {
    json rows = json::array();
    for (const auto& [decile, n] : stats.n_by_decile) {
        rows.push_back(json{{"type", "rescue_point"},
                            {"mode", mode},
                            {"decile", decile},
                            {"rescue", stats.rescue_by_decile.at(decile)},
                            {"anchor", stats.anchor_by_decile.at(decile)},
                            {"n", n}});
    }
    rows.push_back(json{{"type", "rescue_point"},
                        {"mode", mode},
                        {"decile", "pooled"},
                        {"rescue", stats.rescue_pooled},
                        {"anchor", stats.anchor_pooled},
                        {"n", stats.n_pooled}});
    return rows;
}

}  // namespace

void write_metrics(const std::filesystem::path& dir, const MetricsBundle& bundle,
                   const FileHeader& header) {
    std::filesystem::create_directories(dir);
    FileHeader metrics_header = header;
    metrics_header.kind = "metrics";

    for (const auto& group : bundle.groups) {
        JsonlWriter writer(dir / group_file_name(group), metrics_header);
        for (const auto& series : group.series) {
            writer.write(series_meta_row(series));
            for (const auto& [decile, value] : series.values) {
                json row{{"type", "series_point"},
                         {"metric", series.metric_name},
                         {"decile", decile},
                         {"value", value},
                         {"n", series.n.at(decile)}};
                const auto note = series.notes.find(decile);
                if (note != series.notes.end()) row["note"] = note->second;
                writer.write(row);
            }
        }
    }

    for (const auto& [model, tally] : bundle.trajectories) {
        JsonlWriter writer(dir / ("trajectory__" + model + ".jsonl"), metrics_header);
        writer.write(json{{"type", "trajectory"},
                          {"stable_correct", tally.stable_correct},
                          {"gained", tally.gained},
                          {"lost", tally.lost},
                          {"stable_wrong", tally.stable_wrong},
                          {"pairs", tally.pairs()}});
    }

    for (const auto& [model, boxed] : bundle.boxed) {
        JsonlWriter writer(dir / ("boxed__" + model + ".jsonl"), metrics_header);
        json row{{"type", "boxed"},
                 {"p_boxed", boxed.p_boxed},
                 {"n_boxed", boxed.n_boxed},
                 {"n_non", boxed.n_non}};
        if (boxed.p_a_boxed) row["p_a_boxed"] = *boxed.p_a_boxed;
        if (boxed.acc_boxed) row["acc_boxed"] = *boxed.acc_boxed;
        if (boxed.p_a_non) row["p_a_non"] = *boxed.p_a_non;
        if (boxed.acc_non) row["acc_non"] = *boxed.acc_non;
        writer.write(row);
    }

    for (const auto& [model, quintiles] : bundle.quintiles) {
        JsonlWriter writer(dir / ("quintiles__" + model + ".jsonl"), metrics_header);
        for (size_t i = 0; i < quintiles.bins.size(); ++i) {
            const auto& bin = quintiles.bins[i];
            writer.write(json{{"type", "quintile"},
                              {"index", i},
                              {"accuracy", bin.accuracy},
                              {"n", bin.n},
                              {"min_len", bin.min_len},
                              {"max_len", bin.max_len},
                              {"tied_lengths", quintiles.tied_lengths}});
        }
    }

    if (!bundle.significance.empty()) {
        JsonlWriter writer(dir / "significance.jsonl", metrics_header);
        for (const auto& row : bundle.significance) {
            writer.write(json{{"type", "mcnemar"},
                              {"model", row.model_id},
                              {"comparison", row.comparison},
                              {"delta_pp", row.delta_pp},
                              {"n_pairs", row.n_pairs},
                              {"test", to_json(row.test)}});
        }
    }

    for (const auto& report : bundle.rescue) {
        JsonlWriter writer(
            dir / ("rescue__" + report.source_model_id + "__" + report.target_model_id + ".jsonl"),
            metrics_header);
        for (const auto& row : rescue_stats_rows(report.base, "base")) writer.write(row);
        for (const auto& row : rescue_stats_rows(report.free_mode, "free")) writer.write(row);
        writer.write(json{{"type", "rescue_test"},
                          {"metric", "rescue"},
                          {"delta_pp",
                           (report.free_mode.rescue_pooled - report.base.rescue_pooled) * 100.0},
                          {"test", to_json(report.rescue_delta_test)}});
        writer.write(json{{"type", "rescue_test"},
                          {"metric", "anchor"},
                          {"delta_pp",
                           (report.free_mode.anchor_pooled - report.base.anchor_pooled) * 100.0},
                          {"test", to_json(report.anchor_delta_test)}});
    }

    write_series_csv(dir / "series.csv", bundle);
    write_summary(dir / "summary.txt", bundle);
}

}  // namespace traceprobe
