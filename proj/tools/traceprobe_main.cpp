#include <iostream>

#include "CLI11.hpp"
#include "traceprobe/harness.hpp"
#include "traceprobe/util.hpp"

namespace {

using traceprobe::CliOverrides;
using traceprobe::Harness;
using traceprobe::RunConfig;

struct CommonArgs {
    std::string config_path;
    int runs = 0;
    std::string deciles;
    std::string conditions;
    std::string suffix;
    std::string mock;
    std::string run_id;
    std::string out_dir;
    bool resume = false;
    bool allow_mixed_digest = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "Run configuration file")->required();
    cmd->add_option("--runs", args.runs, "Number of runs (seeds 1..N)");
    cmd->add_option("--deciles", args.deciles, "Comma-separated decile grid, e.g. 0,10,20");
    cmd->add_option("--conditions", args.conditions,
                    "Comma-separated conditions: original,random,swap,shuffle");
    cmd->add_option("--suffix", args.suffix, "Early-stopping suffix: full or minimal");
    cmd->add_option("--mock", args.mock, "Mock backend fixture (overrides config)");
    cmd->add_option("--run-id", args.run_id, "Run directory name under the output dir");
    cmd->add_option("--out-dir", args.out_dir, "Output directory (overrides config)");
    cmd->add_flag("--resume", args.resume, "Skip records already present in the run dir");
    cmd->add_flag("--allow-mixed-digest", args.allow_mixed_digest,
                  "Let analyze accept inputs with differing config digests");
}

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> values;
    size_t start = 0;
    while (start <= csv.size()) {
        const size_t comma = csv.find(',', start);
        const std::string part = csv.substr(start, comma - start);
        if (!part.empty()) values.push_back(std::stoi(part));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return values;
}

Harness make_harness(const CommonArgs& args) {
    RunConfig config = traceprobe::load_run_config(args.config_path);
    CliOverrides overrides;
    if (args.runs > 0) overrides.runs = args.runs;
    if (!args.deciles.empty()) overrides.deciles = parse_int_list(args.deciles);
    if (!args.conditions.empty()) {
        std::vector<traceprobe::Condition> conditions;
        size_t start = 0;
        while (start <= args.conditions.size()) {
            const size_t comma = args.conditions.find(',', start);
            const std::string part = args.conditions.substr(start, comma - start);
            if (!part.empty()) conditions.push_back(traceprobe::condition_from_string(part));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        overrides.conditions = conditions;
    }
    if (!args.suffix.empty()) overrides.suffix = traceprobe::suffix_kind_from_string(args.suffix);
    if (!args.mock.empty()) overrides.mock_fixture = args.mock;
    if (!args.run_id.empty()) overrides.run_id = args.run_id;
    if (!args.out_dir.empty()) overrides.output_dir = args.out_dir;
    overrides.resume = args.resume;
    overrides.allow_mixed_digest = args.allow_mixed_digest;
    traceprobe::apply_overrides(config, overrides);
    return Harness(std::move(config));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reasoning-trace trajectory probing toolkit"};
    app.require_subcommand(1);

    CommonArgs generate_args, probe_args, control_args, transfer_args, analyze_args, report_args;
    std::vector<std::string> analyze_records;

    add_common(app.add_subcommand("generate", "Generate full reasoning traces"), generate_args);
    add_common(app.add_subcommand("probe", "Probe answer distributions over the decile grid"),
               probe_args);
    add_common(app.add_subcommand("control", "Materialize control slices"), control_args);
    add_common(app.add_subcommand("transfer", "Run weak-to-strong transfer probes"),
               transfer_args);
    auto* analyze = app.add_subcommand("analyze", "Compute metric tables from record files");
    add_common(analyze, analyze_args);
    analyze->add_option("--records", analyze_records, "Records directory (default: run dir)");
    add_common(app.add_subcommand("report", "Print the metric summary"), report_args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("generate")) return make_harness(generate_args).cmd_generate();
        if (app.got_subcommand("probe")) return make_harness(probe_args).cmd_probe();
        if (app.got_subcommand("control")) return make_harness(control_args).cmd_control();
        if (app.got_subcommand("transfer")) return make_harness(transfer_args).cmd_transfer();
        if (app.got_subcommand("analyze")) {
            return make_harness(analyze_args).cmd_analyze(analyze_records);
        }
        if (app.got_subcommand("report")) return make_harness(report_args).cmd_report();
    } catch (const traceprobe::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
