// fragrate: rate functions, scale functions, and Monte Carlo experiments for
// conservative homogeneous fragmentations.
//
//   fragrate rates    --config cfg   analytic table {v, Upsilon_v, C(v)} + constants
//   fragrate scale    --config cfg   scale-function grid + confinement summary
//   fragrate simulate --config cfg   raw fragmentation replicas, CSV + aggregates
//   fragrate verify   --config cfg   run one experiment, pass/fail exit status
//   fragrate report   --records ...  merge experiment records into a summary
//
// Exit codes: 0 all checks pass, 1 an acceptance check failed, 2 bad
// configuration or runtime error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fragrate/experiment.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "experiment config file")->required();
    cmd->add_option("--seed", o.seed, "override the config seed")
        ->each([&](const std::string&) { o.seed_set = true; });
    cmd->add_option("--out", o.out_dir, "directory for CSV/JSON outputs");
}

fragrate::ExperimentConfig load_config(const CommonOpts& o,
                                       const std::string& required_kind = "") {
    auto cfg = fragrate::ExperimentConfig::from_file(o.config_path);
    if (!required_kind.empty() && cfg.kind != required_kind) {
        throw fragrate::ConfigError("this subcommand expects kind = " + required_kind +
                                    ", config has '" + cfg.kind + "'");
    }
    if (o.seed_set) cfg.seed = o.seed;
    if (!o.out_dir.empty()) {
        std::filesystem::create_directories(o.out_dir);
        cfg.csv_path = o.out_dir + "/" + cfg.kind + ".csv";
        cfg.json_path = o.out_dir + "/" + cfg.kind + ".json";
    }
    return cfg;
}

int run_and_print(const fragrate::ExperimentConfig& cfg) {
    const auto rec = fragrate::run(cfg);
    std::cout << rec.to_json().dump(2) << "\n";
    return rec.pass ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"rates of presence in conservative homogeneous fragmentations"};
    app.require_subcommand(1);

    CommonOpts rates_o, scale_o, sim_o, verify_o;
    auto* rates_cmd = app.add_subcommand("rates", "analytic rate table");
    add_common(rates_cmd, rates_o);
    auto* scale_cmd = app.add_subcommand("scale", "scale function grid and rho");
    add_common(scale_cmd, scale_o);
    auto* sim_cmd = app.add_subcommand("simulate", "raw fragmentation replicas");
    add_common(sim_cmd, sim_o);
    auto* verify_cmd = app.add_subcommand("verify", "run one experiment with pass/fail");
    add_common(verify_cmd, verify_o);

    std::vector<std::string> record_paths;
    std::string report_out;
    auto* report_cmd = app.add_subcommand("report", "merge experiment records");
    report_cmd->add_option("--records", record_paths, "record JSON files")
        ->required()
        ->expected(-1);
    report_cmd->add_option("--out", report_out, "directory for the summary JSON");

    CLI11_PARSE(app, argc, argv);

    try {
        if (rates_cmd->parsed()) return run_and_print(load_config(rates_o, "rates-table"));
        if (scale_cmd->parsed()) return run_and_print(load_config(scale_o, "scale-table"));
        if (sim_cmd->parsed()) return run_and_print(load_config(sim_o, "simulate"));
        if (verify_cmd->parsed()) return run_and_print(load_config(verify_o));
        if (report_cmd->parsed()) {
            std::vector<fragrate::Json> records;
            for (const auto& path : record_paths) {
                std::ifstream in(path);
                if (!in) throw fragrate::ConfigError("cannot open record: " + path);
                records.push_back(fragrate::Json::parse(in));
            }
            const auto rep = fragrate::report(records);
            std::cout << rep.text;
            if (!report_out.empty()) {
                std::filesystem::create_directories(report_out);
                std::ofstream out(report_out + "/summary.json");
                out << rep.summary.dump(2) << "\n";
            }
            return rep.all_pass ? 0 : 1;
        }
    } catch (const fragrate::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const fragrate::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
