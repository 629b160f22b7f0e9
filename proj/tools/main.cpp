// streamqc command-line front end: stage orchestration over the pipeline
// library plus a synthetic fixture-corpus generator for demos and smoke runs.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "streamqc/csv.hpp"
#include "streamqc/fixture.hpp"
#include "streamqc/pipeline.hpp"

namespace {

using streamqc::pipeline::PipelineError;
using streamqc::pipeline::RunConfig;

int run_stage_command(const std::string& stage, const std::string& config_path,
                      const std::vector<std::string>& overrides, long long seed_override,
                      int jobs_override, const std::string& out_override) {
    RunConfig config;
    try {
        if (!config_path.empty()) config = streamqc::pipeline::load_config(config_path);
        for (const auto& o : overrides) streamqc::pipeline::apply_override(&config, o);
        if (seed_override >= 0) config.master_seed = static_cast<std::uint64_t>(seed_override);
        if (jobs_override > 0) config.jobs = jobs_override;
        if (!out_override.empty()) config.out_dir = out_override;
        if (const char* env = std::getenv("STREAMQC_OUT_DIR"); env != nullptr && *env != '\0' &&
                                                               out_override.empty()) {
            config.out_dir = env;
        }
        streamqc::pipeline::run_stage(stage, config);
    } catch (const PipelineError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    std::cout << stage << ": ok\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"streamqc: streamflow quality-control benchmark pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    long long seed_override = -1;
    int jobs_override = 0;
    std::string out_override;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("-c,--config", config_path, "JSON run configuration file");
        cmd->add_option("--set", overrides,
                        "dotted-path config override, e.g. qc.outlier_sigma=5.0");
        cmd->add_option("--seed", seed_override, "override the master seed");
        cmd->add_option("--jobs", jobs_override, "worker threads for data-parallel stages");
        cmd->add_option("--out", out_override,
                        "output directory (or set STREAMQC_OUT_DIR)");
    };

    for (const auto& stage : streamqc::pipeline::stage_names()) {
        auto* cmd = app.add_subcommand(stage, "run the '" + stage + "' pipeline stage");
        add_common(cmd);
    }
    auto* all = app.add_subcommand("run-all", "run every stage in order (skips 'labels' "
                                              "when no paired archives are configured)");
    add_common(all);

    auto* init = app.add_subcommand("init-config", "write a default configuration file");
    std::string init_path = "streamqc.json";
    init->add_option("path", init_path, "destination file");

    auto* fixture = app.add_subcommand(
        "make-fixture", "generate a seeded synthetic fixture corpus (sites.csv + series/)");
    int fx_sites = 5;
    int fx_hours = 2 * 8760;
    std::uint64_t fx_seed = 7;
    std::string fx_dir = "fixture";
    bool fx_paired = false;
    double fx_gap_rate = 0.0;
    fixture->add_option("--sites", fx_sites, "number of sites");
    fixture->add_option("--hours", fx_hours, "hours per site");
    fixture->add_option("--seed", fx_seed, "generator seed");
    fixture->add_option("--dir", fx_dir, "destination directory");
    fixture->add_flag("--paired", fx_paired, "also emit raw/corrected paired archives");
    fixture->add_option("--gap-rate", fx_gap_rate, "per-hour probability of a short gap");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (init->parsed()) {
        RunConfig defaults;
        streamqc::write_text_file(init_path, streamqc::pipeline::config_to_json(defaults));
        std::cout << "wrote " << init_path << "\n";
        return 0;
    }
    if (fixture->parsed()) {
        streamqc::fixture::FixtureConfig fc;
        fc.n_sites = fx_sites;
        fc.hours = fx_hours;
        fc.seed = fx_seed;
        fc.paired = fx_paired;
        fc.gap_rate = fx_gap_rate;
        try {
            streamqc::fixture::write_fixture_corpus(fc, fx_dir);
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 2;
        }
        std::cout << "fixture corpus written to " << fx_dir << "\n";
        return 0;
    }
    if (all->parsed()) {
        RunConfig probe;
        try {
            if (!config_path.empty()) probe = streamqc::pipeline::load_config(config_path);
            for (const auto& o : overrides) streamqc::pipeline::apply_override(&probe, o);
        } catch (const PipelineError& e) {
            std::cerr << "error: " << e.what() << "\n";
            return e.exit_code;
        }
        // labels precede detect so the paired-track detections get produced
        const std::vector<std::string> order = {
            "ingest",      "qc",     "fit-stats",  "windows",  "inject-train",
            "inject-test", "labels", "train-head", "detect",   "evaluate",
            "report",      "verify"};
        for (const auto& stage : order) {
            if (stage == "labels" && probe.paired_dir.empty()) continue;
            const int rc = run_stage_command(stage, config_path, overrides, seed_override,
                                             jobs_override, out_override);
            if (rc != 0) return rc;
        }
        return 0;
    }

    for (const auto& stage : streamqc::pipeline::stage_names()) {
        if (app.get_subcommand(stage)->parsed()) {
            return run_stage_command(stage, config_path, overrides, seed_override,
                                     jobs_override, out_override);
        }
    }
    std::cerr << "error: no subcommand\n";
    return 1;
}
