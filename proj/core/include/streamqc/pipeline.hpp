#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "streamqc/inject.hpp"
#include "streamqc/labels.hpp"
#include "streamqc/mlp.hpp"
#include "streamqc/normalize.hpp"
#include "streamqc/qc.hpp"

namespace streamqc {
namespace pipeline {

// Exit codes: 0 success, 1 usage error, 2 data error, 3 verification failure.
struct PipelineError : std::runtime_error {
    int exit_code;
    PipelineError(int code, const std::string& msg)
        : std::runtime_error(msg), exit_code(code) {}
};

struct RunConfig {
    std::string site_table;
    std::string series_dir;
    std::string paired_dir;  // optional: raw/corrected archives
    std::string out_dir = "out";
    std::uint64_t master_seed = 42;
    int jobs = 1;
    int train_stride = 48;
    int eval_stride = 192;
    qc::QcConfig qc;
    norm::NormConfig norm;
    inject::TrainInjectConfig train_inject;
    inject::TestInjectConfig test_inject;
    labels::WeakLabelConfig weak;
    std::vector<std::string> detectors;  // default: all 11 baselines
    bool run_head = true;
    detect::HeadTrainConfig head;
    int mc_passes = 10;
    std::string head_train_injector = "test";  // "test" or "train"
    int train_epoch = 3;         // epoch used for training-injector draws
    int head_max_windows = 2000; // seeded cap on head training windows
    std::vector<double> weak_sweep = {0.005, 0.01, 0.02, 0.05, 0.10};

    RunConfig() { detectors = default_detectors(); }
    static std::vector<std::string> default_detectors();
};

std::string config_to_json(const RunConfig& config);
RunConfig config_from_json(const std::string& text);
RunConfig load_config(const std::string& path);

// Dotted-path override, e.g. "qc.outlier_sigma=5.0" or "run_head=false".
// Throws PipelineError(1) on unknown paths or unparseable values.
void apply_override(RunConfig* config, const std::string& assignment);

// Hash of the run-defining configuration (out_dir and jobs excluded: they
// must not change results).
std::string config_hash(const RunConfig& config);

// Stage drivers. Each reads only earlier stages' persisted artifacts and
// throws PipelineError(2) naming the missing prerequisite stage.
void run_ingest(const RunConfig& config);
void run_qc(const RunConfig& config);
void run_fit_stats(const RunConfig& config);
void run_windows(const RunConfig& config);
void run_inject_train(const RunConfig& config);
void run_inject_test(const RunConfig& config);
void run_train_head(const RunConfig& config);
void run_detect(const RunConfig& config);
void run_labels(const RunConfig& config);
void run_evaluate(const RunConfig& config);
void run_report(const RunConfig& config);
// Recomputes the report bundle from persisted artifacts and compares bytes;
// throws PipelineError(3) on any mismatch.
void run_verify(const RunConfig& config);

// Dispatch by subcommand name; throws PipelineError(1) for unknown stages.
void run_stage(const std::string& stage, const RunConfig& config);

const std::vector<std::string>& stage_names();

}  // namespace pipeline
}  // namespace streamqc
