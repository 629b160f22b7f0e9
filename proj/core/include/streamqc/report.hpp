#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "streamqc/eval.hpp"
#include "streamqc/types.hpp"

namespace streamqc {
namespace report {

// One detector's output on one window, as persisted in detections.jsonl.
struct WindowDetection {
    std::string site;
    HourStamp start = 0;
    std::string track;  // "synthetic" (injected) or "paired" (weak labels)
    std::string detector;
    std::vector<double> scores;
    std::vector<std::uint8_t> flags;
    std::vector<double> uncertainty;  // optional
};

// Ground truth for one window.
struct WindowTruth {
    std::string site;
    HourStamp start = 0;
    std::string track;
    std::vector<std::uint8_t> labels;
    std::vector<std::uint8_t> valid;        // labeled timesteps (empty = all)
    std::vector<std::int16_t> type_labels;  // -1 where unlabeled
    bool single_type = false;
    int type_id = -1;                 // set for single-type windows
    std::vector<double> magnitude;    // per-timestep correction magnitude (paired)
};

struct ReconEntry {
    std::string site;
    HourStamp start = 0;
    double error_reduction_q = 0.0;
    double error_reduction_h = 0.0;
    double rmse_anom_q = 0.0;
    double rmse_clean_q = 0.0;
};

struct ReportInputs {
    std::vector<WindowDetection> detections;
    std::vector<WindowTruth> truths;
    std::vector<ReconEntry> reconstruction;
    // weak-label threshold sweep: threshold -> labeled-anomalous fraction
    std::vector<std::pair<double, double>> threshold_sweep;
    std::string corpus_fingerprint;
    std::string config_hash;
    std::string injector_config_hash;
    std::uint64_t master_seed = 0;
    std::vector<std::string> expected_detectors;  // for omission notices
};

// filename -> file content, byte-deterministic given identical inputs
using ReportBundle = std::map<std::string, std::string>;

// Builds the full bundle: summary.json, per_detector.csv, per_type_f1.csv,
// magnitude_recall.csv, seasonal_rates.csv, durations.csv, significance.csv.
ReportBundle build_report(const ReportInputs& inputs);

// Per-detector pooled metrics (also used by the acceptance suite directly).
struct DetectorSummary {
    std::string detector;
    eval::Prf1 micro;
    double macro_f1 = 0.0;
    double auroc = 0.5;
    double flag_rate = 0.0;
    std::size_t windows = 0;
};
std::vector<DetectorSummary> summarize_detectors(const ReportInputs& inputs,
                                                 const std::string& track);

// Per-window F1 samples aligned across detectors (for significance tests).
std::map<std::string, std::vector<double>> per_window_f1(const ReportInputs& inputs,
                                                         const std::string& track);

std::string anomaly_type_display_name(int type_id);

}  // namespace report
}  // namespace streamqc
