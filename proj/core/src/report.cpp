#include "streamqc/report.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "streamqc/csv.hpp"
#include "streamqc/inject.hpp"
#include "streamqc/mathutil.hpp"

namespace streamqc {
namespace report {

using nlohmann::json;

namespace {

std::string window_key(const std::string& site, HourStamp start, const std::string& track) {
    return track + "/" + site + "/" + std::to_string(start);
}

struct TruthIndex {
    std::map<std::string, const WindowTruth*> by_key;

    explicit TruthIndex(const std::vector<WindowTruth>& truths) {
        for (const auto& t : truths) by_key[window_key(t.site, t.start, t.track)] = &t;
    }

    const WindowTruth* find(const WindowDetection& d) const {
        const auto it = by_key.find(window_key(d.site, d.start, d.track));
        return it == by_key.end() ? nullptr : it->second;
    }
};

std::string fmt(double v, int decimals = 6) {
    if (std::isnan(v)) return "nan";
    return format_decimal(v, decimals);
}

}  // namespace

std::string anomaly_type_display_name(int type_id) {
    if (type_id < 0 || type_id >= inject::kNumTestTypes) return "unknown";
    return inject::test_type_name(static_cast<inject::TestAnomalyType>(type_id));
}

std::vector<DetectorSummary> summarize_detectors(const ReportInputs& inputs,
                                                 const std::string& track) {
    const TruthIndex index(inputs.truths);
    std::map<std::string, DetectorSummary> sums;
    std::map<std::string, eval::Confusion> pooled;
    std::map<std::string, std::vector<double>> pooled_scores;
    std::map<std::string, std::vector<std::uint8_t>> pooled_labels;
    std::map<std::string, std::vector<double>> window_f1;
    std::map<std::string, std::size_t> flagged, total;

    for (const auto& d : inputs.detections) {
        if (d.track != track) continue;
        const WindowTruth* truth = index.find(d);
        if (truth == nullptr) continue;
        auto& s = sums[d.detector];
        s.detector = d.detector;
        ++s.windows;

        const eval::Prf1 w = eval::prf1(d.flags, truth->labels, truth->valid);
        window_f1[d.detector].push_back(w.f1);
        auto& c = pooled[d.detector];
        c.tp += w.confusion.tp;
        c.fp += w.confusion.fp;
        c.fn += w.confusion.fn;
        c.tn += w.confusion.tn;

        auto& ps = pooled_scores[d.detector];
        auto& pl = pooled_labels[d.detector];
        for (std::size_t t = 0; t < d.scores.size(); ++t) {
            if (!truth->valid.empty() && !truth->valid[t]) continue;
            ps.push_back(d.scores[t]);
            pl.push_back(truth->labels[t]);
            ++total[d.detector];
            if (d.flags[t]) ++flagged[d.detector];
        }
    }

    std::vector<DetectorSummary> out;
    for (auto& [id, s] : sums) {
        const auto& c = pooled[id];
        s.micro.confusion = c;
        s.micro.precision = c.tp + c.fp ? static_cast<double>(c.tp) / (c.tp + c.fp) : 0.0;
        s.micro.recall = c.tp + c.fn ? static_cast<double>(c.tp) / (c.tp + c.fn) : 0.0;
        s.micro.degenerate = (c.tp + c.fp == 0) || (c.tp + c.fn == 0);
        s.micro.f1 = s.micro.precision + s.micro.recall > 0.0
                         ? 2.0 * s.micro.precision * s.micro.recall /
                               (s.micro.precision + s.micro.recall)
                         : 0.0;
        const auto& f1s = window_f1[id];
        s.macro_f1 = f1s.empty() ? 0.0 : mean_of(f1s);
        s.auroc = eval::auroc(pooled_scores[id], pooled_labels[id]);
        s.flag_rate = total[id] ? static_cast<double>(flagged[id]) /
                                      static_cast<double>(total[id])
                                : 0.0;
        out.push_back(s);
    }
    return out;
}

std::map<std::string, std::vector<double>> per_window_f1(const ReportInputs& inputs,
                                                         const std::string& track) {
    const TruthIndex index(inputs.truths);
    // align windows across detectors by key order
    std::set<std::string> keys;
    for (const auto& d : inputs.detections) {
        if (d.track == track && index.find(d) != nullptr) {
            keys.insert(window_key(d.site, d.start, d.track));
        }
    }
    std::map<std::string, std::map<std::string, double>> by_detector;  // detector -> key -> f1
    for (const auto& d : inputs.detections) {
        if (d.track != track) continue;
        const WindowTruth* truth = index.find(d);
        if (truth == nullptr) continue;
        by_detector[d.detector][window_key(d.site, d.start, d.track)] =
            eval::prf1(d.flags, truth->labels, truth->valid).f1;
    }
    std::map<std::string, std::vector<double>> out;
    for (const auto& [det, m] : by_detector) {
        std::vector<double> samples;
        samples.reserve(keys.size());
        for (const auto& k : keys) {
            const auto it = m.find(k);
            samples.push_back(it == m.end() ? 0.0 : it->second);
        }
        out[det] = std::move(samples);
    }
    return out;
}

ReportBundle build_report(const ReportInputs& inputs) {
    ReportBundle bundle;
    const TruthIndex index(inputs.truths);

    std::vector<std::string> notices;
    std::set<std::string> seen_detectors;
    for (const auto& d : inputs.detections) seen_detectors.insert(d.detector);
    for (const auto& expected : inputs.expected_detectors) {
        if (seen_detectors.count(expected) == 0) {
            notices.push_back("detector '" + expected + "' has no persisted results, omitted");
        }
    }

    // ---- per_detector.csv (synthetic and paired tracks) -------------------
    std::ostringstream per_det;
    per_det << "track,detector,windows,micro_precision,micro_recall,micro_f1,macro_f1,auroc,"
               "flag_rate,tp,fp,fn,tn\n";
    std::map<std::string, std::vector<DetectorSummary>> track_summaries;
    for (const std::string track : {"synthetic", "paired"}) {
        auto sums = summarize_detectors(inputs, track);
        for (const auto& s : sums) {
            per_det << track << ',' << s.detector << ',' << s.windows << ','
                    << fmt(s.micro.precision) << ',' << fmt(s.micro.recall) << ','
                    << fmt(s.micro.f1) << ',' << fmt(s.macro_f1) << ',' << fmt(s.auroc) << ','
                    << fmt(s.flag_rate) << ',' << s.micro.confusion.tp << ','
                    << s.micro.confusion.fp << ',' << s.micro.confusion.fn << ','
                    << s.micro.confusion.tn << "\n";
        }
        track_summaries[track] = std::move(sums);
    }
    bundle["per_detector.csv"] = per_det.str();

    // ---- per_type_f1.csv (single-type isolation windows, synthetic) -------
    std::ostringstream per_type;
    per_type << "detector,type,precision,recall,f1,support_timesteps\n";
    {
        std::map<std::string, std::vector<eval::TypedWindow>> typed;
        for (const auto& d : inputs.detections) {
            if (d.track != "synthetic") continue;
            const WindowTruth* truth = index.find(d);
            if (truth == nullptr || !truth->single_type || truth->type_id < 0) continue;
            eval::TypedWindow tw;
            tw.type_id = truth->type_id;
            tw.flags = d.flags;
            tw.labels = truth->labels;
            typed[d.detector].push_back(std::move(tw));
        }
        for (const auto& [det, windows] : typed) {
            const auto table = eval::per_type_f1(windows);
            for (const auto& [type, p] : table) {
                per_type << det << ',' << anomaly_type_display_name(type) << ','
                         << fmt(p.precision) << ',' << fmt(p.recall) << ',' << fmt(p.f1) << ','
                         << (p.confusion.tp + p.confusion.fn) << "\n";
            }
        }
    }
    bundle["per_type_f1.csv"] = per_type.str();

    // ---- magnitude_recall.csv (paired track) ------------------------------
    std::ostringstream mag;
    mag << "detector,bin_lo,bin_hi,labeled,detected,recall\n";
    {
        std::map<std::string, std::vector<eval::MagnitudeBin>> pooled;
        for (const auto& d : inputs.detections) {
            if (d.track != "paired") continue;
            const WindowTruth* truth = index.find(d);
            if (truth == nullptr || truth->magnitude.empty()) continue;
            const auto bins =
                eval::magnitude_stratified_recall(d.flags, truth->labels, truth->magnitude);
            auto& acc = pooled[d.detector];
            if (acc.empty()) acc = bins;
            else {
                for (std::size_t b = 0; b < bins.size(); ++b) {
                    acc[b].total += bins[b].total;
                    acc[b].detected += bins[b].detected;
                }
            }
        }
        for (const auto& [det, bins] : pooled) {
            for (const auto& b : bins) {
                if (b.total == 0) continue;  // empty bin omitted
                mag << det << ',' << fmt(b.lo, 2) << ',' << fmt(b.hi, 2) << ',' << b.total << ','
                    << b.detected << ',' << fmt(b.recall()) << "\n";
            }
        }
    }
    bundle["magnitude_recall.csv"] = mag.str();

    // ---- seasonal_rates.csv ------------------------------------------------
    std::ostringstream seas;
    seas << "track,series,winter,spring,summer,fall\n";
    for (const std::string track : {"synthetic", "paired"}) {
        // ground-truth label rates
        std::array<std::size_t, 4> label_on{}, label_total{};
        std::set<std::string> counted;
        for (const auto& t : inputs.truths) {
            if (t.track != track) continue;
            for (std::size_t k = 0; k < t.labels.size(); ++k) {
                if (!t.valid.empty() && !t.valid[k]) continue;
                const int season = eval::season_of_month(
                    month_of_hour(t.start + static_cast<HourStamp>(k)));
                ++label_total[season];
                if (t.labels[k]) ++label_on[season];
            }
            counted.insert(window_key(t.site, t.start, t.track));
        }
        if (!counted.empty()) {
            seas << track << ",labels";
            for (int s = 0; s < 4; ++s) {
                seas << ',' << fmt(label_total[s] ? static_cast<double>(label_on[s]) /
                                                        static_cast<double>(label_total[s])
                                                  : 0.0);
            }
            seas << "\n";
        }
        // per-detector flag rates
        std::map<std::string, std::array<std::size_t, 4>> det_on, det_total;
        for (const auto& d : inputs.detections) {
            if (d.track != track) continue;
            const WindowTruth* truth = index.find(d);
            if (truth == nullptr) continue;
            auto& on = det_on[d.detector];
            auto& tot = det_total[d.detector];
            for (std::size_t k = 0; k < d.flags.size(); ++k) {
                if (!truth->valid.empty() && !truth->valid[k]) continue;
                const int season = eval::season_of_month(
                    month_of_hour(d.start + static_cast<HourStamp>(k)));
                ++tot[season];
                if (d.flags[k]) ++on[season];
            }
        }
        for (const auto& [det, on] : det_on) {
            const auto& tot = det_total[det];
            seas << track << ',' << det;
            for (int s = 0; s < 4; ++s) {
                seas << ','
                     << fmt(tot[s] ? static_cast<double>(on[s]) / static_cast<double>(tot[s])
                                   : 0.0);
            }
            seas << "\n";
        }
    }
    bundle["seasonal_rates.csv"] = seas.str();

    // ---- durations.csv ------------------------------------------------------
    std::ostringstream dur;
    dur << "track,series,lt_6h,h6_48,gt_48h\n";
    for (const std::string track : {"synthetic", "paired"}) {
        std::array<std::size_t, 3> label_bins{};
        bool any = false;
        for (const auto& t : inputs.truths) {
            if (t.track != track) continue;
            const auto bins = eval::duration_histogram(t.labels);
            for (int b = 0; b < 3; ++b) label_bins[b] += bins[b];
            any = true;
        }
        if (any) {
            dur << track << ",labels," << label_bins[0] << ',' << label_bins[1] << ','
                << label_bins[2] << "\n";
        }
        std::map<std::string, std::array<std::size_t, 3>> det_bins;
        for (const auto& d : inputs.detections) {
            if (d.track != track) continue;
            const auto bins = eval::duration_histogram(d.flags);
            auto& acc = det_bins[d.detector];
            for (int b = 0; b < 3; ++b) acc[b] += bins[b];
        }
        for (const auto& [det, bins] : det_bins) {
            dur << track << ',' << det << ',' << bins[0] << ',' << bins[1] << ',' << bins[2]
                << "\n";
        }
    }
    bundle["durations.csv"] = dur.str();

    // ---- significance.csv ---------------------------------------------------
    std::ostringstream sig;
    sig << "track,detector_a,detector_b,windows,w_plus,p_value\n";
    for (const std::string track : {"synthetic", "paired"}) {
        const auto samples = per_window_f1(inputs, track);
        std::vector<std::string> dets;
        for (const auto& [det, _] : samples) dets.push_back(det);
        for (std::size_t i = 0; i < dets.size(); ++i) {
            for (std::size_t j = i + 1; j < dets.size(); ++j) {
                const auto w =
                    eval::wilcoxon_signed_rank(samples.at(dets[i]), samples.at(dets[j]));
                sig << track << ',' << dets[i] << ',' << dets[j] << ','
                    << samples.at(dets[i]).size() << ',' << fmt(w.w_plus, 1) << ','
                    << fmt(w.p_value, 9) << "\n";
            }
        }
    }
    bundle["significance.csv"] = sig.str();

    // ---- summary.json --------------------------------------------------------
    json summary;
    summary["corpus_fingerprint"] = inputs.corpus_fingerprint;
    summary["config_hash"] = inputs.config_hash;
    summary["injector_config_hash"] = inputs.injector_config_hash;
    summary["master_seed"] = inputs.master_seed;
    summary["notices"] = notices;
    for (const std::string track : {"synthetic", "paired"}) {
        json dets = json::object();
        for (const auto& s : track_summaries[track]) {
            json d;
            d["windows"] = s.windows;
            d["micro_precision"] = s.micro.precision;
            d["micro_recall"] = s.micro.recall;
            d["micro_f1"] = s.micro.f1;
            d["macro_f1"] = s.macro_f1;
            d["auroc"] = s.auroc;
            d["flag_rate"] = s.flag_rate;
            dets[s.detector] = std::move(d);
        }
        if (!dets.empty()) summary["tracks"][track]["detectors"] = std::move(dets);
    }
    if (!inputs.reconstruction.empty()) {
        double er_q = 0.0, er_h = 0.0, rq = 0.0, rc = 0.0;
        std::size_t n_q = 0, n_h = 0, n_r = 0, n_c = 0;
        for (const auto& r : inputs.reconstruction) {
            if (!std::isnan(r.error_reduction_q)) {
                er_q += r.error_reduction_q;
                ++n_q;
            }
            if (!std::isnan(r.error_reduction_h)) {
                er_h += r.error_reduction_h;
                ++n_h;
            }
            if (!std::isnan(r.rmse_anom_q)) {
                rq += r.rmse_anom_q;
                ++n_r;
            }
            if (!std::isnan(r.rmse_clean_q)) {
                rc += r.rmse_clean_q;
                ++n_c;
            }
        }
        json recon;
        recon["windows"] = inputs.reconstruction.size();
        recon["mean_error_reduction_q_pct"] = n_q ? er_q / n_q : 0.0;
        recon["mean_error_reduction_h_pct"] = n_h ? er_h / n_h : 0.0;
        recon["mean_rmse_anomalous_q"] = n_r ? rq / n_r : 0.0;
        recon["mean_rmse_clean_q"] = n_c ? rc / n_c : 0.0;
        summary["reconstruction"] = std::move(recon);
    }
    if (!inputs.threshold_sweep.empty()) {
        json sweep = json::array();
        for (const auto& [thr, frac] : inputs.threshold_sweep) {
            sweep.push_back({{"threshold", thr}, {"labeled_fraction", frac}});
        }
        summary["weak_label_threshold_sweep"] = std::move(sweep);
    }
    bundle["summary.json"] = summary.dump(2) + "\n";

    return bundle;
}

}  // namespace report
}  // namespace streamqc
