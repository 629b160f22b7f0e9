#include "streamqc/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "streamqc/csv.hpp"
#include "streamqc/detect.hpp"
#include "streamqc/eval.hpp"
#include "streamqc/ingest.hpp"
#include "streamqc/mathutil.hpp"
#include "streamqc/report.hpp"
#include "streamqc/rng.hpp"
#include "streamqc/windowing.hpp"

namespace streamqc {
namespace pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::string> RunConfig::default_detectors() { return detect::baseline_detector_ids(); }

// ---------------------------------------------------------------------------
// Config (de)serialization
// ---------------------------------------------------------------------------

namespace {

json config_to_json_object(const RunConfig& c) {
    json j;
    j["site_table"] = c.site_table;
    j["series_dir"] = c.series_dir;
    j["paired_dir"] = c.paired_dir;
    j["out_dir"] = c.out_dir;
    j["master_seed"] = c.master_seed;
    j["jobs"] = c.jobs;
    j["train_stride"] = c.train_stride;
    j["eval_stride"] = c.eval_stride;
    j["qc"] = {{"outlier_sigma", c.qc.outlier_sigma},
               {"roc_percentile", c.qc.roc_percentile},
               {"ransac_iters", c.qc.ransac_iters},
               {"ransac_inlier_frac", c.qc.ransac_inlier_frac},
               {"rating_resid_mult", c.qc.rating_resid_mult},
               {"q_max_mult", c.qc.q_max_mult},
               {"stage_margin_ft", c.qc.stage_margin_ft},
               {"linear_fill_max_h", c.qc.linear_fill_max_h},
               {"recession_fill_max_h", c.qc.recession_fill_max_h},
               {"completeness_min", c.qc.completeness_min}};
    j["norm"] = {{"epsilon", c.norm.epsilon}, {"clip_tau", c.norm.clip_tau}};
    j["train_inject"] = {{"light_prob", c.train_inject.light_prob},
                         {"light_cov_lo", c.train_inject.light_cov_lo},
                         {"light_cov_hi", c.train_inject.light_cov_hi},
                         {"moderate_cov_lo", c.train_inject.moderate_cov_lo},
                         {"moderate_cov_hi", c.train_inject.moderate_cov_hi},
                         {"light_tol", c.train_inject.light_tol},
                         {"moderate_tol", c.train_inject.moderate_tol},
                         {"single_type_prob", c.train_inject.single_type_prob},
                         {"min_segments", c.train_inject.min_segments},
                         {"max_segments", c.train_inject.max_segments},
                         {"curriculum_early", c.train_inject.curriculum_early},
                         {"curriculum_late", c.train_inject.curriculum_late},
                         {"curriculum_ramp_epochs", c.train_inject.curriculum_ramp_epochs},
                         {"max_attempts", c.train_inject.max_attempts}};
    j["test_inject"] = {{"single_type_prob", c.test_inject.single_type_prob},
                        {"overlap_prob", c.test_inject.overlap_prob},
                        {"compound_min_types", c.test_inject.compound_min_types},
                        {"compound_max_types", c.test_inject.compound_max_types}};
    j["weak"] = {{"rel_threshold", c.weak.rel_threshold},
                 {"eps", c.weak.eps},
                 {"correction_fraction_lo", c.weak.correction_fraction_lo},
                 {"correction_fraction_hi", c.weak.correction_fraction_hi},
                 {"station_missing_max", c.weak.station_missing_max}};
    j["detectors"] = c.detectors;
    j["run_head"] = c.run_head;
    j["head"] = {{"batch_windows", c.head.batch_windows},
                 {"learning_rate", c.head.learning_rate},
                 {"max_epochs", c.head.max_epochs},
                 {"patience", c.head.patience},
                 {"val_fraction", c.head.val_fraction},
                 {"focal_alpha", c.head.focal_alpha},
                 {"focal_gamma", c.head.focal_gamma},
                 {"threshold", c.head.threshold}};
    j["mc_passes"] = c.mc_passes;
    j["head_train_injector"] = c.head_train_injector;
    j["train_epoch"] = c.train_epoch;
    j["head_max_windows"] = c.head_max_windows;
    j["weak_sweep"] = c.weak_sweep;
    return j;
}

template <typename T>
void maybe(const json& j, const char* key, T* out) {
    if (j.contains(key)) *out = j.at(key).get<T>();
}

}  // namespace

std::string config_to_json(const RunConfig& config) {
    return config_to_json_object(config).dump(2) + "\n";
}

RunConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw PipelineError(1, std::string("config parse error: ") + e.what());
    }
    RunConfig c;
    maybe(j, "site_table", &c.site_table);
    maybe(j, "series_dir", &c.series_dir);
    maybe(j, "paired_dir", &c.paired_dir);
    maybe(j, "out_dir", &c.out_dir);
    maybe(j, "master_seed", &c.master_seed);
    maybe(j, "jobs", &c.jobs);
    maybe(j, "train_stride", &c.train_stride);
    maybe(j, "eval_stride", &c.eval_stride);
    if (j.contains("qc")) {
        const json& q = j.at("qc");
        maybe(q, "outlier_sigma", &c.qc.outlier_sigma);
        maybe(q, "roc_percentile", &c.qc.roc_percentile);
        maybe(q, "ransac_iters", &c.qc.ransac_iters);
        maybe(q, "ransac_inlier_frac", &c.qc.ransac_inlier_frac);
        maybe(q, "rating_resid_mult", &c.qc.rating_resid_mult);
        maybe(q, "q_max_mult", &c.qc.q_max_mult);
        maybe(q, "stage_margin_ft", &c.qc.stage_margin_ft);
        maybe(q, "linear_fill_max_h", &c.qc.linear_fill_max_h);
        maybe(q, "recession_fill_max_h", &c.qc.recession_fill_max_h);
        maybe(q, "completeness_min", &c.qc.completeness_min);
    }
    if (j.contains("norm")) {
        maybe(j.at("norm"), "epsilon", &c.norm.epsilon);
        maybe(j.at("norm"), "clip_tau", &c.norm.clip_tau);
    }
    if (j.contains("train_inject")) {
        const json& t = j.at("train_inject");
        maybe(t, "light_prob", &c.train_inject.light_prob);
        maybe(t, "light_cov_lo", &c.train_inject.light_cov_lo);
        maybe(t, "light_cov_hi", &c.train_inject.light_cov_hi);
        maybe(t, "moderate_cov_lo", &c.train_inject.moderate_cov_lo);
        maybe(t, "moderate_cov_hi", &c.train_inject.moderate_cov_hi);
        maybe(t, "light_tol", &c.train_inject.light_tol);
        maybe(t, "moderate_tol", &c.train_inject.moderate_tol);
        maybe(t, "single_type_prob", &c.train_inject.single_type_prob);
        maybe(t, "min_segments", &c.train_inject.min_segments);
        maybe(t, "max_segments", &c.train_inject.max_segments);
        maybe(t, "curriculum_early", &c.train_inject.curriculum_early);
        maybe(t, "curriculum_late", &c.train_inject.curriculum_late);
        maybe(t, "curriculum_ramp_epochs", &c.train_inject.curriculum_ramp_epochs);
        maybe(t, "max_attempts", &c.train_inject.max_attempts);
    }
    if (j.contains("test_inject")) {
        const json& t = j.at("test_inject");
        maybe(t, "single_type_prob", &c.test_inject.single_type_prob);
        maybe(t, "overlap_prob", &c.test_inject.overlap_prob);
        maybe(t, "compound_min_types", &c.test_inject.compound_min_types);
        maybe(t, "compound_max_types", &c.test_inject.compound_max_types);
    }
    if (j.contains("weak")) {
        const json& w = j.at("weak");
        maybe(w, "rel_threshold", &c.weak.rel_threshold);
        maybe(w, "eps", &c.weak.eps);
        maybe(w, "correction_fraction_lo", &c.weak.correction_fraction_lo);
        maybe(w, "correction_fraction_hi", &c.weak.correction_fraction_hi);
        maybe(w, "station_missing_max", &c.weak.station_missing_max);
    }
    maybe(j, "detectors", &c.detectors);
    maybe(j, "run_head", &c.run_head);
    if (j.contains("head")) {
        const json& h = j.at("head");
        maybe(h, "batch_windows", &c.head.batch_windows);
        maybe(h, "learning_rate", &c.head.learning_rate);
        maybe(h, "max_epochs", &c.head.max_epochs);
        maybe(h, "patience", &c.head.patience);
        maybe(h, "val_fraction", &c.head.val_fraction);
        maybe(h, "focal_alpha", &c.head.focal_alpha);
        maybe(h, "focal_gamma", &c.head.focal_gamma);
        maybe(h, "threshold", &c.head.threshold);
    }
    maybe(j, "mc_passes", &c.mc_passes);
    maybe(j, "head_train_injector", &c.head_train_injector);
    maybe(j, "train_epoch", &c.train_epoch);
    maybe(j, "head_max_windows", &c.head_max_windows);
    maybe(j, "weak_sweep", &c.weak_sweep);
    return c;
}

RunConfig load_config(const std::string& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const std::exception& e) {
        throw PipelineError(1, e.what());
    }
    return config_from_json(text);
}

void apply_override(RunConfig* config, const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw PipelineError(1, "override must look like path.to.field=value: " + assignment);
    }
    const std::string path = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);

    json j = config_to_json_object(*config);
    json* at = &j;
    std::size_t start = 0;
    std::vector<std::string> parts;
    while (true) {
        const std::size_t dot = path.find('.', start);
        parts.push_back(path.substr(start, dot == std::string::npos ? dot : dot - start));
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!at->contains(parts[i])) {
            throw PipelineError(1, "unknown config path: " + path);
        }
        at = &at->at(parts[i]);
    }
    const std::string& leaf = parts.back();
    if (!at->contains(leaf)) throw PipelineError(1, "unknown config path: " + path);
    json& slot = at->at(leaf);
    try {
        if (slot.is_string()) {
            slot = value;
        } else if (slot.is_boolean()) {
            if (value != "true" && value != "false") throw std::invalid_argument("bool");
            slot = value == "true";
        } else if (slot.is_number_unsigned()) {
            slot = static_cast<std::uint64_t>(std::stoull(value));
        } else if (slot.is_number_integer()) {
            slot = static_cast<std::int64_t>(std::stoll(value));
        } else if (slot.is_number_float()) {
            slot = std::stod(value);
        } else if (slot.is_array()) {
            slot = json::parse(value);
        } else {
            throw std::invalid_argument("unsupported");
        }
    } catch (const PipelineError&) {
        throw;
    } catch (const std::exception&) {
        throw PipelineError(1, "cannot parse override value for " + path + ": " + value);
    }
    *config = config_from_json(j.dump());
}

std::string config_hash(const RunConfig& config) {
    json j = config_to_json_object(config);
    j.erase("out_dir");
    j.erase("jobs");
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(j.dump())));
    return std::string(buf);
}

// ---------------------------------------------------------------------------
// Shared artifact helpers
// ---------------------------------------------------------------------------

namespace {

fs::path out_path(const RunConfig& c, const std::string& rel) {
    return fs::path(c.out_dir) / rel;
}

void require_artifact(const RunConfig& c, const std::string& rel, const std::string& stage) {
    if (!fs::exists(out_path(c, rel))) {
        throw PipelineError(2, "missing artifact '" + rel + "': run '" + stage + "' first");
    }
}

std::string jsonl_header(const RunConfig& c, const std::string& artifact) {
    json h;
    h["artifact"] = artifact;
    h["config_hash"] = config_hash(c);
    h["master_seed"] = c.master_seed;
    return h.dump();
}

// returns data lines (header line validated and dropped)
std::vector<std::string> read_jsonl(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw PipelineError(2, "cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (first) {
            first = false;
            continue;  // header
        }
        lines.push_back(line);
    }
    return lines;
}

std::vector<SiteMeta> load_ingested_sites(const RunConfig& c) {
    require_artifact(c, "ingest/sites.csv", "ingest");
    return load_site_table(out_path(c, "ingest/sites.csv").string());
}

struct WindowRef {
    std::string site;
    Partition partition = Partition::kTrain;
    std::size_t offset = 0;
    HourStamp start = 0;
};

std::vector<WindowRef> load_window_refs(const RunConfig& c) {
    require_artifact(c, "windows/windows.jsonl", "windows");
    std::vector<WindowRef> refs;
    for (const auto& line : read_jsonl(out_path(c, "windows/windows.jsonl"))) {
        const json j = json::parse(line);
        WindowRef r;
        r.site = j.at("site").get<std::string>();
        r.partition = partition_from_name(j.at("partition").get<std::string>());
        r.offset = j.at("offset").get<std::size_t>();
        r.start = parse_iso8601_utc_hour(j.at("start").get<std::string>());
        refs.push_back(std::move(r));
    }
    return refs;
}

class SeriesCache {
  public:
    explicit SeriesCache(const RunConfig& c) : config_(c) {}

    const HourlySeries& qc_series(const std::string& site_id) {
        auto it = cache_.find(site_id);
        if (it != cache_.end()) return it->second;
        const fs::path path = out_path(config_, "qc/series/" + site_id + ".csv");
        if (!fs::exists(path)) {
            throw PipelineError(2, "missing QC series for site " + site_id + ": run 'qc' first");
        }
        SiteMeta meta;
        meta.site_id = site_id;
        auto [ins, _] =
            cache_.emplace(site_id, parse_flagged_timeseries(read_text_file(path.string()), meta));
        return ins->second;
    }

  private:
    const RunConfig& config_;
    std::map<std::string, HourlySeries> cache_;
};

RawWindow slice_window(const HourlySeries& s, const std::string& site_id, std::size_t offset) {
    RawWindow w;
    w.site_id = site_id;
    w.start_hour = s.start_hour + static_cast<HourStamp>(offset);
    w.offset = offset;
    w.q.assign(s.discharge.begin() + static_cast<std::ptrdiff_t>(offset),
               s.discharge.begin() + static_cast<std::ptrdiff_t>(offset + kWindowLength));
    w.h.assign(s.stage.begin() + static_cast<std::ptrdiff_t>(offset),
               s.stage.begin() + static_cast<std::ptrdiff_t>(offset + kWindowLength));
    w.valid.resize(kWindowLength);
    for (int t = 0; t < kWindowLength; ++t) {
        w.valid[t] = !is_missing(w.q[t]) && !is_missing(w.h[t]);
    }
    return w;
}

std::string window_seed_key(const std::string& domain, const std::string& site,
                            HourStamp start) {
    return domain + "/" + site + "/" + std::to_string(start);
}

// index-ordered parallel map: results land in slot order, so scheduling
// cannot affect any output
template <typename Fn>
void parallel_for(int jobs, std::size_t n, Fn&& fn) {
    jobs = std::max(1, jobs);
    if (jobs == 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> workers;
    std::atomic<std::size_t> next{0};
    for (int w = 0; w < jobs; ++w) {
        workers.emplace_back([&]() {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) break;
                fn(i);
            }
        });
    }
    for (auto& t : workers) t.join();
}

json runs_from_flags(const std::vector<std::uint8_t>& flags) {
    json runs = json::array();
    std::size_t t = 0;
    while (t < flags.size()) {
        if (!flags[t]) {
            ++t;
            continue;
        }
        std::size_t end = t;
        while (end + 1 < flags.size() && flags[end + 1]) ++end;
        runs.push_back({t, end + 1});
        t = end + 1;
    }
    return runs;
}

std::vector<std::uint8_t> flags_from_runs(const json& runs, std::size_t n) {
    std::vector<std::uint8_t> flags(n, 0);
    for (const auto& run : runs) {
        const std::size_t lo = run.at(0).get<std::size_t>();
        const std::size_t hi = std::min(n, run.at(1).get<std::size_t>());
        for (std::size_t t = lo; t < hi; ++t) flags[t] = 1;
    }
    return flags;
}

std::string format_score_array(const std::vector<double>& v) {
    std::ostringstream out;
    out << '[';
    char buf[32];
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out << ',';
        std::snprintf(buf, sizeof(buf), "%.9g", v[i]);
        out << buf;
    }
    out << ']';
    return out.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

void run_ingest(const RunConfig& config) {
    if (config.site_table.empty()) throw PipelineError(1, "config.site_table is required");
    std::vector<SiteMeta> sites;
    try {
        sites = load_site_table(config.site_table);
    } catch (const std::exception& e) {
        throw PipelineError(2, std::string("site table: ") + e.what());
    }

    fs::create_directories(out_path(config, "ingest/series"));
    std::uint64_t fingerprint = fnv1a64(serialize_site_table(sites));

    for (const auto& site : sites) {
        const fs::path src = fs::path(config.series_dir) / (site.site_id + ".csv");
        if (!fs::exists(src)) {
            throw PipelineError(2, "series file missing for site " + site.site_id + ": " +
                                       src.string());
        }
        HourlySeries series;
        try {
            series = load_timeseries(src.string(), site);
        } catch (const std::exception& e) {
            throw PipelineError(2, site.site_id + ": " + e.what());
        }
        const std::string canonical = serialize_timeseries(series);
        fingerprint = fnv1a64(canonical, fingerprint);
        write_text_file(out_path(config, "ingest/series/" + site.site_id + ".csv").string(),
                        canonical);
    }

    if (!config.paired_dir.empty()) {
        fs::create_directories(out_path(config, "ingest/paired"));
        for (const auto& site : sites) {
            const fs::path src = fs::path(config.paired_dir) / (site.site_id + ".csv");
            if (!fs::exists(src)) continue;  // paired archives may cover a subset
            const std::string bytes = read_text_file(src.string());
            try {
                parse_paired(bytes, site);  // validate
            } catch (const std::exception& e) {
                throw PipelineError(2, site.site_id + " (paired): " + e.what());
            }
            fingerprint = fnv1a64(bytes, fingerprint);
            write_text_file(out_path(config, "ingest/paired/" + site.site_id + ".csv").string(),
                            bytes);
        }
    }

    write_text_file(out_path(config, "ingest/sites.csv").string(), serialize_site_table(sites));
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fingerprint));
    json meta;
    meta["corpus_fingerprint"] = std::string(buf);
    meta["config_hash"] = config_hash(config);
    meta["sites"] = sites.size();
    write_text_file(out_path(config, "ingest/fingerprint.json").string(), meta.dump(2) + "\n");
}

namespace {

std::string load_fingerprint(const RunConfig& c) {
    require_artifact(c, "ingest/fingerprint.json", "ingest");
    const json j = json::parse(read_text_file(out_path(c, "ingest/fingerprint.json").string()));
    return j.at("corpus_fingerprint").get<std::string>();
}

}  // namespace

// ---------------------------------------------------------------------------
// qc
// ---------------------------------------------------------------------------

void run_qc(const RunConfig& config) {
    const std::vector<SiteMeta> sites = load_ingested_sites(config);
    fs::create_directories(out_path(config, "qc/series"));
    fs::create_directories(out_path(config, "qc/report"));

    // pass 1: pooled training-site fractional changes for the global fallback
    std::vector<double> pooled;
    for (const auto& site : sites) {
        if (site.partition != Partition::kTrain) continue;
        const auto series = load_timeseries(
            out_path(config, "ingest/series/" + site.site_id + ".csv").string(), site);
        const auto changes = qc::fractional_discharge_changes(series);
        pooled.insert(pooled.end(), changes.begin(), changes.end());
    }
    const std::optional<double> global_theta =
        pooled.size() >= 100 ? std::optional<double>(quantile_of(pooled, config.qc.roc_percentile))
                             : std::nullopt;

    json summary;
    summary["config_hash"] = config_hash(config);
    summary["global_roc_theta"] = global_theta.has_value() ? json(*global_theta) : json();
    json site_summaries = json::object();

    std::vector<qc::SiteQcResult> results(sites.size());
    parallel_for(config.jobs, sites.size(), [&](std::size_t i) {
        const auto series = load_timeseries(
            out_path(config, "ingest/series/" + sites[i].site_id + ".csv").string(), sites[i]);
        results[i] = qc::run_site_qc(series, config.qc,
                                     derive_seed(config.master_seed, "qc/" + sites[i].site_id),
                                     global_theta);
    });

    for (std::size_t i = 0; i < sites.size(); ++i) {
        const auto& site = sites[i];
        auto& r = results[i];
        write_text_file(out_path(config, "qc/series/" + site.site_id + ".csv").string(),
                        serialize_timeseries(r.filled, /*with_flags=*/true));

        // per-timestep flag report (flagged rows only)
        std::ostringstream flags_csv;
        flags_csv << "timestamp_utc,flags\n";
        for (std::size_t t = 0; t < r.filled.size(); ++t) {
            const std::uint8_t f = r.filled.flags[t];
            if (f == kFlagNone) continue;
            std::string letters;
            if (f & kFlagOutlier) letters += 'O';
            if (f & kFlagImplausible) letters += 'I';
            if (f & kFlagFillLinear) letters += 'L';
            if (f & kFlagFillRecession) letters += 'R';
            if (f & kFlagExcluded) letters += 'X';
            flags_csv << format_iso8601_utc_hour(r.filled.hour_at(t)) << ',' << letters << "\n";
        }
        write_text_file(out_path(config, "qc/report/" + site.site_id + ".flags.csv").string(),
                        flags_csv.str());

        json sj;
        sj["accepted"] = r.accepted;
        sj["completeness"] = r.completeness;
        sj["outliers"] = r.outlier_count;
        sj["implausible"] = r.implausible_count;
        sj["fills"] = {{"linear_hours", r.fill_stats.linear_hours},
                       {"recession_hours", r.fill_stats.recession_hours},
                       {"excluded_hours", r.fill_stats.excluded_hours},
                       {"total_gap_hours", r.fill_stats.total_gap_hours}};
        sj["roc_theta"] = r.roc_theta;
        sj["roc_used_fallback"] = r.roc_used_fallback;
        if (r.rating.has_value()) {
            sj["rating"] = {{"a", r.rating->a},
                            {"b", r.rating->b},
                            {"h0", r.rating->h0},
                            {"resid_std", r.rating->resid_std}};
        }
        sj["warnings"] = r.warnings;
        write_text_file(out_path(config, "qc/report/" + site.site_id + ".json").string(),
                        sj.dump(2) + "\n");
        site_summaries[site.site_id] = {{"accepted", r.accepted},
                                        {"completeness", r.completeness}};
    }
    summary["sites"] = std::move(site_summaries);
    write_text_file(out_path(config, "qc/summary.json").string(), summary.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// fit-stats
// ---------------------------------------------------------------------------

namespace {

std::set<std::string> accepted_sites(const RunConfig& c) {
    require_artifact(c, "qc/summary.json", "qc");
    const json j = json::parse(read_text_file(out_path(c, "qc/summary.json").string()));
    std::set<std::string> out;
    for (const auto& [id, sj] : j.at("sites").items()) {
        if (sj.at("accepted").get<bool>()) out.insert(id);
    }
    return out;
}

}  // namespace

void run_fit_stats(const RunConfig& config) {
    const std::vector<SiteMeta> sites = load_ingested_sites(config);
    const std::set<std::string> accepted = accepted_sites(config);
    SeriesCache cache(config);

    std::vector<norm::FitInput> inputs;
    std::vector<HourlySeries> storage;
    storage.reserve(sites.size());
    for (const auto& site : sites) {
        if (site.partition != Partition::kTrain || accepted.count(site.site_id) == 0) continue;
        storage.push_back(cache.qc_series(site.site_id));
        norm::FitInput in;
        in.site = site;
        in.series = &storage.back();
        inputs.push_back(in);
    }
    if (inputs.empty()) throw PipelineError(2, "no accepted training sites; cannot fit stats");

    const norm::FitResult fit = norm::fit_site_stats(inputs, config.norm);
    fs::create_directories(out_path(config, "stats"));
    write_text_file(out_path(config, "stats/stats.json").string(),
                    norm::stats_to_json(fit.bundle));
    json meta;
    meta["config_hash"] = config_hash(config);
    meta["warnings"] = fit.warnings;
    meta["fitted_sites"] = fit.bundle.sites.size();
    write_text_file(out_path(config, "stats/summary.json").string(), meta.dump(2) + "\n");
}

namespace {

norm::StatsBundle load_stats(const RunConfig& c) {
    require_artifact(c, "stats/stats.json", "fit-stats");
    return norm::stats_from_json(read_text_file(out_path(c, "stats/stats.json").string()));
}

}  // namespace

// ---------------------------------------------------------------------------
// windows
// ---------------------------------------------------------------------------

void run_windows(const RunConfig& config) {
    const std::vector<SiteMeta> sites = load_ingested_sites(config);
    const std::set<std::string> accepted = accepted_sites(config);
    SeriesCache cache(config);

    fs::create_directories(out_path(config, "windows"));
    std::ostringstream out;
    out << jsonl_header(config, "windows") << "\n";
    std::size_t count = 0;
    for (const auto& site : sites) {
        if (accepted.count(site.site_id) == 0) continue;
        const int stride =
            site.partition == Partition::kTrain ? config.train_stride : config.eval_stride;
        const auto windows = segment_windows(cache.qc_series(site.site_id), stride);
        for (const auto& w : windows) {
            json j;
            j["site"] = site.site_id;
            j["partition"] = partition_name(site.partition);
            j["offset"] = w.offset;
            j["start"] = format_iso8601_utc_hour(w.start_hour);
            out << j.dump() << "\n";
            ++count;
        }
    }
    write_text_file(out_path(config, "windows/windows.jsonl").string(), out.str());
    json meta;
    meta["config_hash"] = config_hash(config);
    meta["windows"] = count;
    write_text_file(out_path(config, "windows/summary.json").string(), meta.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// inject-train / inject-test
// ---------------------------------------------------------------------------

void run_inject_train(const RunConfig& config) {
    const std::vector<SiteMeta> sites = load_ingested_sites(config);
    std::map<std::string, SiteMeta> site_map;
    for (const auto& s : sites) site_map[s.site_id] = s;
    const norm::StatsBundle stats = load_stats(config);
    const auto refs = load_window_refs(config);
    SeriesCache cache(config);

    fs::create_directories(out_path(config, "inject_train"));
    std::ostringstream out;
    out << jsonl_header(config, "inject_train") << "\n";
    double coverage_sum = 0.0;
    std::size_t injected = 0, clean = 0;
    for (const auto& ref : refs) {
        if (ref.partition != Partition::kTrain) continue;
        const auto& series = cache.qc_series(ref.site);
        const RawWindow raw = slice_window(series, ref.site, ref.offset);
        const SiteMeta& meta = site_map.at(ref.site);
        const Window w =
            norm::build_features(raw, meta, stats.stats_for(meta), stats.global, config.norm);
        const std::uint64_t seed = derive_seed(
            config.master_seed, window_seed_key("inject-train", ref.site, ref.start));
        const auto result =
            inject::inject_training(w, config.train_inject, config.train_epoch, seed);
        out << inject::record_to_json_line(result.record, ref.site, ref.start) << "\n";
        if (result.record.clean) {
            ++clean;
        } else {
            coverage_sum += result.record.realized_coverage;
            ++injected;
        }
    }
    write_text_file(out_path(config, "inject_train/records.jsonl").string(), out.str());
    json meta;
    meta["config_hash"] = config_hash(config);
    meta["injected_windows"] = injected;
    meta["clean_windows"] = clean;
    meta["mean_realized_coverage"] = injected ? coverage_sum / injected : 0.0;
    write_text_file(out_path(config, "inject_train/summary.json").string(), meta.dump(2) + "\n");
}

void run_inject_test(const RunConfig& config) {
    const std::vector<SiteMeta> sites = load_ingested_sites(config);
    std::map<std::string, SiteMeta> site_map;
    for (const auto& s : sites) site_map[s.site_id] = s;
    const norm::StatsBundle stats = load_stats(config);
    const auto refs = load_window_refs(config);
    SeriesCache cache(config);

    fs::create_directories(out_path(config, "inject_test"));
    std::ostringstream out;
    out << jsonl_header(config, "inject_test") << "\n";
    std::size_t injected = 0, aborted = 0;
    for (const auto& ref : refs) {
        if (ref.partition != Partition::kTest) continue;
        const auto& series = cache.qc_series(ref.site);
        const RawWindow raw = slice_window(series, ref.site, ref.offset);
        const SiteMeta& meta = site_map.at(ref.site);
        const norm::SiteStats site_stats = stats.stats_for(meta);
        const Window w = norm::build_features(raw, meta, site_stats, stats.global, config.norm);
        const std::uint64_t seed = derive_seed(
            config.master_seed, window_seed_key("inject-test", ref.site, ref.start));
        const auto result =
            inject::inject_test(w, site_stats, config.test_inject, config.norm, seed);
        if (result.aborted) {
            ++aborted;
            continue;
        }
        out << inject::record_to_json_line(result.record, ref.site, ref.start) << "\n";
        ++injected;
    }
    write_text_file(out_path(config, "inject_test/records.jsonl").string(), out.str());
    json meta;
    meta["config_hash"] = config_hash(config);
    meta["injected_windows"] = injected;
    meta["aborted_windows"] = aborted;
    write_text_file(out_path(config, "inject_test/summary.json").string(), meta.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// train-head
// ---------------------------------------------------------------------------

void run_train_head(const RunConfig& config) {
    if (!config.run_head) {
        throw PipelineError(1, "run_head is disabled in the configuration");
    }
    const std::vector<SiteMeta> sites = load_ingested_sites(config);
    std::map<std::string, SiteMeta> site_map;
    for (const auto& s : sites) site_map[s.site_id] = s;
    const norm::StatsBundle stats = load_stats(config);
    auto refs = load_window_refs(config);
    SeriesCache cache(config);

    std::vector<WindowRef> train_refs;
    for (const auto& r : refs) {
        if (r.partition == Partition::kTrain) train_refs.push_back(r);
    }
    if (train_refs.empty()) throw PipelineError(2, "no training windows available");

    // replayable seeds for the training-injector route
    std::map<std::string, std::uint64_t> train_record_seeds;
    if (config.head_train_injector == "train") {
        require_artifact(config, "inject_train/records.jsonl", "inject-train");
        for (const auto& line : read_jsonl(out_path(config, "inject_train/records.jsonl"))) {
            std::string site;
            HourStamp start = 0;
            const auto rec = inject::record_from_json_line(line, &site, &start);
            train_record_seeds[window_seed_key("w", site, start)] = rec.seed;
        }
    }

    // seeded subsample down to head_max_windows
    Rng sampler(derive_seed(config.master_seed, "head-sample"));
    for (std::size_t i = train_refs.size(); i > 1; --i) {
        std::swap(train_refs[i - 1], train_refs[static_cast<std::size_t>(sampler.uniform_int(
                                         0, static_cast<std::int64_t>(i) - 1))]);
    }
    if (train_refs.size() > static_cast<std::size_t>(config.head_max_windows)) {
        train_refs.resize(static_cast<std::size_t>(config.head_max_windows));
    }

    const detect::ReferenceReconstructor reconstructor;
    std::vector<detect::TrainSample> samples(train_refs.size());
    std::vector<std::uint8_t> usable(train_refs.size(), 0);
    parallel_for(config.jobs, train_refs.size(), [&](std::size_t i) {
        const auto& ref = train_refs[i];
        const auto& series = cache.qc_series(ref.site);
        const RawWindow raw = slice_window(series, ref.site, ref.offset);
        const SiteMeta& meta = site_map.at(ref.site);
        const norm::SiteStats site_stats = stats.stats_for(meta);
        const Window w = norm::build_features(raw, meta, site_stats, stats.global, config.norm);

        Window corrupted = w;
        AnomalyMask mask(kWindowLength);
        if (config.head_train_injector == "train") {
            const auto it = train_record_seeds.find(window_seed_key("w", ref.site, ref.start));
            if (it == train_record_seeds.end()) return;
            const auto result = inject::inject_training(w, config.train_inject,
                                                        config.train_epoch, it->second);
            corrupted = result.window;
            mask = result.record.mask;
        } else {
            const std::uint64_t seed = derive_seed(
                config.master_seed, window_seed_key("head-inject", ref.site, ref.start));
            const auto result =
                inject::inject_test(w, site_stats, config.test_inject, config.norm, seed);
            if (result.aborted) return;
            corrupted = result.window;
            mask = result.record.mask;
        }

        std::vector<double> q, h, q_hat, h_hat;
        norm::denormalize_window(corrupted, site_stats, config.norm, &q, &h);
        reconstructor.reconstruct(q, h, &q_hat, &h_hat);
        samples[i].features = detect::extract_detection_features(q, h, q_hat, h_hat);
        samples[i].labels = mask.flags;
        usable[i] = 1;
    });

    std::vector<detect::TrainSample> dataset;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (usable[i]) dataset.push_back(std::move(samples[i]));
    }
    if (dataset.empty()) throw PipelineError(2, "no usable head-training windows");

    detect::HeadTrainConfig head_config = config.head;
    head_config.seed = derive_seed(config.master_seed, "head-train");
    detect::MlpHead init = detect::MlpHead::initialized(
        detect::kDetectionFeatureDim, 128, 64, derive_seed(config.master_seed, "head-init"));
    const auto trained = detect::train_head(dataset, init, head_config);

    fs::create_directories(out_path(config, "head"));
    write_text_file(out_path(config, "head/head.json").string(),
                    detect::head_to_json(trained.head, head_config, load_fingerprint(config)));
    json meta;
    meta["config_hash"] = config_hash(config);
    meta["train_windows"] = dataset.size();
    meta["best_epoch"] = trained.best_epoch;
    meta["best_val_f1"] = trained.best_val_f1;
    meta["warnings"] = trained.warnings;
    json hist = json::array();
    for (const auto& e : trained.history) {
        hist.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_f1", e.val_f1}});
    }
    meta["history"] = std::move(hist);
    write_text_file(out_path(config, "head/summary.json").string(), meta.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// labels
// ---------------------------------------------------------------------------

void run_labels(const RunConfig& config) {
    const std::vector<SiteMeta> sites = load_ingested_sites(config);
    if (config.paired_dir.empty() && !fs::exists(out_path(config, "ingest/paired"))) {
        throw PipelineError(2, "no paired archives ingested; set paired_dir and rerun 'ingest'");
    }

    fs::create_directories(out_path(config, "labels"));
    std::ostringstream out;
    out << jsonl_header(config, "weak_labels") << "\n";
    json summary;
    summary["config_hash"] = config_hash(config);
    std::size_t stations_total = 0, stations_accepted = 0;
    std::size_t windows_total = 0, windows_accepted = 0;

    for (const auto& site : sites) {
        const fs::path path = out_path(config, "ingest/paired/" + site.site_id + ".csv");
        if (!fs::exists(path)) continue;
        ++stations_total;
        const PairedSeries paired = load_paired(path.string(), site);
        const bool station_ok = labels::station_missing_filter(paired, config.weak);
        if (station_ok) ++stations_accepted;

        const labels::WeakLabels weak = labels::weak_labels(paired, config.weak);
        for (std::size_t offset = 0; offset + kWindowLength <= paired.size();
             offset += static_cast<std::size_t>(config.eval_stride)) {
            ++windows_total;
            std::vector<double> q_corr(
                paired.discharge_corrected.begin() + static_cast<std::ptrdiff_t>(offset),
                paired.discharge_corrected.begin() +
                    static_cast<std::ptrdiff_t>(offset + kWindowLength));
            std::vector<double> h_corr(
                paired.stage_corrected.begin() + static_cast<std::ptrdiff_t>(offset),
                paired.stage_corrected.begin() +
                    static_cast<std::ptrdiff_t>(offset + kWindowLength));
            std::vector<std::uint8_t> flags(
                weak.mask.flags.begin() + static_cast<std::ptrdiff_t>(offset),
                weak.mask.flags.begin() + static_cast<std::ptrdiff_t>(offset + kWindowLength));
            std::vector<std::uint8_t> labeled(
                weak.labeled.begin() + static_cast<std::ptrdiff_t>(offset),
                weak.labeled.begin() + static_cast<std::ptrdiff_t>(offset + kWindowLength));
            std::vector<double> magnitude(
                weak.magnitude.begin() + static_cast<std::ptrdiff_t>(offset),
                weak.magnitude.begin() + static_cast<std::ptrdiff_t>(offset + kWindowLength));

            const auto quality = labels::window_quality_filter(
                q_corr, h_corr,
                derive_seed(config.master_seed,
                            window_seed_key("window-quality", site.site_id,
                                            paired.start_hour + static_cast<HourStamp>(offset))));
            const bool fraction_ok = labels::correction_fraction_filter(flags, config.weak);
            const bool accepted = station_ok && quality.pass && fraction_ok;
            if (accepted) ++windows_accepted;

            const AnomalyMask pattern =
                labels::pattern_labels(paired, offset, kWindowLength);

            json j;
            j["site"] = site.site_id;
            j["start"] =
                format_iso8601_utc_hour(paired.start_hour + static_cast<HourStamp>(offset));
            j["offset"] = offset;
            j["accepted"] = accepted;
            j["station_accepted"] = station_ok;
            j["correction_fraction_ok"] = fraction_ok;
            j["quality"] = {{"cv_h", quality.cv_h},
                            {"spearman_qh", quality.spearman_qh},
                            {"rating_b", std::isnan(quality.rating_b) ? json() : json(quality.rating_b)},
                            {"rating_r2", std::isnan(quality.rating_r2) ? json() : json(quality.rating_r2)},
                            {"valid_fraction", quality.valid_fraction},
                            {"flatline_fraction", quality.flatline_fraction},
                            {"pass", quality.pass}};
            j["flags_runs"] = runs_from_flags(flags);
            j["labeled_runs"] = runs_from_flags(labeled);
            j["pattern_runs"] = runs_from_flags(pattern.flags);
            std::vector<double> mag_out(magnitude.size());
            for (std::size_t k = 0; k < magnitude.size(); ++k) {
                mag_out[k] = labeled[k] ? magnitude[k] : 0.0;
            }
            j["magnitude"] = json::parse(format_score_array(mag_out));
            out << j.dump() << "\n";
        }
    }
    if (stations_total == 0) {
        throw PipelineError(2, "no paired archives found for any site");
    }
    write_text_file(out_path(config, "labels/weak.jsonl").string(), out.str());
    summary["stations_total"] = stations_total;
    summary["stations_accepted"] = stations_accepted;
    summary["windows_total"] = windows_total;
    summary["windows_accepted"] = windows_accepted;
    summary["pattern_labels_version"] = labels::kPatternLabelsVersion;
    write_text_file(out_path(config, "labels/summary.json").string(), summary.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// detect
// ---------------------------------------------------------------------------

namespace {

struct DetectJob {
    std::string site;
    HourStamp start = 0;
    std::string track;
    std::vector<double> q, h;  // physical series the detectors see
};

std::string detection_line(const RunConfig& config, const DetectJob& job,
                           const detect::DetectionResult& r) {
    json j;
    j["site"] = job.site;
    j["start"] = format_iso8601_utc_hour(job.start);
    j["track"] = job.track;
    j["detector"] = r.detector_id;
    j["scores"] = json::parse(format_score_array(r.scores));
    j["flags_runs"] = runs_from_flags(r.flags);
    if (!r.uncertainty.empty()) {
        j["uncertainty"] = json::parse(format_score_array(r.uncertainty));
    }
    if (!r.note.empty()) j["note"] = r.note;
    (void)config;
    return j.dump();
}

}  // namespace

void run_detect(const RunConfig& config) {
    const std::vector<SiteMeta> sites = load_ingested_sites(config);
    std::map<std::string, SiteMeta> site_map;
    for (const auto& s : sites) site_map[s.site_id] = s;
    const norm::StatsBundle stats = load_stats(config);
    require_artifact(config, "inject_test/records.jsonl", "inject-test");
    const auto refs = load_window_refs(config);
    std::map<std::string, WindowRef> ref_map;
    for (const auto& r : refs) {
        ref_map[window_seed_key("w", r.site, r.start)] = r;
    }
    SeriesCache cache(config);

    std::optional<detect::MlpHead> head;
    if (config.run_head && fs::exists(out_path(config, "head/head.json"))) {
        head = detect::head_from_json(
            read_text_file(out_path(config, "head/head.json").string()));
    }
    const detect::ReferenceReconstructor reconstructor;

    // --- synthetic track: replay injections over test windows ---
    struct SynthItem {
        DetectJob job;
        std::vector<double> clean_q, clean_h;
        AnomalyMask mask;
    };
    std::vector<std::string> record_lines =
        read_jsonl(out_path(config, "inject_test/records.jsonl"));
    std::vector<SynthItem> items(record_lines.size());
    parallel_for(config.jobs, record_lines.size(), [&](std::size_t i) {
        std::string site;
        HourStamp start = 0;
        const auto record = inject::record_from_json_line(record_lines[i], &site, &start);
        const auto& ref = ref_map.at(window_seed_key("w", site, start));
        const auto& series = cache.qc_series(site);
        const RawWindow raw = slice_window(series, site, ref.offset);
        const SiteMeta& meta = site_map.at(site);
        const norm::SiteStats site_stats = stats.stats_for(meta);
        const Window w = norm::build_features(raw, meta, site_stats, stats.global, config.norm);
        const auto replay =
            inject::inject_test(w, site_stats, config.test_inject, config.norm, record.seed);

        SynthItem& item = items[i];
        item.job.site = site;
        item.job.start = start;
        item.job.track = "synthetic";
        norm::denormalize_window(replay.window, site_stats, config.norm, &item.job.q,
                                 &item.job.h);
        norm::denormalize_window(w, site_stats, config.norm, &item.clean_q, &item.clean_h);
        item.mask = replay.record.mask;
    });

    // --- paired track: raw channels of accepted weak-label windows ---
    std::vector<DetectJob> paired_jobs;
    if (fs::exists(out_path(config, "labels/weak.jsonl"))) {
        std::map<std::string, PairedSeries> paired_cache;
        for (const auto& line : read_jsonl(out_path(config, "labels/weak.jsonl"))) {
            const json j = json::parse(line);
            if (!j.at("accepted").get<bool>()) continue;
            const std::string site = j.at("site").get<std::string>();
            const std::size_t offset = j.at("offset").get<std::size_t>();
            if (paired_cache.count(site) == 0) {
                paired_cache[site] = load_paired(
                    out_path(config, "ingest/paired/" + site + ".csv").string(),
                    site_map.at(site));
            }
            const PairedSeries& p = paired_cache[site];
            DetectJob job;
            job.site = site;
            job.start = p.start_hour + static_cast<HourStamp>(offset);
            job.track = "paired";
            job.q.assign(p.discharge_raw.begin() + static_cast<std::ptrdiff_t>(offset),
                         p.discharge_raw.begin() +
                             static_cast<std::ptrdiff_t>(offset + kWindowLength));
            job.h.assign(p.stage_raw.begin() + static_cast<std::ptrdiff_t>(offset),
                         p.stage_raw.begin() +
                             static_cast<std::ptrdiff_t>(offset + kWindowLength));
            paired_jobs.push_back(std::move(job));
        }
    }

    // run detectors
    fs::create_directories(out_path(config, "detect"));
    std::vector<DetectJob> all_jobs;
    all_jobs.reserve(items.size() + paired_jobs.size());
    for (auto& i : items) all_jobs.push_back(i.job);
    for (auto& j : paired_jobs) all_jobs.push_back(j);

    std::vector<std::vector<std::string>> lines(all_jobs.size());
    parallel_for(config.jobs, all_jobs.size(), [&](std::size_t i) {
        const DetectJob& job = all_jobs[i];
        const norm::SiteStats site_stats = stats.stats_for(site_map.at(job.site));
        for (const auto& id : config.detectors) {
            const std::uint64_t seed = derive_seed(
                config.master_seed, window_seed_key("detector/" + id, job.site, job.start));
            try {
                const auto r =
                    detect::run_baseline(id, job.q, job.h, job.start, site_stats, seed);
                lines[i].push_back(detection_line(config, job, r));
            } catch (const std::exception& e) {
                json j;
                j["site"] = job.site;
                j["start"] = format_iso8601_utc_hour(job.start);
                j["track"] = job.track;
                j["detector"] = id;
                j["error"] = e.what();
                lines[i].push_back(j.dump());
            }
        }
        if (head.has_value()) {
            std::vector<double> q_hat, h_hat;
            reconstructor.reconstruct(job.q, job.h, &q_hat, &h_hat);
            const Eigen::MatrixXd feats =
                detect::extract_detection_features(job.q, job.h, q_hat, h_hat);
            const Eigen::VectorXd probs = detect::mlp_forward(feats, *head);
            Rng mc_rng(derive_seed(config.master_seed,
                                   window_seed_key("mc", job.site, job.start)));
            const auto mc = detect::mlp_forward_mc(feats, *head, config.mc_passes, mc_rng);
            detect::DetectionResult r;
            r.detector_id = "mlp_head";
            r.scores.assign(probs.data(), probs.data() + probs.size());
            r.flags = detect::threshold_flags(probs, config.head.threshold);
            r.uncertainty.assign(mc.stddev.data(), mc.stddev.data() + mc.stddev.size());
            lines[i].push_back(detection_line(config, job, r));
        }
    });

    std::ostringstream detections;
    detections << jsonl_header(config, "detections") << "\n";
    for (const auto& group : lines) {
        for (const auto& line : group) detections << line << "\n";
    }
    write_text_file(out_path(config, "detect/detections.jsonl").string(), detections.str());

    // reconstruction metrics on the synthetic track
    std::ostringstream recon_out;
    recon_out << jsonl_header(config, "reconstruction") << "\n";
    std::vector<std::string> recon_lines(items.size());
    parallel_for(config.jobs, items.size(), [&](std::size_t i) {
        const auto& item = items[i];
        std::vector<double> q_hat, h_hat;
        reconstructor.reconstruct(item.job.q, item.job.h, &q_hat, &h_hat);
        json j;
        j["site"] = item.job.site;
        j["start"] = format_iso8601_utc_hour(item.job.start);
        const double er_q =
            eval::error_reduction(item.job.q, item.clean_q, q_hat, item.mask.flags);
        const double er_h =
            eval::error_reduction(item.job.h, item.clean_h, h_hat, item.mask.flags);
        const auto [rmse_anom, rmse_clean] =
            eval::rmse_segments(q_hat, item.clean_q, item.mask.flags);
        j["error_reduction_q"] = std::isnan(er_q) ? json() : json(er_q);
        j["error_reduction_h"] = std::isnan(er_h) ? json() : json(er_h);
        j["rmse_anom_q"] = std::isnan(rmse_anom) ? json() : json(rmse_anom);
        j["rmse_clean_q"] = std::isnan(rmse_clean) ? json() : json(rmse_clean);
        recon_lines[i] = j.dump();
    });
    for (const auto& line : recon_lines) recon_out << line << "\n";
    write_text_file(out_path(config, "detect/reconstruction.jsonl").string(), recon_out.str());

    json meta;
    meta["config_hash"] = config_hash(config);
    meta["synthetic_windows"] = items.size();
    meta["paired_windows"] = paired_jobs.size();
    meta["head_included"] = head.has_value();
    write_text_file(out_path(config, "detect/summary.json").string(), meta.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// evaluate / report / verify
// ---------------------------------------------------------------------------

namespace {

report::ReportInputs gather_report_inputs(const RunConfig& config) {
    report::ReportInputs inputs;
    inputs.config_hash = config_hash(config);
    inputs.master_seed = config.master_seed;
    inputs.corpus_fingerprint = load_fingerprint(config);
    {
        char buf[20];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(
                          fnv1a64(config_to_json_object(config).at("test_inject").dump())));
        inputs.injector_config_hash = buf;
    }
    inputs.expected_detectors = config.detectors;
    if (config.run_head) inputs.expected_detectors.push_back("mlp_head");

    // truths: synthetic injections
    require_artifact(config, "inject_test/records.jsonl", "inject-test");
    for (const auto& line : read_jsonl(out_path(config, "inject_test/records.jsonl"))) {
        report::WindowTruth t;
        const auto record = inject::record_from_json_line(line, &t.site, &t.start);
        t.track = "synthetic";
        t.labels = record.mask.flags;
        t.type_labels = record.mask.type_labels;
        t.single_type = record.single_type;
        if (record.single_type && !record.segments.empty()) {
            t.type_id = record.segments.front().type;
        }
        inputs.truths.push_back(std::move(t));
    }

    // truths: weak labels (optional)
    if (fs::exists(out_path(config, "labels/weak.jsonl"))) {
        std::map<double, std::pair<double, double>> sweep_acc;  // thr -> (flagged, labeled)
        for (const auto& line : read_jsonl(out_path(config, "labels/weak.jsonl"))) {
            const json j = json::parse(line);
            const auto magnitude = j.at("magnitude").get<std::vector<double>>();
            const auto labeled = flags_from_runs(j.at("labeled_runs"), magnitude.size());
            for (const double thr : config.weak_sweep) {
                auto& acc = sweep_acc[thr];
                for (std::size_t k = 0; k < magnitude.size(); ++k) {
                    if (!labeled[k]) continue;
                    acc.second += 1.0;
                    if (magnitude[k] > thr) acc.first += 1.0;
                }
            }
            if (!j.at("accepted").get<bool>()) continue;
            report::WindowTruth t;
            t.site = j.at("site").get<std::string>();
            t.start = parse_iso8601_utc_hour(j.at("start").get<std::string>());
            t.track = "paired";
            t.labels = flags_from_runs(j.at("flags_runs"), kWindowLength);
            t.valid = labeled;
            t.magnitude = magnitude;
            inputs.truths.push_back(std::move(t));
        }
        for (const double thr : config.weak_sweep) {
            const auto& acc = sweep_acc[thr];
            inputs.threshold_sweep.emplace_back(
                thr, acc.second > 0.0 ? acc.first / acc.second : 0.0);
        }
    }

    // detections
    require_artifact(config, "detect/detections.jsonl", "detect");
    for (const auto& line : read_jsonl(out_path(config, "detect/detections.jsonl"))) {
        const json j = json::parse(line);
        if (j.contains("error")) continue;
        report::WindowDetection d;
        d.site = j.at("site").get<std::string>();
        d.start = parse_iso8601_utc_hour(j.at("start").get<std::string>());
        d.track = j.at("track").get<std::string>();
        d.detector = j.at("detector").get<std::string>();
        d.scores = j.at("scores").get<std::vector<double>>();
        d.flags = flags_from_runs(j.at("flags_runs"), d.scores.size());
        if (j.contains("uncertainty")) {
            d.uncertainty = j.at("uncertainty").get<std::vector<double>>();
        }
        inputs.detections.push_back(std::move(d));
    }

    // reconstruction metrics
    if (fs::exists(out_path(config, "detect/reconstruction.jsonl"))) {
        for (const auto& line : read_jsonl(out_path(config, "detect/reconstruction.jsonl"))) {
            const json j = json::parse(line);
            report::ReconEntry e;
            e.site = j.at("site").get<std::string>();
            e.start = parse_iso8601_utc_hour(j.at("start").get<std::string>());
            auto get = [&](const char* key) {
                return j.at(key).is_null() ? kMissing : j.at(key).get<double>();
            };
            e.error_reduction_q = get("error_reduction_q");
            e.error_reduction_h = get("error_reduction_h");
            e.rmse_anom_q = get("rmse_anom_q");
            e.rmse_clean_q = get("rmse_clean_q");
            inputs.reconstruction.push_back(std::move(e));
        }
    }
    return inputs;
}

std::string per_window_jsonl(const RunConfig& config, const report::ReportInputs& inputs) {
    std::map<std::string, const report::WindowTruth*> truth_index;
    for (const auto& t : inputs.truths) {
        truth_index[t.track + "/" + t.site + "/" + std::to_string(t.start)] = &t;
    }
    std::ostringstream out;
    out << jsonl_header(config, "per_window_metrics") << "\n";
    for (const auto& d : inputs.detections) {
        const auto it =
            truth_index.find(d.track + "/" + d.site + "/" + std::to_string(d.start));
        if (it == truth_index.end()) continue;
        const auto p = eval::prf1(d.flags, it->second->labels, it->second->valid);
        json j;
        j["site"] = d.site;
        j["start"] = format_iso8601_utc_hour(d.start);
        j["track"] = d.track;
        j["detector"] = d.detector;
        j["precision"] = p.precision;
        j["recall"] = p.recall;
        j["f1"] = p.f1;
        j["tp"] = p.confusion.tp;
        j["fp"] = p.confusion.fp;
        j["fn"] = p.confusion.fn;
        j["tn"] = p.confusion.tn;
        out << j.dump() << "\n";
    }
    return out.str();
}

}  // namespace

void run_evaluate(const RunConfig& config) {
    const auto inputs = gather_report_inputs(config);
    fs::create_directories(out_path(config, "eval"));
    write_text_file(out_path(config, "eval/per_window.jsonl").string(),
                    per_window_jsonl(config, inputs));

    json pooled;
    pooled["config_hash"] = config_hash(config);
    for (const std::string track : {"synthetic", "paired"}) {
        const auto sums = report::summarize_detectors(inputs, track);
        json dets = json::object();
        for (const auto& s : sums) {
            dets[s.detector] = {{"micro_f1", s.micro.f1},
                                {"micro_precision", s.micro.precision},
                                {"micro_recall", s.micro.recall},
                                {"macro_f1", s.macro_f1},
                                {"auroc", s.auroc},
                                {"windows", s.windows}};
        }
        if (!dets.empty()) pooled[track] = std::move(dets);
    }
    write_text_file(out_path(config, "eval/pooled.json").string(), pooled.dump(2) + "\n");
}

void run_report(const RunConfig& config) {
    require_artifact(config, "eval/per_window.jsonl", "evaluate");
    const auto inputs = gather_report_inputs(config);
    const auto bundle = report::build_report(inputs);
    fs::create_directories(out_path(config, "report"));
    for (const auto& [name, content] : bundle) {
        write_text_file(out_path(config, "report/" + name).string(), content);
    }
}

void run_verify(const RunConfig& config) {
    require_artifact(config, "report/summary.json", "report");
    const auto inputs = gather_report_inputs(config);
    const auto bundle = report::build_report(inputs);
    std::vector<std::string> mismatches;
    for (const auto& [name, content] : bundle) {
        const fs::path path = out_path(config, "report/" + name);
        if (!fs::exists(path)) {
            mismatches.push_back(name + " (missing)");
            continue;
        }
        if (read_text_file(path.string()) != content) {
            mismatches.push_back(name);
        }
    }
    // the per-window artifact must also be reproducible
    require_artifact(config, "eval/per_window.jsonl", "evaluate");
    if (read_text_file(out_path(config, "eval/per_window.jsonl").string()) !=
        per_window_jsonl(config, inputs)) {
        mismatches.push_back("eval/per_window.jsonl");
    }
    if (!mismatches.empty()) {
        std::string msg = "verification failed, stale or tampered artifacts:";
        for (const auto& m : mismatches) msg += " " + m;
        throw PipelineError(3, msg);
    }
}

const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names = {
        "ingest",      "qc",         "fit-stats", "windows", "inject-train",
        "inject-test", "train-head", "detect",    "labels",  "evaluate",
        "report",      "verify"};
    return names;
}

void run_stage(const std::string& stage, const RunConfig& config) {
    if (stage == "ingest") return run_ingest(config);
    if (stage == "qc") return run_qc(config);
    if (stage == "fit-stats") return run_fit_stats(config);
    if (stage == "windows") return run_windows(config);
    if (stage == "inject-train") return run_inject_train(config);
    if (stage == "inject-test") return run_inject_test(config);
    if (stage == "train-head") return run_train_head(config);
    if (stage == "detect") return run_detect(config);
    if (stage == "labels") return run_labels(config);
    if (stage == "evaluate") return run_evaluate(config);
    if (stage == "report") return run_report(config);
    if (stage == "verify") return run_verify(config);
    throw PipelineError(1, "unknown stage: " + stage);
}

}  // namespace pipeline
}  // namespace streamqc
