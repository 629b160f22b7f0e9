#include "streamqc/fixture.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "streamqc/csv.hpp"
#include "streamqc/rng.hpp"
#include "streamqc/units.hpp"

namespace streamqc {
namespace fixture {

namespace {
constexpr double kTwoPi = 6.283185307179586477;
}

SyntheticSite make_site(int index, const FixtureConfig& config) {
    Rng rng(derive_seed(config.seed, "site/" + std::to_string(index)));
    SyntheticSite site;

    char id[16];
    std::snprintf(id, sizeof(id), "fx%04d", index);
    site.meta.site_id = id;
    site.meta.latitude = rng.uniform(30.0, 48.0);
    site.meta.longitude = rng.uniform(-120.0, -70.0);
    site.meta.drainage_area = std::exp(rng.uniform(std::log(2.0), std::log(50000.0)));
    site.meta.elevation = rng.uniform(10.0, 2500.0);

    const int n_train = static_cast<int>(std::ceil(config.train_frac * config.n_sites));
    const int n_val = static_cast<int>(std::ceil(config.val_frac * config.n_sites));
    if (index < n_train) {
        site.meta.partition = Partition::kTrain;
    } else if (index < n_train + n_val) {
        site.meta.partition = Partition::kValidation;
    } else {
        site.meta.partition = Partition::kTest;
    }

    site.rating_b = rng.uniform(1.3, 2.2);
    site.rating_a = std::exp(rng.uniform(std::log(0.5), std::log(20.0)));
    site.rating_h0 = rng.uniform(0.5, 3.0);

    const double base = rng.uniform(std::log(5.0), std::log(2000.0));
    const double seasonal_amp = rng.uniform(0.3, 1.2);
    const double phase = rng.uniform(0.0, kTwoPi);
    const double ar_std = rng.uniform(0.25, 0.9);
    constexpr double kArRho = 0.995;
    const double innovation = ar_std * std::sqrt(1.0 - kArRho * kArRho);
    const double storm_rate = 1.0 / rng.uniform(150.0, 400.0);
    const double storm_tau = rng.uniform(20.0, 80.0);

    HourlySeries& s = site.series;
    s.site_id = site.meta.site_id;
    s.start_hour = parse_iso8601_utc_hour("2015-01-01T00:00:00Z");
    s.discharge.resize(config.hours);
    s.stage.resize(config.hours);
    s.flags.assign(config.hours, kFlagNone);

    double ar = rng.normal(0.0, ar_std);
    double storm = 0.0;
    for (int t = 0; t < config.hours; ++t) {
        ar = kArRho * ar + rng.normal(0.0, innovation);
        storm *= std::exp(-1.0 / storm_tau);
        if (rng.bernoulli(storm_rate)) storm += rng.uniform(0.5, 2.5);
        const double season =
            seasonal_amp * std::sin(kTwoPi * (static_cast<double>(t) / 8760.0) + phase);
        const double lnq = base + season + ar + storm;
        const double q = std::exp(lnq);
        const double h =
            site.rating_h0 + std::pow(q / site.rating_a, 1.0 / site.rating_b) +
            rng.normal(0.0, 0.003);
        s.discharge[t] = q;
        s.stage[t] = std::max(h, 0.01);
    }

    if (config.gap_rate > 0.0) {
        int t = 0;
        while (t < config.hours) {
            if (rng.bernoulli(config.gap_rate)) {
                const int len = static_cast<int>(
                    rng.uniform_int(config.gap_len_min, config.gap_len_max));
                for (int p = t; p < std::min(config.hours, t + len); ++p) {
                    s.discharge[p] = kMissing;
                    s.stage[p] = kMissing;
                }
                t += len;
            } else {
                ++t;
            }
        }
    }
    return site;
}

PairedSeries make_paired(const SyntheticSite& site, std::uint64_t seed) {
    Rng rng(seed);
    const HourlySeries& s = site.series;
    const std::size_t n = s.size();

    PairedSeries p;
    p.site_id = site.meta.site_id;
    p.start_hour = s.start_hour;
    p.stage_corrected = s.stage;
    p.discharge_corrected = s.discharge;
    p.stage_raw = s.stage;
    p.discharge_raw = s.discharge;

    // disturb the raw record in segments so windows land in the 10-40%
    // correction-fraction band
    std::size_t t = 0;
    while (t < n) {
        const std::size_t clean_span = static_cast<std::size_t>(rng.uniform_int(60, 240));
        t += clean_span;
        if (t >= n) break;
        const std::size_t len =
            std::min<std::size_t>(n - t, static_cast<std::size_t>(rng.uniform_int(12, 96)));
        const int kind = static_cast<int>(rng.uniform_int(0, 2));
        const double q_factor = rng.uniform(1.05, 1.8) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
        const double h_offset = rng.uniform(0.05, 0.8);
        for (std::size_t k = t; k < t + len; ++k) {
            if (is_missing(p.discharge_raw[k]) || is_missing(p.stage_raw[k])) continue;
            if (kind == 0) {
                // discharge mis-scaling, later corrected
                p.discharge_raw[k] *= q_factor > 0 ? q_factor : 1.0 / -q_factor;
            } else if (kind == 1) {
                p.stage_raw[k] += h_offset;
            } else {
                // stuck raw sensor later replaced by the corrected curve
                p.discharge_raw[k] = p.discharge_raw[t];
                p.stage_raw[k] = p.stage_raw[t];
            }
        }
        t += len;
    }
    return p;
}

void write_fixture_corpus(const FixtureConfig& config, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "series");
    if (config.paired) fs::create_directories(fs::path(dir) / "paired");

    std::vector<SiteMeta> metas;
    for (int i = 0; i < config.n_sites; ++i) {
        const SyntheticSite site = make_site(i, config);
        metas.push_back(site.meta);
        write_text_file((fs::path(dir) / "series" / (site.meta.site_id + ".csv")).string(),
                        serialize_timeseries(site.series));
        if (config.paired) {
            const PairedSeries p =
                make_paired(site, derive_seed(config.seed, "paired/" + site.meta.site_id));
            std::ostringstream out;
            out << "timestamp_utc,stage_raw_m,stage_corr_m,discharge_raw_m3s,discharge_corr_m3s\n";
            for (std::size_t k = 0; k < p.size(); ++k) {
                out << format_iso8601_utc_hour(p.start_hour + static_cast<HourStamp>(k)) << ','
                    << format_decimal(p.stage_raw[k] / kMetersToFeet, 5) << ','
                    << format_decimal(p.stage_corrected[k] / kMetersToFeet, 5) << ','
                    << format_decimal(p.discharge_raw[k] / kCmsToCfs, 5) << ','
                    << format_decimal(p.discharge_corrected[k] / kCmsToCfs, 5) << "\n";
            }
            write_text_file((fs::path(dir) / "paired" / (site.meta.site_id + ".csv")).string(),
                            out.str());
        }
    }
    write_text_file((fs::path(dir) / "sites.csv").string(), serialize_site_table(metas));
}

}  // namespace fixture
}  // namespace streamqc
