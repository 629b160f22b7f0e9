#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "streamqc/ingest.hpp"
#include "streamqc/types.hpp"

namespace streamqc {
namespace fixture {

// Seeded synthetic corpus: per-site power-law rating, seasonal cycle, AR(1)
// log-flow noise and storm pulses. Deterministic given (seed, n_sites,
// hours).
struct FixtureConfig {
    int n_sites = 5;
    int hours = 2 * 8760;
    std::uint64_t seed = 7;
    double train_frac = 0.7;
    double val_frac = 0.1;  // remainder is the test partition
    double gap_rate = 0.0;  // per-hour probability that a short gap starts
    int gap_len_min = 1, gap_len_max = 5;
    bool paired = false;  // additionally emit raw/corrected paired archives
};

struct SyntheticSite {
    SiteMeta meta;
    HourlySeries series;
    // rating parameters used by the generator (handy for oracle tests)
    double rating_a = 0.0, rating_b = 0.0, rating_h0 = 0.0;
};

SyntheticSite make_site(int index, const FixtureConfig& config);

// Paired archive derived from a clean series: corrected = clean, raw = clean
// plus generator-injected disturbances (stage offsets, discharge rescaling,
// flatlines) covering roughly 10-40% of each window.
PairedSeries make_paired(const SyntheticSite& site, std::uint64_t seed);

// Writes sites.csv and series/<site>.csv (+ paired/<site>.csv when enabled)
// under `dir`.
void write_fixture_corpus(const FixtureConfig& config, const std::string& dir);

}  // namespace fixture
}  // namespace streamqc
