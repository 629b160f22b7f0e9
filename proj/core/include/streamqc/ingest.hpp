#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "streamqc/types.hpp"

namespace streamqc {

// Parse failure with file context (row numbers are 1-based and count the
// header as row 1).
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Four aligned hourly channels from a raw/corrected archive pair, already
// converted to imperial units. All channels share one timestamp axis; hours
// absent from a channel are missing there, never dropped here.
struct PairedSeries {
    std::string site_id;
    HourStamp start_hour = 0;
    std::vector<double> stage_raw;
    std::vector<double> stage_corrected;
    std::vector<double> discharge_raw;
    std::vector<double> discharge_corrected;

    std::size_t size() const { return stage_raw.size(); }
};

// Site table CSV: site_id,lat,lon,drainage_area_km2,elevation_m,partition.
// Duplicate ids, missing columns, unparseable numbers and out-of-range
// coordinates are rejected with the offending row number.
std::vector<SiteMeta> parse_site_table(const std::string& csv_text);
std::vector<SiteMeta> load_site_table(const std::string& path);

// Series CSV: timestamp_utc,discharge_cfs,stage_ft. Blank cell = missing.
// Gaps in the timestamp axis materialize as missing timesteps. Duplicate or
// non-monotone hours are rejected.
HourlySeries parse_timeseries(const std::string& csv_text, const SiteMeta& site);
HourlySeries load_timeseries(const std::string& path, const SiteMeta& site);

// Paired CSV: timestamp_utc,stage_raw_m,stage_corr_m,discharge_raw_m3s,
// discharge_corr_m3s (SI units, converted to imperial here). The axis is the
// union of all hours present; channels missing an hour carry NaN there.
PairedSeries parse_paired(const std::string& csv_text, const SiteMeta& site);
PairedSeries load_paired(const std::string& path, const SiteMeta& site);

// Canonical serialization at the declared precision (discharge 3 decimals
// ft^3/s, stage 4 decimals ft). parse(serialize(s)) round-trips losslessly
// at that precision. An optional flags column carries QC flags through.
std::string serialize_timeseries(const HourlySeries& series, bool with_flags = false);
std::string serialize_site_table(const std::vector<SiteMeta>& sites);

// Reads back a series written by serialize_timeseries(with_flags=true).
HourlySeries parse_flagged_timeseries(const std::string& csv_text, const SiteMeta& site);

}  // namespace streamqc
