#include "streamqc/ingest.hpp"

#include <array>
#include <cmath>
#include <cstdlib>
#include <map>
#include <set>
#include <sstream>

#include "streamqc/csv.hpp"
#include "streamqc/units.hpp"

namespace streamqc {

namespace {

double parse_number(const std::string& field, int row, const std::string& what) {
    if (field.empty()) return kMissing;
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (end != field.c_str() + field.size() || !std::isfinite(v)) {
        throw ParseError("row " + std::to_string(row) + ": unparseable " + what + " '" +
                         field + "'");
    }
    return v;
}

int require_column(const CsvTable& t, const std::string& name) {
    const int c = t.column(name);
    if (c < 0) throw ParseError("missing column '" + name + "'");
    return c;
}

// Shared timestamp-axis builder: rows of (hour, values...) already verified
// strictly increasing; materializes gaps as missing.
template <int N>
struct AxisRows {
    std::vector<HourStamp> hours;
    std::array<std::vector<double>, N> cols;
};

template <int N>
AxisRows<N> read_axis(const CsvTable& table, const std::array<int, N>& col_idx,
                      const std::array<const char*, N>& col_names) {
    AxisRows<N> out;
    std::map<HourStamp, int> seen;  // hour -> row number (for duplicate reports)
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const int row = static_cast<int>(r) + 2;  // 1-based, header is row 1
        const auto& fields = table.rows[r];
        if (fields.empty() || fields[0].empty()) {
            throw ParseError("row " + std::to_string(row) + ": missing timestamp");
        }
        HourStamp hour;
        try {
            hour = parse_iso8601_utc_hour(fields[0]);
        } catch (const std::exception& e) {
            throw ParseError("row " + std::to_string(row) + ": " + e.what());
        }
        const auto dup = seen.find(hour);
        if (dup != seen.end()) {
            throw ParseError("duplicate hour " + fields[0] + " on rows " +
                             std::to_string(dup->second) + " and " + std::to_string(row));
        }
        if (!out.hours.empty() && hour < out.hours.back()) {
            throw ParseError("row " + std::to_string(row) + ": non-monotone timestamp");
        }
        seen.emplace(hour, row);
        out.hours.push_back(hour);
        for (int c = 0; c < N; ++c) {
            const std::string& field =
                col_idx[c] < static_cast<int>(fields.size()) ? fields[col_idx[c]] : std::string();
            out.cols[c].push_back(parse_number(field, row, col_names[c]));
        }
    }
    return out;
}

}  // namespace

std::vector<SiteMeta> parse_site_table(const std::string& csv_text) {
    const CsvTable table = parse_csv(csv_text);
    const int c_id = require_column(table, "site_id");
    const int c_lat = require_column(table, "lat");
    const int c_lon = require_column(table, "lon");
    const int c_area = require_column(table, "drainage_area_km2");
    const int c_elev = require_column(table, "elevation_m");
    const int c_part = require_column(table, "partition");

    std::vector<SiteMeta> sites;
    std::set<std::string> ids;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const int row = static_cast<int>(r) + 2;
        const auto& fields = table.rows[r];
        const int max_col = std::max({c_id, c_lat, c_lon, c_area, c_elev, c_part});
        if (static_cast<int>(fields.size()) <= max_col) {
            throw ParseError("row " + std::to_string(row) + ": too few fields");
        }
        SiteMeta s;
        s.site_id = fields[c_id];
        if (s.site_id.empty()) {
            throw ParseError("row " + std::to_string(row) + ": empty site_id");
        }
        if (!ids.insert(s.site_id).second) {
            throw ParseError("row " + std::to_string(row) + ": duplicate site_id '" +
                             s.site_id + "'");
        }
        s.latitude = parse_number(fields[c_lat], row, "lat");
        s.longitude = parse_number(fields[c_lon], row, "lon");
        s.drainage_area = parse_number(fields[c_area], row, "drainage_area_km2");
        s.elevation = parse_number(fields[c_elev], row, "elevation_m");
        if (is_missing(s.latitude) || s.latitude < -90.0 || s.latitude > 90.0) {
            throw ParseError("row " + std::to_string(row) + ": latitude out of range");
        }
        if (is_missing(s.longitude) || s.longitude < -180.0 || s.longitude > 180.0) {
            throw ParseError("row " + std::to_string(row) + ": longitude out of range");
        }
        if (is_missing(s.drainage_area) || s.drainage_area <= 0.0) {
            throw ParseError("row " + std::to_string(row) + ": drainage area must be > 0");
        }
        if (is_missing(s.elevation)) {
            throw ParseError("row " + std::to_string(row) + ": missing elevation");
        }
        try {
            s.partition = partition_from_name(fields[c_part]);
        } catch (const std::exception& e) {
            throw ParseError("row " + std::to_string(row) + ": " + e.what());
        }
        sites.push_back(std::move(s));
    }
    return sites;
}

std::vector<SiteMeta> load_site_table(const std::string& path) {
    return parse_site_table(read_text_file(path));
}

HourlySeries parse_timeseries(const std::string& csv_text, const SiteMeta& site) {
    const CsvTable table = parse_csv(csv_text);
    const std::array<int, 2> cols = {require_column(table, "discharge_cfs"),
                                     require_column(table, "stage_ft")};
    const auto axis = read_axis<2>(table, cols, {"discharge_cfs", "stage_ft"});

    HourlySeries s;
    s.site_id = site.site_id;
    if (axis.hours.empty()) return s;
    s.start_hour = axis.hours.front();
    const std::size_t n = static_cast<std::size_t>(axis.hours.back() - axis.hours.front()) + 1;
    s.discharge.assign(n, kMissing);
    s.stage.assign(n, kMissing);
    s.flags.assign(n, kFlagNone);
    for (std::size_t i = 0; i < axis.hours.size(); ++i) {
        const std::size_t k = static_cast<std::size_t>(axis.hours[i] - s.start_hour);
        s.discharge[k] = axis.cols[0][i];
        s.stage[k] = axis.cols[1][i];
    }
    return s;
}

HourlySeries load_timeseries(const std::string& path, const SiteMeta& site) {
    return parse_timeseries(read_text_file(path), site);
}

PairedSeries parse_paired(const std::string& csv_text, const SiteMeta& site) {
    const CsvTable table = parse_csv(csv_text);
    const std::array<int, 4> cols = {
        require_column(table, "stage_raw_m"), require_column(table, "stage_corr_m"),
        require_column(table, "discharge_raw_m3s"), require_column(table, "discharge_corr_m3s")};
    const auto axis = read_axis<4>(
        table, cols, {"stage_raw_m", "stage_corr_m", "discharge_raw_m3s", "discharge_corr_m3s"});

    PairedSeries p;
    p.site_id = site.site_id;
    if (axis.hours.empty()) throw ParseError("paired file has no data rows");

    bool any_overlap = false;
    for (std::size_t i = 0; i < axis.hours.size(); ++i) {
        if (!is_missing(axis.cols[0][i]) && !is_missing(axis.cols[1][i]) &&
            !is_missing(axis.cols[2][i]) && !is_missing(axis.cols[3][i])) {
            any_overlap = true;
            break;
        }
    }
    if (!any_overlap) throw ParseError("paired channels have empty overlap");

    p.start_hour = axis.hours.front();
    const std::size_t n = static_cast<std::size_t>(axis.hours.back() - axis.hours.front()) + 1;
    p.stage_raw.assign(n, kMissing);
    p.stage_corrected.assign(n, kMissing);
    p.discharge_raw.assign(n, kMissing);
    p.discharge_corrected.assign(n, kMissing);
    for (std::size_t i = 0; i < axis.hours.size(); ++i) {
        const std::size_t k = static_cast<std::size_t>(axis.hours[i] - p.start_hour);
        auto conv = [](double v, UnitConversion kind) {
            return is_missing(v) ? kMissing : convert_units(v, kind);
        };
        p.stage_raw[k] = conv(axis.cols[0][i], UnitConversion::kStageMetersToFeet);
        p.stage_corrected[k] = conv(axis.cols[1][i], UnitConversion::kStageMetersToFeet);
        p.discharge_raw[k] = conv(axis.cols[2][i], UnitConversion::kDischargeCmsToCfs);
        p.discharge_corrected[k] = conv(axis.cols[3][i], UnitConversion::kDischargeCmsToCfs);
    }
    return p;
}

PairedSeries load_paired(const std::string& path, const SiteMeta& site) {
    return parse_paired(read_text_file(path), site);
}

namespace {

// Flag letters for the pass-through column: O outlier, I implausible,
// L linear fill, R recession fill, X excluded.
std::string flags_to_letters(std::uint8_t f) {
    std::string s;
    if (f & kFlagOutlier) s += 'O';
    if (f & kFlagImplausible) s += 'I';
    if (f & kFlagFillLinear) s += 'L';
    if (f & kFlagFillRecession) s += 'R';
    if (f & kFlagExcluded) s += 'X';
    return s;
}

std::uint8_t letters_to_flags(const std::string& s) {
    std::uint8_t f = kFlagNone;
    for (const char c : s) {
        switch (c) {
            case 'O': f |= kFlagOutlier; break;
            case 'I': f |= kFlagImplausible; break;
            case 'L': f |= kFlagFillLinear; break;
            case 'R': f |= kFlagFillRecession; break;
            case 'X': f |= kFlagExcluded; break;
            default: throw ParseError(std::string("unknown flag letter '") + c + "'");
        }
    }
    return f;
}

}  // namespace

std::string serialize_timeseries(const HourlySeries& series, bool with_flags) {
    std::ostringstream out;
    out << "timestamp_utc,discharge_cfs,stage_ft";
    if (with_flags) out << ",flags";
    out << "\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const std::uint8_t f = k < series.flags.size() ? series.flags[k] : kFlagNone;
        if (!with_flags && is_missing(series.discharge[k]) && is_missing(series.stage[k])) {
            continue;  // plain interchange form omits fully-missing hours
        }
        out << format_iso8601_utc_hour(series.hour_at(k)) << ','
            << format_decimal(series.discharge[k], 3) << ','
            << format_decimal(series.stage[k], 4);
        if (with_flags) out << ',' << flags_to_letters(f);
        out << "\n";
    }
    return out.str();
}

HourlySeries parse_flagged_timeseries(const std::string& csv_text, const SiteMeta& site) {
    HourlySeries s = parse_timeseries(csv_text, site);
    const CsvTable table = parse_csv(csv_text);
    const int c_flags = table.column("flags");
    if (c_flags < 0) return s;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& fields = table.rows[r];
        if (static_cast<int>(fields.size()) <= c_flags || fields[c_flags].empty()) continue;
        const HourStamp hour = parse_iso8601_utc_hour(fields[0]);
        s.flags[static_cast<std::size_t>(hour - s.start_hour)] = letters_to_flags(fields[c_flags]);
    }
    return s;
}

std::string serialize_site_table(const std::vector<SiteMeta>& sites) {
    std::ostringstream out;
    out << "site_id,lat,lon,drainage_area_km2,elevation_m,partition\n";
    for (const auto& s : sites) {
        out << s.site_id << ',' << format_decimal(s.latitude, 6) << ','
            << format_decimal(s.longitude, 6) << ',' << format_decimal(s.drainage_area, 4) << ','
            << format_decimal(s.elevation, 2) << ',' << partition_name(s.partition) << "\n";
    }
    return out.str();
}

}  // namespace streamqc
