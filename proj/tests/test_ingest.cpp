#include <doctest.h>

#include <cmath>

#include "streamqc/ingest.hpp"
#include "streamqc/rng.hpp"

using namespace streamqc;

namespace {

SiteMeta demo_site() {
    SiteMeta s;
    s.site_id = "01646500";
    return s;
}

}  // namespace

TEST_CASE("parse_site_table maps rows directly") {
    const std::string csv =
        "site_id,lat,lon,drainage_area_km2,elevation_m,partition\n"
        "01646500, 38.95, -77.13, 29940, 10, train\n";
    const auto sites = parse_site_table(csv);
    REQUIRE(sites.size() == 1);
    CHECK(sites[0].site_id == "01646500");
    CHECK(sites[0].latitude == doctest::Approx(38.95));
    CHECK(sites[0].longitude == doctest::Approx(-77.13));
    CHECK(sites[0].drainage_area == doctest::Approx(29940));
    CHECK(sites[0].elevation == doctest::Approx(10));
    CHECK(sites[0].partition == Partition::kTrain);
}

TEST_CASE("parse_site_table rejects bad rows with the row number") {
    const std::string header = "site_id,lat,lon,drainage_area_km2,elevation_m,partition\n";
    SUBCASE("duplicate site id reports the later row") {
        std::string csv = header;
        csv += "a,40,-100,10,5,train\n";   // row 2
        csv += "b,41,-101,11,6,train\n";   // row 3
        csv += "c,42,-102,12,7,train\n";   // row 4
        csv += "d,43,-103,13,8,train\n";   // row 5
        csv += "e,44,-104,14,9,train\n";   // row 6
        csv += "b,45,-105,15,10,train\n";  // row 7 duplicates row 3
        CHECK_THROWS_WITH_AS(parse_site_table(csv), doctest::Contains("row 7"), ParseError);
    }
    SUBCASE("latitude out of range") {
        CHECK_THROWS_WITH_AS(parse_site_table(header + "a,95,-100,10,5,train\n"),
                             doctest::Contains("latitude"), ParseError);
    }
    SUBCASE("missing column") {
        CHECK_THROWS_WITH_AS(parse_site_table("site_id,lat,lon\na,1,2\n"),
                             doctest::Contains("drainage_area_km2"), ParseError);
    }
    SUBCASE("unparseable number names the row") {
        CHECK_THROWS_WITH_AS(parse_site_table(header + "a,fortyone,-100,10,5,train\n"),
                             doctest::Contains("row 2"), ParseError);
    }
    SUBCASE("zero drainage area rejected") {
        CHECK_THROWS(parse_site_table(header + "a,40,-100,0,5,train\n"));
    }
}

TEST_CASE("parse_timeseries materializes gaps") {
    SUBCASE("three consecutive rows, no missing") {
        const auto s = parse_timeseries(
            "timestamp_utc,discharge_cfs,stage_ft\n"
            "2020-01-01T00:00:00Z,10.0,2.0\n"
            "2020-01-01T01:00:00Z,11.0,2.1\n"
            "2020-01-01T02:00:00Z,12.0,2.2\n",
            demo_site());
        REQUIRE(s.size() == 3);
        CHECK(!is_missing(s.discharge[0]));
        CHECK(!is_missing(s.discharge[2]));
    }
    SUBCASE("rows at hours 0,1,3 produce length 4 with hour 2 missing") {
        const auto s = parse_timeseries(
            "timestamp_utc,discharge_cfs,stage_ft\n"
            "2020-01-01T00:00:00Z,10.0,2.0\n"
            "2020-01-01T01:00:00Z,11.0,2.1\n"
            "2020-01-01T03:00:00Z,12.0,2.2\n",
            demo_site());
        REQUIRE(s.size() == 4);
        CHECK(is_missing(s.discharge[2]));
        CHECK(is_missing(s.stage[2]));
    }
    SUBCASE("duplicate hour reports both rows") {
        CHECK_THROWS_WITH_AS(parse_timeseries(
                                 "timestamp_utc,discharge_cfs,stage_ft\n"
                                 "2020-01-01T05:00:00Z,1,1\n"
                                 "2020-01-01T05:00:00Z,2,2\n",
                                 demo_site()),
                             doctest::Contains("rows 2 and 3"), ParseError);
    }
    SUBCASE("blank cells become missing without imputation") {
        const auto s = parse_timeseries(
            "timestamp_utc,discharge_cfs,stage_ft\n"
            "2020-01-01T00:00:00Z,,2.0\n"
            "2020-01-01T01:00:00Z,11.0,\n",
            demo_site());
        CHECK(is_missing(s.discharge[0]));
        CHECK(!is_missing(s.stage[0]));
        CHECK(!is_missing(s.discharge[1]));
        CHECK(is_missing(s.stage[1]));
    }
}

TEST_CASE("parse_paired aligns on the union and converts SI units") {
    SUBCASE("identical raw and corrected channels have zero differences") {
        const auto p = parse_paired(
            "timestamp_utc,stage_raw_m,stage_corr_m,discharge_raw_m3s,discharge_corr_m3s\n"
            "2020-01-01T00:00:00Z,1.0,1.0,2.0,2.0\n"
            "2020-01-01T01:00:00Z,1.1,1.1,2.1,2.1\n",
            demo_site());
        REQUIRE(p.size() == 2);
        for (std::size_t t = 0; t < p.size(); ++t) {
            CHECK(p.stage_raw[t] == p.stage_corrected[t]);
            CHECK(p.discharge_raw[t] == p.discharge_corrected[t]);
        }
    }
    SUBCASE("SI stage 1.0 m becomes 3.28084 ft in memory") {
        const auto p = parse_paired(
            "timestamp_utc,stage_raw_m,stage_corr_m,discharge_raw_m3s,discharge_corr_m3s\n"
            "2020-01-01T00:00:00Z,1.0,1.0,1.0,1.0\n",
            demo_site());
        CHECK(p.stage_raw[0] == doctest::Approx(3.28084));
        CHECK(p.discharge_raw[0] == doctest::Approx(35.3147));
    }
    SUBCASE("partially overlapping channels produce a union axis") {
        // raw covers hours 0-2, corrected covers 2-4 -> axis 0-4
        std::string csv =
            "timestamp_utc,stage_raw_m,stage_corr_m,discharge_raw_m3s,discharge_corr_m3s\n";
        csv += "2020-01-01T00:00:00Z,1.0,,2.0,\n";
        csv += "2020-01-01T01:00:00Z,1.0,,2.0,\n";
        csv += "2020-01-01T02:00:00Z,1.0,1.0,2.0,2.0\n";
        csv += "2020-01-01T03:00:00Z,,1.0,,2.0\n";
        csv += "2020-01-01T04:00:00Z,,1.0,,2.0\n";
        const auto p = parse_paired(csv, demo_site());
        REQUIRE(p.size() == 5);
        CHECK(!is_missing(p.stage_raw[0]));
        CHECK(is_missing(p.stage_corrected[0]));
        CHECK(is_missing(p.stage_raw[4]));
        CHECK(!is_missing(p.stage_corrected[4]));
    }
    SUBCASE("empty overlap between channels is rejected") {
        std::string csv =
            "timestamp_utc,stage_raw_m,stage_corr_m,discharge_raw_m3s,discharge_corr_m3s\n";
        csv += "2020-01-01T00:00:00Z,1.0,,2.0,\n";
        csv += "2020-01-01T01:00:00Z,,1.0,,2.0\n";
        CHECK_THROWS_WITH_AS(parse_paired(csv, demo_site()), doctest::Contains("overlap"),
                             ParseError);
    }
}

TEST_CASE("serialize/parse round-trips at the declared precision") {
    Rng rng(9);
    HourlySeries s;
    s.site_id = "rt";
    s.start_hour = parse_iso8601_utc_hour("2019-05-01T00:00:00Z");
    const std::size_t n = 500;
    for (std::size_t t = 0; t < n; ++t) {
        // values already on the declared grid: discharge 3 decimals, stage 4
        const double q = std::round(rng.uniform(0.0, 50000.0) * 1e3) / 1e3;
        const double h = std::round(rng.uniform(0.0, 30.0) * 1e4) / 1e4;
        const bool anchor = t == 0 || t == n - 1;  // keep the axis endpoints
        s.discharge.push_back(!anchor && rng.uniform() < 0.05 ? kMissing : q);
        s.stage.push_back(!anchor && rng.uniform() < 0.05 ? kMissing : h);
    }
    s.flags.assign(n, kFlagNone);

    const auto parsed = parse_timeseries(serialize_timeseries(s), demo_site());
    REQUIRE(parsed.size() == s.size());
    std::size_t in_count = 0, out_count = 0;
    for (std::size_t t = 0; t < n; ++t) {
        in_count += !is_missing(s.discharge[t]);
        out_count += !is_missing(parsed.discharge[t]);
        if (!is_missing(s.discharge[t]) && !is_missing(parsed.discharge[t])) {
            CHECK(parsed.discharge[t] == s.discharge[t]);
        }
        if (!is_missing(s.stage[t]) && !is_missing(parsed.stage[t])) {
            CHECK(parsed.stage[t] == s.stage[t]);
        }
    }
    CHECK(in_count == out_count);  // parsing never imputes
}

TEST_CASE("flagged serialization carries QC flags through") {
    HourlySeries s;
    s.site_id = "f";
    s.start_hour = 0;
    s.discharge = {1.0, 2.0, kMissing, 4.0};
    s.stage = {0.5, 0.6, kMissing, 0.8};
    s.flags = {kFlagNone, static_cast<std::uint8_t>(kFlagOutlier | kFlagFillLinear),
               kFlagExcluded, kFlagFillRecession};
    const auto parsed = parse_flagged_timeseries(serialize_timeseries(s, true), demo_site());
    REQUIRE(parsed.size() == 4);
    CHECK(parsed.flags[0] == kFlagNone);
    CHECK(parsed.flags[1] == (kFlagOutlier | kFlagFillLinear));
    CHECK(parsed.flags[2] == kFlagExcluded);
    CHECK(parsed.flags[3] == kFlagFillRecession);
}
