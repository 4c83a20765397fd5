#include "blehop/json_io.hpp"

#include <doctest.h>

#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace blehop;
using nlohmann::json;

namespace {

struct HopRow {
    std::int64_t k;
    int unmapped;
    int mapped;
    bool remapped;
};

std::vector<HopRow> parse_hops(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    std::vector<HopRow> rows;
    while (std::getline(in, line)) {
        HopRow r{};
        double time_us = 0.0;
        int remapped = 0;
        char comma = 0;
        std::istringstream cells(line);
        cells >> r.k >> comma >> time_us >> comma >> r.unmapped >> comma >> r.mapped >> comma >> remapped;
        r.remapped = remapped != 0;
        rows.push_back(r);
    }
    return rows;
}

} // namespace

TEST_CASE("params json round trip") {
    ConnectionParams p;
    p.csa_version = CsaVersion::Csa1;
    p.c_int_ns = 18'750'000;
    p.channel_map = ChannelMap::parse("0x1FFFFFFC00");
    p.access_address = AccessAddress{0x50654F2A};
    p.hop_increment = 9;
    p.initial_channel = 4;
    const auto back = params_from_json(params_to_json(p));
    CHECK(back.csa_version == p.csa_version);
    CHECK(back.c_int_ns == p.c_int_ns);
    CHECK(back.channel_map == p.channel_map);
    CHECK(back.access_address == p.access_address);
    CHECK(back.hop_increment == 9);
    CHECK(back.initial_channel == 4);
}

TEST_CASE("params json errors are configuration errors") {
    auto kind_of = [](const json& j) {
        try {
            params_from_json(j);
        } catch (const Error& e) {
            return e.kind();
        }
        return ErrorKind::Io;
    };
    CHECK(kind_of(json{{"csa_version", "CSA3"}, {"c_int_us", 7500}, {"access_address", "0x1"}}) == ErrorKind::Config);
    CHECK(kind_of(json{{"csa_version", "CSA2"}, {"c_int_us", 7400}, {"access_address", "0x1"}}) == ErrorKind::Config);
    CHECK(kind_of(json{{"csa_version", "CSA2"}, {"access_address", "0x1"}}) == ErrorKind::Config);
    CHECK(kind_of(json{{"csa_version", "CSA1"}, {"c_int_us", 7500}, {"access_address", "0x1"},
                       {"hop_increment", 17}}) == ErrorKind::Config);
}

TEST_CASE("scenario json round trip") {
    const auto j = json::parse(R"({
        "sniff_channel": 22, "rng_seed": 9, "duration_us": 5000000,
        "connections": [
          {"params": {"csa_version": "CSA2", "c_int_us": 12500, "channel_map": "0x1E00E00700",
                      "access_address": "0xB0A1CD9D"},
           "start_offset_us": 250, "initial_k": 65000,
           "impairments": {"timestamp_jitter_sigma_us": 50, "clock_drift_ppm": 20, "miss_probability": 0.1}}
        ]})");
    const auto cfg = scenario_from_json(j);
    REQUIRE(cfg.connections.size() == 1);
    const auto& c = cfg.connections[0];
    CHECK(cfg.sniff_channel == 22);
    CHECK(cfg.rng_seed == 9);
    CHECK(c.start_offset_ns == 250'000);
    CHECK(c.initial_k.value == 65000);
    CHECK(c.impairments.duration_ns == 5'000'000'000);
    CHECK(c.impairments.timestamp_jitter_sigma_ns == doctest::Approx(50'000.0));
    CHECK(c.impairments.miss_probability == doctest::Approx(0.1));
    const auto again = scenario_from_json(scenario_to_json(cfg));
    CHECK(scenario_to_json(again) == scenario_to_json(cfg));
    CHECK_THROWS_AS(scenario_from_json(json{{"connections", json::array()}}), Error);
}

TEST_CASE("report json round trip keeps what prediction needs") {
    EstimationReport r;
    r.access_address = AccessAddress{0x8E89BED6};
    r.sniff_channel = 22;
    r.observation_count = 3;
    r.first_timestamp_ns = 10;
    r.last_timestamp_ns = 99;
    r.status = ReportStatus::Ok;
    IntervalEstimate iv;
    iv.c_int_hat_ns = 7'500'000;
    iv.raw_gcd_ns = 7'500'100.5;
    iv.hop_counts = {3, 40};
    r.interval = iv;
    CsaClassification cls;
    cls.verdict = CsaVerdict::Csa2;
    cls.interval = iv;
    cls.fill_ratio = 0.1;
    r.classification = cls;
    CounterAlignment a;
    a.k_init = EventCounter(65007);
    a.correlation_peak = 300;
    a.second_peak = 20;
    a.candidates = {EventCounter(65007)};
    r.alignment = a;
    MapEstimate m;
    m.assumed_map = ChannelMap::parse("0x1FFFFFFC00");
    m.proven_excluded = 0x3FF;
    m.evidence_count[4] = 7;
    m.converged = true;
    r.channel_map = m;

    const auto back = report_from_json(report_to_json(r));
    CHECK(report_to_json(back) == report_to_json(r));
    CHECK(back.alignment->k_init.value == 65007);
    CHECK(back.channel_map->proven_excluded == 0x3FFu);
    CHECK(back.classification->interval.raw_gcd_ns == doctest::Approx(7'500'100.5));
}

TEST_CASE("forecast and evaluation json round trip") {
    Forecast f;
    f.access_address = AccessAddress{0xB0A1CD9D};
    f.counter_known = true;
    f.anchor_k = EventCounter(65535);
    f.interval_ns = 7'500'000.25;
    f.entries.push_back({1, EventCounter(0), 12, 7'500'000, 100.0});
    CHECK(forecast_to_json(forecast_from_json(forecast_to_json(f))) == forecast_to_json(f));

    const auto eval = make_eval_report({5.0, -5.0, 1.0});
    CHECK(eval_to_json(eval_from_json(eval_to_json(eval))) == eval_to_json(eval));
    const auto csv = eccdf_csv(eval);
    CHECK(csv.rfind("abs_error_ns,probability\n", 0) == 0);
    CHECK(csv.find("\n5,0\n") != std::string::npos);
}

TEST_CASE("hop dump shows a fixed csa1 remap target") {
    const auto req = hopgen_from_json(json::parse(R"({"params": {"csa_version": "CSA1", "c_int_us": 7500,
        "channel_map": "0x1FFFFFFC00", "access_address": "0x1", "hop_increment": 7}, "count": 74})"));
    const auto rows = parse_hops(hopgen_csv(req));
    REQUIRE(rows.size() == 74);
    std::set<std::pair<int, int>> remaps;
    for (const auto& r : rows) {
        if (r.remapped) remaps.insert({r.unmapped, r.mapped});
    }
    CHECK(remaps.size() == 10);
    for (const auto& [from, to] : remaps) CHECK(to == 10 + from % 27);
}

TEST_CASE("hop dump shows varying csa2 remap targets") {
    const auto req = hopgen_from_json(json::parse(R"({"csa_version": "CSA2", "c_int_us": 7500,
        "channel_map": "0x1FFFFFFC00", "access_address": "0xB0A1CD9D"})"));
    CHECK(req.count == 200);
    const auto rows = parse_hops(hopgen_csv(req));
    REQUIRE(rows.size() == 200);
    CHECK(rows.front().k == 0);
    std::set<int> targets;
    for (const auto& r : rows) {
        if (r.remapped) targets.insert(r.mapped);
    }
    CHECK(targets.size() > 5);
    CHECK_THROWS_AS(hopgen_from_json(json{{"params", params_to_json(req.params)}, {"count", -1}}), Error);
}
