#include "blehop/simulator.hpp"

#include <doctest.h>

#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <vector>

using namespace blehop;
using namespace blehop_test;

namespace {

SimulatedConnection csa1_hop7_connection() {
    SimulatedConnection c;
    c.params.csa_version = CsaVersion::Csa1;
    c.params.c_int_ns = 7'500'000;
    c.params.hop_increment = 7;
    c.params.initial_channel = 0;
    c.params.channel_map = ChannelMap::parse("0x1FFFFFFC00");
    c.params.access_address = AccessAddress{0x50654F2A};
    c.impairments.duration_ns = 10'000'000'000;
    return c;
}

SimulatedConnection csa2_connection(std::uint32_t aa, std::int64_t c_int_ns) {
    SimulatedConnection c;
    c.params.csa_version = CsaVersion::Csa2;
    c.params.c_int_ns = c_int_ns;
    c.params.channel_map = ChannelMap::parse("0x1FFFFFFC00");
    c.params.access_address = AccessAddress{aa};
    c.impairments.duration_ns = 10'000'000'000;
    return c;
}

std::string serialize(const SimulationResult& r) {
    std::ostringstream out;
    save_trace(out, r.trace, TraceFormat::Csv);
    save_timelines(out, r.timelines);
    return out.str();
}

double harmonic(int n) {
    double h = 0.0;
    for (int i = 1; i <= n; ++i) h += 1.0 / i;
    return h;
}

} // namespace

TEST_CASE("csa1 sniffed on channel 10 alternates 25 and 12 intervals") {
    ScenarioConfig cfg;
    cfg.sniff_channel = 10;
    cfg.connections.push_back(csa1_hop7_connection());
    const auto r = simulate(cfg);
    REQUIRE(r.trace.size() > 10);
    const std::int64_t c = 7'500'000;
    std::vector<std::int64_t> hops;
    for (std::size_t i = 1; i < r.trace.size(); ++i) {
        const auto dt = r.trace.observations[i].timestamp_ns - r.trace.observations[i - 1].timestamp_ns;
        REQUIRE(dt % c == 0);
        hops.push_back(dt / c);
    }
    for (std::size_t i = 0; i < hops.size(); ++i) {
        CHECK((hops[i] == 25 || hops[i] == 12));
        if (i > 0) CHECK(hops[i] + hops[i - 1] == 37);
    }
}

TEST_CASE("zero impairments place every event on the nominal grid") {
    ScenarioConfig cfg;
    cfg.sniff_channel = 22;
    auto c = csa2_connection(0xB0A1CD9D, 12'500'000);
    c.start_offset_ns = 3'300'000;
    c.initial_k = EventCounter(65500);
    cfg.connections.push_back(c);
    const auto r = simulate(cfg);
    const auto& tl = r.timelines.at(0);
    REQUIRE(!tl.events.empty());
    CHECK(tl.events.front().counter().value == 65500);
    std::vector<Observation> expected;
    for (const auto& ev : tl.events) {
        REQUIRE(ev.true_time_ns == c.start_offset_ns + (ev.k - 65500) * c.params.c_int_ns);
        REQUIRE(ev.channel == csa2_oracle(ev.counter().value, 0x7D3C, c.params.channel_map.mask()));
        if (ev.channel == 22) expected.push_back({ev.true_time_ns, c.params.access_address, 22, true});
    }
    CHECK(r.trace.observations == expected);
    CHECK(r.trace.sniff_channel == Channel{22});
}

TEST_CASE("csa2 from counter zero follows the independent hop oracle") {
    ScenarioConfig cfg;
    cfg.sniff_channel = 22;
    auto c = csa2_connection(0xB0A1CD9D, 7'500'000);
    c.impairments.duration_ns = 7'500'000 * 60;
    cfg.connections.push_back(c);
    const auto r = simulate(cfg);
    const auto& events = r.timelines.at(0).events;
    REQUIRE(events.size() >= 60);
    std::set<int> remap_targets;
    for (std::size_t k = 0; k < 60; ++k) {
        CHECK(events[k].k == static_cast<std::int64_t>(k));
        CHECK(events[k].channel == csa2_oracle(static_cast<std::uint32_t>(k), 0x7D3C, 0x1FFFFFFC00ull));
        if (prn_oracle(static_cast<std::uint32_t>(k), 0x7D3C) % 37 < 10) remap_targets.insert(events[k].channel);
    }
    CHECK(remap_targets.size() > 3);
}

TEST_CASE("near-certain misses empty the trace") {
    ScenarioConfig cfg;
    cfg.sniff_channel = 22;
    auto c = csa2_connection(0xB0A1CD9D, 7'500'000);
    c.impairments.miss_probability = 0.999999;
    cfg.connections.push_back(c);
    const auto r = simulate(cfg);
    CHECK(r.trace.size() <= 1);
    CHECK(r.timelines.at(0).events.size() > 1000);
}

TEST_CASE("miss rate matches the configured probability") {
    ScenarioConfig cfg;
    cfg.sniff_channel = 22;
    cfg.rng_seed = 4;
    auto c = csa2_connection(0xB0A1CD9D, 7'500'000);
    c.impairments.duration_ns = 200'000'000'000;
    c.impairments.miss_probability = 0.3;
    cfg.connections.push_back(c);
    const auto r = simulate(cfg);
    std::size_t on_sniff = 0;
    for (const auto& ev : r.timelines.at(0).events) on_sniff += ev.channel == 22;
    const double kept = static_cast<double>(r.trace.size()) / static_cast<double>(on_sniff);
    CHECK(kept == doctest::Approx(0.7).epsilon(0.05));
}

TEST_CASE("same seed reproduces byte-identical output") {
    ScenarioConfig cfg;
    cfg.sniff_channel = 22;
    cfg.rng_seed = 1234;
    auto c = csa2_connection(0xB0A1CD9D, 7'500'000);
    c.impairments.timestamp_jitter_sigma_ns = 50'000;
    c.impairments.clock_drift_ppm = 20;
    c.impairments.drift_random_walk_ppm = 0.01;
    c.impairments.miss_probability = 0.1;
    cfg.connections.push_back(c);
    const auto a = serialize(simulate(cfg));
    CHECK(a == serialize(simulate(cfg)));
    cfg.rng_seed = 1235;
    CHECK(a != serialize(simulate(cfg)));
}

TEST_CASE("a connection's observations do not depend on its neighbours") {
    ScenarioConfig merged;
    merged.sniff_channel = 22;
    merged.rng_seed = 77;
    merged.connections.push_back(csa2_connection(0x11111111, 7'500'000));
    merged.connections.push_back(csa2_connection(0x22222222, 12'500'000));
    for (auto& c : merged.connections) {
        c.impairments.timestamp_jitter_sigma_ns = 50'000;
        c.impairments.miss_probability = 0.05;
    }
    const auto both = simulate(merged);
    ScenarioConfig alone = merged;
    alone.connections.erase(alone.connections.begin());
    const auto single = simulate(alone);
    CHECK(split_by_connection(both.trace).at(AccessAddress{0x22222222}) ==
          split_by_connection(single.trace).at(AccessAddress{0x22222222}));
}

TEST_CASE("drift stretches the event spacing") {
    ScenarioConfig cfg;
    cfg.sniff_channel = 22;
    auto c = csa2_connection(0xB0A1CD9D, 10'000'000);
    c.impairments.clock_drift_ppm = 50;
    cfg.connections.push_back(c);
    const auto r = simulate(cfg);
    const auto& ev = r.timelines.at(0).events;
    const double span = static_cast<double>(ev.back().true_time_ns - ev.front().true_time_ns);
    const double per_event = span / static_cast<double>(ev.back().k - ev.front().k);
    CHECK(per_event == doctest::Approx(10'000'000.0 * (1 + 50e-6)).epsilon(1e-9));
}

TEST_CASE("scenario validation") {
    ScenarioConfig cfg;
    cfg.sniff_channel = 37;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.sniff_channel = 5;
    CHECK_NOTHROW(cfg.validate());
    cfg.connections.push_back(csa2_connection(0x1, 7'500'000));
    cfg.connections.push_back(csa2_connection(0x1, 7'500'000));
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.connections.pop_back();
    cfg.connections[0].impairments.miss_probability = 1.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.connections[0].impairments.miss_probability = 0.0;
    cfg.connections[0].impairments.duration_ns = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("empty scenario gives an empty trace") {
    ScenarioConfig cfg;
    cfg.sniff_channel = 3;
    const auto r = simulate(cfg);
    CHECK(r.trace.empty());
    CHECK(r.timelines.empty());
}

TEST_CASE("reconstruction budget values") {
    for (int n = 2; n <= 37; ++n) {
        const double oracle = 37.0 * n * harmonic(37 - n);
        CHECK(expected_reconstruction_budget_exact(n) == doctest::Approx(oracle));
        CHECK(expected_reconstruction_budget(n) == static_cast<std::int64_t>(std::ceil(oracle - 1e-9)));
    }
    CHECK(expected_reconstruction_budget(28) == 2931);
    CHECK(expected_reconstruction_budget(36) == 1332);
    CHECK(expected_reconstruction_budget(37) == 0);
    CHECK_THROWS_AS(expected_reconstruction_budget(1), Error);
    CHECK_THROWS_AS(expected_reconstruction_budget(38), Error);
}

TEST_CASE("monte carlo events to full map evidence match the budget") {
    constexpr int kTrials = 200;
    constexpr int kSniff = 22;
    std::mt19937_64 rng(2932);
    double total = 0.0;
    for (int trial = 0; trial < kTrials; ++trial) {
        std::vector<Channel> channels{kSniff};
        std::vector<int> pool;
        for (int ch = 0; ch < 37; ++ch) {
            if (ch != kSniff) pool.push_back(ch);
        }
        std::shuffle(pool.begin(), pool.end(), rng);
        for (int i = 0; i < 27; ++i) channels.push_back(static_cast<Channel>(pool[static_cast<std::size_t>(i)]));

        ScenarioConfig cfg;
        cfg.sniff_channel = kSniff;
        SimulatedConnection c;
        c.params.csa_version = CsaVersion::Csa2;
        c.params.c_int_ns = 7'500'000;
        c.params.channel_map = ChannelMap::from_channels(channels);
        c.params.access_address = AccessAddress{static_cast<std::uint32_t>(rng())};
        c.initial_k = EventCounter(static_cast<std::uint16_t>(rng()));
        c.impairments.duration_ns = 7'500'000LL * 20'000;
        cfg.connections.push_back(c);
        const auto r = simulate(cfg);

        const auto ci = static_cast<std::uint16_t>((c.params.access_address.value >> 16) ^
                                                   (c.params.access_address.value & 0xFFFF));
        std::set<int> seen;
        std::int64_t events = -1;
        const auto& tl = r.timelines.at(0).events;
        for (std::size_t i = 0; i < tl.size(); ++i) {
            if (tl[i].channel != kSniff) continue;
            const int unmapped = static_cast<int>(prn_oracle(tl[i].counter().value, ci) % 37);
            if (unmapped != kSniff) seen.insert(unmapped);
            if (seen.size() == 9) {
                events = static_cast<std::int64_t>(i) + 1;
                break;
            }
        }
        REQUIRE(events > 0);
        total += static_cast<double>(events);
    }
    const double mean = total / kTrials;
    CHECK(mean == doctest::Approx(expected_reconstruction_budget_exact(28)).epsilon(0.10));
}
