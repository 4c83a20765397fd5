#include "blehop/reconstruct.hpp"
#include "blehop/simulator.hpp"

#include <doctest.h>

#include "oracles.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <vector>

using namespace blehop;
using namespace blehop_test;

namespace {

SniffTrace trace_from_hops(const std::vector<std::int64_t>& hops, std::int64_t c_int_ns,
                           std::uint32_t aa = 0x01020304, Channel ch = 10) {
    SniffTrace t;
    std::int64_t ts = 5'000'000;
    t.push({ts, AccessAddress{aa}, ch, true});
    for (auto h : hops) {
        ts += h * c_int_ns;
        t.push({ts, AccessAddress{aa}, ch, true});
    }
    return t;
}

std::vector<std::int64_t> repeat(std::vector<std::int64_t> pattern, std::size_t n) {
    std::vector<std::int64_t> out;
    while (out.size() < n) out.insert(out.end(), pattern.begin(), pattern.end());
    out.resize(n);
    return out;
}

struct CsaTwoRun {
    SimulationResult sim;
    SniffTrace connection;
    SimulatedConnection config;
};

CsaTwoRun simulate_csa2(std::uint32_t aa, const std::string& map, Channel sniff, std::uint16_t initial_k,
                        std::int64_t c_int_ns, std::int64_t duration_ns, double jitter_ns = 0.0,
                        std::uint64_t seed = 1) {
    ScenarioConfig cfg;
    cfg.sniff_channel = sniff;
    cfg.rng_seed = seed;
    SimulatedConnection c;
    c.params.csa_version = CsaVersion::Csa2;
    c.params.c_int_ns = c_int_ns;
    c.params.channel_map = ChannelMap::parse(map);
    c.params.access_address = AccessAddress{aa};
    c.initial_k = EventCounter(initial_k);
    c.start_offset_ns = 2'000'000;
    c.impairments.duration_ns = duration_ns;
    c.impairments.timestamp_jitter_sigma_ns = jitter_ns;
    cfg.connections.push_back(c);
    CsaTwoRun run{simulate(cfg), {}, c};
    run.connection = split_by_connection(run.sim.trace).at(c.params.access_address);
    return run;
}

std::vector<std::int64_t> true_sniff_events(const EventTimeline& tl, Channel sniff) {
    std::vector<std::int64_t> ks;
    for (const auto& ev : tl.events) {
        if (ev.channel == sniff) ks.push_back(ev.k);
    }
    return ks;
}

} // namespace

TEST_CASE("interval from the 25/12 pattern") {
    const auto t = trace_from_hops({25, 12}, 7'500'000);
    const auto est = estimate_interval(t);
    CHECK(est.c_int_hat_ns == 7'500'000);
    CHECK(est.hop_counts == std::vector<std::int64_t>{25, 12});
}

TEST_CASE("equal differences give the difference itself") {
    const auto t = trace_from_hops({1, 1, 1}, 20'000'000);
    const auto est = estimate_interval(t);
    CHECK(est.c_int_hat_ns == 20'000'000);
    CHECK(est.raw_gcd_ns == doctest::Approx(20'000'000.0));
}

TEST_CASE("interval from a jittered csa2 trace snaps to the lattice") {
    const auto run = simulate_csa2(0xB0A1CD9D, "0x1E00E00700", 22, 100, 12'500'000, 60'000'000'000, 50'000.0);
    const auto est = estimate_interval(run.connection);
    CHECK(est.c_int_hat_ns == 12'500'000);
    CHECK(est.raw_gcd_ns == doctest::Approx(12'500'000.0).epsilon(1e-4));
}

TEST_CASE("interval estimation rejects short or off-lattice traces") {
    CHECK_THROWS_AS(estimate_interval(trace_from_hops({3}, 7'500'000)), Error);
    SniffTrace t;
    for (std::int64_t ts : {0LL, 4'100'000LL, 9'300'000LL, 13'900'000LL, 19'700'000LL}) {
        t.push({ts, AccessAddress{1}, 3, true});
    }
    try {
        estimate_interval(t);
        FAIL("expected an estimation error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Estimation);
    }
}

TEST_CASE("classify constant 37-hop differences as single-hit csa1") {
    const auto t = trace_from_hops(std::vector<std::int64_t>(12, 37), 7'500'000);
    const auto est = estimate_interval(t);
    const auto cls = classify_csa(t, est);
    CHECK(cls.verdict == CsaVerdict::Csa1SingleHit);
    CHECK(cls.interval.c_int_hat_ns == 7'500'000);
    CHECK(cls.period_profile == std::vector<int>{0});
    CHECK(std::all_of(cls.interval.hop_counts.begin(), cls.interval.hop_counts.end(),
                      [](std::int64_t h) { return h == 37; }));
}

TEST_CASE("classify the alternating pattern as repeating csa1") {
    const auto t = trace_from_hops(repeat({25, 12}, 20), 7'500'000);
    const auto cls = classify_csa(t, estimate_interval(t));
    CHECK(cls.verdict == CsaVerdict::Csa1Repeating);
    CHECK(cls.interval.c_int_hat_ns == 7'500'000);
    CHECK(cls.period_profile == std::vector<int>{0, 25});
    CHECK(cls.fill_ratio == doctest::Approx(1.0));
}

TEST_CASE("classify tolerates missed csa1 hits") {
    auto hops = repeat({25, 12}, 40);
    hops[5] += hops[6];
    hops.erase(hops.begin() + 6);
    hops[20] += hops[21];
    hops.erase(hops.begin() + 21);
    const auto t = trace_from_hops(hops, 18'750'000);
    const auto cls = classify_csa(t, estimate_interval(t));
    CHECK(cls.verdict == CsaVerdict::Csa1Repeating);
    CHECK(cls.interval.c_int_hat_ns == 18'750'000);
}

TEST_CASE("classify a simulated csa2 trace as csa2") {
    const auto run = simulate_csa2(0x8E89BED6, "0x1FFFFFFC00", 22, 7, 7'500'000, 30'000'000'000, 50'000.0);
    const auto cls = classify_csa(run.connection, estimate_interval(run.connection));
    CHECK(cls.verdict == CsaVerdict::Csa2);
    CHECK(cls.interval.c_int_hat_ns == 7'500'000);
}

TEST_CASE("classify needs two periods of coverage") {
    const auto t = trace_from_hops({5, 9, 3}, 10'000'000);
    CHECK_THROWS_AS(classify_csa(t, estimate_interval(t)), Error);
}

TEST_CASE("measurement vector construction") {
    CHECK(build_meas_vector(std::vector<std::int64_t>{0, 8}) == BinaryVector{1, 0, 0, 0, 0, 0, 0, 0, 1});
    CHECK(build_meas_vector(std::vector<std::int64_t>{0}) == BinaryVector{1});

    const auto run = simulate_csa2(0xB0A1CD9D, "0x1FFFFFFC00", 22, 500, 7'500'000, 20'000'000'000, 40'000.0);
    const auto truth = true_sniff_events(run.sim.timelines.at(0), 22);
    const auto meas = build_meas_vector(run.connection, 7'500'000.0);
    BinaryVector expected(static_cast<std::size_t>(truth.back() - truth.front() + 1), 0);
    for (auto k : truth) expected[static_cast<std::size_t>(k - truth.front())] = 1;
    CHECK(meas == expected);
}

TEST_CASE("measurement vector folds onto the counter ring") {
    BinaryVector long_vec(65536 + 10, 0);
    long_vec[3] = 1;
    long_vec[65536 + 3] = 1;
    long_vec[65536 + 7] = 1;
    const auto folded = fold_meas_vector(long_vec);
    REQUIRE(folded.size() == 65536);
    CHECK(folded[3] == 1);
    CHECK(folded[7] == 1);
    CHECK(std::accumulate(folded.begin(), folded.end(), 0) == 2);
}

TEST_CASE("reference vector marks counters whose unmapped channel is the sniff channel") {
    const auto zero = build_ref_vector(ChannelIdentifier{0}, 0);
    CHECK(zero[0] == 1);
    const auto ref = build_ref_vector(ChannelIdentifier{0x7D3C}, 22);
    REQUIRE(ref.size() == 65536);
    int ones = 0;
    for (std::uint32_t k = 0; k < 65536; ++k) {
        REQUIRE(ref[k] == (prn_oracle(k, 0x7D3C) % 37 == 22 ? 1 : 0));
        ones += ref[k];
    }
    CHECK(ones == doctest::Approx(65536.0 / 37.0).epsilon(0.05));
    CHECK(ref == build_ref_vector(ChannelIdentifier{0x7D3C}, 22));
}

TEST_CASE("alignment recovers a rotation of a reference slice") {
    const auto ref = build_ref_vector(ChannelIdentifier{0x1234}, 5);
    for (std::size_t start : {std::size_t{0}, std::size_t{31400}, std::size_t{65500}}) {
        std::size_t first = start;
        while (ref[first % 65536] == 0) ++first;
        BinaryVector meas;
        for (std::size_t i = 0; i < 200; ++i) meas.push_back(ref[(first + i) % 65536]);
        const int ones = std::accumulate(meas.begin(), meas.end(), 0);
        const auto a = align_counter(meas, ref);
        CHECK(a.k_init.value == first % 65536);
        CHECK(a.correlation_peak == ones);
        CHECK_FALSE(a.ambiguous);
    }
}

TEST_CASE("alignment finds the simulated starting counter") {
    const Channel sniff = remap_csa2(EventCounter(31400), channel_identifier(AccessAddress{0x5A5A1234}),
                                     ChannelMap::full());
    const auto run = simulate_csa2(0x5A5A1234, "0x1FFFFFFFFF", sniff, 31400, 7'500'000, 7'500'000LL * 37 * 1000);
    REQUIRE(run.connection.size() >= 900);
    const auto est = estimate_interval(run.connection);
    const auto meas = build_meas_vector(run.connection, est.raw_gcd_ns);
    const auto a = align_counter(meas, build_ref_vector(channel_identifier(AccessAddress{0x5A5A1234}), sniff));
    CHECK(a.k_init.value == 31400);
    CHECK_FALSE(a.ambiguous);
}

TEST_CASE("two observations leave the counter ambiguous") {
    const ChannelIdentifier ci{0x7D3C};
    const auto ref = build_ref_vector(ci, 22);
    const std::int64_t gap = 40;
    std::size_t oracle_ties = 0;
    for (std::uint32_t k = 0; k < 65536; ++k) {
        if (prn_oracle(k, ci.value) % 37 == 22 && prn_oracle((k + gap) % 65536, ci.value) % 37 == 22) ++oracle_ties;
    }
    const auto a = align_counter(build_meas_vector(std::vector<std::int64_t>{0, gap}), ref);
    CHECK(a.ambiguous);
    CHECK(a.tied_count == oracle_ties);
    CHECK(a.candidates.size() == std::min(oracle_ties, CounterAlignment::kMaxReportedCandidates));
    CHECK(a.correlation_peak == 2);
}

TEST_CASE("full map yields no exclusions") {
    const auto run = simulate_csa2(0x6B6B0011, "0x1FFFFFFFFF", 22, 9, 7'500'000, 60'000'000'000);
    const auto offsets = observation_offsets(run.connection, 7'500'000.0);
    const auto truth = true_sniff_events(run.sim.timelines.at(0), 22);
    const auto est = infer_channel_map(offsets, EventCounter::from_index(truth.front()),
                                       channel_identifier(AccessAddress{0x6B6B0011}), 22);
    CHECK(est.proven_excluded == 0);
    CHECK(est.assumed_map == ChannelMap::full());
    CHECK(est.assumed_map_consistent);
}

TEST_CASE("long trace recovers the exact map") {
    const auto map = ChannelMap::parse("0x1E00E00700");
    const auto budget = expected_reconstruction_budget(map.size());
    const auto run = simulate_csa2(0xB0A1CD9D, "0x1E00E00700", 22, 40000, 7'500'000, 7'500'000LL * budget * 5);
    const auto offsets = observation_offsets(run.connection, 7'500'000.0);
    const auto truth = true_sniff_events(run.sim.timelines.at(0), 22);
    const auto est = infer_channel_map(offsets, EventCounter::from_index(truth.front()), ChannelIdentifier{0x7D3C}, 22);
    CHECK(est.assumed_map == map);
    CHECK(est.converged);
    CHECK(est.assumed_map_consistent);
}

TEST_CASE("short trace never excludes an allowed channel") {
    const auto map = ChannelMap::parse("0x1E00E00700");
    const auto run = simulate_csa2(0xB0A1CD9D, "0x1E00E00700", 22, 123, 7'500'000, 30'000'000'000);
    SniffTrace first10;
    for (std::size_t i = 0; i < 10; ++i) first10.push(run.connection.observations[i]);
    const auto offsets = observation_offsets(first10, 7'500'000.0);
    const auto truth = true_sniff_events(run.sim.timelines.at(0), 22);
    const auto est = infer_channel_map(offsets, EventCounter::from_index(truth.front()), ChannelIdentifier{0x7D3C}, 22);
    CHECK_FALSE(est.converged);
    CHECK((est.assumed_map.mask() & map.mask()) == map.mask());
    CHECK((est.proven_excluded & map.mask()) == 0);
}

TEST_CASE("exclusions are sound on random maps and lengths") {
    std::mt19937_64 rng(606);
    for (int trial = 0; trial < 40; ++trial) {
        std::uint64_t mask = random_mask(rng) | (std::uint64_t{1} << 17);
        const auto map = ChannelMap::from_mask(mask);
        const auto aa = static_cast<std::uint32_t>(rng());
        const auto run = simulate_csa2(aa, map.to_hex(), 17, static_cast<std::uint16_t>(rng()), 7'500'000,
                                       7'500'000LL * (200 + static_cast<std::int64_t>(rng() % 6000)));
        if (run.connection.size() < 2) continue;
        const auto offsets = observation_offsets(run.connection, 7'500'000.0);
        const auto truth = true_sniff_events(run.sim.timelines.at(0), 17);
        const auto est = infer_channel_map(offsets, EventCounter::from_index(truth.front()),
                                           channel_identifier(AccessAddress{aa}), 17);
        CHECK((est.proven_excluded & mask) == 0);
    }
}

TEST_CASE("pipeline reports insufficient data for two observations") {
    const auto t = trace_from_hops({4}, 7'500'000);
    const auto report = reconstruct_connection(t);
    CHECK(report.status == ReportStatus::InsufficientData);
    CHECK_FALSE(report.message.empty());
}

TEST_CASE("pipeline separates a mixed csa1 and csa2 trace") {
    ScenarioConfig cfg;
    cfg.sniff_channel = 22;
    cfg.rng_seed = 5;
    SimulatedConnection a;
    a.params.csa_version = CsaVersion::Csa1;
    a.params.c_int_ns = 18'750'000;
    a.params.hop_increment = 11;
    a.params.channel_map = ChannelMap::parse("0x1FFFFFFC00");
    a.params.access_address = AccessAddress{0xAAAA0001};
    a.impairments.duration_ns = 100'000'000'000;
    a.impairments.timestamp_jitter_sigma_ns = 50'000;
    SimulatedConnection b;
    b.params.csa_version = CsaVersion::Csa2;
    b.params.c_int_ns = 12'500'000;
    b.params.channel_map = ChannelMap::parse("0x1E00E00700");
    b.params.access_address = AccessAddress{0xBBBB0002};
    b.initial_k = EventCounter(777);
    b.start_offset_ns = 3'000'000;
    b.impairments = a.impairments;
    cfg.connections = {a, b};
    const auto sim = simulate(cfg);
    const auto reports = reconstruct_all(sim.trace);
    REQUIRE(reports.size() == 2);
    const auto& ra = reports.at(a.params.access_address);
    const auto& rb = reports.at(b.params.access_address);
    REQUIRE(ra.ok());
    REQUIRE(rb.ok());
    CHECK(ra.classification->is_csa1());
    CHECK(ra.classification->interval.c_int_hat_ns == 18'750'000);
    CHECK(rb.classification->verdict == CsaVerdict::Csa2);
    CHECK(rb.classification->interval.c_int_hat_ns == 12'500'000);
    const auto truth = true_sniff_events(sim.timelines.at(1), 22);
    CHECK(rb.alignment->k_init == EventCounter::from_index(truth.front()));
    CHECK(rb.channel_map->assumed_map == b.params.channel_map);
}

TEST_CASE("map feasibility resolves alignments on a two-channel map") {
    std::mt19937_64 rng(21);
    int plain_wrong = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto aa = static_cast<std::uint32_t>(rng() | 1u);
        const auto initial_k = static_cast<std::uint16_t>(rng());
        const auto run = simulate_csa2(aa, "0x400020", 22, initial_k, 7'500'000, 7'500'000LL * 1500);
        const auto est = estimate_interval(run.connection);
        const auto offsets = observation_offsets(run.connection, est.raw_gcd_ns);
        const auto ci = channel_identifier(AccessAddress{aa});
        const auto ref = build_ref_vector(ci, 22);
        const auto truth = run.sim.timelines.at(0);
        EventCounter first_k;
        for (const auto& ev : truth.events) {
            if (ev.channel == 22) {
                first_k = ev.counter();
                break;
            }
        }
        const auto plain = align_counter(build_meas_vector(offsets), ref);
        plain_wrong += plain.ambiguous || plain.k_init != first_k;
        const auto resolved = resolve_alignment(offsets, ref, ci, 22, 40);
        CHECK_FALSE(resolved.ambiguous);
        CHECK(resolved.k_init == first_k);
        const auto map = infer_channel_map(offsets, resolved.k_init, ci, 22);
        CHECK(map.min_feasible_n_ch == 2);
        CHECK((map.proven_excluded & 0x400020ull) == 0);
    }
    MESSAGE("plain correlation wrong or tied in " << plain_wrong << " of 20 runs");
}
