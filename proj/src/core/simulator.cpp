#include "blehop/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace blehop {

void ImpairmentModel::validate() const {
    if (!(timestamp_jitter_sigma_ns >= 0.0)) {
        throw Error(ErrorKind::Config, "timestamp jitter sigma must be non-negative");
    }
    if (!(std::abs(clock_drift_ppm) <= 500.0)) {
        throw Error(ErrorKind::Config, "clock drift must lie within +/-500 ppm");
    }
    if (!(drift_random_walk_ppm >= 0.0)) {
        throw Error(ErrorKind::Config, "drift random walk must be non-negative");
    }
    if (!(miss_probability >= 0.0 && miss_probability < 1.0)) {
        throw Error(ErrorKind::Config, "miss probability must lie in [0, 1)");
    }
    if (duration_ns <= 0) throw Error(ErrorKind::Config, "duration must be positive");
}

void ScenarioConfig::validate() const {
    if (sniff_channel >= kNumDataChannels) {
        throw Error(ErrorKind::Config, "sniff channel must be a data channel");
    }
    std::set<AccessAddress> seen;
    for (const auto& conn : connections) {
        conn.params.validate();
        conn.impairments.validate();
        if (conn.start_offset_ns < 0) throw Error(ErrorKind::Config, "start offset must be >= 0");
        if (!seen.insert(conn.params.access_address).second) {
            throw Error(ErrorKind::Config, "duplicate access address " +
                                               format_access_address(conn.params.access_address));
        }
    }
}

namespace {

struct ConnectionRun {
    EventTimeline timeline;
    std::vector<Observation> observations;
};

ConnectionRun run_connection(const SimulatedConnection& conn, Channel sniff_channel,
                             std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      conn.params.access_address.value};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::normal_distribution<double> jitter(0.0, 1.0);
    std::normal_distribution<double> walk(0.0, 1.0);

    const auto& imp = conn.impairments;
    const double c_int = static_cast<double>(conn.params.c_int_ns);
    const double start = static_cast<double>(conn.start_offset_ns);

    ConnectionRun run;
    run.timeline.params = conn.params;

    double drift_ppm = imp.clock_drift_ppm;
    double walked_time = start;
    for (std::int64_t n = 0;; ++n) {
        double t;
        if (imp.drift_random_walk_ppm == 0.0) {
            t = start + static_cast<double>(n) * c_int * (1.0 + imp.clock_drift_ppm * 1e-6);
        } else {
            t = walked_time;
            drift_ppm += imp.drift_random_walk_ppm * walk(rng);
            walked_time += c_int * (1.0 + drift_ppm * 1e-6);
        }
        const auto true_time = std::llround(t);
        if (true_time > imp.duration_ns) break;

        const std::int64_t k = static_cast<std::int64_t>(conn.initial_k.value) + n;
        const auto channel = channel_for_event(conn.params, k);
        run.timeline.events.push_back({k, channel, true_time});

        if (channel != sniff_channel) continue;
        if (imp.miss_probability > 0.0 && coin(rng) < imp.miss_probability) continue;
        std::int64_t ts = true_time;
        if (imp.timestamp_jitter_sigma_ns > 0.0) {
            ts += std::llround(imp.timestamp_jitter_sigma_ns * jitter(rng));
        }
        run.observations.push_back({ts, conn.params.access_address, sniff_channel, true});
    }
    return run;
}

} // namespace

SimulationResult simulate(const ScenarioConfig& config) {
    config.validate();
    SimulationResult result;
    result.trace.sniff_channel = config.sniff_channel;
    result.trace.capture_meta["sniff_channel"] = std::to_string(config.sniff_channel);
    result.trace.capture_meta["rng_seed"] = std::to_string(config.rng_seed);
    result.trace.capture_meta["source"] = "simulator";

    for (const auto& conn : config.connections) {
        auto run = run_connection(conn, config.sniff_channel, config.rng_seed);
        result.timelines.push_back(std::move(run.timeline));
        auto& obs = result.trace.observations;
        obs.insert(obs.end(), run.observations.begin(), run.observations.end());
    }
    // Connection order breaks timestamp ties, keeping the merge deterministic.
    std::stable_sort(result.trace.observations.begin(), result.trace.observations.end(),
                     [](const Observation& a, const Observation& b) {
                         return a.timestamp_ns < b.timestamp_ns;
                     });
    return result;
}

double expected_reconstruction_budget_exact(int n_ch) {
    if (n_ch < 2 || n_ch > kNumDataChannels) {
        throw Error(ErrorKind::InvalidArgument, "n_ch must lie in [2, 37]");
    }
    const int excluded = kNumDataChannels - n_ch;
    if (excluded == 0) return 0.0;
    double harmonic = 0.0;
    for (int i = 1; i <= excluded; ++i) harmonic += 1.0 / i;
    const double p_rem = static_cast<double>(excluded) / kNumDataChannels;
    return n_ch * excluded * harmonic / p_rem;
}

std::int64_t expected_reconstruction_budget(int n_ch) {
    return static_cast<std::int64_t>(std::ceil(expected_reconstruction_budget_exact(n_ch) - 1e-9));
}

} // namespace blehop
