#pragma once

#include "blehop/csa.hpp"
#include "blehop/trace.hpp"

#include <cstdint>
#include <vector>

namespace blehop {

struct ImpairmentModel {
    double timestamp_jitter_sigma_ns = 0.0;
    double clock_drift_ppm = 0.0;
    /// Std dev of a per-event random walk added to the drift; 0 keeps the drift constant.
    double drift_random_walk_ppm = 0.0;
    double miss_probability = 0.0;
    std::int64_t duration_ns = 0;

    void validate() const;
};

struct SimulatedConnection {
    ConnectionParams params;
    std::int64_t start_offset_ns = 0;
    EventCounter initial_k;
    ImpairmentModel impairments;
};

struct ScenarioConfig {
    std::vector<SimulatedConnection> connections;
    Channel sniff_channel = 0;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

struct SimulationResult {
    std::vector<EventTimeline> timelines; // same order as config.connections
    SniffTrace trace;
};

/// Each connection draws from its own stream seeded by (rng_seed, access address),
/// so a connection's observations do not depend on which others share the scenario.
SimulationResult simulate(const ScenarioConfig& config);

/// Expected number of connection events until every excluded channel has been
/// remapped onto the sniffed channel at least once: 37 * n_ch * H(37 - n_ch).
double expected_reconstruction_budget_exact(int n_ch);

/// Rounded up to whole events; 0 for a full map.
std::int64_t expected_reconstruction_budget(int n_ch);

} // namespace blehop
