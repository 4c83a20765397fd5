#pragma once

// Recovery of hop parameters from the central packets of one connection seen
// on a single sniffed channel.

#include "blehop/channel_map.hpp"
#include "blehop/csa.hpp"
#include "blehop/trace.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace blehop {

using BinaryVector = std::vector<std::uint8_t>;

struct ReconstructOptions {
    /// A timestamp difference fits the 1.25 ms lattice when it is this close to a slot multiple.
    std::int64_t lattice_tolerance_ns = 300'000;
    /// Fraction of timestamp differences that must fit before the lattice GCD is trusted.
    double min_lattice_fit_fraction = 0.5;
    /// Largest deviation from a whole number of hops, as a fraction of the interval.
    double hop_tolerance_fraction = 0.25;
    /// Observed / expected hits on the periodic phase set needed for a CSA1 verdict.
    double csa1_fill_threshold = 0.6;
    /// Correlation shifts within this many background standard deviations of the peak are
    /// re-ranked by channel-map feasibility.
    double alignment_slack_sigma = 4.0;
};

struct IntervalEstimate {
    std::int64_t c_int_hat_ns = 0;       // snapped to 1.25 ms
    double raw_gcd_ns = 0.0;             // measured time per hop before snapping
    std::vector<std::int64_t> hop_counts; // hops between consecutive observations
    std::size_t lattice_misfits = 0;      // differences excluded from the lattice GCD
};

enum class CsaVerdict { Csa1SingleHit, Csa1Repeating, Csa2 };

const char* to_string(CsaVerdict v);

struct CsaClassification {
    CsaVerdict verdict = CsaVerdict::Csa2;
    /// Hit phases mod 37 relative to the first observation (CSA1 verdicts only).
    std::vector<int> period_profile;
    /// Interval after the single-hit correction (hop counts in true events).
    IntervalEstimate interval;
    double fill_ratio = 0.0;

    bool is_csa1() const { return verdict != CsaVerdict::Csa2; }
};

struct CounterAlignment {
    EventCounter k_init;
    int correlation_peak = 0;
    int second_peak = 0;
    bool ambiguous = false;
    std::size_t tied_count = 1;
    std::vector<EventCounter> candidates; // tied maxima, capped at kMaxReportedCandidates
    /// Shifts scoring at least as high as k_init that no channel map can explain.
    std::size_t map_rejected = 0;

    static constexpr std::size_t kMaxReportedCandidates = 64;
};

struct MapEstimate {
    std::uint64_t proven_excluded = 0; // bit mask
    ChannelMap assumed_map;
    std::array<std::int64_t, kNumDataChannels> evidence_count{};
    bool converged = false;
    /// Whether every remap observation is explained by assumed_map itself.
    bool assumed_map_consistent = true;
    /// Hop offset of the last observation that excluded a new channel (-1 if none).
    std::int64_t last_new_exclusion_offset = -1;
    std::int64_t span_events = 0;
    int min_feasible_n_ch = 0;
    int max_feasible_n_ch = 0;

    std::vector<Channel> excluded_channels() const;
};

/// Throws Error(InsufficientData) below three observations and Error(Estimation)
/// when the differences do not form a plausible interval lattice.
IntervalEstimate estimate_interval(const SniffTrace& trace,
                                   const ReconstructOptions& options = {});

/// Throws Error(InsufficientData) when fewer than two candidate periods are covered.
CsaClassification classify_csa(const SniffTrace& trace, const IntervalEstimate& interval,
                               const ReconstructOptions& options = {});

/// Hop offset of every observation from the first one, using `hop_ns` as the time per hop.
std::vector<std::int64_t> observation_offsets(const SniffTrace& trace, double hop_ns,
                                              const ReconstructOptions& options = {});

BinaryVector build_meas_vector(const std::vector<std::int64_t>& offsets);
BinaryVector build_meas_vector(const SniffTrace& trace, double hop_ns,
                               const ReconstructOptions& options = {});

/// OR-folds a measurement vector into the 65536-periodic counter domain.
BinaryVector fold_meas_vector(const BinaryVector& c_meas);

/// Indicator over all 65536 counters of the unmapped CSA2 channel equalling sniff_channel.
BinaryVector build_ref_vector(ChannelIdentifier ci, Channel sniff_channel);

/// Circular cross-correlation r[k] = sum_m c_ref[(m + k) mod 2^16] * c_meas[m], maximised over k.
CounterAlignment align_counter(const BinaryVector& c_meas, const BinaryVector& c_ref);

/// Like align_counter, but drops shifts whose remap observations fit no channel map
/// containing the sniff channel. Only shifts within `slack` of the correlation peak
/// compete; when none of them is feasible the plain correlation result is returned.
CounterAlignment resolve_alignment(const std::vector<std::int64_t>& offsets, const BinaryVector& c_ref,
                                   ChannelIdentifier ci, Channel sniff_channel, int slack);

/// Dense correlation profile, for diagnostics and tests.
std::vector<std::int32_t> correlation_profile(const BinaryVector& c_meas, const BinaryVector& c_ref);

/// Throws Error(Estimation) when the observations cannot come from any map
/// that contains the sniff channel and avoids every proven exclusion.
MapEstimate infer_channel_map(const std::vector<std::int64_t>& offsets, EventCounter k_init,
                              ChannelIdentifier ci, Channel sniff_channel);

enum class ReportStatus { Ok, InsufficientData, Ambiguous, Failed };

const char* to_string(ReportStatus s);

struct EstimationReport {
    AccessAddress access_address;
    Channel sniff_channel = 0;
    std::size_t observation_count = 0;
    std::int64_t first_timestamp_ns = 0;
    std::int64_t last_timestamp_ns = 0;
    ReportStatus status = ReportStatus::Failed;
    std::string message;

    std::optional<IntervalEstimate> interval;
    std::optional<CsaClassification> classification;
    std::optional<CounterAlignment> alignment;
    std::optional<MapEstimate> channel_map;

    bool ok() const { return status == ReportStatus::Ok; }
};

/// Runs the full pipeline on one connection's central observations. Never throws
/// for estimation problems; they are recorded in status/message instead.
EstimationReport reconstruct_connection(const SniffTrace& connection,
                                        const ReconstructOptions& options = {});

/// Splits by access address and reconstructs each connection independently.
std::map<AccessAddress, EstimationReport> reconstruct_all(const SniffTrace& trace,
                                                          const ReconstructOptions& options = {});

} // namespace blehop
