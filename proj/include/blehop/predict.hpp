#pragma once

#include "blehop/reconstruct.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace blehop {

struct KalmanConfig {
    double measurement_noise_var = 100'000.0 * 100'000.0; // (100 us)^2 in ns^2
    /// Variance growth of the interval state per event (ns^2 / event^3 scaling of the
    /// white-acceleration model).
    double interval_process_noise = 1e-4;
    double gate_sigma = 6.0;
    /// Interval estimate is clamped to nominal * (1 +/- this).
    double max_interval_deviation = 1e-3;
    /// Initial 1-sigma interval uncertainty relative to nominal.
    double initial_interval_sigma = 5e-4;
};

/// Constant-velocity clock state: time of the anchor event and time per event.
struct SyncState {
    double phase_ns = 0.0;
    double interval_ns = 0.0;
    std::array<double, 4> covariance{}; // row-major 2x2
    double nominal_interval_ns = 0.0;
    std::int64_t anchor_offset = 0; // anchor event, in hops from the first observation
    KalmanConfig config;

    double var_phase() const { return covariance[0]; }
    double var_interval() const { return covariance[3]; }
    double cov_phase_interval() const { return covariance[1]; }

    /// Extrapolated time of the event `hops` after the anchor.
    double predict_time(std::int64_t hops) const;
    double predict_std(std::int64_t hops) const;
};

SyncState init_sync(std::int64_t first_time_ns, std::int64_t nominal_interval_ns,
                    const KalmanConfig& config = {});

struct KalmanStep {
    SyncState state;
    bool accepted = true;
    double innovation_ns = 0.0;
    double innovation_std_ns = 0.0;
};

/// Advances the state by `hops_since_last` events and corrects it with the measured
/// time. Measurements beyond the gate are rejected; the state is still advanced.
KalmanStep kalman_update(const SyncState& sync, double measured_time_ns,
                         std::int64_t hops_since_last);

struct ForecastEntry {
    std::int64_t offset = 0; // events after the anchor
    EventCounter k;
    Channel channel = 0;
    std::int64_t predicted_time_ns = 0;
    double time_std_ns = 0.0;
};

struct Forecast {
    AccessAddress access_address;
    CsaVersion csa_version = CsaVersion::Csa2;
    Channel sniff_channel = 0;
    bool counter_known = false;
    EventCounter anchor_k;
    std::int64_t anchor_time_ns = 0;
    double interval_ns = 0.0;
    std::vector<ForecastEntry> entries;
};

/// Throws Error(InvalidArgument) for horizon <= 0 or a non-CSA1 classification.
Forecast predict_csa1(const CsaClassification& profile, const SyncState& sync,
                      std::int64_t horizon, Channel sniff_channel);

struct Csa2Recovery {
    AccessAddress access_address;
    ChannelMap channel_map;
    EventCounter anchor_k; // counter of the sync anchor event
    Channel sniff_channel = 0;
};

/// Every event of the horizon (or only those on `only_channel`).
Forecast predict_csa2(const Csa2Recovery& recovered, const SyncState& sync,
                      std::int64_t horizon, std::optional<Channel> only_channel = std::nullopt);

struct EvalReport {
    double rmse_ns = 0.0;
    std::vector<double> abs_errors_ns;
    std::vector<std::pair<double, double>> eccdf; // (error, P(|error| > error))
    double p50_ns = 0.0;
    double p95_ns = 0.0;
    std::size_t matched = 0;
    std::size_t missed_predictions = 0;    // predictions without a matching observation
    std::size_t unpredicted = 0;           // observations no prediction explains
    std::size_t channel_mismatches = 0;
};

/// Builds the summary from signed errors. Throws Error(Estimation) when empty.
EvalReport make_eval_report(const std::vector<double>& errors_ns);

/// Pairs each held-out observation with the nearest prediction within half an interval.
EvalReport evaluate_against_trace(const Forecast& forecast, const SniffTrace& held_out);

/// Pairs predictions with ground-truth events by counter (nearest in time for CSA1).
EvalReport evaluate_against_timeline(const Forecast& forecast, const EventTimeline& truth);

struct PredictOptions {
    /// Events to forecast after the anchor; negative means up to the end of the trace.
    std::int64_t horizon = -1;
    std::optional<Channel> channel_filter;
    KalmanConfig kalman;
    ReconstructOptions reconstruct;
};

struct TrainedSync {
    SyncState sync;
    std::size_t training_count = 0;
    std::size_t rejected = 0;
};

/// Runs the filter through the training observations (those up to the report's last timestamp).
TrainedSync train_sync(const EstimationReport& report, const SniffTrace& connection,
                       const PredictOptions& options = {});

struct PredictionOutcome {
    Forecast forecast;
    TrainedSync trained;
    std::optional<EvalReport> eval;
    std::string eval_error;
};

/// Forecast from the end of training, plus a tracking evaluation over the held-out
/// observations inside the horizon: each is predicted from the filter state, then
/// fed back into it. Throws Error(Ambiguous) for ambiguous alignments and
/// Error(Estimation) when the report is not usable.
PredictionOutcome predict_connection(const EstimationReport& report, const SniffTrace& connection,
                                     const PredictOptions& options = {});

} // namespace blehop
