#include "blehop/predict.hpp"

#include <algorithm>
#include <cmath>

namespace blehop {

double SyncState::predict_time(std::int64_t hops) const {
    return phase_ns + static_cast<double>(hops) * interval_ns;
}

double SyncState::predict_std(std::int64_t hops) const {
    const auto h = static_cast<double>(hops);
    const double var = var_phase() + 2.0 * h * cov_phase_interval() + h * h * var_interval();
    return std::sqrt(std::max(var, 0.0));
}

SyncState init_sync(std::int64_t first_time_ns, std::int64_t nominal_interval_ns,
                    const KalmanConfig& config) {
    if (nominal_interval_ns <= 0) {
        throw Error(ErrorKind::InvalidArgument, "nominal interval must be positive");
    }
    SyncState s;
    s.config = config;
    s.phase_ns = static_cast<double>(first_time_ns);
    s.interval_ns = static_cast<double>(nominal_interval_ns);
    s.nominal_interval_ns = s.interval_ns;
    const double sigma_interval = config.initial_interval_sigma * s.interval_ns;
    s.covariance = {config.measurement_noise_var, 0.0, 0.0, sigma_interval * sigma_interval};
    return s;
}

KalmanStep kalman_update(const SyncState& sync, double measured_time_ns,
                         std::int64_t hops_since_last) {
    if (hops_since_last < 1) {
        throw Error(ErrorKind::InvalidArgument, "hops since last measurement must be >= 1");
    }
    const auto h = static_cast<double>(hops_since_last);
    const auto& cfg = sync.config;
    const auto [p00, p01, p10, p11] = sync.covariance;
    (void)p10;

    // Predict: x' = F x, P' = F P F^T + Q with F = [[1, h], [0, 1]].
    const double q = cfg.interval_process_noise;
    const double a00 = p00 + 2.0 * h * p01 + h * h * p11 + q * h * h * h / 3.0;
    const double a01 = p01 + h * p11 + q * h * h / 2.0;
    const double a11 = p11 + q * h;

    KalmanStep step;
    step.state = sync;
    step.state.phase_ns = sync.phase_ns + h * sync.interval_ns;
    step.state.anchor_offset = sync.anchor_offset + hops_since_last;
    step.state.covariance = {a00, a01, a01, a11};

    const double r = cfg.measurement_noise_var;
    const double s = a00 + r;
    step.innovation_ns = measured_time_ns - step.state.phase_ns;
    step.innovation_std_ns = std::sqrt(s);
    if (std::abs(step.innovation_ns) > cfg.gate_sigma * step.innovation_std_ns) {
        step.accepted = false;
        return step;
    }

    const double k0 = a00 / s;
    const double k1 = a01 / s;
    step.state.phase_ns += k0 * step.innovation_ns;
    step.state.interval_ns += k1 * step.innovation_ns;

    // Joseph form keeps the covariance symmetric positive semi-definite.
    const double g = 1.0 - k0;
    const double n00 = g * g * a00 + r * k0 * k0;
    const double n01 = g * (a01 - k1 * a00) + r * k0 * k1;
    const double n11 = k1 * k1 * a00 - 2.0 * k1 * a01 + a11 + r * k1 * k1;
    step.state.covariance = {n00, n01, n01, n11};

    const double lo = sync.nominal_interval_ns * (1.0 - cfg.max_interval_deviation);
    const double hi = sync.nominal_interval_ns * (1.0 + cfg.max_interval_deviation);
    step.state.interval_ns = std::clamp(step.state.interval_ns, lo, hi);
    return step;
}

Forecast predict_csa1(const CsaClassification& profile, const SyncState& sync,
                      std::int64_t horizon, Channel sniff_channel) {
    if (horizon <= 0) throw Error(ErrorKind::InvalidArgument, "horizon must be positive");
    if (!profile.is_csa1() || profile.period_profile.empty()) {
        throw Error(ErrorKind::InvalidArgument, "CSA1 forecast needs a CSA1 phase profile");
    }
    Forecast f;
    f.csa_version = CsaVersion::Csa1;
    f.sniff_channel = sniff_channel;
    f.counter_known = false;
    f.anchor_time_ns = std::llround(sync.phase_ns);
    f.interval_ns = sync.interval_ns;

    std::array<bool, kNumDataChannels> hit{};
    for (int p : profile.period_profile) hit.at(static_cast<std::size_t>(p)) = true;
    for (std::int64_t j = 1; j <= horizon; ++j) {
        const auto phase = (sync.anchor_offset + j) % kNumDataChannels;
        if (!hit[static_cast<std::size_t>(phase)]) continue;
        f.entries.push_back({j, EventCounter::from_index(j), sniff_channel,
                             std::llround(sync.predict_time(j)), sync.predict_std(j)});
    }
    return f;
}

Forecast predict_csa2(const Csa2Recovery& recovered, const SyncState& sync, std::int64_t horizon,
                      std::optional<Channel> only_channel) {
    if (horizon <= 0) throw Error(ErrorKind::InvalidArgument, "horizon must be positive");
    Forecast f;
    f.access_address = recovered.access_address;
    f.csa_version = CsaVersion::Csa2;
    f.sniff_channel = recovered.sniff_channel;
    f.counter_known = true;
    f.anchor_k = recovered.anchor_k;
    f.anchor_time_ns = std::llround(sync.phase_ns);
    f.interval_ns = sync.interval_ns;

    const auto ci = channel_identifier(recovered.access_address);
    for (std::int64_t j = 1; j <= horizon; ++j) {
        const auto k = recovered.anchor_k.advanced(j);
        const auto ch = remap_csa2(k, ci, recovered.channel_map);
        if (only_channel && ch != *only_channel) continue;
        f.entries.push_back({j, k, ch, std::llround(sync.predict_time(j)), sync.predict_std(j)});
    }
    return f;
}

EvalReport make_eval_report(const std::vector<double>& errors_ns) {
    if (errors_ns.empty()) {
        throw Error(ErrorKind::Estimation, "evaluation has no matched prediction/reference pairs");
    }
    EvalReport rep;
    rep.matched = errors_ns.size();
    double sq = 0.0;
    rep.abs_errors_ns.reserve(errors_ns.size());
    for (double e : errors_ns) {
        sq += e * e;
        rep.abs_errors_ns.push_back(std::abs(e));
    }
    rep.rmse_ns = std::sqrt(sq / static_cast<double>(errors_ns.size()));

    auto sorted = rep.abs_errors_ns;
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<double>(sorted.size());
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        rep.eccdf.emplace_back(sorted[i], static_cast<double>(sorted.size() - j) / n);
        i = j;
    }
    const auto quantile = [&](double q) {
        const double pos = q * (n - 1.0);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, sorted.size() - 1);
        return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    };
    rep.p50_ns = quantile(0.50);
    rep.p95_ns = quantile(0.95);
    return rep;
}

EvalReport evaluate_against_trace(const Forecast& forecast, const SniffTrace& held_out) {
    const auto& entries = forecast.entries;
    const double half = forecast.interval_ns / 2.0;
    std::vector<bool> used(entries.size(), false);
    std::vector<double> errors;
    std::size_t unpredicted = 0;
    std::size_t mismatches = 0;
    std::int64_t first = 0;
    std::int64_t last = 0;
    bool any = false;

    for (const auto& obs : held_out.observations) {
        if (obs.access_address != forecast.access_address || !obs.is_central) continue;
        if (!any) first = obs.timestamp_ns;
        last = obs.timestamp_ns;
        any = true;
        const auto it = std::lower_bound(
            entries.begin(), entries.end(), obs.timestamp_ns,
            [](const ForecastEntry& e, std::int64_t t) { return e.predicted_time_ns < t; });
        std::ptrdiff_t best = -1;
        double best_dist = half;
        for (auto cand = it - std::min<std::ptrdiff_t>(it - entries.begin(), 1);
             cand != entries.end() && cand <= it; ++cand) {
            const double d = std::abs(static_cast<double>(obs.timestamp_ns - cand->predicted_time_ns));
            if (d <= best_dist) {
                best_dist = d;
                best = cand - entries.begin();
            }
        }
        if (best < 0) {
            ++unpredicted;
            continue;
        }
        const auto& e = entries[static_cast<std::size_t>(best)];
        used[static_cast<std::size_t>(best)] = true;
        if (e.channel != obs.channel) {
            ++mismatches;
            continue;
        }
        errors.push_back(static_cast<double>(obs.timestamp_ns - e.predicted_time_ns));
    }
    auto rep = make_eval_report(errors);
    rep.unpredicted = unpredicted;
    rep.channel_mismatches = mismatches;
    const auto sniff = held_out.sniff_channel.value_or(forecast.sniff_channel);
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto t = static_cast<double>(entries[i].predicted_time_ns);
        if (!used[i] && entries[i].channel == sniff && t >= static_cast<double>(first) - half &&
            t <= static_cast<double>(last) + half) {
            ++rep.missed_predictions;
        }
    }
    return rep;
}

EvalReport evaluate_against_timeline(const Forecast& forecast, const EventTimeline& truth) {
    const auto& events = truth.events;
    const double half = forecast.interval_ns / 2.0;
    std::vector<double> errors;
    std::size_t missed = 0;
    std::size_t mismatches = 0;
    for (const auto& entry : forecast.entries) {
        const auto it = std::lower_bound(
            events.begin(), events.end(), entry.predicted_time_ns,
            [](const TimelineEvent& e, std::int64_t t) { return e.true_time_ns < t; });
        const auto center = it - events.begin();
        std::ptrdiff_t best = -1;
        double best_dist = 0.0;
        for (auto i = center - 2; i <= center + 2; ++i) {
            if (i < 0 || i >= static_cast<std::ptrdiff_t>(events.size())) continue;
            const auto& ev = events[static_cast<std::size_t>(i)];
            const double d = std::abs(static_cast<double>(entry.predicted_time_ns - ev.true_time_ns));
            if (forecast.counter_known) {
                if (ev.counter() != entry.k) continue;
            } else if (d > half) {
                continue;
            }
            if (best < 0 || d < best_dist) {
                best = i;
                best_dist = d;
            }
        }
        if (best < 0) {
            ++missed;
            continue;
        }
        const auto& ev = events[static_cast<std::size_t>(best)];
        if (ev.channel != entry.channel) ++mismatches;
        errors.push_back(static_cast<double>(entry.predicted_time_ns - ev.true_time_ns));
    }
    auto rep = make_eval_report(errors);
    rep.missed_predictions = missed;
    rep.channel_mismatches = mismatches;
    return rep;
}

namespace {

std::vector<std::int64_t> training_offsets(const EstimationReport& report, const SniffTrace& train,
                                           const PredictOptions& options) {
    const auto& interval = report.classification->interval;
    return observation_offsets(train, interval.raw_gcd_ns, options.reconstruct);
}

SniffTrace training_part(const EstimationReport& report, const SniffTrace& connection) {
    SniffTrace train;
    train.sniff_channel = connection.sniff_channel;
    for (const auto& obs : connection.observations) {
        if (!obs.is_central || obs.access_address != report.access_address) continue;
        if (obs.timestamp_ns < report.first_timestamp_ns) continue;
        if (obs.timestamp_ns > report.last_timestamp_ns) break;
        train.observations.push_back(obs);
    }
    return train;
}

void require_usable(const EstimationReport& report) {
    if (report.status == ReportStatus::Ambiguous) {
        std::string msg = "counter alignment is ambiguous; candidates:";
        if (report.alignment) {
            for (auto k : report.alignment->candidates) msg += " " + std::to_string(k.value);
        }
        throw Error(ErrorKind::Ambiguous, msg);
    }
    if (!report.ok() || !report.classification) {
        throw Error(ErrorKind::Estimation, "report for " +
                                               format_access_address(report.access_address) +
                                               " is not usable: " + report.message);
    }
    if (!report.classification->is_csa1() && (!report.alignment || !report.channel_map)) {
        throw Error(ErrorKind::Estimation, "CSA2 report lacks counter alignment or channel map");
    }
}

} // namespace

TrainedSync train_sync(const EstimationReport& report, const SniffTrace& connection,
                       const PredictOptions& options) {
    require_usable(report);
    const auto train = training_part(report, connection);
    if (train.empty()) throw Error(ErrorKind::Estimation, "no training observations");
    const auto offsets = training_offsets(report, train, options);

    TrainedSync out;
    out.sync = init_sync(train.observations.front().timestamp_ns,
                         report.classification->interval.c_int_hat_ns, options.kalman);
    out.training_count = train.size();
    for (std::size_t i = 1; i < train.size(); ++i) {
        auto step = kalman_update(out.sync, static_cast<double>(train.observations[i].timestamp_ns),
                                  offsets[i] - offsets[i - 1]);
        if (!step.accepted) ++out.rejected;
        out.sync = step.state;
    }
    return out;
}

PredictionOutcome predict_connection(const EstimationReport& report, const SniffTrace& connection,
                                     const PredictOptions& options) {
    PredictionOutcome out;
    out.trained = train_sync(report, connection, options);
    const auto& sync = out.trained.sync;
    const auto& cls = *report.classification;

    std::vector<Observation> test;
    for (const auto& obs : connection.observations) {
        if (obs.is_central && obs.access_address == report.access_address &&
            obs.timestamp_ns > report.last_timestamp_ns) {
            test.push_back(obs);
        }
    }

    auto horizon = options.horizon;
    if (horizon < 0) {
        horizon = test.empty() ? 0
                               : static_cast<std::int64_t>(std::ceil(
                                     (static_cast<double>(test.back().timestamp_ns) - sync.phase_ns) /
                                     sync.interval_ns)) + 1;
    }

    std::optional<Csa2Recovery> recovery;
    if (!cls.is_csa1()) {
        recovery = Csa2Recovery{report.access_address, report.channel_map->assumed_map,
                                report.alignment->k_init.advanced(sync.anchor_offset),
                                report.sniff_channel};
    }

    Forecast& f = out.forecast;
    if (horizon > 0) {
        f = cls.is_csa1() ? predict_csa1(cls, sync, horizon, report.sniff_channel)
                          : predict_csa2(*recovery, sync, horizon, options.channel_filter);
    } else {
        f.csa_version = cls.is_csa1() ? CsaVersion::Csa1 : CsaVersion::Csa2;
        f.counter_known = !cls.is_csa1();
        f.sniff_channel = report.sniff_channel;
        if (recovery) f.anchor_k = recovery->anchor_k;
        f.anchor_time_ns = std::llround(sync.phase_ns);
        f.interval_ns = sync.interval_ns;
    }
    f.access_address = report.access_address;

    // Tracking evaluation: predict each held-out observation, then absorb it.
    std::array<bool, kNumDataChannels> csa1_hit{};
    for (int p : cls.period_profile) csa1_hit.at(static_cast<std::size_t>(p)) = true;
    const auto ci = channel_identifier(report.access_address);

    std::vector<double> errors;
    std::size_t mismatches = 0;
    auto state = sync;
    for (const auto& obs : test) {
        const auto t = static_cast<double>(obs.timestamp_ns);
        const auto hops =
            std::max<std::int64_t>(1, std::llround((t - state.phase_ns) / state.interval_ns));
        const auto offset = state.anchor_offset + hops;
        if (offset - sync.anchor_offset > horizon) break;
        bool channel_ok;
        if (cls.is_csa1()) {
            channel_ok = csa1_hit[static_cast<std::size_t>(offset % kNumDataChannels)];
        } else {
            const auto k = report.alignment->k_init.advanced(offset);
            channel_ok = remap_csa2(k, ci, report.channel_map->assumed_map) == obs.channel;
        }
        if (!channel_ok) ++mismatches;
        errors.push_back(t - static_cast<double>(std::llround(state.predict_time(hops))));
        state = kalman_update(state, t, hops).state;
    }
    if (errors.empty()) {
        out.eval_error = "no held-out observations within the forecast horizon";
    } else {
        out.eval = make_eval_report(errors);
        out.eval->channel_mismatches = mismatches;
    }
    return out;
}

} // namespace blehop
