#include "blehop/reconstruct.hpp"

#include "blehop/simulator.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <set>
#include <tuple>
#include <utility>

namespace blehop {

const char* to_string(CsaVerdict v) {
    switch (v) {
    case CsaVerdict::Csa1SingleHit: return "CSA1_single_hit";
    case CsaVerdict::Csa1Repeating: return "CSA1_repeating";
    case CsaVerdict::Csa2: return "CSA2";
    }
    return "?";
}

const char* to_string(ReportStatus s) {
    switch (s) {
    case ReportStatus::Ok: return "ok";
    case ReportStatus::InsufficientData: return "insufficient_data";
    case ReportStatus::Ambiguous: return "ambiguous";
    case ReportStatus::Failed: return "failed";
    }
    return "?";
}

std::vector<Channel> MapEstimate::excluded_channels() const {
    std::vector<Channel> out;
    for (int ch = 0; ch < kNumDataChannels; ++ch) {
        if ((proven_excluded >> ch) & 1u) out.push_back(static_cast<Channel>(ch));
    }
    return out;
}

namespace {

std::vector<std::int64_t> time_differences(const SniffTrace& trace) {
    std::vector<std::int64_t> dt;
    dt.reserve(trace.size());
    for (std::size_t i = 1; i < trace.size(); ++i) {
        const auto d = trace.observations[i].timestamp_ns - trace.observations[i - 1].timestamp_ns;
        if (d <= 0) {
            throw Error(ErrorKind::Estimation,
                        "observations " + std::to_string(i - 1) + " and " + std::to_string(i) +
                            " are not strictly increasing in time");
        }
        dt.push_back(d);
    }
    return dt;
}

std::int64_t round_hops(double dt, double hop_ns) {
    return std::max<std::int64_t>(1, std::llround(dt / hop_ns));
}

// Ratio estimator of the per-hop duration; absorbs constant clock drift.
double per_hop_time(const std::vector<std::int64_t>& dt, const std::vector<std::int64_t>& hops) {
    double total_time = 0.0;
    double total_hops = 0.0;
    for (std::size_t i = 0; i < dt.size(); ++i) {
        total_time += static_cast<double>(dt[i]);
        total_hops += static_cast<double>(hops[i]);
    }
    return total_time / total_hops;
}

struct PhaseFit {
    std::vector<int> profile;
    double fill = 0.0;
    std::int64_t span = 0;
};

// Phase occupancy of observation positions modulo the CSA1 period.
PhaseFit fit_phases(const std::vector<std::int64_t>& positions) {
    PhaseFit fit;
    std::set<int> phases;
    for (auto p : positions) phases.insert(static_cast<int>(p % kNumDataChannels));
    fit.profile.assign(phases.begin(), phases.end());
    fit.span = positions.empty() ? 0 : positions.back();

    // Hits expected in [0, span] if every period showed every phase.
    const auto full_periods = (fit.span + 1) / kNumDataChannels;
    const auto remainder = (fit.span + 1) % kNumDataChannels;
    std::int64_t expected = 0;
    for (int p : fit.profile) expected += full_periods + (p < remainder ? 1 : 0);
    fit.fill = expected > 0 ? static_cast<double>(positions.size()) / static_cast<double>(expected)
                            : 0.0;
    return fit;
}

std::vector<std::int64_t> prefix_positions(const std::vector<std::int64_t>& hops, std::int64_t scale) {
    std::vector<std::int64_t> pos{0};
    pos.reserve(hops.size() + 1);
    for (auto h : hops) pos.push_back(pos.back() + h * scale);
    return pos;
}

} // namespace

IntervalEstimate estimate_interval(const SniffTrace& trace, const ReconstructOptions& options) {
    if (trace.size() < 3) {
        throw Error(ErrorKind::InsufficientData,
                    "interval estimation needs at least 3 observations, have " +
                        std::to_string(trace.size()));
    }
    const auto dt = time_differences(trace);

    std::int64_t slot_gcd = 0;
    std::size_t fitted = 0;
    for (auto d : dt) {
        const auto slots = std::llround(static_cast<double>(d) / kSlotNs);
        if (slots < 1) continue;
        if (std::llabs(d - slots * kSlotNs) > options.lattice_tolerance_ns) continue;
        slot_gcd = std::gcd(slot_gcd, slots);
        ++fitted;
    }
    const auto needed = std::max<std::size_t>(
        2, static_cast<std::size_t>(std::ceil(options.min_lattice_fit_fraction * dt.size())));
    if (fitted < needed) {
        throw Error(ErrorKind::Estimation,
                    "only " + std::to_string(fitted) + " of " + std::to_string(dt.size()) +
                        " timestamp differences fit the 1.25 ms lattice");
    }

    IntervalEstimate est;
    est.lattice_misfits = dt.size() - fitted;
    const double lattice_interval = static_cast<double>(slot_gcd * kSlotNs);

    est.hop_counts.resize(dt.size());
    for (std::size_t i = 0; i < dt.size(); ++i) {
        est.hop_counts[i] = round_hops(static_cast<double>(dt[i]), lattice_interval);
    }
    // One refinement with the drift-corrected hop time keeps long gaps on the right count.
    est.raw_gcd_ns = per_hop_time(dt, est.hop_counts);
    for (std::size_t i = 0; i < dt.size(); ++i) {
        est.hop_counts[i] = round_hops(static_cast<double>(dt[i]), est.raw_gcd_ns);
    }
    est.raw_gcd_ns = per_hop_time(dt, est.hop_counts);
    est.c_int_hat_ns = std::llround(est.raw_gcd_ns / kSlotNs) * kSlotNs;

    if (est.c_int_hat_ns < kMinIntervalNs) {
        throw Error(ErrorKind::Estimation,
                    "estimated interval " + std::to_string(est.c_int_hat_ns) +
                        " ns is below 7.5 ms (noise or interleaved connections)");
    }
    // A single-hit CSA1 spacing is 37 intervals, so allow up to 37 * 4 s here;
    // classification enforces the final range.
    if (est.c_int_hat_ns > kNumDataChannels * kMaxIntervalNs) {
        throw Error(ErrorKind::Estimation, "estimated interval " +
                                               std::to_string(est.c_int_hat_ns) +
                                               " ns exceeds any valid spacing");
    }
    return est;
}

CsaClassification classify_csa(const SniffTrace& trace, const IntervalEstimate& interval,
                               const ReconstructOptions& options) {
    const auto& hops = interval.hop_counts;
    if (hops.size() + 1 != trace.size()) {
        throw Error(ErrorKind::InvalidArgument, "interval estimate does not belong to this trace");
    }
    const auto period = static_cast<std::int64_t>(kNumDataChannels);
    const auto slots = interval.c_int_hat_ns / kSlotNs;

    // Candidate 1: every observation is one full CSA1 period apart (or a multiple of it).
    if (slots % period == 0 && (slots / period) * kSlotNs >= kMinIntervalNs) {
        const auto positions = prefix_positions(hops, period);
        if (positions.back() >= 2 * period) {
            const auto fit = fit_phases(positions);
            if (fit.profile.size() == 1 && fit.fill >= options.csa1_fill_threshold) {
                CsaClassification c;
                c.verdict = CsaVerdict::Csa1SingleHit;
                c.period_profile = fit.profile;
                c.fill_ratio = fit.fill;
                c.interval = interval;
                c.interval.c_int_hat_ns = interval.c_int_hat_ns / period;
                c.interval.raw_gcd_ns = interval.raw_gcd_ns / static_cast<double>(period);
                for (auto& h : c.interval.hop_counts) h *= period;
                return c;
            }
        }
    }

    const auto positions = prefix_positions(hops, 1);
    if (positions.back() < 2 * period) {
        throw Error(ErrorKind::InsufficientData,
                    "observations span " + std::to_string(positions.back()) +
                        " events; two full 37-event periods are needed to classify");
    }
    const auto fit = fit_phases(positions);
    CsaClassification c;
    c.interval = interval;
    c.fill_ratio = fit.fill;
    if (static_cast<int>(fit.profile.size()) < kNumDataChannels &&
        fit.fill >= options.csa1_fill_threshold) {
        c.verdict = fit.profile.size() == 1 ? CsaVerdict::Csa1SingleHit : CsaVerdict::Csa1Repeating;
        c.period_profile = fit.profile;
    } else {
        c.verdict = CsaVerdict::Csa2;
    }
    if (c.interval.c_int_hat_ns > kMaxIntervalNs) {
        throw Error(ErrorKind::Estimation, "estimated interval " +
                                               std::to_string(c.interval.c_int_hat_ns) +
                                               " ns exceeds 4 s");
    }
    return c;
}

std::vector<std::int64_t> observation_offsets(const SniffTrace& trace, double hop_ns,
                                              const ReconstructOptions& options) {
    if (!(hop_ns > 0.0)) throw Error(ErrorKind::InvalidArgument, "hop duration must be positive");
    std::vector<std::int64_t> offsets;
    if (trace.empty()) return offsets;
    offsets.reserve(trace.size());
    offsets.push_back(0);
    const double tolerance = options.hop_tolerance_fraction * hop_ns;
    for (std::size_t i = 1; i < trace.size(); ++i) {
        const auto dt = static_cast<double>(trace.observations[i].timestamp_ns -
                                            trace.observations[i - 1].timestamp_ns);
        const auto hops = std::llround(dt / hop_ns);
        if (hops < 1 || std::abs(dt - static_cast<double>(hops) * hop_ns) > tolerance) {
            throw Error(ErrorKind::Estimation,
                        "time difference before observation " + std::to_string(i) +
                            " is not a whole number of connection intervals");
        }
        offsets.push_back(offsets.back() + hops);
    }
    return offsets;
}

BinaryVector build_meas_vector(const std::vector<std::int64_t>& offsets) {
    if (offsets.empty()) return {};
    BinaryVector bits(static_cast<std::size_t>(offsets.back() + 1), 0);
    for (auto o : offsets) bits[static_cast<std::size_t>(o)] = 1;
    return bits;
}

BinaryVector build_meas_vector(const SniffTrace& trace, double hop_ns,
                               const ReconstructOptions& options) {
    return build_meas_vector(observation_offsets(trace, hop_ns, options));
}

BinaryVector fold_meas_vector(const BinaryVector& c_meas) {
    if (c_meas.size() <= static_cast<std::size_t>(kCounterPeriod)) return c_meas;
    BinaryVector folded(static_cast<std::size_t>(kCounterPeriod), 0);
    for (std::size_t m = 0; m < c_meas.size(); ++m) {
        if (c_meas[m]) folded[m % static_cast<std::size_t>(kCounterPeriod)] = 1;
    }
    return folded;
}

BinaryVector build_ref_vector(ChannelIdentifier ci, Channel sniff_channel) {
    BinaryVector ref(static_cast<std::size_t>(kCounterPeriod), 0);
    for (std::int64_t k = 0; k < kCounterPeriod; ++k) {
        if (csa2_unmapped_channel(EventCounter::from_index(k), ci) == sniff_channel) {
            ref[static_cast<std::size_t>(k)] = 1;
        }
    }
    return ref;
}

std::vector<std::int32_t> correlation_profile(const BinaryVector& c_meas, const BinaryVector& c_ref) {
    if (c_ref.size() != static_cast<std::size_t>(kCounterPeriod)) {
        throw Error(ErrorKind::InvalidArgument, "reference vector must have 65536 entries");
    }
    const auto meas = fold_meas_vector(c_meas);
    std::vector<std::int32_t> ref_ones;
    std::vector<std::int32_t> meas_ones;
    for (std::size_t i = 0; i < c_ref.size(); ++i) {
        if (c_ref[i]) ref_ones.push_back(static_cast<std::int32_t>(i));
    }
    for (std::size_t i = 0; i < meas.size(); ++i) {
        if (meas[i]) meas_ones.push_back(static_cast<std::int32_t>(i));
    }
    // r[k] gains one for every pair with ref index p = m + k (mod 2^16).
    std::vector<std::int32_t> r(static_cast<std::size_t>(kCounterPeriod), 0);
    for (auto m : meas_ones) {
        for (auto p : ref_ones) ++r[static_cast<std::uint16_t>(p - m)];
    }
    return r;
}

CounterAlignment align_counter(const BinaryVector& c_meas, const BinaryVector& c_ref) {
    if (std::find(c_meas.begin(), c_meas.end(), std::uint8_t{1}) == c_meas.end()) {
        throw Error(ErrorKind::InvalidArgument, "measurement vector has no observations");
    }
    const auto r = correlation_profile(c_meas, c_ref);

    CounterAlignment a;
    const auto best = std::max_element(r.begin(), r.end());
    a.correlation_peak = *best;
    a.k_init = EventCounter::from_index(best - r.begin());
    a.tied_count = 0;
    int second = 0;
    for (std::size_t k = 0; k < r.size(); ++k) {
        if (r[k] == a.correlation_peak) {
            ++a.tied_count;
            if (a.candidates.size() < CounterAlignment::kMaxReportedCandidates) {
                a.candidates.push_back(EventCounter::from_index(static_cast<std::int64_t>(k)));
            }
        }
        if (static_cast<std::int64_t>(k) != best - r.begin()) second = std::max(second, r[k]);
    }
    a.second_peak = second;
    a.ambiguous = a.tied_count > 1;
    return a;
}

namespace {

struct RemapEvidence {
    std::uint64_t excluded = 0;
    std::array<std::int64_t, kNumDataChannels> counts{};
    std::int64_t last_new_exclusion_offset = -1;
    // For every candidate n_ch, the remap index all remap observations agree on (-1: none yet, -2: conflict).
    std::array<int, kNumDataChannels + 1> agreed_index{};
};

RemapEvidence collect_remap_evidence(const std::vector<std::int64_t>& offsets, EventCounter k_init,
                                     ChannelIdentifier ci, Channel sniff_channel, bool stop_when_infeasible) {
    RemapEvidence ev;
    ev.agreed_index.fill(-1);
    for (auto offset : offsets) {
        const auto prn = prn_e(k_init.advanced(offset), ci);
        const auto unmapped = static_cast<int>(prn % kNumDataChannels);
        if (unmapped == sniff_channel) continue;
        const auto bit = std::uint64_t{1} << unmapped;
        if (!(ev.excluded & bit)) ev.last_new_exclusion_offset = offset;
        ev.excluded |= bit;
        ++ev.counts[static_cast<std::size_t>(unmapped)];
        bool any_open = false;
        for (int n = 2; n <= kNumDataChannels; ++n) {
            auto& slot = ev.agreed_index[static_cast<std::size_t>(n)];
            const int idx = csa2_remap_index(prn, n);
            if (slot == -1) slot = idx;
            else if (slot != idx) slot = -2;
            any_open = any_open || slot != -2;
        }
        if (stop_when_infeasible && !any_open) break;
    }
    return ev;
}

// Smallest and largest n for which some map of size n inside the assumed map explains
// every remap observation; {0, 0} when none does.
std::pair<int, int> feasible_sizes(const RemapEvidence& ev, Channel sniff_channel) {
    const auto assumed_mask = ChannelMap::kFullMask & ~ev.excluded;
    const int assumed_size = std::popcount(assumed_mask);
    if (!((assumed_mask >> sniff_channel) & 1u)) return {0, 0};
    // A map M with sniff in M and M inside the assumed map is characterised by
    // n = |M| and b = rank of the sniff channel in M.
    const int below = std::popcount(assumed_mask & ((std::uint64_t{1} << sniff_channel) - 1));
    const int above = assumed_size - 1 - below;
    std::pair<int, int> range{0, 0};
    for (int n = 2; n <= assumed_size; ++n) {
        const int b = ev.agreed_index[static_cast<std::size_t>(n)];
        bool feasible;
        if (b == -1) feasible = true;
        else if (b == -2) feasible = false;
        else feasible = b <= below && (n - 1 - b) <= above;
        if (feasible) {
            if (range.first == 0) range.first = n;
            range.second = n;
        }
    }
    return range;
}

} // namespace

CounterAlignment resolve_alignment(const std::vector<std::int64_t>& offsets, const BinaryVector& c_ref,
                                   ChannelIdentifier ci, Channel sniff_channel, int slack) {
    const auto meas = build_meas_vector(offsets);
    const auto plain = align_counter(meas, c_ref);
    const auto r = correlation_profile(meas, c_ref);
    const int floor_score = std::max(1, plain.correlation_peak - std::max(slack, 0));

    std::vector<std::int32_t> order;
    for (std::int32_t k = 0; k < static_cast<std::int32_t>(r.size()); ++k) {
        if (r[static_cast<std::size_t>(k)] >= floor_score) order.push_back(k);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
        return r[static_cast<std::size_t>(a)] > r[static_cast<std::size_t>(b)];
    });

    CounterAlignment a;
    a.tied_count = 0;
    int best = -1;
    std::size_t rejected = 0;
    for (auto k : order) {
        const int score = r[static_cast<std::size_t>(k)];
        if (best >= 0 && score < best) break;
        const auto ev = collect_remap_evidence(offsets, EventCounter::from_index(k), ci, sniff_channel, true);
        if (feasible_sizes(ev, sniff_channel).first == 0) {
            ++rejected;
            continue;
        }
        if (best < 0) {
            best = score;
            a.k_init = EventCounter::from_index(k);
        }
        ++a.tied_count;
        if (a.candidates.size() < CounterAlignment::kMaxReportedCandidates) {
            a.candidates.push_back(EventCounter::from_index(k));
        }
    }
    if (best < 0) return plain;

    a.correlation_peak = best;
    a.map_rejected = rejected;
    int second = 0;
    for (std::size_t k = 0; k < r.size(); ++k) {
        if (static_cast<std::uint16_t>(k) != a.k_init.value) second = std::max(second, r[k]);
    }
    a.second_peak = second;
    a.ambiguous = a.tied_count > 1;
    return a;
}

MapEstimate infer_channel_map(const std::vector<std::int64_t>& offsets, EventCounter k_init,
                              ChannelIdentifier ci, Channel sniff_channel) {
    MapEstimate est;
    const auto ev = collect_remap_evidence(offsets, k_init, ci, sniff_channel, false);
    est.proven_excluded = ev.excluded;
    est.evidence_count = ev.counts;
    est.last_new_exclusion_offset = ev.last_new_exclusion_offset;
    est.span_events = offsets.empty() ? 0 : offsets.back();

    const auto assumed_mask = ChannelMap::kFullMask & ~est.proven_excluded;
    if (std::popcount(assumed_mask) < 2) {
        throw Error(ErrorKind::Estimation, "remap evidence excludes all but one channel");
    }
    est.assumed_map = ChannelMap::from_mask(assumed_mask);

    std::tie(est.min_feasible_n_ch, est.max_feasible_n_ch) = feasible_sizes(ev, sniff_channel);
    if (est.min_feasible_n_ch == 0) {
        throw Error(ErrorKind::Estimation,
                    "remap observations are inconsistent with every channel map containing the "
                    "evidence (wrong counter alignment or channel identifier)");
    }
    const int n_hat = est.assumed_map.size();
    const int b_hat = est.assumed_map.index_of(sniff_channel);
    const int agreed = ev.agreed_index[static_cast<std::size_t>(n_hat)];
    est.assumed_map_consistent = agreed == -1 || agreed == b_hat;

    // A full map can never be proven; require one single-exclusion budget of silence.
    const auto window = expected_reconstruction_budget(std::min(n_hat, kNumDataChannels - 1));
    const auto quiet_since = std::max<std::int64_t>(est.last_new_exclusion_offset, 0);
    est.converged = est.assumed_map_consistent && est.span_events >= window &&
                    est.span_events - quiet_since >= window;
    return est;
}

EstimationReport reconstruct_connection(const SniffTrace& connection,
                                        const ReconstructOptions& options) {
    EstimationReport report;
    report.observation_count = connection.size();
    if (!connection.empty()) {
        report.access_address = connection.observations.front().access_address;
        report.first_timestamp_ns = connection.observations.front().timestamp_ns;
        report.last_timestamp_ns = connection.observations.back().timestamp_ns;
    }
    report.sniff_channel = connection.sniff_channel.value_or(0);

    try {
        report.interval = estimate_interval(connection, options);
        report.classification = classify_csa(connection, *report.interval, options);
        if (report.classification->is_csa1()) {
            report.status = ReportStatus::Ok;
            return report;
        }
        const auto ci = channel_identifier(report.access_address);
        const auto offsets =
            observation_offsets(connection, report.classification->interval.raw_gcd_ns, options);
        const auto c_ref = build_ref_vector(ci, report.sniff_channel);
        // Off-peak correlation is roughly binomial with mean observations / 37.
        const double background_sigma = std::sqrt(static_cast<double>(offsets.size()) / kNumDataChannels);
        const auto slack = static_cast<int>(std::ceil(options.alignment_slack_sigma * background_sigma));
        report.alignment = resolve_alignment(offsets, c_ref, ci, report.sniff_channel, slack);
        if (report.alignment->ambiguous) {
            report.status = ReportStatus::Ambiguous;
            report.message = std::to_string(report.alignment->tied_count) +
                             " counter alignments share the correlation peak";
            return report;
        }
        report.channel_map =
            infer_channel_map(offsets, report.alignment->k_init, ci, report.sniff_channel);
        report.status = ReportStatus::Ok;
    } catch (const Error& e) {
        report.status = e.kind() == ErrorKind::InsufficientData ? ReportStatus::InsufficientData
                                                                : ReportStatus::Failed;
        report.message = e.what();
    }
    return report;
}

std::map<AccessAddress, EstimationReport> reconstruct_all(const SniffTrace& trace,
                                                          const ReconstructOptions& options) {
    std::map<AccessAddress, EstimationReport> reports;
    for (const auto& [aa, part] : split_by_connection(trace)) {
        auto report = reconstruct_connection(part, options);
        report.access_address = aa;
        reports.emplace(aa, std::move(report));
    }
    return reports;
}

} // namespace blehop
