#include "blehop/json_io.hpp"

#include <cmath>
#include <sstream>

namespace blehop {

using nlohmann::json;

namespace {

std::int64_t us_to_ns(const json& value) {
    return std::llround(value.get<double>() * 1000.0);
}

CsaVersion csa_from_json(const json& j) {
    if (j.is_number_integer()) {
        const auto v = j.get<int>();
        if (v == 1) return CsaVersion::Csa1;
        if (v == 2) return CsaVersion::Csa2;
    } else if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "CSA1" || s == "csa1" || s == "1") return CsaVersion::Csa1;
        if (s == "CSA2" || s == "csa2" || s == "2") return CsaVersion::Csa2;
    }
    throw Error(ErrorKind::Config, "csa_version must be CSA1 or CSA2");
}

CsaVerdict verdict_from_string(const std::string& s) {
    if (s == "CSA1_single_hit") return CsaVerdict::Csa1SingleHit;
    if (s == "CSA1_repeating") return CsaVerdict::Csa1Repeating;
    if (s == "CSA2") return CsaVerdict::Csa2;
    throw Error(ErrorKind::Parse, "unknown verdict '" + s + "'");
}

ReportStatus status_from_string(const std::string& s) {
    if (s == "ok") return ReportStatus::Ok;
    if (s == "insufficient_data") return ReportStatus::InsufficientData;
    if (s == "ambiguous") return ReportStatus::Ambiguous;
    if (s == "failed") return ReportStatus::Failed;
    throw Error(ErrorKind::Parse, "unknown report status '" + s + "'");
}

template <typename F>
auto config_guard(const char* what, F&& fn) {
    try {
        return fn();
    } catch (const Error&) {
        throw;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Config, std::string(what) + ": " + e.what());
    }
}

template <typename F>
auto parse_guard(const char* what, F&& fn) {
    try {
        return fn();
    } catch (const Error&) {
        throw;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, std::string(what) + ": " + e.what());
    }
}

} // namespace

json params_to_json(const ConnectionParams& p) {
    json j;
    j["csa_version"] = to_string(p.csa_version);
    j["c_int_us"] = static_cast<double>(p.c_int_ns) / 1000.0;
    j["channel_map"] = p.channel_map.to_hex();
    j["access_address"] = format_access_address(p.access_address);
    if (p.csa_version == CsaVersion::Csa1) {
        j["hop_increment"] = p.hop_increment;
        j["initial_channel"] = p.initial_channel;
    }
    return j;
}

ConnectionParams params_from_json(const json& j) {
    return config_guard("connection params", [&] {
        ConnectionParams p;
        p.csa_version = csa_from_json(j.at("csa_version"));
        p.c_int_ns = us_to_ns(j.at("c_int_us"));
        try {
            p.channel_map = j.contains("channel_map")
                                ? ChannelMap::parse(j.at("channel_map").get<std::string>())
                                : ChannelMap::full();
            p.access_address = parse_access_address(j.at("access_address").get<std::string>());
        } catch (const Error& e) {
            throw Error(ErrorKind::Config, e.what());
        }
        p.hop_increment = j.value("hop_increment", kMinHopIncrement);
        const auto initial = j.value("initial_channel", 0);
        if (initial < 0 || initial >= kNumDataChannels) {
            throw Error(ErrorKind::Config, "initial_channel must be a data channel");
        }
        p.initial_channel = static_cast<Channel>(initial);
        p.validate();
        return p;
    });
}

ScenarioConfig scenario_from_json(const json& j) {
    return config_guard("scenario", [&] {
        ScenarioConfig cfg;
        const auto sniff = j.at("sniff_channel").get<int>();
        if (sniff < 0 || sniff >= kNumDataChannels) {
            throw Error(ErrorKind::Config, "sniff_channel must be a data channel");
        }
        cfg.sniff_channel = static_cast<Channel>(sniff);
        cfg.rng_seed = j.value("rng_seed", std::uint64_t{0});
        const auto default_duration = j.contains("duration_us") ? us_to_ns(j.at("duration_us")) : 0;
        for (const auto& c : j.value("connections", json::array())) {
            SimulatedConnection conn;
            conn.params = params_from_json(c.at("params"));
            conn.start_offset_ns = c.contains("start_offset_us") ? us_to_ns(c.at("start_offset_us")) : 0;
            const auto k0 = c.value("initial_k", std::int64_t{0});
            if (k0 < 0 || k0 >= kCounterPeriod) {
                throw Error(ErrorKind::Config, "initial_k must lie in [0, 65535]");
            }
            conn.initial_k = EventCounter::from_index(k0);
            const auto imp = c.value("impairments", json::object());
            conn.impairments.timestamp_jitter_sigma_ns =
                imp.value("timestamp_jitter_sigma_us", 0.0) * 1000.0;
            conn.impairments.clock_drift_ppm = imp.value("clock_drift_ppm", 0.0);
            conn.impairments.drift_random_walk_ppm = imp.value("drift_random_walk_ppm", 0.0);
            conn.impairments.miss_probability = imp.value("miss_probability", 0.0);
            conn.impairments.duration_ns =
                imp.contains("duration_us") ? us_to_ns(imp.at("duration_us")) : default_duration;
            cfg.connections.push_back(conn);
        }
        cfg.validate();
        return cfg;
    });
}

json scenario_to_json(const ScenarioConfig& cfg) {
    json conns = json::array();
    for (const auto& c : cfg.connections) {
        conns.push_back({
            {"params", params_to_json(c.params)},
            {"start_offset_us", static_cast<double>(c.start_offset_ns) / 1000.0},
            {"initial_k", c.initial_k.value},
            {"impairments",
             {{"timestamp_jitter_sigma_us", c.impairments.timestamp_jitter_sigma_ns / 1000.0},
              {"clock_drift_ppm", c.impairments.clock_drift_ppm},
              {"drift_random_walk_ppm", c.impairments.drift_random_walk_ppm},
              {"miss_probability", c.impairments.miss_probability},
              {"duration_us", static_cast<double>(c.impairments.duration_ns) / 1000.0}}},
        });
    }
    return {{"sniff_channel", cfg.sniff_channel}, {"rng_seed", cfg.rng_seed}, {"connections", conns}};
}

json report_to_json(const EstimationReport& r) {
    json j;
    j["access_address"] = format_access_address(r.access_address);
    j["sniff_channel"] = r.sniff_channel;
    j["observation_count"] = r.observation_count;
    j["first_timestamp_ns"] = r.first_timestamp_ns;
    j["last_timestamp_ns"] = r.last_timestamp_ns;
    j["status"] = to_string(r.status);
    j["message"] = r.message;
    if (r.interval) {
        j["interval"] = {
            {"c_int_hat_ns", r.interval->c_int_hat_ns},
            {"raw_gcd_ns", r.interval->raw_gcd_ns},
            {"lattice_misfits", r.interval->lattice_misfits},
            {"hop_counts", r.interval->hop_counts},
        };
    }
    if (r.classification) {
        const auto& c = *r.classification;
        j["classification"] = {
            {"verdict", to_string(c.verdict)},
            {"period_profile", c.period_profile},
            {"fill_ratio", c.fill_ratio},
            {"c_int_ns", c.interval.c_int_hat_ns},
            {"c_int_ms", static_cast<double>(c.interval.c_int_hat_ns) / 1e6},
            {"measured_interval_ns", c.interval.raw_gcd_ns},
        };
    }
    if (r.alignment) {
        const auto& a = *r.alignment;
        json cands = json::array();
        for (auto k : a.candidates) cands.push_back(k.value);
        j["alignment"] = {
            {"k_init", a.k_init.value},           {"correlation_peak", a.correlation_peak},
            {"second_peak", a.second_peak},       {"ambiguous", a.ambiguous},
            {"tied_count", a.tied_count},         {"candidates", cands},
            {"map_rejected", a.map_rejected},
        };
    }
    if (r.channel_map) {
        const auto& m = *r.channel_map;
        json evidence = json::object();
        for (int ch = 0; ch < kNumDataChannels; ++ch) {
            if (m.evidence_count[static_cast<std::size_t>(ch)] > 0) {
                evidence[std::to_string(ch)] = m.evidence_count[static_cast<std::size_t>(ch)];
            }
        }
        json excluded = json::array();
        for (auto ch : m.excluded_channels()) excluded.push_back(ch);
        j["channel_map"] = {
            {"hex", m.assumed_map.to_hex()},
            {"n_ch", m.assumed_map.size()},
            {"proven_excluded", excluded},
            {"evidence_count", evidence},
            {"converged", m.converged},
            {"assumed_map_consistent", m.assumed_map_consistent},
            {"last_new_exclusion_offset", m.last_new_exclusion_offset},
            {"span_events", m.span_events},
            {"feasible_n_ch", {m.min_feasible_n_ch, m.max_feasible_n_ch}},
        };
    }
    return j;
}

EstimationReport report_from_json(const json& j) {
    return parse_guard("estimation report", [&] {
        EstimationReport r;
        r.access_address = parse_access_address(j.at("access_address").get<std::string>());
        r.sniff_channel = j.at("sniff_channel").get<Channel>();
        r.observation_count = j.value("observation_count", std::size_t{0});
        r.first_timestamp_ns = j.at("first_timestamp_ns").get<std::int64_t>();
        r.last_timestamp_ns = j.at("last_timestamp_ns").get<std::int64_t>();
        r.status = status_from_string(j.at("status").get<std::string>());
        r.message = j.value("message", std::string());
        if (j.contains("interval")) {
            const auto& ji = j.at("interval");
            IntervalEstimate est;
            est.c_int_hat_ns = ji.at("c_int_hat_ns").get<std::int64_t>();
            est.raw_gcd_ns = ji.at("raw_gcd_ns").get<double>();
            est.lattice_misfits = ji.value("lattice_misfits", std::size_t{0});
            est.hop_counts = ji.value("hop_counts", std::vector<std::int64_t>{});
            r.interval = est;
        }
        if (j.contains("classification")) {
            const auto& jc = j.at("classification");
            CsaClassification c;
            c.verdict = verdict_from_string(jc.at("verdict").get<std::string>());
            c.period_profile = jc.value("period_profile", std::vector<int>{});
            c.fill_ratio = jc.value("fill_ratio", 0.0);
            if (r.interval) c.interval = *r.interval;
            c.interval.c_int_hat_ns = jc.at("c_int_ns").get<std::int64_t>();
            c.interval.raw_gcd_ns = jc.at("measured_interval_ns").get<double>();
            if (r.interval && r.interval->c_int_hat_ns > c.interval.c_int_hat_ns) {
                const auto scale = r.interval->c_int_hat_ns / c.interval.c_int_hat_ns;
                for (auto& h : c.interval.hop_counts) h *= scale;
            }
            r.classification = c;
        }
        if (j.contains("alignment")) {
            const auto& ja = j.at("alignment");
            CounterAlignment a;
            a.k_init = EventCounter(ja.at("k_init").get<std::uint16_t>());
            a.correlation_peak = ja.value("correlation_peak", 0);
            a.second_peak = ja.value("second_peak", 0);
            a.ambiguous = ja.value("ambiguous", false);
            a.tied_count = ja.value("tied_count", std::size_t{1});
            a.map_rejected = ja.value("map_rejected", std::size_t{0});
            for (const auto& k : ja.value("candidates", json::array())) {
                a.candidates.push_back(EventCounter(k.get<std::uint16_t>()));
            }
            r.alignment = a;
        }
        if (j.contains("channel_map")) {
            const auto& jm = j.at("channel_map");
            MapEstimate m;
            m.assumed_map = ChannelMap::parse(jm.at("hex").get<std::string>());
            for (const auto& ch : jm.value("proven_excluded", json::array())) {
                m.proven_excluded |= std::uint64_t{1} << ch.get<int>();
            }
            const json evidence = jm.value("evidence_count", json::object());
            for (const auto& [key, value] : evidence.items()) {
                m.evidence_count.at(static_cast<std::size_t>(std::stoi(key))) = value.get<std::int64_t>();
            }
            m.converged = jm.value("converged", false);
            m.assumed_map_consistent = jm.value("assumed_map_consistent", true);
            m.last_new_exclusion_offset = jm.value("last_new_exclusion_offset", std::int64_t{-1});
            m.span_events = jm.value("span_events", std::int64_t{0});
            if (jm.contains("feasible_n_ch")) {
                m.min_feasible_n_ch = jm.at("feasible_n_ch").at(0).get<int>();
                m.max_feasible_n_ch = jm.at("feasible_n_ch").at(1).get<int>();
            }
            r.channel_map = m;
        }
        return r;
    });
}

json forecast_to_json(const Forecast& f) {
    json entries = json::array();
    for (const auto& e : f.entries) {
        entries.push_back({{"offset", e.offset},
                           {"k", e.k.value},
                           {"channel", e.channel},
                           {"predicted_time_ns", e.predicted_time_ns},
                           {"time_std_ns", e.time_std_ns}});
    }
    return {
        {"access_address", format_access_address(f.access_address)},
        {"csa_version", to_string(f.csa_version)},
        {"sniff_channel", f.sniff_channel},
        {"counter_known", f.counter_known},
        {"anchor_k", f.anchor_k.value},
        {"anchor_time_ns", f.anchor_time_ns},
        {"interval_ns", f.interval_ns},
        {"entries", entries},
    };
}

Forecast forecast_from_json(const json& j) {
    return parse_guard("forecast", [&] {
        Forecast f;
        f.access_address = parse_access_address(j.at("access_address").get<std::string>());
        f.csa_version = j.at("csa_version").get<std::string>() == "CSA1" ? CsaVersion::Csa1
                                                                        : CsaVersion::Csa2;
        f.sniff_channel = j.at("sniff_channel").get<Channel>();
        f.counter_known = j.at("counter_known").get<bool>();
        f.anchor_k = EventCounter(j.at("anchor_k").get<std::uint16_t>());
        f.anchor_time_ns = j.at("anchor_time_ns").get<std::int64_t>();
        f.interval_ns = j.at("interval_ns").get<double>();
        for (const auto& e : j.at("entries")) {
            f.entries.push_back({e.at("offset").get<std::int64_t>(),
                                 EventCounter(e.at("k").get<std::uint16_t>()),
                                 e.at("channel").get<Channel>(),
                                 e.at("predicted_time_ns").get<std::int64_t>(),
                                 e.value("time_std_ns", 0.0)});
        }
        return f;
    });
}

json eval_to_json(const EvalReport& e) {
    json eccdf = json::array();
    for (const auto& [err, p] : e.eccdf) eccdf.push_back({err, p});
    return {
        {"rmse_ns", e.rmse_ns},
        {"rmse_ms", e.rmse_ns / 1e6},
        {"p50_ns", e.p50_ns},
        {"p95_ns", e.p95_ns},
        {"matched", e.matched},
        {"missed_predictions", e.missed_predictions},
        {"unpredicted", e.unpredicted},
        {"channel_mismatches", e.channel_mismatches},
        {"abs_errors_ns", e.abs_errors_ns},
        {"eccdf", eccdf},
    };
}

EvalReport eval_from_json(const json& j) {
    return parse_guard("evaluation report", [&] {
        EvalReport e;
        e.rmse_ns = j.at("rmse_ns").get<double>();
        e.p50_ns = j.value("p50_ns", 0.0);
        e.p95_ns = j.value("p95_ns", 0.0);
        e.matched = j.value("matched", std::size_t{0});
        e.missed_predictions = j.value("missed_predictions", std::size_t{0});
        e.unpredicted = j.value("unpredicted", std::size_t{0});
        e.channel_mismatches = j.value("channel_mismatches", std::size_t{0});
        e.abs_errors_ns = j.value("abs_errors_ns", std::vector<double>{});
        for (const auto& p : j.value("eccdf", json::array())) {
            e.eccdf.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
        }
        return e;
    });
}

std::string eccdf_csv(const EvalReport& eval) {
    std::ostringstream out;
    out.precision(12);
    out << "abs_error_ns,probability\n";
    for (const auto& [err, p] : eval.eccdf) out << err << ',' << p << '\n';
    return out.str();
}

HopgenRequest hopgen_from_json(const json& j) {
    return config_guard("hopgen request", [&] {
        HopgenRequest req;
        req.params = params_from_json(j.contains("params") ? j.at("params") : j);
        req.start_k = j.value("start_k", std::int64_t{0});
        req.count = j.value("count", std::int64_t{200});
        if (req.count < 0) throw Error(ErrorKind::Config, "count must be non-negative");
        if (req.start_k < 0) throw Error(ErrorKind::Config, "start_k must be non-negative");
        return req;
    });
}

std::string hopgen_csv(const HopgenRequest& req) {
    std::ostringstream out;
    out.precision(12);
    out << "k,time_us,unmapped_channel,mapped_channel,remapped\n";
    for (std::int64_t i = 0; i < req.count; ++i) {
        const auto event = req.start_k + i;
        const auto sel = select_channel(req.params, event);
        const auto k = req.params.csa_version == CsaVersion::Csa2 ? EventCounter::from_index(event).value
                                                                  : event;
        out << k << ',' << static_cast<double>(i * req.params.c_int_ns) / 1000.0 << ','
            << static_cast<int>(sel.unmapped) << ',' << static_cast<int>(sel.mapped) << ','
            << (sel.remapped() ? 1 : 0) << '\n';
    }
    return out.str();
}

} // namespace blehop
