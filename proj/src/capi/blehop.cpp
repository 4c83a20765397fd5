#include "blehop/blehop.h"

#include "blehop/channel_map.hpp"
#include "blehop/csa.hpp"
#include "blehop/json_io.hpp"
#include "blehop/predict.hpp"
#include "blehop/reconstruct.hpp"
#include "blehop/simulator.hpp"
#include "blehop/trace.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using nlohmann::json;

struct blehop_trace {
    blehop::SniffTrace trace;
};

struct blehop_simulation {
    blehop::SimulationResult result;
    blehop_trace trace_view;
};

struct blehop_report_set {
    std::vector<blehop::EstimationReport> reports;
};

struct blehop_prediction {
    blehop::PredictionOutcome outcome;
};

namespace {

thread_local std::string g_last_error;

blehop_status status_for(blehop::ErrorKind kind) {
    switch (kind) {
    case blehop::ErrorKind::InvalidArgument: return BLEHOP_ERROR_INVALID_ARGUMENT;
    case blehop::ErrorKind::Config: return BLEHOP_ERROR_CONFIG;
    case blehop::ErrorKind::Parse: return BLEHOP_ERROR_PARSE;
    case blehop::ErrorKind::InsufficientData: return BLEHOP_ERROR_INSUFFICIENT_DATA;
    case blehop::ErrorKind::Estimation: return BLEHOP_ERROR_ESTIMATION;
    case blehop::ErrorKind::Ambiguous: return BLEHOP_ERROR_AMBIGUOUS;
    case blehop::ErrorKind::Io: return BLEHOP_ERROR_IO;
    }
    return BLEHOP_ERROR_INTERNAL;
}

blehop_status fail(blehop_status status, const std::string& message) {
    g_last_error = message;
    return status;
}

template <typename F>
blehop_status guarded(F&& body) {
    try {
        body();
        g_last_error.clear();
        return BLEHOP_OK;
    } catch (const blehop::Error& e) {
        return fail(status_for(e.kind()), e.what());
    } catch (const json::parse_error& e) {
        return fail(BLEHOP_ERROR_PARSE, e.what());
    } catch (const json::exception& e) {
        return fail(BLEHOP_ERROR_CONFIG, e.what());
    } catch (const std::bad_alloc&) {
        return fail(BLEHOP_ERROR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(BLEHOP_ERROR_INTERNAL, e.what());
    } catch (...) {
        return fail(BLEHOP_ERROR_INTERNAL, "unknown error");
    }
}

void require(const void* p, const char* name) {
    if (p == nullptr) {
        throw blehop::Error(blehop::ErrorKind::InvalidArgument, std::string(name) + " is NULL");
    }
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out == nullptr) throw std::bad_alloc();
    std::memcpy(out, s.data(), s.size() + 1);
    return out;
}

blehop::TraceFormat to_format(blehop_format format) {
    switch (format) {
    case BLEHOP_FORMAT_CSV: return blehop::TraceFormat::Csv;
    case BLEHOP_FORMAT_JSONL: return blehop::TraceFormat::Jsonl;
    }
    throw blehop::Error(blehop::ErrorKind::InvalidArgument, "unknown trace format");
}

json parse_document(const char* text, const char* what) {
    require(text, what);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw blehop::Error(blehop::ErrorKind::Parse, std::string(what) + ": " + e.what());
    }
}

json parse_options(const char* text) {
    if (text == nullptr || *text == '\0') return json::object();
    json j = parse_document(text, "options");
    if (!j.is_object()) throw blehop::Error(blehop::ErrorKind::Config, "options must be an object");
    return j;
}

blehop::ReconstructOptions reconstruct_options_from(const json& j) {
    blehop::ReconstructOptions opt;
    if (j.contains("lattice_tolerance_us")) {
        opt.lattice_tolerance_ns =
            static_cast<std::int64_t>(j.at("lattice_tolerance_us").get<double>() * 1000.0);
    }
    if (j.contains("csa1_fill_threshold")) {
        opt.csa1_fill_threshold = j.at("csa1_fill_threshold").get<double>();
    }
    if (j.contains("alignment_slack_sigma")) {
        opt.alignment_slack_sigma = j.at("alignment_slack_sigma").get<double>();
    }
    if (opt.lattice_tolerance_ns <= 0) {
        throw blehop::Error(blehop::ErrorKind::Config, "lattice_tolerance_us must be positive");
    }
    if (!(opt.csa1_fill_threshold > 0.0 && opt.csa1_fill_threshold <= 1.0)) {
        throw blehop::Error(blehop::ErrorKind::Config, "csa1_fill_threshold must be in (0, 1]");
    }
    if (!(opt.alignment_slack_sigma >= 0.0)) {
        throw blehop::Error(blehop::ErrorKind::Config, "alignment_slack_sigma must be non-negative");
    }
    return opt;
}

blehop_status report_status(blehop::ReportStatus s) {
    switch (s) {
    case blehop::ReportStatus::Ok: return BLEHOP_OK;
    case blehop::ReportStatus::InsufficientData: return BLEHOP_ERROR_INSUFFICIENT_DATA;
    case blehop::ReportStatus::Ambiguous: return BLEHOP_ERROR_AMBIGUOUS;
    case blehop::ReportStatus::Failed: return BLEHOP_ERROR_ESTIMATION;
    }
    return BLEHOP_ERROR_INTERNAL;
}

const blehop::EstimationReport& report_at(const blehop_report_set* reports, size_t index) {
    require(reports, "reports");
    if (index >= reports->reports.size()) {
        throw blehop::Error(blehop::ErrorKind::InvalidArgument, "report index out of range");
    }
    return reports->reports[index];
}

} // namespace

extern "C" {

const char* blehop_version(void) { return "0.1.0"; }

const char* blehop_last_error(void) { return g_last_error.c_str(); }

const char* blehop_status_name(blehop_status status) {
    switch (status) {
    case BLEHOP_OK: return "ok";
    case BLEHOP_ERROR_INVALID_ARGUMENT: return "invalid_argument";
    case BLEHOP_ERROR_CONFIG: return "config_error";
    case BLEHOP_ERROR_PARSE: return "parse_error";
    case BLEHOP_ERROR_ESTIMATION: return "estimation_error";
    case BLEHOP_ERROR_AMBIGUOUS: return "ambiguous";
    case BLEHOP_ERROR_IO: return "io_error";
    case BLEHOP_ERROR_INSUFFICIENT_DATA: return "insufficient_data";
    case BLEHOP_ERROR_INTERNAL: return "internal_error";
    }
    return "unknown";
}

void blehop_string_free(char* str) { std::free(str); }

uint16_t blehop_channel_identifier(uint32_t access_address) {
    return blehop::channel_identifier(blehop::AccessAddress{access_address}).value;
}

uint16_t blehop_prn_e(uint16_t counter, uint16_t channel_identifier) {
    return blehop::prn_e(blehop::EventCounter(counter), blehop::ChannelIdentifier{channel_identifier});
}

blehop_status blehop_csa2_channel(uint16_t counter, uint16_t channel_identifier,
                                  uint64_t channel_map, uint8_t* out_channel) {
    return guarded([&] {
        require(out_channel, "out_channel");
        const auto map = blehop::ChannelMap::from_mask(channel_map);
        *out_channel = blehop::remap_csa2(blehop::EventCounter(counter),
                                          blehop::ChannelIdentifier{channel_identifier}, map);
    });
}

blehop_status blehop_csa1_channel(uint8_t initial_channel, int hop_increment,
                                  uint64_t channel_map, int64_t event, uint8_t* out_channel) {
    return guarded([&] {
        require(out_channel, "out_channel");
        blehop::ConnectionParams params;
        params.csa_version = blehop::CsaVersion::Csa1;
        params.channel_map = blehop::ChannelMap::from_mask(channel_map);
        params.hop_increment = hop_increment;
        params.initial_channel = initial_channel;
        params.validate();
        if (event < 0) throw blehop::Error(blehop::ErrorKind::InvalidArgument, "event must be >= 0");
        *out_channel = blehop::channel_for_event(params, event);
    });
}

blehop_status blehop_channel_map_parse(const char* text, uint64_t* out_mask) {
    return guarded([&] {
        require(text, "text");
        require(out_mask, "out_mask");
        *out_mask = blehop::ChannelMap::parse(text).mask();
    });
}

blehop_status blehop_channel_map_format(uint64_t mask, char** out_text) {
    return guarded([&] {
        require(out_text, "out_text");
        *out_text = dup_string(blehop::ChannelMap::from_mask(mask).to_hex());
    });
}

blehop_status blehop_reconstruction_budget(int n_ch, int64_t* out_events) {
    return guarded([&] {
        require(out_events, "out_events");
        *out_events = blehop::expected_reconstruction_budget(n_ch);
    });
}

blehop_status blehop_trace_parse(const char* data, size_t size, blehop_format format,
                                 blehop_trace** out_trace) {
    return guarded([&] {
        require(data, "data");
        require(out_trace, "out_trace");
        std::istringstream in(std::string(data, size));
        auto handle = std::make_unique<blehop_trace>();
        handle->trace = blehop::load_trace(in, to_format(format));
        *out_trace = handle.release();
    });
}

blehop_status blehop_trace_load_file(const char* path, blehop_trace** out_trace) {
    return guarded([&] {
        require(path, "path");
        require(out_trace, "out_trace");
        auto handle = std::make_unique<blehop_trace>();
        handle->trace = blehop::load_trace_file(path);
        *out_trace = handle.release();
    });
}

blehop_status blehop_trace_save_file(const blehop_trace* trace, const char* path) {
    return guarded([&] {
        require(trace, "trace");
        require(path, "path");
        blehop::save_trace_file(path, trace->trace);
    });
}

blehop_status blehop_trace_serialize(const blehop_trace* trace, blehop_format format,
                                     char** out_text) {
    return guarded([&] {
        require(trace, "trace");
        require(out_text, "out_text");
        std::ostringstream out;
        blehop::save_trace(out, trace->trace, to_format(format));
        *out_text = dup_string(out.str());
    });
}

size_t blehop_trace_size(const blehop_trace* trace) { return trace ? trace->trace.size() : 0; }

size_t blehop_trace_connection_count(const blehop_trace* trace) {
    if (trace == nullptr) return 0;
    std::set<std::uint32_t> seen;
    for (const auto& obs : trace->trace.observations) seen.insert(obs.access_address.value);
    return seen.size();
}

void blehop_trace_free(blehop_trace* trace) { delete trace; }

blehop_status blehop_simulate(const char* scenario_json, blehop_simulation** out_sim) {
    return guarded([&] {
        require(out_sim, "out_sim");
        const json doc = parse_document(scenario_json, "scenario");
        const auto config = blehop::scenario_from_json(doc);
        auto handle = std::make_unique<blehop_simulation>();
        handle->result = blehop::simulate(config);
        handle->trace_view.trace = handle->result.trace;
        *out_sim = handle.release();
    });
}

const blehop_trace* blehop_simulation_trace(const blehop_simulation* sim) {
    return sim ? &sim->trace_view : nullptr;
}

size_t blehop_simulation_connection_count(const blehop_simulation* sim) {
    return sim ? sim->result.timelines.size() : 0;
}

blehop_status blehop_simulation_timelines_jsonl(const blehop_simulation* sim, char** out_text) {
    return guarded([&] {
        require(sim, "sim");
        require(out_text, "out_text");
        std::ostringstream out;
        blehop::save_timelines(out, sim->result.timelines);
        *out_text = dup_string(out.str());
    });
}

void blehop_simulation_free(blehop_simulation* sim) { delete sim; }

blehop_status blehop_reconstruct(const blehop_trace* trace, const char* options_json,
                                 blehop_report_set** out_reports) {
    return guarded([&] {
        require(trace, "trace");
        require(out_reports, "out_reports");
        const json opts = parse_options(options_json);
        const auto options = reconstruct_options_from(opts);

        const blehop::SniffTrace* source = &trace->trace;
        blehop::SniffTrace limited;
        if (opts.contains("train_duration_us")) {
            const double train_us = opts.at("train_duration_us").get<double>();
            if (!(train_us > 0.0)) {
                throw blehop::Error(blehop::ErrorKind::Config, "train_duration_us must be positive");
            }
            const auto end_ns = static_cast<std::int64_t>(train_us * 1000.0);
            limited.sniff_channel = trace->trace.sniff_channel;
            limited.capture_meta = trace->trace.capture_meta;
            for (const auto& obs : trace->trace.observations) {
                if (obs.timestamp_ns <= end_ns) limited.push(obs);
            }
            source = &limited;
        }

        auto handle = std::make_unique<blehop_report_set>();
        for (auto& [aa, report] : blehop::reconstruct_all(*source, options)) {
            handle->reports.push_back(std::move(report));
        }
        *out_reports = handle.release();
    });
}

size_t blehop_report_set_size(const blehop_report_set* reports) {
    return reports ? reports->reports.size() : 0;
}

uint32_t blehop_report_set_access_address(const blehop_report_set* reports, size_t index) {
    if (reports == nullptr || index >= reports->reports.size()) return 0;
    return reports->reports[index].access_address.value;
}

blehop_status blehop_report_set_status(const blehop_report_set* reports, size_t index) {
    if (reports == nullptr || index >= reports->reports.size()) {
        return fail(BLEHOP_ERROR_INVALID_ARGUMENT, "report index out of range");
    }
    return report_status(reports->reports[index].status);
}

blehop_status blehop_report_set_json(const blehop_report_set* reports, size_t index,
                                     char** out_json) {
    return guarded([&] {
        require(out_json, "out_json");
        *out_json = dup_string(blehop::report_to_json(report_at(reports, index)).dump(2));
    });
}

void blehop_report_set_free(blehop_report_set* reports) { delete reports; }

blehop_status blehop_predict(const char* report_json, const blehop_trace* trace,
                             const char* options_json, blehop_prediction** out_prediction) {
    return guarded([&] {
        require(trace, "trace");
        require(out_prediction, "out_prediction");
        const auto report = blehop::report_from_json(parse_document(report_json, "report"));
        const json opts = parse_options(options_json);

        blehop::PredictOptions options;
        options.reconstruct = reconstruct_options_from(opts);
        if (opts.contains("horizon")) options.horizon = opts.at("horizon").get<std::int64_t>();
        if (opts.contains("channel") && !opts.at("channel").is_null()) {
            const int ch = opts.at("channel").get<int>();
            if (ch < 0 || ch >= blehop::kNumDataChannels) {
                throw blehop::Error(blehop::ErrorKind::Config, "channel must be in [0, 36]");
            }
            options.channel_filter = static_cast<blehop::Channel>(ch);
        }
        if (opts.contains("measurement_noise_us")) {
            const double s = opts.at("measurement_noise_us").get<double>() * 1000.0;
            if (!(s > 0.0)) throw blehop::Error(blehop::ErrorKind::Config, "measurement_noise_us must be positive");
            options.kalman.measurement_noise_var = s * s;
        }
        if (opts.contains("gate_sigma")) {
            options.kalman.gate_sigma = opts.at("gate_sigma").get<double>();
            if (!(options.kalman.gate_sigma > 0.0)) {
                throw blehop::Error(blehop::ErrorKind::Config, "gate_sigma must be positive");
            }
        }
        if (opts.contains("interval_process_noise")) {
            options.kalman.interval_process_noise = opts.at("interval_process_noise").get<double>();
            if (options.kalman.interval_process_noise < 0.0) {
                throw blehop::Error(blehop::ErrorKind::Config, "interval_process_noise must be >= 0");
            }
        }

        const auto connections = blehop::split_by_connection(trace->trace);
        const auto it = connections.find(report.access_address);
        if (it == connections.end()) {
            throw blehop::Error(blehop::ErrorKind::InvalidArgument,
                                "trace has no observations for " +
                                    blehop::format_access_address(report.access_address));
        }
        auto handle = std::make_unique<blehop_prediction>();
        handle->outcome = blehop::predict_connection(report, it->second, options);
        *out_prediction = handle.release();
    });
}

blehop_status blehop_prediction_forecast_json(const blehop_prediction* prediction, char** out_json) {
    return guarded([&] {
        require(prediction, "prediction");
        require(out_json, "out_json");
        *out_json = dup_string(blehop::forecast_to_json(prediction->outcome.forecast).dump(2));
    });
}

blehop_status blehop_prediction_eval_json(const blehop_prediction* prediction, char** out_json) {
    return guarded([&] {
        require(prediction, "prediction");
        require(out_json, "out_json");
        if (!prediction->outcome.eval) {
            throw blehop::Error(blehop::ErrorKind::Estimation, prediction->outcome.eval_error.empty()
                                                                   ? "no held-out observations"
                                                                   : prediction->outcome.eval_error);
        }
        *out_json = dup_string(blehop::eval_to_json(*prediction->outcome.eval).dump(2));
    });
}

blehop_status blehop_prediction_eccdf_csv(const blehop_prediction* prediction, char** out_csv) {
    return guarded([&] {
        require(prediction, "prediction");
        require(out_csv, "out_csv");
        if (!prediction->outcome.eval) {
            throw blehop::Error(blehop::ErrorKind::Estimation, "no evaluation available");
        }
        *out_csv = dup_string(blehop::eccdf_csv(*prediction->outcome.eval));
    });
}

void blehop_prediction_free(blehop_prediction* prediction) { delete prediction; }

blehop_status blehop_evaluate_trace(const char* forecast_json, const blehop_trace* trace,
                                    char** out_eval_json) {
    return guarded([&] {
        require(trace, "trace");
        require(out_eval_json, "out_eval_json");
        const auto forecast = blehop::forecast_from_json(parse_document(forecast_json, "forecast"));
        const auto connections = blehop::split_by_connection(trace->trace);
        const auto it = connections.find(forecast.access_address);
        if (it == connections.end()) {
            throw blehop::Error(blehop::ErrorKind::Estimation,
                                "trace has no observations for " +
                                    blehop::format_access_address(forecast.access_address));
        }
        const auto eval = blehop::evaluate_against_trace(forecast, it->second);
        *out_eval_json = dup_string(blehop::eval_to_json(eval).dump(2));
    });
}

blehop_status blehop_evaluate_timelines(const char* forecast_json, const char* timelines_jsonl,
                                        char** out_eval_json) {
    return guarded([&] {
        require(timelines_jsonl, "timelines_jsonl");
        require(out_eval_json, "out_eval_json");
        const auto forecast = blehop::forecast_from_json(parse_document(forecast_json, "forecast"));
        std::istringstream in(timelines_jsonl);
        const auto timelines = blehop::load_timelines(in);
        for (const auto& timeline : timelines) {
            if (timeline.params.access_address == forecast.access_address) {
                const auto eval = blehop::evaluate_against_timeline(forecast, timeline);
                *out_eval_json = dup_string(blehop::eval_to_json(eval).dump(2));
                return;
            }
        }
        throw blehop::Error(blehop::ErrorKind::Estimation,
                            "no timeline for " + blehop::format_access_address(forecast.access_address));
    });
}

blehop_status blehop_eval_eccdf_csv(const char* eval_json, char** out_csv) {
    return guarded([&] {
        require(out_csv, "out_csv");
        const auto eval = blehop::eval_from_json(parse_document(eval_json, "evaluation"));
        *out_csv = dup_string(blehop::eccdf_csv(eval));
    });
}

blehop_status blehop_hopgen(const char* request_json, char** out_csv) {
    return guarded([&] {
        require(out_csv, "out_csv");
        const auto request = blehop::hopgen_from_json(parse_document(request_json, "request"));
        *out_csv = dup_string(blehop::hopgen_csv(request));
    });
}

} // extern "C"
