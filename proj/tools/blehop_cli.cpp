#include "blehop/blehop.h"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliFailure {
    blehop_status status;
    std::string message;
};

struct OwnedString {
    char* ptr = nullptr;
    ~OwnedString() { blehop_string_free(ptr); }
    std::string str() const { return ptr ? std::string(ptr) : std::string(); }
};

void check(blehop_status status, const std::string& context) {
    if (status != BLEHOP_OK) throw CliFailure{status, context + ": " + blehop_last_error()};
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CliFailure{BLEHOP_ERROR_IO, "cannot open " + path};
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const std::string& path) {
    const std::string text = read_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw CliFailure{BLEHOP_ERROR_PARSE, path + ": " + e.what()};
    }
}

// Writes to a sibling temporary and renames it over the target.
void write_file(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CliFailure{BLEHOP_ERROR_IO, "cannot write " + tmp.string()};
        out << content;
        if (!out.flush()) throw CliFailure{BLEHOP_ERROR_IO, "write failed for " + tmp.string()};
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw CliFailure{BLEHOP_ERROR_IO, "cannot move " + tmp.string() + ": " + ec.message()};
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw CliFailure{BLEHOP_ERROR_IO, "cannot create directory " + dir};
}

std::string aa_tag(uint32_t aa) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08X", aa);
    return buf;
}

uint32_t aa_from_json(const json& j) {
    const std::string s = j.at("access_address").get<std::string>();
    return static_cast<uint32_t>(std::stoul(s, nullptr, 16));
}

class Manifest {
public:
    explicit Manifest(std::string subcommand) {
        doc_["subcommand"] = std::move(subcommand);
        doc_["tool_version"] = blehop_version();
        doc_["inputs"] = json::object();
        doc_["outputs"] = json::array();
        doc_["overrides"] = json::object();
        doc_["rng_seed"] = nullptr;
    }

    void input(const std::string& key, const std::string& path) { doc_["inputs"][key] = path; }
    void output(const fs::path& path) { doc_["outputs"].push_back(path.filename().string()); }
    void override_value(const std::string& key, const json& value) { doc_["overrides"][key] = value; }
    void seed(std::uint64_t value) { doc_["rng_seed"] = value; }
    void result(const std::string& key, const json& value) { doc_["results"][key] = value; }

    void write(const std::string& dir) const {
        json out = doc_;
        out["output_dir"] = dir;
        write_file(fs::path(dir) / "manifest.json", out.dump(2) + "\n");
    }

private:
    json doc_;
};

struct SimulateArgs {
    std::string scenario;
    std::string out;
    std::optional<std::uint64_t> seed;
};

int cmd_simulate(const SimulateArgs& args) {
    Manifest manifest("simulate");
    manifest.input("scenario", args.scenario);
    json scenario = read_json(args.scenario);
    if (!scenario.is_object()) throw CliFailure{BLEHOP_ERROR_CONFIG, "scenario must be a JSON object"};
    if (args.seed) {
        scenario["rng_seed"] = *args.seed;
        manifest.override_value("rng_seed", *args.seed);
    }
    manifest.seed(scenario.value("rng_seed", std::uint64_t{0}));

    blehop_simulation* sim = nullptr;
    check(blehop_simulate(scenario.dump().c_str(), &sim), "simulate");
    std::unique_ptr<blehop_simulation, decltype(&blehop_simulation_free)> guard(sim, blehop_simulation_free);

    ensure_dir(args.out);
    const fs::path trace_path = fs::path(args.out) / "trace.csv";
    OwnedString trace_text;
    check(blehop_trace_serialize(blehop_simulation_trace(sim), BLEHOP_FORMAT_CSV, &trace_text.ptr),
          "serialize trace");
    write_file(trace_path, trace_text.str());
    manifest.output(trace_path);

    const fs::path timelines_path = fs::path(args.out) / "timelines.jsonl";
    OwnedString timelines;
    check(blehop_simulation_timelines_jsonl(sim, &timelines.ptr), "serialize timelines");
    write_file(timelines_path, timelines.str());
    manifest.output(timelines_path);

    manifest.result("observations", blehop_trace_size(blehop_simulation_trace(sim)));
    manifest.result("connections", blehop_simulation_connection_count(sim));
    manifest.write(args.out);
    std::cout << "simulated " << blehop_simulation_connection_count(sim) << " connection(s), "
              << blehop_trace_size(blehop_simulation_trace(sim)) << " observation(s) -> " << args.out
              << "\n";
    return 0;
}

struct ReconstructArgs {
    std::string trace;
    std::string out;
    std::optional<double> train_s;
    std::optional<double> lattice_tolerance_us;
};

int cmd_reconstruct(const ReconstructArgs& args) {
    Manifest manifest("reconstruct");
    manifest.input("trace", args.trace);

    json options = json::object();
    if (args.train_s) {
        options["train_duration_us"] = *args.train_s * 1e6;
        manifest.override_value("train_s", *args.train_s);
    }
    if (args.lattice_tolerance_us) {
        options["lattice_tolerance_us"] = *args.lattice_tolerance_us;
        manifest.override_value("lattice_tolerance_us", *args.lattice_tolerance_us);
    }

    blehop_trace* trace = nullptr;
    check(blehop_trace_load_file(args.trace.c_str(), &trace), "load " + args.trace);
    std::unique_ptr<blehop_trace, decltype(&blehop_trace_free)> trace_guard(trace, blehop_trace_free);

    blehop_report_set* reports = nullptr;
    check(blehop_reconstruct(trace, options.dump().c_str(), &reports), "reconstruct");
    std::unique_ptr<blehop_report_set, decltype(&blehop_report_set_free)> guard(reports,
                                                                                blehop_report_set_free);

    ensure_dir(args.out);
    json all = json::array();
    json summary = json::object();
    blehop_status first_failure = BLEHOP_OK;
    for (size_t i = 0; i < blehop_report_set_size(reports); ++i) {
        const std::string tag = aa_tag(blehop_report_set_access_address(reports, i));
        OwnedString text;
        check(blehop_report_set_json(reports, i, &text.ptr), "report " + tag);
        const fs::path path = fs::path(args.out) / ("report_" + tag + ".json");
        write_file(path, text.str() + "\n");
        manifest.output(path);
        json report = json::parse(text.str());
        const blehop_status st = blehop_report_set_status(reports, i);
        summary["0x" + tag] = report.at("status");
        std::cout << "0x" << tag << ": " << report.at("status").get<std::string>();
        if (st != BLEHOP_OK) {
            std::cout << " (" << report.value("message", "") << ")";
            if (first_failure == BLEHOP_OK) first_failure = st;
        }
        std::cout << "\n";
        all.push_back(std::move(report));
    }
    const fs::path combined = fs::path(args.out) / "reports.json";
    write_file(combined, all.dump(2) + "\n");
    manifest.output(combined);
    manifest.result("status", summary);
    manifest.write(args.out);
    return static_cast<int>(first_failure);
}

struct PredictArgs {
    std::string report;
    std::string trace;
    std::string out;
    std::int64_t horizon = -1;
    std::optional<int> channel;
    std::optional<double> noise_us;
};

int cmd_predict(const PredictArgs& args) {
    Manifest manifest("predict");
    manifest.input("report", args.report);
    manifest.input("trace", args.trace);

    json options = json::object();
    options["horizon"] = args.horizon;
    manifest.override_value("horizon", args.horizon);
    if (args.channel) {
        options["channel"] = *args.channel;
        manifest.override_value("channel", *args.channel);
    }
    if (args.noise_us) {
        options["measurement_noise_us"] = *args.noise_us;
        manifest.override_value("measurement_noise_us", *args.noise_us);
    }

    json doc = read_json(args.report);
    std::vector<json> reports;
    if (doc.is_array()) {
        for (auto& r : doc) reports.push_back(r);
    } else {
        reports.push_back(doc);
    }

    blehop_trace* trace = nullptr;
    check(blehop_trace_load_file(args.trace.c_str(), &trace), "load " + args.trace);
    std::unique_ptr<blehop_trace, decltype(&blehop_trace_free)> trace_guard(trace, blehop_trace_free);

    ensure_dir(args.out);
    blehop_status first_failure = BLEHOP_OK;
    json summary = json::object();
    for (const auto& report : reports) {
        std::string tag;
        try {
            tag = aa_tag(aa_from_json(report));
        } catch (const std::exception& e) {
            throw CliFailure{BLEHOP_ERROR_PARSE, args.report + ": missing access_address"};
        }
        const auto note_failure = [&](blehop_status st, const std::string& what) {
            std::cerr << "0x" << tag << ": " << what << ": " << blehop_last_error() << "\n";
            summary["0x" + tag] = {{"status", blehop_status_name(st)}, {"message", blehop_last_error()}};
            if (first_failure == BLEHOP_OK) first_failure = st;
        };

        blehop_prediction* prediction = nullptr;
        const blehop_status st =
            blehop_predict(report.dump().c_str(), trace, options.dump().c_str(), &prediction);
        if (st != BLEHOP_OK) {
            note_failure(st, "predict");
            continue;
        }
        std::unique_ptr<blehop_prediction, decltype(&blehop_prediction_free)> guard(prediction,
                                                                                    blehop_prediction_free);
        OwnedString forecast;
        check(blehop_prediction_forecast_json(prediction, &forecast.ptr), "forecast " + tag);
        const fs::path forecast_path = fs::path(args.out) / ("forecast_" + tag + ".json");
        write_file(forecast_path, forecast.str() + "\n");
        manifest.output(forecast_path);

        OwnedString eval;
        const blehop_status est = blehop_prediction_eval_json(prediction, &eval.ptr);
        if (est != BLEHOP_OK) {
            note_failure(est, "evaluation");
            continue;
        }
        const fs::path eval_path = fs::path(args.out) / ("eval_" + tag + ".json");
        write_file(eval_path, eval.str() + "\n");
        manifest.output(eval_path);

        OwnedString eccdf;
        check(blehop_prediction_eccdf_csv(prediction, &eccdf.ptr), "eccdf " + tag);
        const fs::path eccdf_path = fs::path(args.out) / ("eccdf_" + tag + ".csv");
        write_file(eccdf_path, eccdf.str());
        manifest.output(eccdf_path);

        const json e = json::parse(eval.str());
        summary["0x" + tag] = {{"status", "ok"}, {"rmse_ns", e.at("rmse_ns")}, {"matched", e.at("matched")}};
        std::cout << "0x" << tag << ": rmse " << e.at("rmse_ns").get<double>() / 1e6 << " ms over "
                  << e.at("matched").get<std::size_t>() << " observation(s)\n";
    }
    manifest.result("connections", summary);
    manifest.write(args.out);
    return static_cast<int>(first_failure);
}

struct EvaluateArgs {
    std::string forecast;
    std::string trace;
    std::string timelines;
    std::string out;
};

int cmd_evaluate(const EvaluateArgs& args) {
    Manifest manifest("evaluate");
    manifest.input("forecast", args.forecast);
    const std::string forecast = read_file(args.forecast);

    OwnedString eval;
    if (!args.timelines.empty()) {
        manifest.input("timelines", args.timelines);
        const std::string timelines = read_file(args.timelines);
        check(blehop_evaluate_timelines(forecast.c_str(), timelines.c_str(), &eval.ptr), "evaluate");
    } else {
        manifest.input("trace", args.trace);
        blehop_trace* trace = nullptr;
        check(blehop_trace_load_file(args.trace.c_str(), &trace), "load " + args.trace);
        std::unique_ptr<blehop_trace, decltype(&blehop_trace_free)> guard(trace, blehop_trace_free);
        check(blehop_evaluate_trace(forecast.c_str(), trace, &eval.ptr), "evaluate");
    }

    ensure_dir(args.out);
    const fs::path eval_path = fs::path(args.out) / "eval.json";
    write_file(eval_path, eval.str() + "\n");
    manifest.output(eval_path);

    OwnedString eccdf;
    check(blehop_eval_eccdf_csv(eval.ptr, &eccdf.ptr), "eccdf");
    const fs::path eccdf_path = fs::path(args.out) / "eccdf.csv";
    write_file(eccdf_path, eccdf.str());
    manifest.output(eccdf_path);

    const json e = json::parse(eval.str());
    manifest.result("rmse_ns", e.at("rmse_ns"));
    manifest.write(args.out);
    std::cout << "rmse " << e.at("rmse_ns").get<double>() / 1e6 << " ms over "
              << e.at("matched").get<std::size_t>() << " event(s)\n";
    return 0;
}

struct HopgenArgs {
    std::string params;
    std::string out;
    std::optional<std::int64_t> count;
    std::optional<std::int64_t> start_k;
};

int cmd_hopgen(const HopgenArgs& args) {
    Manifest manifest("hopgen");
    manifest.input("params", args.params);
    json request = read_json(args.params);
    if (!request.is_object()) throw CliFailure{BLEHOP_ERROR_CONFIG, "params must be a JSON object"};
    if (!request.contains("params")) request = json{{"params", request}};
    if (args.count) {
        request["count"] = *args.count;
        manifest.override_value("count", *args.count);
    }
    if (args.start_k) {
        request["start_k"] = *args.start_k;
        manifest.override_value("start_k", *args.start_k);
    }

    OwnedString csv;
    check(blehop_hopgen(request.dump().c_str(), &csv.ptr), "hopgen");
    ensure_dir(args.out);
    const fs::path path = fs::path(args.out) / "hops.csv";
    write_file(path, csv.str());
    manifest.output(path);
    manifest.write(args.out);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"BLE channel selection, sniffer simulation and access prediction"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(blehop_version()));

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Simulate a sniffer trace from a scenario file");
    simulate->add_option("--scenario", sim.scenario, "Scenario JSON")->required();
    simulate->add_option("--out", sim.out, "Output directory")->required();
    simulate->add_option("--seed", sim.seed, "Override the scenario rng_seed");

    ReconstructArgs rec;
    auto* reconstruct = app.add_subcommand("reconstruct", "Estimate connection parameters from a trace");
    reconstruct->add_option("--trace", rec.trace, "Trace CSV or JSONL")->required();
    reconstruct->add_option("--out", rec.out, "Output directory")->required();
    reconstruct->add_option("--train-s", rec.train_s, "Use only the first N seconds of the capture");
    reconstruct->add_option("--lattice-tolerance-us", rec.lattice_tolerance_us,
                            "Allowed deviation from the 1.25 ms lattice");

    PredictArgs pred;
    auto* predict = app.add_subcommand("predict", "Forecast channel accesses and score them on held-out data");
    predict->add_option("--report", pred.report, "Report JSON (single or reports.json)")->required();
    predict->add_option("--trace", pred.trace, "Trace the report was built from")->required();
    predict->add_option("--out", pred.out, "Output directory")->required();
    predict->add_option("--horizon", pred.horizon, "Events to forecast; -1 runs to the end of the trace");
    predict->add_option("--channel", pred.channel, "Only forecast events on this channel")
        ->check(CLI::Range(0, 36));
    predict->add_option("--measurement-noise-us", pred.noise_us, "Timestamp noise assumed by the filter");

    EvaluateArgs ev;
    auto* evaluate = app.add_subcommand("evaluate", "Score a forecast against a trace or ground truth");
    evaluate->add_option("--forecast", ev.forecast, "Forecast JSON")->required();
    auto* trace_opt = evaluate->add_option("--trace", ev.trace, "Held-out trace");
    auto* timeline_opt =
        evaluate->add_option("--timelines", ev.timelines, "Ground-truth timelines JSONL");
    trace_opt->excludes(timeline_opt);
    evaluate->add_option("--out", ev.out, "Output directory")->required();

    HopgenArgs hop;
    auto* hopgen = app.add_subcommand("hopgen", "Dump the raw hop sequence for a parameter file");
    hopgen->add_option("--params", hop.params, "Connection parameters JSON")->required();
    hopgen->add_option("--out", hop.out, "Output directory")->required();
    hopgen->add_option("--count", hop.count, "Number of events");
    hopgen->add_option("--start-k", hop.start_k, "First event counter");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(BLEHOP_ERROR_INVALID_ARGUMENT);
    }

    try {
        if (*simulate) return cmd_simulate(sim);
        if (*reconstruct) return cmd_reconstruct(rec);
        if (*predict) return cmd_predict(pred);
        if (*evaluate) {
            if (ev.trace.empty() && ev.timelines.empty()) {
                throw CliFailure{BLEHOP_ERROR_INVALID_ARGUMENT, "evaluate needs --trace or --timelines"};
            }
            return cmd_evaluate(ev);
        }
        if (*hopgen) return cmd_hopgen(hop);
    } catch (const CliFailure& f) {
        std::cerr << "error: " << f.message << "\n";
        return static_cast<int>(f.status);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(BLEHOP_ERROR_INTERNAL);
    }
    return 0;
}
