#include "blehop/trace.hpp"

#include "blehop/json_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace blehop {

namespace {

constexpr const char* kCsvHeader = "timestamp_ns,access_address_hex,channel,is_central";

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        cells.push_back(trim(std::string_view(line).substr(start, comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return cells;
}

template <typename T>
T parse_int(const std::string& cell, std::size_t row, std::size_t column, const char* what) {
    T value{};
    const auto* end = cell.data() + cell.size();
    const auto [ptr, ec] = std::from_chars(cell.data(), end, value);
    if (ec != std::errc() || ptr != end || cell.empty()) {
        throw ParseError(row, column, std::string("invalid ") + what + " '" + cell + "'");
    }
    return value;
}

bool parse_flag(const std::string& cell, std::size_t row, std::size_t column) {
    if (cell == "1" || cell == "true" || cell == "TRUE" || cell == "True") return true;
    if (cell == "0" || cell == "false" || cell == "FALSE" || cell == "False") return false;
    throw ParseError(row, column, "invalid is_central flag '" + cell + "'");
}

Channel checked_channel(std::int64_t value, std::size_t row, std::size_t column) {
    if (value < 0 || value >= kNumDataChannels) {
        throw ParseError(row, column, "channel " + std::to_string(value) + " is not a data channel");
    }
    return static_cast<Channel>(value);
}

void append_checked(SniffTrace& trace, const Observation& obs, std::size_t row) {
    if (trace.sniff_channel && *trace.sniff_channel != obs.channel) {
        throw ParseError(row, 0,
                         "channel " + std::to_string(obs.channel) + " differs from sniff channel " +
                             std::to_string(*trace.sniff_channel));
    }
    trace.push(obs);
}

SniffTrace load_csv(std::istream& in) {
    SniffTrace trace;
    std::string line;
    std::size_t row = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++row;
        const auto text = trim(line);
        if (text.empty()) continue;
        if (text.front() == '#') {
            const auto body = trim(std::string_view(text).substr(1));
            const auto eq = body.find('=');
            if (eq != std::string::npos) {
                trace.capture_meta[trim(std::string_view(body).substr(0, eq))] =
                    trim(std::string_view(body).substr(eq + 1));
            }
            continue;
        }
        if (!header_seen) {
            if (text != kCsvHeader) {
                throw ParseError(row, 0, std::string("expected header '") + kCsvHeader + "'");
            }
            header_seen = true;
            continue;
        }
        const auto cells = split_csv(text);
        if (cells.size() != 4) {
            throw ParseError(row, 0, "expected 4 columns, found " + std::to_string(cells.size()));
        }
        Observation obs;
        obs.timestamp_ns = parse_int<std::int64_t>(cells[0], row, 1, "timestamp");
        try {
            obs.access_address = parse_access_address(cells[1]);
        } catch (const Error& e) {
            throw ParseError(row, 2, e.what());
        }
        obs.channel = checked_channel(parse_int<std::int64_t>(cells[2], row, 3, "channel"), row, 3);
        obs.is_central = parse_flag(cells[3], row, 4);
        append_checked(trace, obs, row);
    }
    return trace;
}

SniffTrace load_jsonl(std::istream& in) {
    SniffTrace trace;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(row, e.byte, "malformed JSON");
        }
        if (!j.is_object()) throw ParseError(row, 0, "expected a JSON object");
        if (j.contains("capture_meta")) {
            for (const auto& [key, value] : j.at("capture_meta").items()) {
                trace.capture_meta[key] = value.is_string() ? value.get<std::string>() : value.dump();
            }
            continue;
        }
        try {
            Observation obs;
            obs.timestamp_ns = j.at("timestamp_ns").get<std::int64_t>();
            obs.access_address = parse_access_address(j.at("access_address_hex").get<std::string>());
            obs.channel = checked_channel(j.at("channel").get<std::int64_t>(), row, 0);
            const auto& flag = j.at("is_central");
            obs.is_central = flag.is_boolean() ? flag.get<bool>() : flag.get<int>() != 0;
            append_checked(trace, obs, row);
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception& e) {
            throw ParseError(row, 0, e.what());
        }
    }
    return trace;
}

} // namespace

void SniffTrace::push(const Observation& obs) {
    if (!sniff_channel) sniff_channel = obs.channel;
    observations.push_back(obs);
}

TraceFormat trace_format_from_path(const std::string& path) {
    const auto dot = path.rfind('.');
    const auto ext = dot == std::string::npos ? std::string() : path.substr(dot + 1);
    if (ext == "jsonl" || ext == "ndjson") return TraceFormat::Jsonl;
    return TraceFormat::Csv;
}

SniffTrace load_trace(std::istream& in, TraceFormat format) {
    auto trace = format == TraceFormat::Csv ? load_csv(in) : load_jsonl(in);
    std::stable_sort(trace.observations.begin(), trace.observations.end(),
                     [](const Observation& a, const Observation& b) {
                         return a.timestamp_ns < b.timestamp_ns;
                     });
    return trace;
}

SniffTrace load_trace_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open trace '" + path + "'");
    return load_trace(in, trace_format_from_path(path));
}

void save_trace(std::ostream& out, const SniffTrace& trace, TraceFormat format) {
    if (format == TraceFormat::Csv) {
        for (const auto& [key, value] : trace.capture_meta) out << "# " << key << '=' << value << '\n';
        out << kCsvHeader << '\n';
        for (const auto& obs : trace.observations) {
            out << obs.timestamp_ns << ',' << format_access_address(obs.access_address) << ','
                << static_cast<int>(obs.channel) << ',' << (obs.is_central ? 1 : 0) << '\n';
        }
        return;
    }
    if (!trace.capture_meta.empty()) {
        out << nlohmann::json{{"capture_meta", trace.capture_meta}}.dump() << '\n';
    }
    for (const auto& obs : trace.observations) {
        nlohmann::json j;
        j["timestamp_ns"] = obs.timestamp_ns;
        j["access_address_hex"] = format_access_address(obs.access_address);
        j["channel"] = obs.channel;
        j["is_central"] = obs.is_central;
        out << j.dump() << '\n';
    }
}

void save_trace_file(const std::string& path, const SniffTrace& trace) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write trace '" + path + "'");
    save_trace(out, trace, trace_format_from_path(path));
    if (!out) throw Error(ErrorKind::Io, "write failed for '" + path + "'");
}

std::map<AccessAddress, SniffTrace> split_by_connection(const SniffTrace& trace) {
    std::map<AccessAddress, SniffTrace> parts;
    for (const auto& obs : trace.observations) {
        auto& part = parts[obs.access_address];
        if (!part.sniff_channel) {
            part.sniff_channel = trace.sniff_channel;
            part.capture_meta = trace.capture_meta;
        }
        if (obs.is_central) part.observations.push_back(obs);
    }
    return parts;
}

void save_timelines(std::ostream& out, const std::vector<EventTimeline>& timelines) {
    for (const auto& timeline : timelines) {
        nlohmann::json events = nlohmann::json::array();
        for (const auto& ev : timeline.events) {
            events.push_back({ev.k, ev.channel, ev.true_time_ns});
        }
        nlohmann::json j;
        j["access_address"] = format_access_address(timeline.params.access_address);
        j["params"] = params_to_json(timeline.params);
        j["events"] = std::move(events);
        out << j.dump() << '\n';
    }
}

std::vector<EventTimeline> load_timelines(std::istream& in) {
    std::vector<EventTimeline> timelines;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            EventTimeline timeline;
            timeline.params = params_from_json(j.at("params"));
            for (const auto& ev : j.at("events")) {
                timeline.events.push_back({ev.at(0).get<std::int64_t>(), ev.at(1).get<Channel>(),
                                           ev.at(2).get<std::int64_t>()});
            }
            timelines.push_back(std::move(timeline));
        } catch (const std::exception& e) {
            throw ParseError(row, 0, e.what());
        }
    }
    return timelines;
}

} // namespace blehop
