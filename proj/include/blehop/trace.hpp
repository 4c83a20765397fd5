#pragma once

#include "blehop/csa.hpp"
#include "blehop/types.hpp"

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace blehop {

struct Observation {
    std::int64_t timestamp_ns = 0;
    AccessAddress access_address;
    Channel channel = 0;
    bool is_central = true;

    friend bool operator==(const Observation&, const Observation&) = default;
};

/// Time-ordered packets captured on a single channel.
struct SniffTrace {
    std::optional<Channel> sniff_channel; // unset only while the trace is empty
    std::vector<Observation> observations;
    std::map<std::string, std::string> capture_meta;

    std::size_t size() const { return observations.size(); }
    bool empty() const { return observations.empty(); }

    /// Appends, keeping sniff_channel consistent. Caller keeps timestamps ordered.
    void push(const Observation& obs);

    friend bool operator==(const SniffTrace&, const SniffTrace&) = default;
};

enum class TraceFormat { Csv, Jsonl };

TraceFormat trace_format_from_path(const std::string& path);

/// Parses a trace. Rows are sorted by timestamp (stable). Throws ParseError with
/// the offending row; rows on differing channels are rejected.
SniffTrace load_trace(std::istream& in, TraceFormat format);
SniffTrace load_trace_file(const std::string& path);

void save_trace(std::ostream& out, const SniffTrace& trace, TraceFormat format);
void save_trace_file(const std::string& path, const SniffTrace& trace);

/// Per access address, the central (event-opening) observations in original order.
/// Every address seen gets an entry, possibly empty.
std::map<AccessAddress, SniffTrace> split_by_connection(const SniffTrace& trace);

/// Ground-truth connection event on the connection's own timeline.
struct TimelineEvent {
    std::int64_t k = 0; // epoch-extended counter: the 16-bit counter is k mod 65536
    Channel channel = 0;
    std::int64_t true_time_ns = 0;

    EventCounter counter() const { return EventCounter::from_index(k); }

    friend bool operator==(const TimelineEvent&, const TimelineEvent&) = default;
};

struct EventTimeline {
    ConnectionParams params;
    std::vector<TimelineEvent> events;
};

void save_timelines(std::ostream& out, const std::vector<EventTimeline>& timelines);
std::vector<EventTimeline> load_timelines(std::istream& in);

} // namespace blehop
