// Event-log ingestion: delimited text (plus a small XES subset) -> events
// -> per-case traces -> fixed-target prefix traces.

#ifndef PROCATTN_EVENTLOG_HPP
#define PROCATTN_EVENTLOG_HPP

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "procattn/common.hpp"

namespace procattn {

// Target label for the synthetic "case is complete" class.
inline constexpr const char* kEndLabel = "<END>";

struct Event {
    std::string case_id;
    std::string activity;
    std::optional<std::string> resource;  // nullopt = absent, never ""
    std::int64_t timestamp_ms = 0;        // UTC epoch milliseconds
    std::optional<std::string> lifecycle;
};

struct Trace {
    std::string case_id;
    std::vector<Event> events;
};

struct PrefixTrace {
    std::string trace_case_id;
    int length = 0;
    std::vector<Event> events;  // the first `length` events of the parent
    std::string target;         // next activity, or kEndLabel
};

// Column mapping and parsing rules for one log file.
struct LogProfile {
    std::string format = "csv";  // "csv" or "xes"
    char delimiter = ',';
    std::string case_column = "case_id";
    std::string activity_column = "activity";
    std::string timestamp_column = "timestamp";
    std::string resource_column;   // empty = column absent
    std::string lifecycle_column;  // empty = column absent
    // Tokens: %Y %m %d %H %M %S %f (fraction, optional at end), rest literal.
    std::string timestamp_pattern = "%Y-%m-%d %H:%M:%S.%f";
    std::vector<std::string> null_tokens = {"", "NULL"};
    bool completed_only = false;
    // Keep only events whose activity matches this regex (empty = keep all);
    // used to carve subprocess logs out of a larger one.
    std::string activity_filter;

    static LogProfile from_json_text(const std::string& text);
    static LogProfile from_json_file(const std::string& path);
};

// Converts `pattern`-formatted text to UTC epoch ms. A trailing fraction
// token may be absent from the input; it then counts as zero.
std::int64_t parse_timestamp(const std::string& text, const std::string& pattern);

// ISO-8601 with optional fraction and offset (Z / +hh:mm / -hh:mm).
std::int64_t parse_iso8601(const std::string& text);

std::string format_timestamp(std::int64_t ms);  // ISO-8601 UTC, ms precision

std::vector<Event> parse_log(std::istream& source, const LogProfile& profile);
std::vector<Event> parse_log_file(const std::string& path, const LogProfile& profile);

struct BuildStats {
    std::size_t filtered_events = 0;        // dropped by lifecycle/activity filter
    std::size_t dropped_cases = 0;          // cases left with zero events
    std::size_t zero_duration_duplicates = 0;  // kept, but counted
};

std::vector<Trace> build_traces(const std::vector<Event>& events,
                                const LogProfile& profile,
                                BuildStats* stats = nullptr);

std::vector<PrefixTrace> generate_prefixes(const Trace& trace, int min_length,
                                           int max_length, bool include_end_label);

std::vector<PrefixTrace> generate_all_prefixes(const std::vector<Trace>& traces,
                                               int min_length, int max_length,
                                               bool include_end_label);

// Corpus-level descriptive numbers for a prepared log.
struct LogSummary {
    std::size_t cases = 0;
    std::size_t events = 0;
    std::size_t distinct_activities = 0;
    double avg_case_length = 0.0;
    std::size_t max_case_length = 0;
    std::size_t variants = 0;  // distinct activity sequences
};

LogSummary summarize(const std::vector<Trace>& traces);

}  // namespace procattn

#endif
