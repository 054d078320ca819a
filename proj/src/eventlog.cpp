#include "procattn/eventlog.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <istream>
#include <regex>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace procattn {

namespace {

// Days since 1970-01-01 for a proleptic Gregorian date (civil calendar).
std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = static_cast<unsigned>((153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1);
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return static_cast<std::int64_t>(era) * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yr = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = static_cast<int>(yr + (m <= 2));
}

std::int64_t assemble_ms(int Y, int M, int D, int h, int m, int s, int ms) {
    if (M < 1 || M > 12 || D < 1 || D > 31 || h < 0 || h > 23 || m < 0 || m > 59 ||
        s < 0 || s > 60) {
        throw DataError("timestamp field out of range");
    }
    return days_from_civil(Y, M, D) * 86400000LL + h * 3600000LL + m * 60000LL +
           s * 1000LL + ms;
}

// True when everything from pattern[pi] on is literal text plus at most a
// trailing fraction token, i.e. safe to treat as absent.
bool tail_is_optional(const std::string& pattern, std::size_t pi) {
    while (pi < pattern.size()) {
        if (pattern[pi] == '%') {
            if (pi + 1 >= pattern.size()) return false;
            if (pattern[pi + 1] != 'f') return false;
            pi += 2;
        } else {
            ++pi;
        }
    }
    return true;
}

int read_digits(const std::string& text, std::size_t& ti, int min_digits, int max_digits,
                int* count_out = nullptr) {
    int value = 0, count = 0;
    while (ti < text.size() && count < max_digits &&
           std::isdigit(static_cast<unsigned char>(text[ti]))) {
        value = value * 10 + (text[ti] - '0');
        ++ti;
        ++count;
    }
    if (count < min_digits) {
        throw DataError("expected digits at position " + std::to_string(ti) + " of '" +
                        text + "'");
    }
    if (count_out) *count_out = count;
    return value;
}

std::string xml_unescape(const std::string& in) {
    if (in.find('&') == std::string::npos) return in;
    std::string out;
    out.reserve(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (in[i] != '&') {
            out.push_back(in[i]);
            continue;
        }
        const std::size_t semi = in.find(';', i);
        const std::string ent = semi == std::string::npos ? "" : in.substr(i + 1, semi - i - 1);
        if (ent == "amp") out.push_back('&');
        else if (ent == "lt") out.push_back('<');
        else if (ent == "gt") out.push_back('>');
        else if (ent == "quot") out.push_back('"');
        else if (ent == "apos") out.push_back('\'');
        else { out.push_back(in[i]); continue; }
        i = semi;
    }
    return out;
}

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

// One delimited record honouring RFC-4180 style quoting; returns false at EOF.
bool read_record(std::istream& in, char delimiter, std::vector<std::string>& fields,
                 std::size_t& line_no, std::size_t& next_line) {
    fields.clear();
    std::string cell;
    bool in_quotes = false;
    bool any = false;
    line_no = next_line;
    int ch;
    while ((ch = in.get()) != EOF) {
        any = true;
        const char c = static_cast<char>(ch);
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    cell.push_back('"');
                    in.get();
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++next_line;
                cell.push_back(c);
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == delimiter) {
            fields.push_back(cell);
            cell.clear();
        } else if (c == '\n') {
            ++next_line;
            fields.push_back(cell);
            return true;
        } else if (c == '\r') {
            // swallowed; the \n that follows ends the record
        } else {
            cell.push_back(c);
        }
    }
    if (!any) return false;
    fields.push_back(cell);
    return true;
}

bool is_null_token(const std::string& cell, const std::vector<std::string>& tokens) {
    return std::find(tokens.begin(), tokens.end(), cell) != tokens.end();
}

struct XmlTag {
    std::string name;
    std::unordered_map<std::string, std::string> attrs;
    bool closing = false;
    bool self_closing = false;
};

// Very small forward scanner: enough for XES logs, not general XML.
bool next_tag(const std::string& text, std::size_t& pos, XmlTag& tag) {
    while (true) {
        const std::size_t lt = text.find('<', pos);
        if (lt == std::string::npos) return false;
        if (text.compare(lt, 4, "<!--") == 0) {
            const std::size_t end = text.find("-->", lt);
            pos = end == std::string::npos ? text.size() : end + 3;
            continue;
        }
        if (lt + 1 < text.size() && (text[lt + 1] == '?' || text[lt + 1] == '!')) {
            const std::size_t end = text.find('>', lt);
            pos = end == std::string::npos ? text.size() : end + 1;
            continue;
        }
        const std::size_t gt = text.find('>', lt);
        if (gt == std::string::npos) throw DataError("unterminated tag in XES input");
        std::string body = text.substr(lt + 1, gt - lt - 1);
        pos = gt + 1;
        tag = XmlTag{};
        if (!body.empty() && body.back() == '/') {
            tag.self_closing = true;
            body.pop_back();
        }
        std::size_t i = 0;
        if (!body.empty() && body[0] == '/') {
            tag.closing = true;
            i = 1;
        }
        std::size_t name_end = i;
        while (name_end < body.size() &&
               !std::isspace(static_cast<unsigned char>(body[name_end]))) {
            ++name_end;
        }
        tag.name = body.substr(i, name_end - i);
        i = name_end;
        while (i < body.size()) {
            while (i < body.size() && std::isspace(static_cast<unsigned char>(body[i]))) ++i;
            const std::size_t eq = body.find('=', i);
            if (eq == std::string::npos) break;
            const std::string key = trim(body.substr(i, eq - i));
            std::size_t q1 = body.find_first_of("\"'", eq);
            if (q1 == std::string::npos) break;
            const char quote = body[q1];
            const std::size_t q2 = body.find(quote, q1 + 1);
            if (q2 == std::string::npos) throw DataError("unterminated attribute in XES tag");
            tag.attrs[key] = xml_unescape(body.substr(q1 + 1, q2 - q1 - 1));
            i = q2 + 1;
        }
        return true;
    }
}

std::vector<Event> parse_xes(std::istream& source) {
    std::ostringstream os;
    os << source.rdbuf();
    const std::string text = os.str();

    std::vector<Event> events;
    std::size_t pos = 0;
    XmlTag tag;
    bool in_trace = false, in_event = false;
    int skip_depth = 0;  // inside <global>/<classifier>/... containers
    std::string case_id;
    std::optional<std::string> activity, resource, lifecycle;
    std::int64_t timestamp = 0;
    bool has_timestamp = false;

    while (next_tag(text, pos, tag)) {
        if (skip_depth > 0) {
            if (tag.closing) --skip_depth;
            else if (!tag.self_closing) ++skip_depth;
            continue;
        }
        if (tag.name == "global" || tag.name == "classifier" || tag.name == "extension") {
            if (!tag.self_closing && !tag.closing) ++skip_depth;
            continue;
        }
        if (tag.name == "trace") {
            if (tag.closing) {
                in_trace = false;
                case_id.clear();
            } else {
                in_trace = true;
            }
            continue;
        }
        if (tag.name == "event") {
            if (tag.closing) {
                if (!has_timestamp || !activity.has_value()) {
                    throw DataError("XES event missing concept:name or time:timestamp");
                }
                if (case_id.empty()) throw DataError("XES event outside a named trace");
                events.push_back(Event{case_id, *activity, resource, timestamp, lifecycle});
                in_event = false;
            } else {
                in_event = true;
                activity.reset();
                resource.reset();
                lifecycle.reset();
                timestamp = 0;
                has_timestamp = false;
            }
            continue;
        }
        if (!in_trace) continue;
        const auto key_it = tag.attrs.find("key");
        const auto val_it = tag.attrs.find("value");
        if (key_it == tag.attrs.end() || val_it == tag.attrs.end()) continue;
        const std::string& key = key_it->second;
        const std::string& value = val_it->second;
        if (tag.name == "string") {
            if (in_event) {
                if (key == "concept:name") activity = value;
                else if (key == "org:resource") resource = value;
                else if (key == "lifecycle:transition") lifecycle = value;
            } else if (key == "concept:name") {
                case_id = value;
            }
        } else if (tag.name == "date" && in_event && key == "time:timestamp") {
            timestamp = parse_iso8601(value);
            has_timestamp = true;
        }
    }
    if (events.empty()) throw DataError("XES input contains no events");
    return events;
}

}  // namespace

LogProfile LogProfile::from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("profile is not valid JSON: ") + e.what());
    }
    LogProfile p;
    if (j.contains("format")) p.format = j.at("format").get<std::string>();
    if (p.format != "csv" && p.format != "xes") {
        throw ConfigError("profile format must be 'csv' or 'xes', got '" + p.format + "'");
    }
    if (j.contains("delimiter")) {
        const std::string d = j.at("delimiter").get<std::string>();
        if (d.size() != 1) throw ConfigError("profile delimiter must be one character");
        p.delimiter = d[0];
    }
    if (j.contains("case_column")) p.case_column = j.at("case_column").get<std::string>();
    if (j.contains("activity_column")) p.activity_column = j.at("activity_column").get<std::string>();
    if (j.contains("timestamp_column")) p.timestamp_column = j.at("timestamp_column").get<std::string>();
    if (j.contains("resource_column")) p.resource_column = j.at("resource_column").get<std::string>();
    if (j.contains("lifecycle_column")) p.lifecycle_column = j.at("lifecycle_column").get<std::string>();
    if (j.contains("timestamp_pattern")) p.timestamp_pattern = j.at("timestamp_pattern").get<std::string>();
    if (j.contains("null_tokens")) p.null_tokens = j.at("null_tokens").get<std::vector<std::string>>();
    if (j.contains("completed_only")) p.completed_only = j.at("completed_only").get<bool>();
    if (j.contains("activity_filter")) p.activity_filter = j.at("activity_filter").get<std::string>();
    return p;
}

LogProfile LogProfile::from_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open profile file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return from_json_text(os.str());
}

std::int64_t parse_timestamp(const std::string& text, const std::string& pattern) {
    int Y = 1970, M = 1, D = 1, h = 0, m = 0, s = 0, ms = 0;
    std::size_t ti = 0, pi = 0;
    while (pi < pattern.size()) {
        if (pattern[pi] == '%' && pi + 1 < pattern.size()) {
            const char code = pattern[pi + 1];
            if (code == '%') {
                if (ti >= text.size() || text[ti] != '%') {
                    throw DataError("timestamp '" + text + "' does not match pattern '" +
                                    pattern + "'");
                }
                ++ti;
                pi += 2;
                continue;
            }
            if (ti >= text.size() && tail_is_optional(pattern, pi)) return
                assemble_ms(Y, M, D, h, m, s, ms);
            switch (code) {
                case 'Y': Y = read_digits(text, ti, 4, 4); break;
                case 'm': M = read_digits(text, ti, 1, 2); break;
                case 'd': D = read_digits(text, ti, 1, 2); break;
                case 'H': h = read_digits(text, ti, 1, 2); break;
                case 'M': m = read_digits(text, ti, 1, 2); break;
                case 'S': s = read_digits(text, ti, 1, 2); break;
                case 'f': {
                    int count = 0;
                    int frac = read_digits(text, ti, 1, 9, &count);
                    while (count < 3) { frac *= 10; ++count; }
                    while (count > 3) { frac /= 10; --count; }
                    ms = frac;
                    break;
                }
                default:
                    throw ConfigError(std::string("unsupported timestamp token %") + code);
            }
            pi += 2;
        } else {
            if (ti < text.size() && text[ti] == pattern[pi]) {
                ++ti;
                ++pi;
            } else if (ti >= text.size() && tail_is_optional(pattern, pi)) {
                return assemble_ms(Y, M, D, h, m, s, ms);
            } else {
                throw DataError("timestamp '" + text + "' does not match pattern '" +
                                pattern + "'");
            }
        }
    }
    if (ti != text.size()) {
        throw DataError("timestamp '" + text + "' has trailing characters under pattern '" +
                        pattern + "'");
    }
    return assemble_ms(Y, M, D, h, m, s, ms);
}

std::int64_t parse_iso8601(const std::string& raw) {
    const std::string text = trim(raw);
    std::size_t ti = 0;
    const int Y = read_digits(text, ti, 4, 4);
    auto expect = [&](char c) {
        if (ti >= text.size() || text[ti] != c) {
            throw DataError("bad ISO-8601 timestamp: '" + text + "'");
        }
        ++ti;
    };
    expect('-');
    const int M = read_digits(text, ti, 2, 2);
    expect('-');
    const int D = read_digits(text, ti, 2, 2);
    if (ti >= text.size() || (text[ti] != 'T' && text[ti] != ' ')) {
        throw DataError("bad ISO-8601 timestamp: '" + text + "'");
    }
    ++ti;
    const int h = read_digits(text, ti, 2, 2);
    expect(':');
    const int m = read_digits(text, ti, 2, 2);
    expect(':');
    const int s = read_digits(text, ti, 2, 2);
    int ms = 0;
    if (ti < text.size() && text[ti] == '.') {
        ++ti;
        int count = 0;
        int frac = read_digits(text, ti, 1, 9, &count);
        while (count < 3) { frac *= 10; ++count; }
        while (count > 3) { frac /= 10; --count; }
        ms = frac;
    }
    std::int64_t offset_ms = 0;
    if (ti < text.size()) {
        const char c = text[ti];
        if (c == 'Z') {
            ++ti;
        } else if (c == '+' || c == '-') {
            ++ti;
            const int oh = read_digits(text, ti, 2, 2);
            if (ti < text.size() && text[ti] == ':') ++ti;
            const int om = ti < text.size() ? read_digits(text, ti, 2, 2) : 0;
            offset_ms = (oh * 3600LL + om * 60LL) * 1000LL;
            if (c == '-') offset_ms = -offset_ms;
        }
    }
    if (ti != text.size()) throw DataError("bad ISO-8601 timestamp: '" + text + "'");
    return assemble_ms(Y, M, D, h, m, s, ms) - offset_ms;
}

std::string format_timestamp(std::int64_t ms) {
    std::int64_t days = ms / 86400000;
    std::int64_t rem = ms % 86400000;
    if (rem < 0) {
        rem += 86400000;
        --days;
    }
    int Y, M, D;
    civil_from_days(days, Y, M, D);
    const int h = static_cast<int>(rem / 3600000);
    const int m = static_cast<int>(rem / 60000 % 60);
    const int s = static_cast<int>(rem / 1000 % 60);
    const int f = static_cast<int>(rem % 1000);
    std::ostringstream os;
    os << std::setfill('0') << std::setw(4) << Y << '-' << std::setw(2) << M << '-'
       << std::setw(2) << D << 'T' << std::setw(2) << h << ':' << std::setw(2) << m << ':'
       << std::setw(2) << s << '.' << std::setw(3) << f << 'Z';
    return os.str();
}

std::vector<Event> parse_log(std::istream& source, const LogProfile& profile) {
    if (profile.format == "xes") return parse_xes(source);

    std::vector<std::string> header;
    std::size_t line_no = 0, next_line = 1;
    if (!read_record(source, profile.delimiter, header, line_no, next_line)) {
        throw DataError("log file is empty");
    }
    for (std::string& cell : header) cell = trim(cell);

    auto col = [&](const std::string& name, bool required) -> int {
        if (name.empty()) return -1;
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            if (required) {
                throw ConfigError("column '" + name + "' not found in header");
            }
            throw ConfigError("profile names column '" + name +
                              "' but the header does not contain it");
        }
        return static_cast<int>(it - header.begin());
    };
    const int c_case = col(profile.case_column, true);
    const int c_act = col(profile.activity_column, true);
    const int c_time = col(profile.timestamp_column, true);
    const int c_res = col(profile.resource_column, false);
    const int c_life = col(profile.lifecycle_column, false);
    int max_col = std::max({c_case, c_act, c_time, c_res, c_life});

    std::vector<Event> events;
    std::vector<std::string> fields;
    while (read_record(source, profile.delimiter, fields, line_no, next_line)) {
        if (fields.size() == 1 && trim(fields[0]).empty()) continue;  // blank line
        if (static_cast<int>(fields.size()) <= max_col) {
            throw DataError("line " + std::to_string(line_no) + ": expected at least " +
                            std::to_string(max_col + 1) + " fields, got " +
                            std::to_string(fields.size()));
        }
        Event ev;
        ev.case_id = trim(fields[static_cast<std::size_t>(c_case)]);
        ev.activity = trim(fields[static_cast<std::size_t>(c_act)]);
        if (ev.case_id.empty() || ev.activity.empty()) {
            throw DataError("line " + std::to_string(line_no) +
                            ": empty case id or activity");
        }
        try {
            ev.timestamp_ms = parse_timestamp(trim(fields[static_cast<std::size_t>(c_time)]),
                                              profile.timestamp_pattern);
        } catch (const DataError& e) {
            throw DataError("line " + std::to_string(line_no) + ": " + e.what());
        }
        if (c_res >= 0) {
            const std::string cell = trim(fields[static_cast<std::size_t>(c_res)]);
            if (!is_null_token(cell, profile.null_tokens)) ev.resource = cell;
        }
        if (c_life >= 0) {
            const std::string cell = trim(fields[static_cast<std::size_t>(c_life)]);
            if (!is_null_token(cell, profile.null_tokens)) ev.lifecycle = cell;
        }
        events.push_back(std::move(ev));
    }
    if (events.empty()) throw DataError("log file has a header but no data rows");
    return events;
}

std::vector<Event> parse_log_file(const std::string& path, const LogProfile& profile) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open log file: " + path);
    return parse_log(in, profile);
}

std::vector<Trace> build_traces(const std::vector<Event>& events, const LogProfile& profile,
                                BuildStats* stats) {
    BuildStats local;
    std::optional<std::regex> filter;
    if (!profile.activity_filter.empty()) {
        try {
            filter.emplace(profile.activity_filter);
        } catch (const std::regex_error& e) {
            throw ConfigError("bad activity_filter regex: " + std::string(e.what()));
        }
    }
    auto completed = [](const Event& e) {
        if (!e.lifecycle.has_value()) return true;  // column absent or null: keep
        std::string v = *e.lifecycle;
        std::transform(v.begin(), v.end(), v.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        return v == "complete" || v == "completed";
    };

    std::unordered_set<std::string> all_cases;
    std::unordered_map<std::string, std::size_t> slot;
    std::vector<Trace> traces;
    for (const Event& e : events) {
        all_cases.insert(e.case_id);
        if (profile.completed_only && !completed(e)) {
            ++local.filtered_events;
            continue;
        }
        if (filter && !std::regex_search(e.activity, *filter)) {
            ++local.filtered_events;
            continue;
        }
        auto [it, fresh] = slot.try_emplace(e.case_id, traces.size());
        if (fresh) traces.push_back(Trace{e.case_id, {}});
        traces[it->second].events.push_back(e);
    }
    local.dropped_cases = all_cases.size() - traces.size();

    for (Trace& t : traces) {
        std::stable_sort(t.events.begin(), t.events.end(),
                         [](const Event& a, const Event& b) {
                             return a.timestamp_ms < b.timestamp_ms;
                         });
        for (std::size_t i = 1; i < t.events.size(); ++i) {
            const Event& a = t.events[i - 1];
            const Event& b = t.events[i];
            if (a.timestamp_ms == b.timestamp_ms && a.activity == b.activity &&
                a.resource == b.resource) {
                ++local.zero_duration_duplicates;
            }
        }
    }
    if (stats) *stats = local;
    return traces;
}

std::vector<PrefixTrace> generate_prefixes(const Trace& trace, int min_length,
                                           int max_length, bool include_end_label) {
    if (min_length < 1) throw ConfigError("min_length must be >= 1");
    if (max_length < min_length) throw ConfigError("max_length must be >= min_length");
    const int n = static_cast<int>(trace.events.size());
    std::vector<PrefixTrace> out;
    const int upper = std::min(n - 1, max_length);
    for (int l = min_length; l <= upper; ++l) {
        PrefixTrace p;
        p.trace_case_id = trace.case_id;
        p.length = l;
        p.events.assign(trace.events.begin(), trace.events.begin() + l);
        p.target = trace.events[static_cast<std::size_t>(l)].activity;
        out.push_back(std::move(p));
    }
    if (include_end_label && n >= min_length && n <= max_length) {
        PrefixTrace p;
        p.trace_case_id = trace.case_id;
        p.length = n;
        p.events = trace.events;
        p.target = kEndLabel;
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<PrefixTrace> generate_all_prefixes(const std::vector<Trace>& traces,
                                               int min_length, int max_length,
                                               bool include_end_label) {
    std::vector<PrefixTrace> out;
    for (const Trace& t : traces) {
        auto ps = generate_prefixes(t, min_length, max_length, include_end_label);
        out.insert(out.end(), std::make_move_iterator(ps.begin()),
                   std::make_move_iterator(ps.end()));
    }
    return out;
}

LogSummary summarize(const std::vector<Trace>& traces) {
    LogSummary s;
    s.cases = traces.size();
    std::unordered_set<std::string> acts;
    std::unordered_set<std::string> variants;
    for (const Trace& t : traces) {
        s.events += t.events.size();
        s.max_case_length = std::max(s.max_case_length, t.events.size());
        std::string key;
        for (const Event& e : t.events) {
            acts.insert(e.activity);
            key += e.activity;
            key += '\x1f';
        }
        variants.insert(key);
    }
    s.distinct_activities = acts.size();
    s.variants = variants.size();
    s.avg_case_length = s.cases == 0 ? 0.0
                                     : static_cast<double>(s.events) /
                                           static_cast<double>(s.cases);
    return s;
}

}  // namespace procattn
