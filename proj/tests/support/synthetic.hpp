// Deterministic synthetic event-log generator where every next activity is a
// pure function of (last activity, last resource, elapsed time >= threshold):
//
//   e1 = S                 with a uniform resource r in {r0..r5}
//   after S:  A when r(S) is one of {r3,r4,r5}, else B
//   after A/B: M when r(A/B) is one of {r3,r4,r5}, else N
//   after M:  E1 when elapsed >= 24h, else E2     (flipped for N)
//
// The first gap is always 1-2h; the second is 1-2h for "fast" cases and
// 40-60h for "slow" ones (uniform coin). Elapsed time at the third event is
// then 2-4h or 41-62h — the 24h threshold splits it cleanly, while elapsed at
// the second event (1-2h) carries no information about the outcome, so the
// decision genuinely sits on the last event. Prefix targets: lengths 1 and 2
// decided by the last resource, length 3 by the last activity combined with
// the elapsed-time threshold.

#ifndef PROCATTN_TESTS_SYNTHETIC_HPP
#define PROCATTN_TESTS_SYNTHETIC_HPP

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "procattn/eventlog.hpp"
#include "procattn/tensor.hpp"

namespace procattn::testing {

inline constexpr std::int64_t kSyntheticThresholdMs = 24LL * 3600 * 1000;

inline bool synthetic_high_resource(const std::string& r) {
    return r == "r3" || r == "r4" || r == "r5";
}

inline std::vector<Trace> synthetic_rule_log(std::size_t cases, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const std::int64_t base = 1609459200000;  // 2021-01-01T00:00:00Z
    const std::int64_t hour = 3600 * 1000;

    std::vector<Trace> traces;
    traces.reserve(cases);
    for (std::size_t c = 0; c < cases; ++c) {
        const bool slow = uniform01(rng) < 0.5;
        auto gap = [&](bool may_stall) {
            const double hours = may_stall && slow ? 40.0 + 20.0 * uniform01(rng)
                                                   : 1.0 + uniform01(rng);
            return static_cast<std::int64_t>(hours * static_cast<double>(hour));
        };
        auto resource = [&] {
            return "r" + std::to_string(static_cast<int>(uniform01(rng) * 6.0));
        };

        Trace trace;
        trace.case_id = "case" + std::to_string(c);
        std::int64_t t = base + static_cast<std::int64_t>(c) * 86400000;

        auto push = [&](const std::string& activity, const std::string& r) {
            Event e;
            e.case_id = trace.case_id;
            e.activity = activity;
            e.resource = r;
            e.timestamp_ms = t;
            trace.events.push_back(std::move(e));
        };

        const std::string r1 = resource();
        push("S", r1);
        t += gap(false);

        const std::string r2 = resource();
        push(synthetic_high_resource(r1) ? "A" : "B", r2);
        t += gap(true);

        const std::string r3 = resource();
        const std::string third = synthetic_high_resource(r2) ? "M" : "N";
        const std::int64_t elapsed = t - trace.events[0].timestamp_ms;
        push(third, r3);
        t += gap(false);

        const bool late = elapsed >= kSyntheticThresholdMs;
        const std::string last = third == "M" ? (late ? "E1" : "E2") : (late ? "E2" : "E1");
        push(last, resource());
        traces.push_back(std::move(trace));
    }
    return traces;
}

// The same log as delimited text, for driving the command-line pipeline.
inline std::string synthetic_rule_csv(std::size_t cases, std::uint64_t seed) {
    std::string text = "case_id,activity,timestamp,resource\n";
    for (const Trace& trace : synthetic_rule_log(cases, seed)) {
        for (const Event& e : trace.events) {
            text += e.case_id + "," + e.activity + "," + format_timestamp(e.timestamp_ms) +
                    "," + *e.resource + "\n";
        }
    }
    return text;
}

}  // namespace procattn::testing

#endif
