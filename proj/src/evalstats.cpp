#include "procattn/evalstats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "procattn/common.hpp"

namespace procattn {

std::int64_t ConfusionMatrix::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

int ConfusionMatrix::class_index(const std::string& label) const {
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (classes[i] == label) return static_cast<int>(i);
    }
    return -1;
}

namespace {

ConfusionMatrix build_confusion(const std::vector<std::string>& actual,
                                const std::vector<std::string>& predicted,
                                std::vector<std::string> classes, bool closed_set) {
    if (actual.size() != predicted.size()) {
        throw DataError("confusion matrix inputs differ in length: " +
                        std::to_string(actual.size()) + " actual vs " +
                        std::to_string(predicted.size()) + " predicted");
    }
    if (actual.empty()) throw DataError("confusion matrix over zero predictions");

    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < classes.size(); ++i) index[classes[i]] = i;
    auto slot = [&](const std::string& label) {
        auto it = index.find(label);
        if (it != index.end()) return it->second;
        if (closed_set) {
            throw DataError("label '" + label + "' is not in the declared class list");
        }
        const std::size_t next = classes.size();
        classes.push_back(label);
        index[label] = next;
        return next;
    };

    // first pass pins the class order, second pass counts
    std::vector<std::pair<std::size_t, std::size_t>> pairs(actual.size());
    for (std::size_t i = 0; i < actual.size(); ++i) {
        pairs[i].first = slot(actual[i]);
        pairs[i].second = slot(predicted[i]);
    }
    ConfusionMatrix cm;
    cm.classes = std::move(classes);
    cm.counts.assign(cm.classes.size() * cm.classes.size(), 0);
    for (const auto& [a, p] : pairs) {
        ++cm.counts[a * cm.classes.size() + p];
    }
    return cm;
}

}  // namespace

ConfusionMatrix confusion(const std::vector<std::string>& actual,
                          const std::vector<std::string>& predicted) {
    return build_confusion(actual, predicted, {}, false);
}

ConfusionMatrix confusion(const std::vector<std::string>& actual,
                          const std::vector<std::string>& predicted,
                          const std::vector<std::string>& classes) {
    return build_confusion(actual, predicted, classes, true);
}

MetricReport metrics(const ConfusionMatrix& cm) {
    const std::size_t n = cm.classes.size();
    if (n == 0) throw DataError("metrics over an empty confusion matrix");
    MetricReport report;
    report.total = cm.total();
    if (report.total == 0) throw DataError("metrics over an all-zero confusion matrix");

    std::int64_t diagonal = 0;
    for (std::size_t c = 0; c < n; ++c) diagonal += cm.at(c, c);
    report.accuracy = static_cast<double>(diagonal) / static_cast<double>(report.total);

    double weighted_p = 0.0, weighted_r = 0.0, weighted_f = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
        ClassMetrics m;
        m.label = cm.classes[c];
        m.tp = cm.at(c, c);
        std::int64_t row = 0, col = 0;
        for (std::size_t j = 0; j < n; ++j) {
            row += cm.at(c, j);
            col += cm.at(j, c);
        }
        m.fn = row - m.tp;
        m.fp = col - m.tp;
        m.tn = report.total - m.tp - m.fp - m.fn;
        m.support = row;

        if (m.tp + m.fp > 0) {
            m.precision = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
        } else {
            m.precision_zero_division = true;
        }
        if (m.tp + m.fn > 0) {
            m.recall = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
        } else {
            m.recall_zero_division = true;
        }
        const double f1_denominator =
            static_cast<double>(m.tp) + 0.5 * static_cast<double>(m.fp + m.fn);
        if (f1_denominator > 0.0) {
            m.f1 = static_cast<double>(m.tp) / f1_denominator;
        } else {
            m.f1_zero_division = true;
        }

        report.macro_precision += m.precision;
        report.macro_recall += m.recall;
        report.macro_f1 += m.f1;
        weighted_p += static_cast<double>(m.support) * m.precision;
        weighted_r += static_cast<double>(m.support) * m.recall;
        weighted_f += static_cast<double>(m.support) * m.f1;
        report.per_class.push_back(std::move(m));
    }
    report.macro_precision /= static_cast<double>(n);
    report.macro_recall /= static_cast<double>(n);
    report.macro_f1 /= static_cast<double>(n);
    report.weighted_precision = weighted_p / static_cast<double>(report.total);
    report.weighted_recall = weighted_r / static_cast<double>(report.total);
    report.weighted_f1 = weighted_f / static_cast<double>(report.total);
    return report;
}

// ---------------------------------------------------------------------------
// F-distribution tail via the regularized incomplete beta function
// ---------------------------------------------------------------------------

namespace {

// Continued fraction for I_x(a,b), evaluated with Lentz's method.
double beta_continued_fraction(double a, double b, double x) {
    constexpr double kTiny = 1e-300;
    constexpr double kTol = 1e-10;
    constexpr int kMaxIterations = 10000;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIterations; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kTol) return h;
    }
    throw NumericError("incomplete beta continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) {
        throw NumericError("incomplete beta requires positive shape parameters");
    }
    if (std::isnan(x) || x < 0.0 || x > 1.0) {
        throw NumericError("incomplete beta requires x in [0,1]");
    }
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                             a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * beta_continued_fraction(a, b, x) / a;
    }
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double f_distribution_sf(double f, double df1, double df2) {
    if (!(df1 > 0.0) || !(df2 > 0.0)) {
        throw NumericError("F distribution requires positive degrees of freedom");
    }
    if (std::isnan(f)) throw NumericError("F statistic is NaN");
    if (f <= 0.0) return 1.0;
    if (std::isinf(f)) return 0.0;
    const double x = df2 / (df2 + df1 * f);
    return regularized_incomplete_beta(df2 / 2.0, df1 / 2.0, x);
}

// ---------------------------------------------------------------------------
// One-way ANOVA
// ---------------------------------------------------------------------------

namespace {

AnovaResult anova_from_groups(std::vector<AnovaGroup> groups, double ss_within) {
    AnovaResult r;
    std::int64_t n_total = 0;
    double sum_total = 0.0;
    for (const auto& g : groups) {
        n_total += g.count;
        sum_total += g.sum;
    }
    const double grand_mean = sum_total / static_cast<double>(n_total);
    double ss_between = 0.0;
    for (const auto& g : groups) {
        const double d = g.mean - grand_mean;
        ss_between += static_cast<double>(g.count) * d * d;
    }
    r.groups = std::move(groups);
    r.ss_between = ss_between;
    r.ss_within = ss_within;
    r.df_between = static_cast<std::int64_t>(r.groups.size()) - 1;
    r.df_within = n_total - static_cast<std::int64_t>(r.groups.size());
    if (r.df_within < 1) throw DataError("one-way ANOVA needs more values than groups");
    r.ms_between = r.ss_between / static_cast<double>(r.df_between);
    r.ms_within = r.ss_within / static_cast<double>(r.df_within);
    if (r.ms_within == 0.0) {
        // no residual variation at all: either nothing differs or the group
        // means explain everything
        if (r.ss_between == 0.0) {
            r.f = 0.0;
            r.p_value = 1.0;
        } else {
            r.f = std::numeric_limits<double>::infinity();
            r.p_value = 0.0;
        }
        return r;
    }
    r.f = r.ms_between / r.ms_within;
    r.p_value = f_distribution_sf(r.f, static_cast<double>(r.df_between),
                                  static_cast<double>(r.df_within));
    return r;
}

}  // namespace

AnovaResult anova_one_way(const std::vector<std::vector<double>>& groups,
                          const std::vector<std::string>& names) {
    if (groups.size() < 2) throw DataError("one-way ANOVA needs at least two groups");
    if (!names.empty() && names.size() != groups.size()) {
        throw ConfigError("ANOVA group name count does not match the group count");
    }
    std::vector<AnovaGroup> summaries;
    double ss_within = 0.0;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const auto& values = groups[i];
        if (values.size() < 2) {
            throw DataError("ANOVA group " + std::to_string(i + 1) +
                            " has fewer than two values");
        }
        AnovaGroup g;
        g.name = names.empty() ? "group" + std::to_string(i + 1) : names[i];
        g.count = static_cast<std::int64_t>(values.size());
        g.sum = std::accumulate(values.begin(), values.end(), 0.0);
        g.mean = g.sum / static_cast<double>(g.count);
        double ss = 0.0;
        for (double v : values) ss += (v - g.mean) * (v - g.mean);
        g.variance = ss / static_cast<double>(g.count - 1);
        ss_within += ss;
        summaries.push_back(std::move(g));
    }
    return anova_from_groups(std::move(summaries), ss_within);
}

AnovaResult anova_from_summary(const std::vector<AnovaGroup>& summaries) {
    if (summaries.size() < 2) throw DataError("one-way ANOVA needs at least two groups");
    std::vector<AnovaGroup> groups;
    double ss_within = 0.0;
    for (std::size_t i = 0; i < summaries.size(); ++i) {
        AnovaGroup g = summaries[i];
        if (g.count < 2) {
            throw DataError("ANOVA group '" + g.name + "' has fewer than two values");
        }
        if (g.variance < 0.0) {
            throw DataError("ANOVA group '" + g.name + "' has negative variance");
        }
        // Published tables usually round the mean; the integer-valued sum is
        // the exact quantity, so recompute the mean and cross-check.
        const double derived = g.sum / static_cast<double>(g.count);
        if (std::fabs(derived - g.mean) > 1e-3 * std::max(1.0, std::fabs(derived))) {
            throw DataError("ANOVA group '" + g.name + "' summary is inconsistent: sum/count = " +
                            std::to_string(derived) + " but mean = " +
                            std::to_string(g.mean));
        }
        g.mean = derived;
        ss_within += static_cast<double>(g.count - 1) * g.variance;
        groups.push_back(std::move(g));
    }
    return anova_from_groups(std::move(groups), ss_within);
}

}  // namespace procattn
