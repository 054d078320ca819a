// Multiclass evaluation metrics (confusion matrix, one-vs-rest
// precision/recall/F1 with macro and support-weighted averaging) and a
// one-way ANOVA with an exact F-distribution p-value.

#ifndef PROCATTN_EVALSTATS_HPP
#define PROCATTN_EVALSTATS_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace procattn {

struct ConfusionMatrix {
    std::vector<std::string> classes;
    // row-major [classes x classes]; rows = actual, columns = predicted
    std::vector<std::int64_t> counts;

    std::int64_t at(std::size_t actual, std::size_t predicted) const {
        return counts[actual * classes.size() + predicted];
    }
    std::int64_t total() const;
    int class_index(const std::string& label) const;  // -1 when absent
};

// Classes appear in first-occurrence order over (actual[i], predicted[i])
// pairs unless an explicit ordered class list is given; with an explicit
// list, labels outside it are an error.
ConfusionMatrix confusion(const std::vector<std::string>& actual,
                          const std::vector<std::string>& predicted);
ConfusionMatrix confusion(const std::vector<std::string>& actual,
                          const std::vector<std::string>& predicted,
                          const std::vector<std::string>& classes);

struct ClassMetrics {
    std::string label;
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    std::int64_t support = 0;  // actual occurrences = tp + fn
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    // set when the corresponding denominator was zero and 0 was reported
    bool precision_zero_division = false;
    bool recall_zero_division = false;
    bool f1_zero_division = false;
};

struct MetricReport {
    std::int64_t total = 0;
    double accuracy = 0.0;
    std::vector<ClassMetrics> per_class;
    double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
    double weighted_precision = 0.0, weighted_recall = 0.0, weighted_f1 = 0.0;
};

MetricReport metrics(const ConfusionMatrix& cm);

// Regularized incomplete beta I_x(a,b), continued-fraction evaluation to
// 1e-10; domain a,b > 0, x in [0,1].
double regularized_incomplete_beta(double a, double b, double x);

// Survival function P(F > f) for the F distribution with df1/df2 degrees of
// freedom: I_{df2/(df2 + df1 f)}(df2/2, df1/2).
double f_distribution_sf(double f, double df1, double df2);

struct AnovaGroup {
    std::string name;
    std::int64_t count = 0;
    double sum = 0.0;
    double mean = 0.0;
    double variance = 0.0;  // sample variance, n-1 denominator
};

struct AnovaResult {
    std::vector<AnovaGroup> groups;
    double ss_between = 0.0;
    double ss_within = 0.0;
    std::int64_t df_between = 0;
    std::int64_t df_within = 0;
    double ms_between = 0.0;
    double ms_within = 0.0;
    double f = 0.0;
    double p_value = 1.0;
};

// Raw-data one-way ANOVA; every group needs at least two values. When the
// within-group mean square is zero the result degenerates: equal means give
// F = 0 / p = 1, different means give F = +inf / p = 0.
AnovaResult anova_one_way(const std::vector<std::vector<double>>& groups,
                          const std::vector<std::string>& names = {});

// Same test computed from per-group summaries (count, sum, mean, variance),
// e.g. published tables. Means are recomputed from the sums; a summary
// whose own mean disagrees with sum/count is rejected.
AnovaResult anova_from_summary(const std::vector<AnovaGroup>& summaries);

}  // namespace procattn

#endif
