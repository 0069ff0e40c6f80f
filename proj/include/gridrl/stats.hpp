#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gridrl/harness.hpp"

namespace gridrl::stats {

struct SampleSet {
    std::string agent;
    std::string env_name;
    std::vector<double> values;  // time-to-success frames
};

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;  // sample standard deviation (n-1 denominator)
};

// Requires n >= 2 (for the standard deviation).
MeanSd mean_sd(const std::vector<double>& values);

struct TTestResult {
    double t_statistic = 0.0;
    double degrees_of_freedom = 0.0;
    double p_value = 0.5;
    std::string direction;  // label of the hypothesized-faster sample
    bool significant = false;
};

// Regularized incomplete beta function I_x(a, b).
double incomplete_beta(double a, double b, double x);

// One-sided upper tail P(T >= t) for Student's t with df degrees of freedom.
double student_t_upper_tail(double t, double df);

// t = (m1 - m2) / sqrt(sd1^2/n1 + sd2^2/n2) with m1 the hypothesized-slower
// mean, so positive t supports the hypothesis. Pooled degrees of freedom
// n1 + n2 - 2 by default; Welch-Satterthwaite behind the flag. Degenerate
// zero-variance input with equal means yields t = 0, p = 0.5 by convention.
TTestResult one_sided_t_from_summary(double m1, double sd1, size_t n1, double m2, double sd2,
                                     size_t n2, bool welch = false);

// Hypothesis: `a` is faster (smaller time-to-success) than `b`.
TTestResult one_sided_t(const SampleSet& a, const SampleSet& b, bool welch = false);

struct SummaryRow {
    std::string env_name;
    std::string agent;
    size_t n = 0;
    double mean = 0.0;
    double sd = 0.0;
};

struct TTestRow {
    std::string env_name;
    std::string faster;  // row agent, hypothesized faster
    std::string slower;  // column agent
    TTestResult test;
    bool has_star = false;    // reanalysis excluding dropped runs
    TTestResult star;
};

struct AnalysisReport {
    std::vector<SummaryRow> summaries;
    std::vector<TTestRow> ttests;
    std::vector<std::string> warnings;
};

// Groups run summaries by (environment, agent), computes the mean/SD table
// and all pairwise one-sided tests per environment (direction: the sample
// with the smaller mean is hypothesized faster). `drop_runs` lists 0-based
// run indices (position in the seed-sorted list of each cell) excluded from
// the starred reanalysis.
AnalysisReport analyze(const std::vector<harness::RunSummary>& summaries,
                       const std::vector<size_t>& drop_runs = {}, bool welch = false);

// Writes table_summary.csv, ttests_<env>.csv and report.txt under out_dir.
void write_report(const std::string& out_dir, const AnalysisReport& report);

}  // namespace gridrl::stats
