#include "gridrl/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "gridrl/errors.hpp"

namespace gridrl::stats {

MeanSd mean_sd(const std::vector<double>& values) {
    if (values.size() < 2) throw UsageError("mean_sd: need at least 2 values");
    double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / (n - 1.0))};
}

// Continued fraction for the incomplete beta function, modified Lentz.
namespace {

double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;

    double qab = a + b;
    double qap = a + 1.0;
    double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (a <= 0.0 || b <= 0.0) throw UsageError("incomplete_beta: a, b must be positive");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double ln_front = a * std::log(x) + b * std::log(1.0 - x) -
                      (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
    double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * betacf(a, b, x) / a;
    }
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_upper_tail(double t, double df) {
    if (df <= 0.0) throw UsageError("student_t_upper_tail: df must be positive");
    if (std::isnan(t)) return 0.5;
    double x = df / (df + t * t);
    double half_tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x);
    return t >= 0.0 ? half_tail : 1.0 - half_tail;
}

TTestResult one_sided_t_from_summary(double m1, double sd1, size_t n1, double m2, double sd2,
                                     size_t n2, bool welch) {
    if (n1 < 2 || n2 < 2) throw UsageError("one_sided_t_from_summary: need n >= 2");
    if (sd1 < 0.0 || sd2 < 0.0) throw UsageError("one_sided_t_from_summary: negative sd");

    double v1 = sd1 * sd1 / static_cast<double>(n1);
    double v2 = sd2 * sd2 / static_cast<double>(n2);
    double se2 = v1 + v2;

    TTestResult r;
    if (welch && se2 > 0.0) {
        r.degrees_of_freedom = se2 * se2 / (v1 * v1 / (n1 - 1) + v2 * v2 / (n2 - 1));
    } else {
        r.degrees_of_freedom = static_cast<double>(n1 + n2 - 2);
    }

    if (se2 == 0.0) {
        // Degenerate variance: equal means give the symmetric-null p.
        if (m1 == m2) {
            r.t_statistic = 0.0;
            r.p_value = 0.5;
        } else {
            r.t_statistic = (m1 > m2) ? std::numeric_limits<double>::infinity()
                                      : -std::numeric_limits<double>::infinity();
            r.p_value = (m1 > m2) ? 0.0 : 1.0;
        }
    } else {
        r.t_statistic = (m1 - m2) / std::sqrt(se2);
        r.p_value = student_t_upper_tail(r.t_statistic, r.degrees_of_freedom);
    }
    r.significant = r.p_value < 0.05;
    return r;
}

TTestResult one_sided_t(const SampleSet& a, const SampleSet& b, bool welch) {
    MeanSd ma = mean_sd(a.values);
    MeanSd mb = mean_sd(b.values);
    // m1 is the hypothesized-slower sample so positive t supports "a faster".
    TTestResult r = one_sided_t_from_summary(mb.mean, mb.sd, b.values.size(), ma.mean, ma.sd,
                                             a.values.size(), welch);
    r.direction = a.agent;
    return r;
}

// --- report generation ---

namespace {

struct CellKey {
    std::string env_name;
    std::string agent;
    bool operator<(const CellKey& o) const {
        return env_name != o.env_name ? env_name < o.env_name : agent < o.agent;
    }
};

std::vector<double> drop_indices(const std::vector<double>& values,
                                 const std::vector<size_t>& drop) {
    std::vector<double> out;
    for (size_t i = 0; i < values.size(); ++i) {
        if (std::find(drop.begin(), drop.end(), i) == drop.end()) out.push_back(values[i]);
    }
    return out;
}

}  // namespace

AnalysisReport analyze(const std::vector<harness::RunSummary>& summaries,
                       const std::vector<size_t>& drop_runs, bool welch) {
    AnalysisReport report;

    // Group time-to-success values per (env, agent), ordered by seed so run
    // indices are well defined.
    std::map<CellKey, std::vector<std::pair<uint64_t, double>>> cells;
    for (const auto& s : summaries) {
        if (!s.finished) {
            report.warnings.push_back("skipping failed run: " + s.env_name + "/" + s.agent_name +
                                      " seed " + std::to_string(s.seed));
            continue;
        }
        cells[{s.env_name, s.agent_name}].emplace_back(s.seed,
                                                       static_cast<double>(s.time_to_success));
    }

    std::map<CellKey, std::vector<double>> values;
    for (auto& [key, rows] : cells) {
        std::sort(rows.begin(), rows.end());
        std::vector<double> v;
        v.reserve(rows.size());
        for (auto& [seed, tts] : rows) v.push_back(tts);
        if (v.size() < 2) {
            report.warnings.push_back("cell " + key.env_name + "/" + key.agent + " has fewer than 2 runs, skipped");
            continue;
        }
        values[key] = std::move(v);
        MeanSd ms = mean_sd(values[key]);
        report.summaries.push_back({key.env_name, key.agent, values[key].size(), ms.mean, ms.sd});
    }

    std::set<std::string> envs;
    for (const auto& [key, v] : values) envs.insert(key.env_name);

    for (const std::string& env_name : envs) {
        std::vector<std::string> agents;
        for (const auto& [key, v] : values) {
            if (key.env_name == env_name) agents.push_back(key.agent);
        }
        for (size_t i = 0; i < agents.size(); ++i) {
            for (size_t j = i + 1; j < agents.size(); ++j) {
                SampleSet sa{agents[i], env_name, values[{env_name, agents[i]}]};
                SampleSet sb{agents[j], env_name, values[{env_name, agents[j]}]};
                // The faster hypothesis goes to the sample with the smaller mean.
                if (mean_sd(sa.values).mean > mean_sd(sb.values).mean) std::swap(sa, sb);

                TTestRow row;
                row.env_name = env_name;
                row.faster = sa.agent;
                row.slower = sb.agent;
                row.test = one_sided_t(sa, sb, welch);
                if (!drop_runs.empty()) {
                    SampleSet da{sa.agent, env_name, drop_indices(sa.values, drop_runs)};
                    SampleSet db{sb.agent, env_name, drop_indices(sb.values, drop_runs)};
                    if (da.values.size() >= 2 && db.values.size() >= 2) {
                        row.has_star = true;
                        row.star = one_sided_t(da, db, welch);
                    } else {
                        report.warnings.push_back("starred reanalysis for " + env_name +
                                                  " skipped: fewer than 2 runs remain");
                    }
                }
                report.ttests.push_back(std::move(row));
            }
        }
    }
    return report;
}

void write_report(const std::string& out_dir, const AnalysisReport& report) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    {
        std::FILE* f = std::fopen((fs::path(out_dir) / "table_summary.csv").string().c_str(), "w");
        if (!f) throw ConfigError("cannot write table_summary.csv");
        std::fputs("env,agent,n,mean,sd\n", f);
        for (const auto& s : report.summaries) {
            std::fprintf(f, "%s,%s,%zu,%.9g,%.9g\n", s.env_name.c_str(), s.agent.c_str(), s.n,
                         s.mean, s.sd);
        }
        std::fclose(f);
    }

    std::set<std::string> envs;
    for (const auto& t : report.ttests) envs.insert(t.env_name);
    for (const std::string& env_name : envs) {
        std::string path = (fs::path(out_dir) / ("ttests_" + env_name + ".csv")).string();
        std::FILE* f = std::fopen(path.c_str(), "w");
        if (!f) throw ConfigError("cannot write " + path);
        std::fputs("faster,slower,t,df,p,significant,t_star,p_star\n", f);
        for (const auto& t : report.ttests) {
            if (t.env_name != env_name) continue;
            std::fprintf(f, "%s,%s,%.9g,%.9g,%.9g,%d", t.faster.c_str(), t.slower.c_str(),
                         t.test.t_statistic, t.test.degrees_of_freedom, t.test.p_value,
                         t.test.significant ? 1 : 0);
            if (t.has_star) {
                std::fprintf(f, ",%.9g,%.9g\n", t.star.t_statistic, t.star.p_value);
            } else {
                std::fputs(",,\n", f);
            }
        }
        std::fclose(f);
    }

    {
        std::ofstream f(fs::path(out_dir) / "report.txt");
        if (!f) throw ConfigError("cannot write report.txt");
        f << "time-to-success summary (frames)\n";
        char buf[160];
        for (const auto& s : report.summaries) {
            std::snprintf(buf, sizeof(buf), "  %-18s %-8s n=%-3zu M=%-12.4g SD=%-12.4g\n",
                          s.env_name.c_str(), s.agent.c_str(), s.n, s.mean, s.sd);
            f << buf;
        }
        f << "\none-sided t-tests (row agent hypothesized faster)\n";
        for (const auto& t : report.ttests) {
            std::snprintf(buf, sizeof(buf), "  %-18s %-8s > %-8s t=%-8.4g p=%-10.4g %s\n",
                          t.env_name.c_str(), t.faster.c_str(), t.slower.c_str(),
                          t.test.t_statistic, t.test.p_value,
                          t.test.significant ? "significant" : "n.s.");
            f << buf;
            if (t.has_star) {
                std::snprintf(buf, sizeof(buf), "  %-18s %-8s > %-8s t*=%-7.4g p*=%-9.4g %s\n",
                              "", t.faster.c_str(), t.slower.c_str(), t.star.t_statistic,
                              t.star.p_value, t.star.significant ? "significant" : "n.s.");
                f << buf;
            }
        }
        for (const auto& w : report.warnings) f << "warning: " << w << "\n";
    }
}

}  // namespace gridrl::stats
