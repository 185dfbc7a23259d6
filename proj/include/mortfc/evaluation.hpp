#pragma once

// Scoring and aggregation of forecast records: per-cell SMAPE, summary and
// grouped median tables, and pairwise signed-rank significance.

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mortfc/common.hpp"
#include "mortfc/records.hpp"
#include "mortfc/smape.hpp"
#include "mortfc/wilcoxon.hpp"

namespace mortfc {

struct EvalRecord {
    std::string method;
    SeriesKey key;
    int horizon = 0;
    double smape = 0.0;
};

/// One SMAPE per (method, country, age, horizon) cell over its forecast steps.
/// Records without actuals (future forecasts) are skipped.
inline std::vector<EvalRecord> evaluate_records(const std::vector<ForecastRecord>& records, double smape_factor = 200.0)
{
    std::vector<EvalRecord> out;
    for (const auto& r : records) {
        if (!r.actual) {
            continue;
        }
        out.push_back({r.method, r.key, r.horizon, smape(*r.actual, r.predicted, smape_factor)});
    }
    return out;
}

// --- grouping ---------------------------------------------------------------

enum class Grouping { Method, Age, Income, Length };

inline const std::array<std::string, 5>& age_group_names()
{
    static const std::array<std::string, 5> names{"Child", "Adolescent", "Adult", "Middle-aged", "Senior"};
    return names;
}

/// Child <12, Adolescent 12-17, Adult 18-34, Middle-aged 35-59, Senior >59.
inline const std::string& age_group(int age)
{
    const auto& n = age_group_names();
    if (age < 12) {
        return n[0];
    }
    if (age < 18) {
        return n[1];
    }
    if (age < 35) {
        return n[2];
    }
    if (age < 60) {
        return n[3];
    }
    return n[4];
}

inline const std::array<std::string, 4>& income_group_names()
{
    static const std::array<std::string, 4> names{"Low", "LowerMiddle", "HigherMiddle", "High"};
    return names;
}

/// Reads "country,income" lines; '#' starts a comment.
inline std::map<std::string, std::string> read_income_map(std::istream& in)
{
    std::map<std::string, std::string> out;
    std::string line;
    int line_no = 0;
    const auto& valid = income_group_names();
    while (std::getline(in, line)) {
        ++line_no;
        auto t = trim(line);
        if (t.empty() || t.front() == '#' || t == "country,income") {
            continue;
        }
        auto f = split(t, ',');
        if (f.size() != 2) {
            throw FormatError("income map line " + std::to_string(line_no) + ": expected 'country,income'");
        }
        auto cls = std::string(trim(f[1]));
        if (std::find(valid.begin(), valid.end(), cls) == valid.end()) {
            throw ValueError("income map line " + std::to_string(line_no) + ": unknown class '" + cls + "'");
        }
        out[std::string(trim(f[0]))] = cls;
    }
    return out;
}

/// Lower-inclusive starts of length quartiles Q2, Q3 and Q4 computed from the
/// per-country history lengths. Each cut is the upper order statistic at the
/// 25/50/75% position; a length equal to a cut falls in the lower bin.
inline std::array<int, 3> length_quartile_bounds(std::vector<int> lengths)
{
    if (lengths.empty()) {
        throw PreconditionError("length quartiles of an empty corpus");
    }
    std::sort(lengths.begin(), lengths.end());
    const double last = static_cast<double>(lengths.size() - 1);
    std::array<int, 3> b{};
    for (int i = 0; i < 3; ++i) {
        auto pos = static_cast<std::size_t>(std::ceil(0.25 * (i + 1) * last));
        b[static_cast<std::size_t>(i)] = lengths[pos] + 1;
    }
    return b;
}

inline std::string length_group(int length, const std::array<int, 3>& bounds)
{
    if (length < bounds[0]) {
        return "Q1";
    }
    if (length < bounds[1]) {
        return "Q2";
    }
    if (length < bounds[2]) {
        return "Q3";
    }
    return "Q4";
}

struct GroupingConfig {
    std::map<std::string, std::string> income;
    std::map<std::string, int> lengths; // country -> years of history
    std::array<int, 3> length_bounds{};

    static GroupingConfig from_lengths(std::map<std::string, int> lengths, std::map<std::string, std::string> income = {})
    {
        GroupingConfig g;
        std::vector<int> ls;
        for (const auto& [c, n] : lengths) {
            ls.push_back(n);
        }
        if (!ls.empty()) {
            g.length_bounds = length_quartile_bounds(ls);
        }
        g.lengths = std::move(lengths);
        g.income = std::move(income);
        return g;
    }

    [[nodiscard]] std::string group_of(const SeriesKey& key, Grouping by) const
    {
        switch (by) {
        case Grouping::Method:
            return "all";
        case Grouping::Age:
            return age_group(key.age);
        case Grouping::Income: {
            auto it = income.find(key.country);
            if (it == income.end()) {
                throw DataError("no income class for country " + key.country);
            }
            return it->second;
        }
        case Grouping::Length: {
            auto it = lengths.find(key.country);
            if (it == lengths.end()) {
                throw DataError("no history length for country " + key.country);
            }
            return length_group(it->second, length_bounds);
        }
        }
        return "all";
    }

    /// Display order of the groups for a grouping kind.
    [[nodiscard]] static std::vector<std::string> group_order(Grouping by)
    {
        switch (by) {
        case Grouping::Method:
            return {"all"};
        case Grouping::Age:
            return {age_group_names().begin(), age_group_names().end()};
        case Grouping::Income:
            return {income_group_names().begin(), income_group_names().end()};
        case Grouping::Length:
            return {"Q1", "Q2", "Q3", "Q4"};
        }
        return {};
    }
};

// --- tables -------------------------------------------------------------------

struct SummaryRow {
    int horizon = 0;
    std::string method;
    double mean = 0.0;
    double median = 0.0;
    double std = 0.0; // sample (n-1); 0 for a single cell
    std::size_t n = 0;
};

inline double sample_std(const std::vector<double>& xs)
{
    if (xs.size() < 2) {
        return 0.0;
    }
    double m = mean(xs);
    double acc = 0.0;
    for (double x : xs) {
        acc += (x - m) * (x - m);
    }
    return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

/// Per (horizon, method) mean/median/std, each horizon sorted by median then mean.
inline std::vector<SummaryRow> summary_table(const std::vector<EvalRecord>& evals)
{
    if (evals.empty()) {
        throw PreconditionError("summary_table: no records");
    }
    std::map<std::pair<int, std::string>, std::vector<double>> cells;
    for (const auto& e : evals) {
        cells[{e.horizon, e.method}].push_back(e.smape);
    }
    std::vector<SummaryRow> rows;
    for (const auto& [k, xs] : cells) {
        rows.push_back({k.first, k.second, mean(xs), median(xs), sample_std(xs), xs.size()});
    }
    std::sort(rows.begin(), rows.end(), [](const SummaryRow& a, const SummaryRow& b) {
        return std::tie(a.horizon, a.median, a.mean, a.method) < std::tie(b.horizon, b.median, b.mean, b.method);
    });
    return rows;
}

struct GroupedRow {
    int horizon = 0;
    std::string method;
    std::string group;
    double median = 0.0;
    std::size_t n = 0;
};

inline std::vector<GroupedRow> grouped_medians(const std::vector<EvalRecord>& evals, Grouping by, const GroupingConfig& cfg)
{
    std::map<std::tuple<int, std::string, std::string>, std::vector<double>> cells;
    for (const auto& e : evals) {
        cells[{e.horizon, e.method, cfg.group_of(e.key, by)}].push_back(e.smape);
    }
    auto order = GroupingConfig::group_order(by);
    auto rank = [&](const std::string& g) { return std::find(order.begin(), order.end(), g) - order.begin(); };
    std::vector<GroupedRow> rows;
    for (const auto& [k, xs] : cells) {
        rows.push_back({std::get<0>(k), std::get<1>(k), std::get<2>(k), median(xs), xs.size()});
    }
    // per-method rows rank methods, other groupings keep a stable method x group grid
    std::sort(rows.begin(), rows.end(), [&](const GroupedRow& a, const GroupedRow& b) {
        if (by == Grouping::Method) {
            return std::tie(a.horizon, a.median, a.method) < std::tie(b.horizon, b.median, b.method);
        }
        return std::make_tuple(a.horizon, a.method, rank(a.group)) < std::make_tuple(b.horizon, b.method, rank(b.group));
    });
    return rows;
}

struct SignificanceResult {
    int horizon = 0;
    std::string method_1;
    std::string method_2;
    double wilcoxon_p = 1.0;
    double median_diff = 0.0; // median(SMAPE_1) - median(SMAPE_2), percentage points
    std::size_t n_pairs = 0;
};

/// Signed-rank tests for every ordered method pair within each horizon, on
/// the (country, age) cells both methods scored.
inline std::vector<SignificanceResult> pairwise_tests(const std::vector<EvalRecord>& evals)
{
    std::map<int, std::map<std::string, std::map<SeriesKey, double>>> by_h;
    for (const auto& e : evals) {
        by_h[e.horizon][e.method][e.key] = e.smape;
    }
    std::vector<SignificanceResult> out;
    for (const auto& [h, methods] : by_h) {
        for (const auto& [m1, c1] : methods) {
            for (const auto& [m2, c2] : methods) {
                if (m1 == m2) {
                    continue;
                }
                std::vector<double> s1;
                std::vector<double> s2;
                std::vector<double> diffs;
                for (const auto& [key, v1] : c1) {
                    auto it = c2.find(key);
                    if (it == c2.end()) {
                        continue;
                    }
                    s1.push_back(v1);
                    s2.push_back(it->second);
                    diffs.push_back(v1 - it->second);
                }
                if (diffs.empty()) {
                    continue;
                }
                SignificanceResult r;
                r.horizon = h;
                r.method_1 = m1;
                r.method_2 = m2;
                r.wilcoxon_p = wilcoxon_signed_rank(diffs).p_value;
                r.median_diff = median(s1) - median(s2);
                r.n_pairs = diffs.size();
                out.push_back(std::move(r));
            }
        }
    }
    return out;
}

struct SignificanceOptions {
    double alpha = 0.05;
    double practical_threshold = 5.0;
};

/// Pairs where method_1 is both statistically (p < alpha) and practically
/// (median at least `practical_threshold` points lower) better, sorted by
/// median difference ascending.
inline std::vector<SignificanceResult> significance_table(const std::vector<SignificanceResult>& tests, const SignificanceOptions& opt = {})
{
    std::vector<SignificanceResult> kept;
    for (const auto& t : tests) {
        if (t.wilcoxon_p < opt.alpha && t.median_diff <= -opt.practical_threshold) {
            kept.push_back(t);
        }
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        return std::tie(a.horizon, a.median_diff, a.method_1, a.method_2) < std::tie(b.horizon, b.median_diff, b.method_1, b.method_2);
    });
    return kept;
}

inline std::vector<SignificanceResult> significance_table(const std::vector<EvalRecord>& evals, const SignificanceOptions& opt = {})
{
    return significance_table(pairwise_tests(evals), opt);
}

} // namespace mortfc
