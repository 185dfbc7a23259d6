#pragma once

// Run manifests, result tables as CSV and figures as SVG. Every CSV starts
// with a "# manifest=<hash>" line tying it to the run that produced it.

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mortfc/common.hpp"
#include "mortfc/evaluation.hpp"
#include "mortfc/records.hpp"

namespace mortfc {

inline constexpr const char* kToolVersion = "1.0.0";

struct RunManifest {
    std::string command;
    nlohmann::json config = nlohmann::json::object();
    std::string corpus_fingerprint;
    std::vector<std::string> methods;
    std::uint64_t seed = 0;
    std::string created; // wall-clock timestamp, empty when deterministic
    std::string tool_version = kToolVersion;

    /// Hash over everything except the timestamp.
    [[nodiscard]] std::string hash() const
    {
        nlohmann::json j = body();
        Fnv1a h;
        h.update(j.dump());
        return hex64(h.digest());
    }

    [[nodiscard]] nlohmann::json to_json() const
    {
        auto j = body();
        j["hash"] = hash();
        if (!created.empty()) {
            j["created"] = created;
        }
        return j;
    }

    static RunManifest from_json(const nlohmann::json& j)
    {
        RunManifest m;
        m.command = j.value("command", "");
        m.config = j.value("config", nlohmann::json::object());
        m.corpus_fingerprint = j.value("corpus_fingerprint", "");
        m.methods = j.value("methods", std::vector<std::string>{});
        m.seed = j.value("seed", std::uint64_t{0});
        m.created = j.value("created", "");
        m.tool_version = j.value("tool_version", kToolVersion);
        return m;
    }

private:
    [[nodiscard]] nlohmann::json body() const
    {
        return {{"command", command}, {"config", config}, {"corpus_fingerprint", corpus_fingerprint},
                {"methods", methods},  {"seed", seed},     {"tool_version", tool_version}};
    }
};

/// The hash from a leading "# manifest=" line, or empty.
inline std::string read_manifest_hash(std::istream& in)
{
    std::string line;
    auto pos = in.tellg();
    while (std::getline(in, line)) {
        auto t = trim(line);
        if (t.empty()) {
            continue;
        }
        if (t.starts_with("# manifest=")) {
            return std::string(t.substr(11));
        }
        break;
    }
    in.clear();
    in.seekg(pos);
    return {};
}

namespace report_detail {

inline void manifest_line(std::ostream& out, const std::string& hash)
{
    if (!hash.empty()) {
        out << "# manifest=" << hash << '\n';
    }
}

inline std::string xml_escape(std::string_view s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&':
            out += "&amp;";
            break;
        case '<':
            out += "&lt;";
            break;
        case '>':
            out += "&gt;";
            break;
        case '"':
            out += "&quot;";
            break;
        default:
            out += c;
        }
    }
    return out;
}

inline std::string num(double v) { return format_fixed(v, 2); }

} // namespace report_detail

// --- tables ----------------------------------------------------------------------

inline void write_eval_csv(std::ostream& out, const std::vector<EvalRecord>& evals, const std::string& hash)
{
    report_detail::manifest_line(out, hash);
    out << "method,country,age,horizon,smape\n";
    for (const auto& e : evals) {
        out << e.method << ',' << e.key.country << ',' << e.key.age << ',' << e.horizon << ',' << format_double(e.smape) << '\n';
    }
}

inline void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows, const std::string& hash)
{
    report_detail::manifest_line(out, hash);
    out << "horizon,method,mean,median,std,n\n";
    for (const auto& r : rows) {
        out << r.horizon << ',' << r.method << ',' << format_double(r.mean) << ',' << format_double(r.median) << ',' << format_double(r.std) << ','
            << r.n << '\n';
    }
}

inline void write_grouped_csv(std::ostream& out, const std::vector<GroupedRow>& rows, const std::string& hash, const std::string& extra_comment = {})
{
    report_detail::manifest_line(out, hash);
    if (!extra_comment.empty()) {
        out << "# " << extra_comment << '\n';
    }
    out << "horizon,method,group,median,n\n";
    for (const auto& r : rows) {
        out << r.horizon << ',' << r.method << ',' << r.group << ',' << format_double(r.median) << ',' << r.n << '\n';
    }
}

inline void write_significance_csv(std::ostream& out, const std::vector<SignificanceResult>& rows, const std::string& hash)
{
    report_detail::manifest_line(out, hash);
    out << "horizon,method_1,method_2,wilcoxon_p,median_diff,n_pairs\n";
    for (const auto& r : rows) {
        out << r.horizon << ',' << r.method_1 << ',' << r.method_2 << ',' << format_double(r.wilcoxon_p) << ',' << format_double(r.median_diff) << ','
            << r.n_pairs << '\n';
    }
}

/// Human-readable significance listing with p-values at two decimals.
inline std::string format_significance_text(const std::vector<SignificanceResult>& rows)
{
    std::ostringstream os;
    int h = -1;
    for (const auto& r : rows) {
        if (r.horizon != h) {
            h = r.horizon;
            os << "horizon " << h << ":\n";
        }
        os << "  " << r.method_1 << " vs " << r.method_2 << "  p=" << format_fixed(r.wilcoxon_p, 2) << "  median diff=" << format_fixed(r.median_diff, 2)
           << "  (n=" << r.n_pairs << ")\n";
    }
    if (rows.empty()) {
        os << "no significant differences\n";
    }
    return os.str();
}

// --- boxplots ----------------------------------------------------------------------

struct BoxStats {
    std::string label;
    double q1 = 0, median = 0, q3 = 0;
    double whisker_low = 0, whisker_high = 0; // furthest points within 1.5 IQR of the box
    std::vector<double> outliers;
    std::size_t n = 0;
};

/// Quantile with linear interpolation between order statistics.
inline double quantile_sorted(const std::vector<double>& xs, double p)
{
    if (xs.empty()) {
        throw PreconditionError("quantile of empty sample");
    }
    const double pos = p * static_cast<double>(xs.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, xs.size() - 1);
    return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

inline BoxStats box_stats(std::string label, std::vector<double> xs)
{
    std::sort(xs.begin(), xs.end());
    BoxStats b;
    b.label = std::move(label);
    b.n = xs.size();
    b.q1 = quantile_sorted(xs, 0.25);
    b.median = quantile_sorted(xs, 0.5);
    b.q3 = quantile_sorted(xs, 0.75);
    const double iqr = b.q3 - b.q1;
    const double lo_fence = b.q1 - 1.5 * iqr;
    const double hi_fence = b.q3 + 1.5 * iqr;
    b.whisker_low = b.q1;
    b.whisker_high = b.q3;
    for (double x : xs) {
        if (x < lo_fence || x > hi_fence) {
            b.outliers.push_back(x);
        } else {
            b.whisker_low = std::min(b.whisker_low, x);
            b.whisker_high = std::max(b.whisker_high, x);
        }
    }
    return b;
}

/// Per-horizon boxes of cell SMAPE by method, ordered by median.
inline std::map<int, std::vector<BoxStats>> boxplot_data(const std::vector<EvalRecord>& evals)
{
    std::map<int, std::map<std::string, std::vector<double>>> by;
    for (const auto& e : evals) {
        by[e.horizon][e.method].push_back(e.smape);
    }
    std::map<int, std::vector<BoxStats>> out;
    for (auto& [h, methods] : by) {
        auto& v = out[h];
        for (auto& [m, xs] : methods) {
            v.push_back(box_stats(m, std::move(xs)));
        }
        std::sort(v.begin(), v.end(), [](const BoxStats& a, const BoxStats& b) { return std::tie(a.median, a.label) < std::tie(b.median, b.label); });
    }
    return out;
}

inline void write_boxplot_csv(std::ostream& out, const std::map<int, std::vector<BoxStats>>& data, const std::string& hash)
{
    report_detail::manifest_line(out, hash);
    out << "horizon,method,n,whisker_low,q1,median,q3,whisker_high,n_outliers\n";
    for (const auto& [h, boxes] : data) {
        for (const auto& b : boxes) {
            out << h << ',' << b.label << ',' << b.n << ',' << format_double(b.whisker_low) << ',' << format_double(b.q1) << ','
                << format_double(b.median) << ',' << format_double(b.q3) << ',' << format_double(b.whisker_high) << ',' << b.outliers.size() << '\n';
        }
    }
}

inline void write_svg_header(std::ostream& out, int width, int height, const std::string& hash, const std::string& timestamp)
{
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << ' ' << height
        << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    out << "<!-- manifest=" << hash << " -->\n";
    if (!timestamp.empty()) {
        out << "<!-- created=" << timestamp << " -->\n";
    }
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

inline void write_boxplot_svg(std::ostream& out, int horizon, const std::vector<BoxStats>& boxes, const std::string& hash, const std::string& timestamp = {})
{
    using report_detail::num;
    const int left = 60, top = 40, plot_h = 320, slot = 70;
    const int width = left + 30 + slot * static_cast<int>(std::max<std::size_t>(boxes.size(), 1));
    const int height = top + plot_h + 80;
    double ymax = 1.0;
    for (const auto& b : boxes) {
        ymax = std::max(ymax, b.whisker_high);
        for (double o : b.outliers) {
            ymax = std::max(ymax, o);
        }
    }
    ymax *= 1.05;
    auto y = [&](double v) { return top + plot_h - v / ymax * plot_h; };
    write_svg_header(out, width, height, hash, timestamp);
    out << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">SMAPE by method, horizon " << horizon << "</text>\n";
    out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        double v = ymax * i / 4.0;
        out << "<text x=\"" << left - 5 << "\" y=\"" << num(y(v) + 4) << "\" text-anchor=\"end\">" << num(v) << "</text>\n";
        out << "<line x1=\"" << left << "\" y1=\"" << num(y(v)) << "\" x2=\"" << width - 20 << "\" y2=\"" << num(y(v))
            << "\" stroke=\"#ddd\"/>\n";
    }
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const auto& b = boxes[i];
        const double cx = left + 20 + slot * (static_cast<double>(i) + 0.5);
        const double hw = slot * 0.3;
        out << "<g class=\"box\" data-method=\"" << report_detail::xml_escape(b.label) << "\">\n";
        out << "<line x1=\"" << num(cx) << "\" y1=\"" << num(y(b.whisker_low)) << "\" x2=\"" << num(cx) << "\" y2=\"" << num(y(b.whisker_high))
            << "\" stroke=\"black\"/>\n";
        out << "<rect x=\"" << num(cx - hw) << "\" y=\"" << num(y(b.q3)) << "\" width=\"" << num(2 * hw) << "\" height=\""
            << num(std::max(0.0, y(b.q1) - y(b.q3))) << "\" fill=\"#9ecae1\" stroke=\"black\"/>\n";
        out << "<line x1=\"" << num(cx - hw) << "\" y1=\"" << num(y(b.median)) << "\" x2=\"" << num(cx + hw) << "\" y2=\"" << num(y(b.median))
            << "\" stroke=\"#d62728\" stroke-width=\"2\"/>\n";
        for (double o : b.outliers) {
            out << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(y(o)) << "\" r=\"1.5\" fill=\"none\" stroke=\"#555\"/>\n";
        }
        out << "<text x=\"" << num(cx) << "\" y=\"" << top + plot_h + 15 << "\" text-anchor=\"end\" transform=\"rotate(-35 " << num(cx) << ' '
            << top + plot_h + 15 << ")\">" << report_detail::xml_escape(b.label) << "</text>\n";
        out << "</g>\n";
    }
    out << "</svg>\n";
}

// --- heatmaps ----------------------------------------------------------------------

/// Method x group grid of medians for one horizon; darker cells are larger.
inline void write_heatmap_svg(std::ostream& out, int horizon, const std::string& grouping, const std::vector<GroupedRow>& rows,
                              const std::vector<std::string>& group_order, const std::string& hash, const std::string& timestamp = {})
{
    std::vector<std::string> methods;
    std::vector<std::string> groups;
    std::map<std::pair<std::string, std::string>, double> cell;
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& r : rows) {
        if (r.horizon != horizon) {
            continue;
        }
        if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) {
            methods.push_back(r.method);
        }
        cell[{r.method, r.group}] = r.median;
        lo = std::min(lo, r.median);
        hi = std::max(hi, r.median);
    }
    for (const auto& g : group_order) {
        for (const auto& [k, v] : cell) {
            if (k.second == g) {
                groups.push_back(g);
                break;
            }
        }
    }
    const int left = 170, top = 50, cw = 95, ch = 26;
    const int width = left + cw * static_cast<int>(std::max<std::size_t>(groups.size(), 1)) + 20;
    const int height = top + ch * static_cast<int>(std::max<std::size_t>(methods.size(), 1)) + 20;
    write_svg_header(out, width, height, hash, timestamp);
    out << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">Median SMAPE by " << report_detail::xml_escape(grouping)
        << ", horizon " << horizon << "</text>\n";
    for (std::size_t j = 0; j < groups.size(); ++j) {
        out << "<text x=\"" << left + cw * static_cast<int>(j) + cw / 2 << "\" y=\"" << top - 8 << "\" text-anchor=\"middle\">"
            << report_detail::xml_escape(groups[j]) << "</text>\n";
    }
    for (std::size_t i = 0; i < methods.size(); ++i) {
        const int yy = top + ch * static_cast<int>(i);
        out << "<text x=\"" << left - 8 << "\" y=\"" << yy + ch / 2 + 4 << "\" text-anchor=\"end\">" << report_detail::xml_escape(methods[i])
            << "</text>\n";
        for (std::size_t j = 0; j < groups.size(); ++j) {
            auto it = cell.find({methods[i], groups[j]});
            const int xx = left + cw * static_cast<int>(j);
            if (it == cell.end()) {
                out << "<rect x=\"" << xx << "\" y=\"" << yy << "\" width=\"" << cw << "\" height=\"" << ch << "\" fill=\"#eee\"/>\n";
                continue;
            }
            const double f = hi > lo ? (it->second - lo) / (hi - lo) : 0.5;
            const int shade = static_cast<int>(std::lround(245 - 200 * f));
            out << "<rect x=\"" << xx << "\" y=\"" << yy << "\" width=\"" << cw << "\" height=\"" << ch << "\" fill=\"rgb(" << shade << ',' << shade
                << ",255)\" stroke=\"white\" data-median=\"" << format_double(it->second) << "\"/>\n";
            out << "<text x=\"" << xx + cw / 2 << "\" y=\"" << yy + ch / 2 + 4 << "\" text-anchor=\"middle\" fill=\"" << (f > 0.6 ? "white" : "black")
                << "\">" << report_detail::num(it->second) << "</text>\n";
        }
    }
    out << "</svg>\n";
}

// --- trajectories --------------------------------------------------------------------

struct TrajectoryLine {
    std::string label;
    std::vector<std::pair<int, double>> points; // year, rate
};

struct TrajectoryPanel {
    int age = 0;
    std::vector<TrajectoryLine> lines;
};

/// Validation actuals, validation forecasts and future forecasts of one
/// country and horizon for each requested age.
inline std::vector<TrajectoryPanel> trajectory_data(const std::vector<ForecastRecord>& backtest, const std::vector<ForecastRecord>& future,
                                                    const std::string& country, const std::vector<int>& ages, int horizon)
{
    std::vector<TrajectoryPanel> panels;
    for (int age : ages) {
        TrajectoryPanel p;
        p.age = age;
        bool have_actual = false;
        for (const auto& r : backtest) {
            if (r.key.country != country || r.key.age != age || r.horizon != horizon) {
                continue;
            }
            if (r.actual && !have_actual) {
                TrajectoryLine a{"actual", {}};
                for (std::size_t s = 0; s < r.actual->size(); ++s) {
                    a.points.emplace_back(r.first_year + static_cast<int>(s), (*r.actual)[s]);
                }
                p.lines.insert(p.lines.begin(), std::move(a));
                have_actual = true;
            }
            TrajectoryLine l{r.method + " (validation)", {}};
            for (std::size_t s = 0; s < r.predicted.size(); ++s) {
                l.points.emplace_back(r.first_year + static_cast<int>(s), r.predicted[s]);
            }
            p.lines.push_back(std::move(l));
        }
        for (const auto& r : future) {
            if (r.key.country != country || r.key.age != age || r.horizon != horizon) {
                continue;
            }
            TrajectoryLine l{r.method + " (future)", {}};
            for (std::size_t s = 0; s < r.predicted.size(); ++s) {
                l.points.emplace_back(r.first_year + static_cast<int>(s), r.predicted[s]);
            }
            p.lines.push_back(std::move(l));
        }
        panels.push_back(std::move(p));
    }
    return panels;
}

inline void write_trajectory_csv(std::ostream& out, const std::string& country, const std::vector<TrajectoryPanel>& panels, const std::string& hash)
{
    report_detail::manifest_line(out, hash);
    out << "country,age,series,year,rate\n";
    for (const auto& p : panels) {
        for (const auto& l : p.lines) {
            for (const auto& [yr, v] : l.points) {
                out << country << ',' << p.age << ',' << l.label << ',' << yr << ',' << format_double(v) << '\n';
            }
        }
    }
}

/// One panel per age side by side; log-scaled rate axis.
inline void write_trajectory_svg(std::ostream& out, const std::string& country, int horizon, const std::vector<TrajectoryPanel>& panels,
                                 const std::string& hash, const std::string& timestamp = {})
{
    using report_detail::num;
    static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    const int pw = 320, ph = 240, margin = 50, legend_h = 18;
    std::size_t n_lines = 0;
    for (const auto& p : panels) {
        n_lines = std::max(n_lines, p.lines.size());
    }
    const int width = margin + static_cast<int>(panels.size()) * (pw + margin);
    const int height = 50 + ph + 40 + legend_h * static_cast<int>(n_lines);
    write_svg_header(out, std::max(width, 200), height, hash, timestamp);
    out << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << report_detail::xml_escape(country) << ", horizon "
        << horizon << "</text>\n";
    for (std::size_t i = 0; i < panels.size(); ++i) {
        const auto& p = panels[i];
        const int x0 = margin + static_cast<int>(i) * (pw + margin);
        const int y0 = 50;
        int ymin_year = 1 << 30, ymax_year = -(1 << 30);
        double lo = INFINITY, hi = -INFINITY;
        for (const auto& l : p.lines) {
            for (const auto& [yr, v] : l.points) {
                ymin_year = std::min(ymin_year, yr);
                ymax_year = std::max(ymax_year, yr);
                lo = std::min(lo, std::log10(v));
                hi = std::max(hi, std::log10(v));
            }
        }
        out << "<g class=\"panel\" data-age=\"" << p.age << "\">\n";
        out << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << pw << "\" height=\"" << ph << "\" fill=\"none\" stroke=\"black\"/>\n";
        out << "<text x=\"" << x0 + pw / 2 << "\" y=\"" << y0 - 6 << "\" text-anchor=\"middle\">age " << p.age << "</text>\n";
        if (ymin_year > ymax_year) {
            out << "</g>\n";
            continue;
        }
        if (hi - lo < 1e-9) {
            lo -= 0.5;
            hi += 0.5;
        }
        const double span_years = std::max(1, ymax_year - ymin_year);
        auto px = [&](int yr) { return x0 + (yr - ymin_year) / span_years * pw; };
        auto py = [&](double v) { return y0 + ph - (std::log10(v) - lo) / (hi - lo) * ph; };
        out << "<text x=\"" << x0 << "\" y=\"" << y0 + ph + 14 << "\">" << ymin_year << "</text>\n";
        out << "<text x=\"" << x0 + pw << "\" y=\"" << y0 + ph + 14 << "\" text-anchor=\"end\">" << ymax_year << "</text>\n";
        out << "<text x=\"" << x0 - 4 << "\" y=\"" << y0 + 10 << "\" text-anchor=\"end\">" << format_fixed(std::pow(10.0, hi), 5) << "</text>\n";
        out << "<text x=\"" << x0 - 4 << "\" y=\"" << y0 + ph << "\" text-anchor=\"end\">" << format_fixed(std::pow(10.0, lo), 5) << "</text>\n";
        for (std::size_t j = 0; j < p.lines.size(); ++j) {
            const auto& l = p.lines[j];
            const char* color = l.label == "actual" ? "black" : palette[j % 10];
            out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"" << (l.label.ends_with("(future)") ? " stroke-dasharray=\"4 3\"" : "")
                << " data-series=\"" << report_detail::xml_escape(l.label) << "\" points=\"";
            for (std::size_t k = 0; k < l.points.size(); ++k) {
                out << (k ? " " : "") << num(px(l.points[k].first)) << ',' << num(py(l.points[k].second));
            }
            out << "\"/>\n";
            if (i == 0) {
                const int ly = y0 + ph + 34 + legend_h * static_cast<int>(j);
                out << "<line x1=\"" << x0 << "\" y1=\"" << ly - 4 << "\" x2=\"" << x0 + 20 << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color
                    << "\" stroke-width=\"2\"/>\n";
                out << "<text x=\"" << x0 + 26 << "\" y=\"" << ly << "\">" << report_detail::xml_escape(l.label) << "</text>\n";
            }
        }
        out << "</g>\n";
    }
    out << "</svg>\n";
}

} // namespace mortfc
