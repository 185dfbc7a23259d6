#pragma once

// Forecast records and their CSV form:
//   method,country,age,horizon,step,year,predicted,actual
// one line per forecast step; `actual` is empty for future forecasts.

#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "mortfc/common.hpp"
#include "mortfc/hmd.hpp"

namespace mortfc {

struct ForecastRecord {
    std::string method;
    SeriesKey key;
    int horizon = 0;
    int first_year = 0; // calendar year of step 1
    std::vector<double> predicted;
    std::optional<std::vector<double>> actual;

    friend bool operator==(const ForecastRecord&, const ForecastRecord&) = default;
};

/// A (method, series, horizon) cell that produced no usable forecast.
struct CellFailure {
    std::string method;
    SeriesKey key;
    int horizon = 0;
    std::string message;
};

inline bool record_order(const ForecastRecord& a, const ForecastRecord& b)
{
    return std::tie(a.method, a.key, a.horizon) < std::tie(b.method, b.key, b.horizon);
}

inline void write_records_csv(std::ostream& out, const std::vector<ForecastRecord>& records, const std::string& manifest_hash = {})
{
    if (!manifest_hash.empty()) {
        out << "# manifest=" << manifest_hash << '\n';
    }
    out << "method,country,age,horizon,step,year,predicted,actual\n";
    for (const auto& r : records) {
        for (std::size_t s = 0; s < r.predicted.size(); ++s) {
            out << r.method << ',' << r.key.country << ',' << r.key.age << ',' << r.horizon << ',' << s + 1 << ','
                << r.first_year + static_cast<int>(s) << ',' << format_double(r.predicted[s]) << ',';
            if (r.actual) {
                out << format_double((*r.actual)[s]);
            }
            out << '\n';
        }
    }
}

inline std::vector<ForecastRecord> read_records_csv(std::istream& in)
{
    std::map<std::tuple<std::string, SeriesKey, int>, ForecastRecord> cells;
    std::string line;
    int line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        auto t = trim(line);
        if (t.empty() || t.front() == '#') {
            continue;
        }
        if (!header) {
            if (t != "method,country,age,horizon,step,year,predicted,actual") {
                throw FormatError("line " + std::to_string(line_no) + ": unexpected records header");
            }
            header = true;
            continue;
        }
        auto f = split(t, ',');
        if (f.size() == 7) {
            f.emplace_back();
        }
        if (f.size() != 8) {
            throw FormatError("line " + std::to_string(line_no) + ": expected 8 fields");
        }
        auto age = parse_int(f[2]);
        auto horizon = parse_int(f[3]);
        auto step = parse_int(f[4]);
        auto year = parse_int(f[5]);
        auto pred = parse_double(f[6]);
        if (!age || !horizon || !step || !year || !pred || *step < 1) {
            throw FormatError("line " + std::to_string(line_no) + ": malformed record");
        }
        std::optional<double> act;
        if (!f[7].empty()) {
            act = parse_double(f[7]);
            if (!act) {
                throw FormatError("line " + std::to_string(line_no) + ": malformed actual");
            }
        }
        SeriesKey key{f[1], static_cast<int>(*age)};
        auto& rec = cells[{f[0], key, static_cast<int>(*horizon)}];
        if (rec.predicted.empty()) {
            rec.method = f[0];
            rec.key = key;
            rec.horizon = static_cast<int>(*horizon);
            rec.first_year = static_cast<int>(*year - *step + 1);
            if (act) {
                rec.actual.emplace();
            }
        }
        if (static_cast<long long>(rec.predicted.size()) + 1 != *step || rec.actual.has_value() != act.has_value()) {
            throw FormatError("line " + std::to_string(line_no) + ": steps out of order or mixed actual presence");
        }
        rec.predicted.push_back(*pred);
        if (act) {
            rec.actual->push_back(*act);
        }
    }
    std::vector<ForecastRecord> out;
    out.reserve(cells.size());
    for (auto& [k, r] : cells) {
        if (static_cast<int>(r.predicted.size()) != r.horizon) {
            throw FormatError("record " + r.method + "/" + r.key.country + "/" + std::to_string(r.key.age) + ": step count differs from horizon");
        }
        out.push_back(std::move(r));
    }
    return out;
}

inline void write_failures_csv(std::ostream& out, const std::vector<CellFailure>& failures)
{
    out << "method,country,age,horizon,message\n";
    for (const auto& f : failures) {
        std::string msg = f.message;
        for (char& c : msg) {
            if (c == ',' || c == '\n') {
                c = ';';
            }
        }
        out << f.method << ',' << f.key.country << ',' << f.key.age << ',' << f.horizon << ',' << msg << '\n';
    }
}

} // namespace mortfc
