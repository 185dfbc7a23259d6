#pragma once

// Human Mortality Database 1x1 life tables: parsing, series extraction and
// the canonical corpus CSV dump.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mortfc/common.hpp"

namespace mortfc {

struct SeriesKey {
    std::string country;
    int age = 0;

    friend auto operator<=>(const SeriesKey&, const SeriesKey&) = default;
};

struct TimeSeries {
    SeriesKey key;
    int start_year = 0;
    std::vector<double> values;

    [[nodiscard]] int end_year() const { return start_year + static_cast<int>(values.size()) - 1; }
    [[nodiscard]] std::size_t size() const { return values.size(); }
};

/// One country's year x age matrix of central death rates. Row-major by year,
/// 111 columns where column 110 stands for the open "110+" interval.
class MortalitySurface {
public:
    MortalitySurface() = default;
    MortalitySurface(std::string country, int first_year, int n_years)
        : country_(std::move(country)), first_year_(first_year), n_years_(n_years),
          rates_(static_cast<std::size_t>(n_years) * kAgeCount, 0.0),
          missing_(static_cast<std::size_t>(n_years) * kAgeCount, 1)
    {
    }

    [[nodiscard]] const std::string& country() const { return country_; }
    void set_country(std::string c) { country_ = std::move(c); }
    [[nodiscard]] int first_year() const { return first_year_; }
    [[nodiscard]] int last_year() const { return first_year_ + n_years_ - 1; }
    [[nodiscard]] int n_years() const { return n_years_; }
    [[nodiscard]] std::size_t cell_count() const { return rates_.size(); }

    [[nodiscard]] std::vector<int> years() const
    {
        std::vector<int> ys(static_cast<std::size_t>(n_years_));
        for (int i = 0; i < n_years_; ++i) {
            ys[static_cast<std::size_t>(i)] = first_year_ + i;
        }
        return ys;
    }

    [[nodiscard]] double rate(int year, int age) const { return rates_[index(year, age)]; }
    [[nodiscard]] bool missing(int year, int age) const { return missing_[index(year, age)] != 0; }

    void set_rate(int year, int age, double mx)
    {
        rates_[index(year, age)] = mx;
        missing_[index(year, age)] = 0;
    }
    void set_missing(int year, int age)
    {
        rates_[index(year, age)] = 0.0;
        missing_[index(year, age)] = 1;
    }

    /// Copy of the rows for years [from, to].
    [[nodiscard]] MortalitySurface slice_years(int from, int to) const
    {
        if (from < first_year_ || to > last_year() || from > to) {
            throw PreconditionError("slice_years: range outside surface");
        }
        MortalitySurface out(country_, from, to - from + 1);
        auto begin = static_cast<std::size_t>(from - first_year_) * kAgeCount;
        auto end = static_cast<std::size_t>(to - first_year_ + 1) * kAgeCount;
        std::copy(rates_.begin() + static_cast<std::ptrdiff_t>(begin), rates_.begin() + static_cast<std::ptrdiff_t>(end), out.rates_.begin());
        std::copy(missing_.begin() + static_cast<std::ptrdiff_t>(begin), missing_.begin() + static_cast<std::ptrdiff_t>(end), out.missing_.begin());
        return out;
    }

    friend bool operator==(const MortalitySurface&, const MortalitySurface&) = default;

private:
    [[nodiscard]] std::size_t index(int year, int age) const
    {
        if (year < first_year_ || year > last_year() || age < 0 || age > kMaxAge) {
            throw std::out_of_range("surface index (" + std::to_string(year) + ", " + std::to_string(age) + ") out of range for " + country_);
        }
        return static_cast<std::size_t>(year - first_year_) * kAgeCount + static_cast<std::size_t>(age);
    }

    std::string country_;
    int first_year_ = 0;
    int n_years_ = 0;
    std::vector<double> rates_;
    std::vector<char> missing_;
};

namespace detail {

inline int parse_age_token(std::string_view tok, int line_no)
{
    if (tok == "110+") {
        return kMaxAge;
    }
    auto age = parse_int(tok);
    if (!age || *age < 0 || *age >= kMaxAge) {
        throw FormatError("line " + std::to_string(line_no) + ": invalid age '" + std::string(tok) + "'");
    }
    return static_cast<int>(*age);
}

} // namespace detail

/// Parses an HMD 1x1 life table. Only the mx column is kept; "." becomes a
/// missing cell.
inline MortalitySurface parse_life_table(std::istream& in, std::string country = {})
{
    std::string line;
    int line_no = 0;
    bool header_seen = false;
    std::map<int, std::vector<std::pair<int, std::optional<double>>>> by_year;

    while (std::getline(in, line)) {
        ++line_no;
        auto fields = split_whitespace(line);
        if (!header_seen) {
            if (line_no == 1) {
                continue; // title
            }
            if (fields.empty()) {
                continue;
            }
            if (fields.size() < 3 || fields[0] != "Year" || fields[1] != "Age" || fields[2] != "mx") {
                throw FormatError("line " + std::to_string(line_no) + ": expected header beginning 'Year Age mx', got '" + std::string(trim(line)) + "'");
            }
            header_seen = true;
            continue;
        }
        if (fields.empty()) {
            continue;
        }
        if (fields.size() != 10) {
            throw FormatError("line " + std::to_string(line_no) + ": expected 10 columns, got " + std::to_string(fields.size()));
        }
        auto year = parse_int(fields[0]);
        if (!year) {
            throw FormatError("line " + std::to_string(line_no) + ": invalid year '" + std::string(fields[0]) + "'");
        }
        int age = detail::parse_age_token(fields[1], line_no);
        std::optional<double> mx;
        if (fields[2] != ".") {
            mx = parse_double(fields[2]);
            if (!mx || !std::isfinite(*mx) || *mx < 0.0) {
                throw ValueError("line " + std::to_string(line_no) + ": invalid mx '" + std::string(fields[2]) + "'");
            }
        }
        by_year[static_cast<int>(*year)].emplace_back(age, mx);
    }
    if (!header_seen) {
        throw FormatError("line " + std::to_string(line_no) + ": missing 'Year Age mx' header");
    }
    if (by_year.empty()) {
        throw StructuralError("life table has no data rows");
    }

    int first = by_year.begin()->first;
    int last = by_year.rbegin()->first;
    if (last - first + 1 != static_cast<int>(by_year.size())) {
        int expect = first;
        for (const auto& [y, rows] : by_year) {
            if (y != expect) {
                throw StructuralError("year gap: " + std::to_string(expect) + " missing before " + std::to_string(y));
            }
            ++expect;
        }
    }

    MortalitySurface surface(std::move(country), first, last - first + 1);
    for (const auto& [year, rows] : by_year) {
        if (rows.size() != static_cast<std::size_t>(kAgeCount)) {
            throw StructuralError("year " + std::to_string(year) + " has " + std::to_string(rows.size()) + " age rows, expected 111");
        }
        std::vector<char> seen(kAgeCount, 0);
        for (const auto& [age, mx] : rows) {
            if (seen[static_cast<std::size_t>(age)]) {
                throw StructuralError("year " + std::to_string(year) + " repeats age " + std::to_string(age));
            }
            seen[static_cast<std::size_t>(age)] = 1;
            if (mx) {
                surface.set_rate(year, age, *mx);
            } else {
                surface.set_missing(year, age);
            }
        }
    }
    return surface;
}

inline MortalitySurface parse_life_table(std::string_view text, std::string country = {})
{
    std::istringstream in{std::string(text)};
    return parse_life_table(in, std::move(country));
}

/// Writes a surface in HMD row layout. Columns other than mx are written as ".".
inline void write_life_table(std::ostream& out, const MortalitySurface& s)
{
    out << s.country() << ", Life tables (period 1x1), Total\n\n";
    out << "  Year          Age         mx       qx    ax      lx      dx      Lx       Tx     ex\n";
    for (int year = s.first_year(); year <= s.last_year(); ++year) {
        for (int age = 0; age <= kMaxAge; ++age) {
            out << "  " << year << "  " << (age == kMaxAge ? std::string("110+") : std::to_string(age)) << "  "
                << (s.missing(year, age) ? std::string(".") : format_double(s.rate(year, age)))
                << "  .  .  .  .  .  .  .\n";
        }
    }
}

/// Country code from a corpus filename: the stem up to the first '.'.
inline std::string country_from_filename(const std::filesystem::path& p)
{
    auto name = p.filename().string();
    auto dot = name.find('.');
    auto code = name.substr(0, dot);
    std::transform(code.begin(), code.end(), code.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return code;
}

/// Loads one life table per regular file in `dir`. Fails on the first bad
/// file with the file name in the message; no partial result.
inline std::vector<MortalitySurface> load_corpus(const std::filesystem::path& dir)
{
    namespace fs = std::filesystem;
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) {
        throw DataError("corpus directory not found: " + dir.string());
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().filename().string().front() != '.') {
            files.push_back(entry.path());
        }
    }
    if (files.empty()) {
        throw EmptyCorpusError("empty corpus: no life-table files in " + dir.string());
    }

    std::vector<MortalitySurface> corpus;
    corpus.reserve(files.size());
    for (const auto& f : files) {
        std::ifstream in(f);
        if (!in) {
            throw DataError(f.filename().string() + ": cannot open file");
        }
        try {
            corpus.push_back(parse_life_table(in, country_from_filename(f)));
        } catch (const FormatError& e) {
            throw FormatError(f.filename().string() + ": " + e.what());
        } catch (const StructuralError& e) {
            throw StructuralError(f.filename().string() + ": " + e.what());
        } catch (const ValueError& e) {
            throw ValueError(f.filename().string() + ": " + e.what());
        }
    }
    std::sort(corpus.begin(), corpus.end(), [](const auto& a, const auto& b) { return a.country() < b.country(); });
    for (std::size_t i = 1; i < corpus.size(); ++i) {
        if (corpus[i].country() == corpus[i - 1].country()) {
            throw DataError("duplicate country code " + corpus[i].country() + " in " + dir.string());
        }
    }
    return corpus;
}

/// Extracts the (country, age) series. Leading and trailing missing cells are
/// trimmed, interior gaps linearly interpolated, then values below
/// `clip_floor` raised to it.
inline TimeSeries extract_series(const MortalitySurface& s, int age, double clip_floor = kDefaultClipFloor)
{
    if (age < 0 || age > kMaxAge) {
        throw PreconditionError("age " + std::to_string(age) + " outside 0..110");
    }
    if (!(clip_floor > 0.0)) {
        throw PreconditionError("clip_floor must be positive");
    }
    int first = s.first_year();
    while (first <= s.last_year() && s.missing(first, age)) {
        ++first;
    }
    if (first > s.last_year()) {
        throw EmptySeriesError(s.country() + " age " + std::to_string(age) + ": all cells missing");
    }
    int last = s.last_year();
    while (s.missing(last, age)) {
        --last;
    }

    TimeSeries ts{{s.country(), age}, first, {}};
    ts.values.reserve(static_cast<std::size_t>(last - first + 1));
    int prev_year = first;
    for (int y = first; y <= last; ++y) {
        if (s.missing(y, age)) {
            ts.values.push_back(0.0); // filled below
            continue;
        }
        double v = s.rate(y, age);
        if (y - prev_year > 1) {
            double v0 = s.rate(prev_year, age);
            for (int g = prev_year + 1; g < y; ++g) {
                double w = static_cast<double>(g - prev_year) / static_cast<double>(y - prev_year);
                ts.values[static_cast<std::size_t>(g - first)] = v0 + w * (v - v0);
            }
        }
        ts.values.push_back(v);
        prev_year = y;
    }
    for (double& v : ts.values) {
        v = std::max(v, clip_floor);
    }
    return ts;
}

inline void write_corpus_csv(std::ostream& out, const std::vector<MortalitySurface>& corpus)
{
    out << "country,year,age,mx\n";
    for (const auto& s : corpus) {
        for (int year = s.first_year(); year <= s.last_year(); ++year) {
            for (int age = 0; age <= kMaxAge; ++age) {
                out << s.country() << ',' << year << ',' << age << ','
                    << (s.missing(year, age) ? std::string(".") : format_double(s.rate(year, age))) << '\n';
            }
        }
    }
}

/// Reads the canonical corpus CSV back into surfaces. Lines starting with '#'
/// are comments (manifest hashes).
inline std::vector<MortalitySurface> read_corpus_csv(std::istream& in)
{
    struct Cell {
        int year;
        int age;
        std::optional<double> mx;
    };
    std::map<std::string, std::vector<Cell>> cells;
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
            if (t != "country,year,age,mx") {
                throw FormatError("line " + std::to_string(line_no) + ": expected header 'country,year,age,mx'");
            }
            header = true;
            continue;
        }
        auto f = split(t, ',');
        if (f.size() != 4) {
            throw FormatError("line " + std::to_string(line_no) + ": expected 4 fields");
        }
        auto year = parse_int(f[1]);
        auto age = parse_int(f[2]);
        if (!year || !age || *age < 0 || *age > kMaxAge) {
            throw FormatError("line " + std::to_string(line_no) + ": bad year/age");
        }
        std::optional<double> mx;
        if (f[3] != ".") {
            mx = parse_double(f[3]);
            if (!mx || !std::isfinite(*mx) || *mx < 0.0) {
                throw ValueError("line " + std::to_string(line_no) + ": invalid mx '" + f[3] + "'");
            }
        }
        cells[f[0]].push_back({static_cast<int>(*year), static_cast<int>(*age), mx});
    }
    if (cells.empty()) {
        throw EmptyCorpusError("empty corpus");
    }
    std::vector<MortalitySurface> corpus;
    for (auto& [country, cs] : cells) {
        int first = cs.front().year;
        int last = cs.front().year;
        for (const auto& c : cs) {
            first = std::min(first, c.year);
            last = std::max(last, c.year);
        }
        int n = last - first + 1;
        if (cs.size() != static_cast<std::size_t>(n) * kAgeCount) {
            throw StructuralError(country + ": expected " + std::to_string(n * kAgeCount) + " cells, got " + std::to_string(cs.size()));
        }
        MortalitySurface s(country, first, n);
        std::vector<char> seen(cs.size(), 0);
        for (const auto& c : cs) {
            auto idx = static_cast<std::size_t>(c.year - first) * kAgeCount + static_cast<std::size_t>(c.age);
            if (seen[idx]) {
                throw StructuralError(country + ": duplicate cell " + std::to_string(c.year) + "/" + std::to_string(c.age));
            }
            seen[idx] = 1;
            if (c.mx) {
                s.set_rate(c.year, c.age, *c.mx);
            } else {
                s.set_missing(c.year, c.age);
            }
        }
        corpus.push_back(std::move(s));
    }
    return corpus;
}

/// Directory of life tables or a corpus CSV file.
inline std::vector<MortalitySurface> load_corpus_any(const std::filesystem::path& p)
{
    if (std::filesystem::is_directory(p)) {
        return load_corpus(p);
    }
    std::ifstream in(p);
    if (!in) {
        throw DataError("cannot open corpus file " + p.string());
    }
    return read_corpus_csv(in);
}

inline std::uint64_t corpus_fingerprint(const std::vector<MortalitySurface>& corpus)
{
    Fnv1a h;
    for (const auto& s : corpus) {
        h.update(s.country());
        h.update(static_cast<std::int64_t>(s.first_year()));
        h.update(static_cast<std::int64_t>(s.n_years()));
        for (int y = s.first_year(); y <= s.last_year(); ++y) {
            for (int a = 0; a <= kMaxAge; ++a) {
                h.update(s.missing(y, a) ? -1.0 : s.rate(y, a));
            }
        }
    }
    return h.digest();
}

} // namespace mortfc
