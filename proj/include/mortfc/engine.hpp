#pragma once

// Backtest and future-forecast orchestration. Forecasters only ever receive
// training segments; validation actuals stay inside the engine.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "mortfc/common.hpp"
#include "mortfc/forest.hpp"
#include "mortfc/hmd.hpp"
#include "mortfc/records.hpp"

namespace mortfc {

struct RunConfig {
    std::vector<int> horizons{5, 10, 20};
    std::vector<std::string> methods;
    std::uint64_t seed = 42;
    double clip_floor = kDefaultClipFloor;
    int window = 16;
    int exclude_tail = 20;
    int min_train = 10;
    double smape_factor = 200.0;
    bool lc_drift = true;
    bool rf_log = false;
    int rf_trees = 100;
    double rf_max_features = 1.0;
    int rf_min_samples_leaf = 1;
    unsigned threads = 0;
    std::string lc_zero_adapter = "CHRONOSLarge";
    std::string adapters; // registry path, empty: none
    std::string work_dir = ".";
    double failure_threshold = 0.5;

    /// Overrides fields present in `j`; unknown keys are rejected.
    void merge_json(const nlohmann::json& j)
    {
        if (!j.is_object()) {
            throw FormatError("run config must be a JSON object");
        }
        auto on_off = [](const nlohmann::json& v, const std::string& key) {
            if (v.is_boolean()) {
                return v.get<bool>();
            }
            if (v.is_string() && (v == "on" || v == "off")) {
                return v == "on";
            }
            throw FormatError("config key '" + key + "' expects on|off");
        };
        try {
            for (const auto& [key, v] : j.items()) {
                if (key == "horizons") {
                    horizons = v.get<std::vector<int>>();
                } else if (key == "methods") {
                    methods = v.get<std::vector<std::string>>();
                } else if (key == "seed") {
                    seed = v.get<std::uint64_t>();
                } else if (key == "clip_floor") {
                    clip_floor = v.get<double>();
                } else if (key == "window") {
                    window = v.get<int>();
                } else if (key == "exclude_tail") {
                    exclude_tail = v.get<int>();
                } else if (key == "min_train") {
                    min_train = v.get<int>();
                } else if (key == "smape_factor") {
                    smape_factor = v.get<double>();
                } else if (key == "lc_drift") {
                    lc_drift = on_off(v, key);
                } else if (key == "rf_log") {
                    rf_log = on_off(v, key);
                } else if (key == "rf_trees") {
                    rf_trees = v.get<int>();
                } else if (key == "rf_max_features") {
                    rf_max_features = v.get<double>();
                } else if (key == "rf_min_samples_leaf") {
                    rf_min_samples_leaf = v.get<int>();
                } else if (key == "threads") {
                    threads = v.get<unsigned>();
                } else if (key == "lc_zero_adapter") {
                    lc_zero_adapter = v.get<std::string>();
                } else if (key == "adapters") {
                    adapters = v.get<std::string>();
                } else if (key == "work_dir") {
                    work_dir = v.get<std::string>();
                } else if (key == "failure_threshold") {
                    failure_threshold = v.get<double>();
                } else {
                    throw FormatError("unknown config key '" + key + "'");
                }
            }
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("run config: ") + e.what());
        }
        validate();
    }

    void validate() const
    {
        if (horizons.empty()) {
            throw ValueError("at least one horizon is required");
        }
        for (int h : horizons) {
            if (h < 1) {
                throw ValueError("horizons must be >= 1");
            }
        }
        if (!(clip_floor > 0.0) || window < 1 || exclude_tail < 0 || min_train < 1 || rf_trees < 1 || !(rf_max_features > 0.0 && rf_max_features <= 1.0) ||
            !(smape_factor > 0.0)) {
            throw ValueError("run config has an out-of-range value");
        }
    }

    /// Snapshot written into the manifest. Paths are left out so moving a run
    /// directory keeps its hash.
    [[nodiscard]] nlohmann::json to_json() const
    {
        return {{"horizons", horizons},
                {"methods", methods},
                {"seed", seed},
                {"clip_floor", clip_floor},
                {"window", window},
                {"exclude_tail", exclude_tail},
                {"min_train", min_train},
                {"smape_factor", smape_factor},
                {"lc_drift", lc_drift ? "on" : "off"},
                {"rf_log", rf_log ? "on" : "off"},
                {"rf_trees", rf_trees},
                {"rf_max_features", rf_max_features},
                {"rf_min_samples_leaf", rf_min_samples_leaf},
                {"lc_zero_adapter", lc_zero_adapter},
                {"failure_threshold", failure_threshold}};
    }
};

inline RunConfig read_run_config(const std::filesystem::path& file)
{
    std::ifstream in(file);
    if (!in) {
        throw DataError("cannot open config " + file.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("config " + file.string() + ": " + e.what());
    }
    RunConfig cfg;
    cfg.merge_json(j);
    return cfg;
}

// --- splits and pooled windows ----------------------------------------------------

struct BacktestSplit {
    TimeSeries train;
    TimeSeries validation;
    int split_year = 0; // last training year
};

/// Returned instead of a split when a series is too short for the horizon.
struct SkipSeries {
    SeriesKey key;
    int horizon = 0;
    std::string reason;
};

inline std::variant<BacktestSplit, SkipSeries> make_split(const TimeSeries& s, int horizon, int min_train = 10)
{
    if (horizon < 1) {
        throw PreconditionError("horizon must be >= 1");
    }
    const auto n = static_cast<int>(s.size());
    if (n <= horizon + min_train) {
        return SkipSeries{s.key, horizon,
                          "series length " + std::to_string(n) + " needs more than " + std::to_string(horizon + min_train) + " years"};
    }
    const auto cut = static_cast<std::ptrdiff_t>(n - horizon);
    BacktestSplit sp;
    sp.train.key = s.key;
    sp.train.start_year = s.start_year;
    sp.train.values.assign(s.values.begin(), s.values.begin() + cut);
    sp.validation.key = s.key;
    sp.validation.start_year = s.start_year + static_cast<int>(cut);
    sp.validation.values.assign(s.values.begin() + cut, s.values.end());
    sp.split_year = sp.train.end_year();
    return sp;
}

/// All series of a corpus, ages ascending within each country. Ages with no
/// observed cell are left out.
inline std::vector<TimeSeries> corpus_series(const std::vector<MortalitySurface>& corpus, double clip_floor)
{
    std::vector<TimeSeries> out;
    for (const auto& s : corpus) {
        for (int age = 0; age <= kMaxAge; ++age) {
            try {
                out.push_back(extract_series(s, age, clip_floor));
            } catch (const EmptySeriesError&) {
            }
        }
    }
    return out;
}

/// Every window of `window` inputs plus target whose target lies at least
/// `exclude_tail` years before the end of its series.
inline GlobalTrainingSet assemble_global_training(const std::vector<TimeSeries>& series, int window = 16, int exclude_tail = 20)
{
    if (series.empty()) {
        throw PreconditionError("assemble_global_training: empty corpus");
    }
    GlobalTrainingSet g;
    g.window = window;
    const auto w = static_cast<std::size_t>(window);
    for (const auto& s : series) {
        const auto n = static_cast<long long>(s.size());
        for (long long j = window; j <= n - 1 - exclude_tail; ++j) {
            const auto ju = static_cast<std::size_t>(j);
            g.add(std::span<const double>(s.values).subspan(ju - w, w), s.values[ju], s.key, s.start_year + static_cast<int>(j));
        }
    }
    return g;
}

inline GlobalTrainingSet assemble_global_training(const std::vector<MortalitySurface>& corpus, int window, int exclude_tail, double clip_floor)
{
    return assemble_global_training(corpus_series(corpus, clip_floor), window, exclude_tail);
}

/// Training windows as CSV for adapters that train: one row per window,
/// inputs oldest first.
inline void write_training_csv(std::ostream& out, const GlobalTrainingSet& g)
{
    out << "country,age,target_year";
    for (int i = 1; i <= g.window; ++i) {
        out << ",x" << i;
    }
    out << ",target\n";
    for (std::size_t i = 0; i < g.size(); ++i) {
        out << g.keys[i].country << ',' << g.keys[i].age << ',' << g.end_years[i];
        for (double v : g.input(i)) {
            out << ',' << format_double(v);
        }
        out << ',' << format_double(g.targets[i]) << '\n';
    }
}

// --- forecaster contract ---------------------------------------------------------

/// The series of one country a forecaster may look at, ages ascending.
struct CountryPanel {
    std::string country;
    std::vector<TimeSeries> series;
};

struct CellForecast {
    int age = 0;
    std::vector<double> values; // empty on failure
    std::string error;
};

class Forecaster {
public:
    virtual ~Forecaster() = default;
    [[nodiscard]] virtual std::string name() const = 0;
    /// Serial setup before any forecast, e.g. launching an adapter. Throwing
    /// excludes the method from the run.
    virtual void prepare() {}
    [[nodiscard]] virtual bool is_global() const { return false; }
    virtual void train_global(const GlobalTrainingSet& /*data*/) {}
    /// One entry per panel series, each `horizon` values past that series' end.
    /// May be called concurrently for different panels.
    virtual std::vector<CellForecast> forecast(const CountryPanel& panel, int horizon) = 0;
};

/// Forecasters that treat each series on its own.
class PerSeriesForecaster : public Forecaster {
public:
    std::vector<CellForecast> forecast(const CountryPanel& panel, int horizon) override
    {
        std::vector<CellForecast> out;
        out.reserve(panel.series.size());
        for (const auto& s : panel.series) {
            CellForecast c;
            c.age = s.key.age;
            try {
                c.values = forecast_series(s, horizon);
            } catch (const std::exception& e) {
                c.values.clear();
                c.error = e.what();
            }
            out.push_back(std::move(c));
        }
        return out;
    }

protected:
    virtual std::vector<double> forecast_series(const TimeSeries& train, int horizon) = 0;
};

// --- orchestration -------------------------------------------------------------

struct RunResult {
    std::vector<ForecastRecord> records;
    std::vector<CellFailure> failures;
    std::vector<SkipSeries> skipped;
    std::map<std::string, std::string> method_errors; // excluded or aborted methods
    std::vector<std::string> warnings;

    [[nodiscard]] bool partial() const { return !failures.empty() || !method_errors.empty(); }
};

inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn)
{
    if (threads == 0) {
        threads = std::max(1U, std::thread::hardware_concurrency());
    }
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr err;
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(err_mu);
                        if (!err) {
                            err = std::current_exception();
                        }
                    }
                }
            });
        }
    }
    if (err) {
        std::rethrow_exception(err);
    }
}

namespace engine_detail {

struct Task {
    std::size_t method = 0;
    std::size_t country = 0;
    int horizon = 0;
    CountryPanel panel;
    std::map<int, std::vector<double>> actual; // by age; empty in future mode
};

inline void collect(const Task& task, std::vector<CellForecast> cells, const std::string& method, double floor, RunResult& res)
{
    std::map<int, CellForecast*> by_age;
    for (auto& c : cells) {
        by_age[c.age] = &c;
    }
    for (const auto& s : task.panel.series) {
        auto it = by_age.find(s.key.age);
        CellFailure fail{method, s.key, task.horizon, {}};
        if (it == by_age.end()) {
            fail.message = "no forecast returned";
        } else if (!it->second->error.empty() || it->second->values.empty()) {
            fail.message = it->second->error.empty() ? "empty forecast" : it->second->error;
        } else if (static_cast<int>(it->second->values.size()) != task.horizon) {
            fail.message = "forecast length " + std::to_string(it->second->values.size()) + " != horizon";
        } else if (std::any_of(it->second->values.begin(), it->second->values.end(), [](double v) { return !std::isfinite(v); })) {
            fail.message = "non-finite forecast";
        }
        if (!fail.message.empty()) {
            res.failures.push_back(std::move(fail));
            continue;
        }
        ForecastRecord r;
        r.method = method;
        r.key = s.key;
        r.horizon = task.horizon;
        r.first_year = s.end_year() + 1;
        r.predicted = std::move(it->second->values);
        for (double& v : r.predicted) {
            v = std::max(v, floor);
        }
        if (auto a = task.actual.find(s.key.age); a != task.actual.end()) {
            r.actual = a->second;
        }
        res.records.push_back(std::move(r));
    }
}

/// Shared by backtest and future runs. `series_by_country` holds full series;
/// in backtest mode they are split and only the train part is handed out.
inline RunResult run(const std::vector<std::vector<TimeSeries>>& series_by_country, std::vector<std::unique_ptr<Forecaster>>& methods,
                     const RunConfig& cfg, bool backtest)
{
    cfg.validate();
    RunResult res;
    std::vector<bool> active(methods.size(), true);
    std::set<std::string> seen;
    for (std::size_t m = 0; m < methods.size(); ++m) {
        if (!seen.insert(methods[m]->name()).second) {
            throw PreconditionError("method listed twice: " + methods[m]->name());
        }
        try {
            methods[m]->prepare();
        } catch (const std::exception& e) {
            active[m] = false;
            res.method_errors[methods[m]->name()] = std::string("excluded: ") + e.what();
            res.warnings.push_back("method " + methods[m]->name() + " excluded: " + e.what());
        }
    }

    // Serial global phase: one pooled training set per run, reused across horizons.
    bool need_global = false;
    for (std::size_t m = 0; m < methods.size(); ++m) {
        need_global = need_global || (active[m] && methods[m]->is_global());
    }
    if (need_global) {
        std::vector<TimeSeries> all;
        for (const auto& c : series_by_country) {
            all.insert(all.end(), c.begin(), c.end());
        }
        int tail = 0;
        if (backtest) {
            // The pool must never reach into any validation window.
            tail = std::max(cfg.exclude_tail, *std::max_element(cfg.horizons.begin(), cfg.horizons.end()));
        }
        auto pool = all.empty() ? GlobalTrainingSet{} : assemble_global_training(all, cfg.window, tail);
        for (std::size_t m = 0; m < methods.size(); ++m) {
            if (!active[m] || !methods[m]->is_global()) {
                continue;
            }
            try {
                methods[m]->train_global(pool);
            } catch (const std::exception& e) {
                active[m] = false;
                res.method_errors[methods[m]->name()] = std::string("training failed: ") + e.what();
                res.warnings.push_back("method " + methods[m]->name() + " training failed: " + e.what());
            }
        }
    }

    std::vector<Task> tasks;
    for (std::size_t c = 0; c < series_by_country.size(); ++c) {
        for (int h : cfg.horizons) {
            CountryPanel panel;
            std::map<int, std::vector<double>> actual;
            for (const auto& s : series_by_country[c]) {
                if (panel.country.empty()) {
                    panel.country = s.key.country;
                }
                if (!backtest) {
                    panel.series.push_back(s);
                    continue;
                }
                auto sp = make_split(s, h, cfg.min_train);
                if (auto* skip = std::get_if<SkipSeries>(&sp)) {
                    res.skipped.push_back(std::move(*skip));
                    continue;
                }
                auto& split = std::get<BacktestSplit>(sp);
                actual[s.key.age] = std::move(split.validation.values);
                panel.series.push_back(std::move(split.train));
            }
            if (panel.series.empty()) {
                continue;
            }
            for (std::size_t m = 0; m < methods.size(); ++m) {
                if (active[m]) {
                    tasks.push_back({m, c, h, panel, actual});
                }
            }
        }
    }

    std::vector<RunResult> partial(tasks.size());
    parallel_for(tasks.size(), cfg.threads, [&](std::size_t i) {
        const auto& t = tasks[i];
        auto& f = *methods[t.method];
        std::vector<CellForecast> cells;
        try {
            cells = f.forecast(t.panel, t.horizon);
        } catch (const std::exception& e) {
            for (const auto& s : t.panel.series) {
                cells.push_back({s.key.age, {}, e.what()});
            }
        }
        collect(t, std::move(cells), f.name(), cfg.clip_floor, partial[i]);
    });
    for (auto& p : partial) {
        std::move(p.records.begin(), p.records.end(), std::back_inserter(res.records));
        std::move(p.failures.begin(), p.failures.end(), std::back_inserter(res.failures));
    }

    // A method failing on most of its cells is aborted as a whole.
    std::map<std::string, std::pair<std::size_t, std::size_t>> counts; // ok, failed
    for (const auto& r : res.records) {
        ++counts[r.method].first;
    }
    for (const auto& f : res.failures) {
        ++counts[f.method].second;
    }
    for (const auto& [name, c] : counts) {
        const double total = static_cast<double>(c.first + c.second);
        if (static_cast<double>(c.second) > cfg.failure_threshold * total) {
            res.method_errors[name] = "failed on " + std::to_string(c.second) + " of " + std::to_string(c.first + c.second) + " cells";
            std::erase_if(res.records, [&](const ForecastRecord& r) { return r.method == name; });
        }
    }

    std::sort(res.records.begin(), res.records.end(), record_order);
    std::sort(res.failures.begin(), res.failures.end(), [](const CellFailure& a, const CellFailure& b) {
        return std::tie(a.method, a.key, a.horizon) < std::tie(b.method, b.key, b.horizon);
    });
    std::sort(res.skipped.begin(), res.skipped.end(),
              [](const SkipSeries& a, const SkipSeries& b) { return std::tie(a.key, a.horizon) < std::tie(b.key, b.horizon); });
    return res;
}

inline std::vector<std::vector<TimeSeries>> group_series(const std::vector<MortalitySurface>& corpus, double clip_floor)
{
    std::vector<std::vector<TimeSeries>> out;
    for (const auto& s : corpus) {
        out.push_back(corpus_series({s}, clip_floor));
    }
    return out;
}

} // namespace engine_detail

/// Forecasts the last `h` years of every eligible series for each horizon.
inline RunResult run_backtest(const std::vector<MortalitySurface>& corpus, std::vector<std::unique_ptr<Forecaster>>& methods, const RunConfig& cfg)
{
    return engine_detail::run(engine_detail::group_series(corpus, cfg.clip_floor), methods, cfg, true);
}

/// Fits on full series and forecasts past each series' last observed year.
inline RunResult run_future(const std::vector<MortalitySurface>& corpus, std::vector<std::unique_ptr<Forecaster>>& methods, const RunConfig& cfg)
{
    return engine_detail::run(engine_detail::group_series(corpus, cfg.clip_floor), methods, cfg, false);
}

} // namespace mortfc
