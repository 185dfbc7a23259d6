#pragma once

// Built-in forecasters and name resolution for adapter-backed ones.

#include <Eigen/Dense>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "mortfc/arima.hpp"
#include "mortfc/bridge.hpp"
#include "mortfc/engine.hpp"
#include "mortfc/forest.hpp"
#include "mortfc/holt.hpp"
#include "mortfc/lee_carter.hpp"

namespace mortfc {

/// Unknown method name or a method whose adapter is not registered.
class MethodError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline const std::vector<std::string>& builtin_method_names()
{
    static const std::vector<std::string> names{"ARIMA",          "ExponentialSmoothing", "LeeCarter", "LeeCarterAUTO", "LeeCarterMULTI",
                                                "LeeCarterZERO", "RandomForest"};
    return names;
}

/// Benchmark names that are served by an external adapter.
inline const std::vector<std::string>& adapter_method_names()
{
    static const std::vector<std::string> names{"LSTM", "CHRONOSTiny", "CHRONOSSmall", "CHRONOSLarge", "CHRONOSSmallFinetuned", "TimesFM"};
    return names;
}

class ArimaForecaster : public PerSeriesForecaster {
public:
    [[nodiscard]] std::string name() const override { return "ARIMA"; }

protected:
    std::vector<double> forecast_series(const TimeSeries& train, int horizon) override
    {
        auto fit = auto_arima(train.values);
        return forecast_arima(fit, train.values, horizon);
    }
};

class HoltForecaster : public PerSeriesForecaster {
public:
    [[nodiscard]] std::string name() const override { return "ExponentialSmoothing"; }

protected:
    std::vector<double> forecast_series(const TimeSeries& train, int horizon) override
    {
        return forecast_holt(fit_holt(train.values), horizon);
    }
};

/// Plugin-backed one-step trend forecast for LeeCarterZERO.
inline TrendForecastFn adapter_trend(std::shared_ptr<AdapterHandle> handle)
{
    return [handle](std::span<const double> k, int start_year, int horizon) {
        ForecastRequest req{"k", start_year, std::vector<double>(k.begin(), k.end()), horizon};
        auto out = handle->request_forecast({req});
        if (!out.front().ok()) {
            throw FitError("trend adapter: " + out.front().error);
        }
        return *out.front().values;
    };
}

/// Fits one Lee-Carter model per country on the years every age covers and
/// forecasts each age from its own last year.
class LeeCarterForecaster : public Forecaster {
public:
    LeeCarterForecaster(std::string name, int n_components, TrendMethod trend, bool drift, double clip_floor)
        : name_(std::move(name)), n_components_(n_components), trend_(trend), drift_(drift), clip_floor_(clip_floor)
    {
    }

    void use_adapter(AdapterPool* pool, std::string adapter)
    {
        pool_ = pool;
        adapter_ = std::move(adapter);
    }

    [[nodiscard]] std::string name() const override { return name_; }

    void prepare() override
    {
        if (trend_ == TrendMethod::Plugin) {
            if (pool_ == nullptr) {
                throw AdapterError("no adapter registry");
            }
            handle_ = pool_->get(adapter_);
        }
    }

    std::vector<CellForecast> forecast(const CountryPanel& panel, int horizon) override
    {
        std::vector<CellForecast> out;
        for (const auto& s : panel.series) {
            out.push_back({s.key.age, {}, {}});
        }
        if (panel.series.empty()) {
            return out;
        }
        try {
            int start = panel.series.front().start_year;
            int common_end = panel.series.front().end_year();
            int max_end = common_end;
            for (const auto& s : panel.series) {
                start = std::max(start, s.start_year);
                common_end = std::min(common_end, s.end_year());
                max_end = std::max(max_end, s.end_year());
            }
            const int n_years = common_end - start + 1;
            if (n_years < 10) {
                throw FitError("ages share only " + std::to_string(std::max(n_years, 0)) + " common years");
            }
            Eigen::MatrixXd rates(n_years, static_cast<Eigen::Index>(panel.series.size()));
            for (std::size_t i = 0; i < panel.series.size(); ++i) {
                const auto& s = panel.series[i];
                for (int t = 0; t < n_years; ++t) {
                    rates(t, static_cast<Eigen::Index>(i)) = s.values[static_cast<std::size_t>(start - s.start_year + t)];
                }
            }
            LeeCarterOptions lo;
            lo.n_components = std::min(n_components_, static_cast<int>(std::min<Eigen::Index>(rates.rows(), rates.cols())));
            lo.clip_floor = clip_floor_;
            auto fit = fit_lee_carter(rates, start, panel.country, lo);
            LeeCarterForecastOptions fo;
            fo.trend = trend_;
            fo.drift = drift_;
            if (trend_ == TrendMethod::Plugin) {
                fo.plugin = adapter_trend(handle_);
            }
            const int extra = max_end - common_end;
            auto m = forecast_lee_carter(fit, horizon + extra, fo);
            for (std::size_t i = 0; i < panel.series.size(); ++i) {
                const int offset = panel.series[i].end_year() - common_end;
                auto& v = out[i].values;
                for (int j = 0; j < horizon; ++j) {
                    v.push_back(m(offset + j, static_cast<Eigen::Index>(i)));
                }
            }
        } catch (const std::exception& e) {
            for (auto& c : out) {
                c.values.clear();
                c.error = e.what();
            }
        }
        return out;
    }

private:
    std::string name_;
    int n_components_;
    TrendMethod trend_;
    bool drift_;
    double clip_floor_;
    AdapterPool* pool_ = nullptr;
    std::string adapter_;
    std::shared_ptr<AdapterHandle> handle_;
};

/// Global autoregressive forest on pooled windows, optionally in log space.
class ForestForecaster : public PerSeriesForecaster {
public:
    explicit ForestForecaster(const RunConfig& cfg) : log_(cfg.rf_log), floor_(cfg.clip_floor)
    {
        fc_.n_trees = cfg.rf_trees;
        fc_.window = cfg.window;
        fc_.max_features = cfg.rf_max_features;
        fc_.min_samples_leaf = cfg.rf_min_samples_leaf;
        fc_.seed = cfg.seed;
        fc_.threads = cfg.threads;
    }

    [[nodiscard]] std::string name() const override { return "RandomForest"; }
    [[nodiscard]] bool is_global() const override { return true; }

    void train_global(const GlobalTrainingSet& data) override
    {
        if (!log_) {
            model_ = train_forest(data, fc_);
            return;
        }
        auto logged = data;
        for (double& v : logged.inputs) {
            v = std::log(std::max(v, floor_));
        }
        for (double& v : logged.targets) {
            v = std::log(std::max(v, floor_));
        }
        model_ = train_forest(logged, fc_);
    }

    [[nodiscard]] const ForestModel& model() const { return model_; }

protected:
    std::vector<double> forecast_series(const TimeSeries& train, int horizon) override
    {
        if (train.size() < static_cast<std::size_t>(fc_.window)) {
            throw PreconditionError("series has " + std::to_string(train.size()) + " years, window needs " + std::to_string(fc_.window));
        }
        if (!log_) {
            return forecast_forest(model_, train.values, horizon);
        }
        std::vector<double> x(train.values);
        for (double& v : x) {
            v = std::log(std::max(v, floor_));
        }
        auto f = forecast_forest(model_, x, horizon);
        for (double& v : f) {
            v = std::exp(v);
        }
        return f;
    }

private:
    ForestConfig fc_;
    bool log_;
    double floor_;
    ForestModel model_;
};

/// Any registered adapter used as a forecaster on its own.
class AdapterForecaster : public Forecaster {
public:
    AdapterForecaster(std::string name, AdapterPool& pool, std::filesystem::path work_dir)
        : name_(std::move(name)), pool_(pool), work_dir_(std::move(work_dir))
    {
    }

    [[nodiscard]] std::string name() const override { return name_; }
    [[nodiscard]] bool is_global() const override { return pool_.spec(name_).train; }

    void prepare() override
    {
        handle_ = pool_.get(name_);
        if (pool_.spec(name_).train && !handle_->supports_training()) {
            throw CapabilityError("adapter " + name_ + " is configured to train but does not support training");
        }
    }

    void train_global(const GlobalTrainingSet& data) override
    {
        std::filesystem::create_directories(work_dir_);
        auto path = std::filesystem::absolute(work_dir_ / (name_ + "_training.csv"));
        {
            std::ofstream out(path);
            write_training_csv(out, data);
            if (!out) {
                throw DataError("cannot write " + path.string());
            }
        }
        handle_->request_training(path.string(), pool_.spec(name_).train_params);
    }

    std::vector<CellForecast> forecast(const CountryPanel& panel, int horizon) override
    {
        std::vector<ForecastRequest> batch;
        for (const auto& s : panel.series) {
            batch.push_back({std::to_string(s.key.age), s.start_year, s.values, horizon});
        }
        auto res = handle_->request_forecast(batch);
        std::vector<CellForecast> out;
        for (std::size_t i = 0; i < res.size(); ++i) {
            CellForecast c;
            c.age = panel.series[i].key.age;
            if (res[i].ok()) {
                c.values = std::move(*res[i].values);
            } else {
                c.error = res[i].error;
            }
            out.push_back(std::move(c));
        }
        return out;
    }

private:
    std::string name_;
    AdapterPool& pool_;
    std::filesystem::path work_dir_;
    std::shared_ptr<AdapterHandle> handle_;
};

/// Resolves one method name. Adapter-backed names need `pool` to know them.
inline std::unique_ptr<Forecaster> make_forecaster(const std::string& name, const RunConfig& cfg, AdapterPool* pool)
{
    if (name == "ARIMA") {
        return std::make_unique<ArimaForecaster>();
    }
    if (name == "ExponentialSmoothing") {
        return std::make_unique<HoltForecaster>();
    }
    if (name == "LeeCarter") {
        return std::make_unique<LeeCarterForecaster>(name, 1, TrendMethod::RandomWalkDrift, cfg.lc_drift, cfg.clip_floor);
    }
    if (name == "LeeCarterAUTO") {
        return std::make_unique<LeeCarterForecaster>(name, 1, TrendMethod::AutoArima, true, cfg.clip_floor);
    }
    if (name == "LeeCarterMULTI") {
        return std::make_unique<LeeCarterForecaster>(name, 3, TrendMethod::AutoArima, true, cfg.clip_floor);
    }
    if (name == "LeeCarterZERO") {
        if (pool == nullptr || !pool->has(cfg.lc_zero_adapter)) {
            throw MethodError("LeeCarterZERO needs a registered adapter named '" + cfg.lc_zero_adapter + "'");
        }
        auto f = std::make_unique<LeeCarterForecaster>(name, 1, TrendMethod::Plugin, true, cfg.clip_floor);
        f->use_adapter(pool, cfg.lc_zero_adapter);
        return f;
    }
    if (name == "RandomForest") {
        return std::make_unique<ForestForecaster>(cfg);
    }
    if (pool != nullptr && pool->has(name)) {
        return std::make_unique<AdapterForecaster>(name, *pool, cfg.work_dir);
    }
    const auto& ad = adapter_method_names();
    if (std::find(ad.begin(), ad.end(), name) != ad.end()) {
        throw MethodError("method " + name + " needs a registered adapter (set --adapters or MORTFC_ADAPTERS)");
    }
    std::string valid;
    for (const auto& n : builtin_method_names()) {
        valid += (valid.empty() ? "" : ", ") + n;
    }
    if (pool != nullptr) {
        for (const auto& n : pool->names()) {
            valid += ", " + n;
        }
    }
    throw MethodError("unknown method '" + name + "'; valid names: " + valid);
}

inline std::vector<std::unique_ptr<Forecaster>> make_forecasters(const std::vector<std::string>& names, const RunConfig& cfg, AdapterPool* pool)
{
    if (names.empty()) {
        throw MethodError("no methods selected");
    }
    std::vector<std::unique_ptr<Forecaster>> out;
    for (const auto& n : names) {
        out.push_back(make_forecaster(n, cfg, pool));
    }
    return out;
}

} // namespace mortfc
