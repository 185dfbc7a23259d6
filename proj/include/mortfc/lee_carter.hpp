#pragma once

// Lee-Carter log-bilinear mortality model:
//   log m(x,t) = a_x + sum_i b_x^i k_t^i
// fitted by SVD of the age-centered log-rate matrix, with pluggable
// extrapolation of the period indices k_t^i.

#include <cmath>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mortfc/arima.hpp"
#include "mortfc/common.hpp"

namespace mortfc {

struct LeeCarterComponent {
    std::vector<double> b; // age loadings, sum 1
    std::vector<double> k; // period index, sum 0
    double singular_value = 0.0;
};

struct LeeCarterFit {
    std::string country;
    int first_year = 0;
    std::vector<double> a; // mean log rate per age (after folding any k offset)
    std::vector<LeeCarterComponent> components;

    [[nodiscard]] int n_years() const { return components.empty() ? 0 : static_cast<int>(components.front().k.size()); }
    [[nodiscard]] int last_year() const { return first_year + n_years() - 1; }
    [[nodiscard]] std::size_t n_ages() const { return a.size(); }

    /// a_x + sum_i b_x^i k_t^i for year index t.
    [[nodiscard]] double log_rate(std::size_t t, std::size_t age) const
    {
        double v = a[age];
        for (const auto& c : components) {
            v += c.b[age] * c.k[t];
        }
        return v;
    }
};

struct LeeCarterOptions {
    int n_components = 1;
    double clip_floor = kDefaultClipFloor;
    // Negates both singular vectors before normalization; the fit must not
    // depend on the SVD's sign choice.
    bool negate_singular_vectors = false;
};

/// rates: years x ages matrix of central death rates (rows in calendar order).
inline LeeCarterFit fit_lee_carter(const Eigen::MatrixXd& rates, int first_year, std::string country, const LeeCarterOptions& opt = {})
{
    const Eigen::Index n_years = rates.rows();
    const Eigen::Index n_ages = rates.cols();
    if (n_years < 10) {
        throw PreconditionError("Lee-Carter needs at least 10 training years");
    }
    if (opt.n_components < 1 || opt.n_components > std::min(n_years, n_ages)) {
        throw PreconditionError("Lee-Carter: invalid number of components");
    }
    if (!rates.allFinite()) {
        throw PreconditionError("Lee-Carter: non-finite rate");
    }

    Eigen::MatrixXd logm = rates.array().max(opt.clip_floor).log().matrix();
    Eigen::VectorXd a = logm.colwise().mean().transpose();
    Eigen::MatrixXd centered = logm.rowwise() - a.transpose();

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    // Columns of U run over years, columns of V over ages.
    const double tol = std::max(1.0, sv.size() > 0 ? sv[0] : 0.0) * 1e-13 * static_cast<double>(std::max(n_years, n_ages));

    LeeCarterFit fit;
    fit.country = std::move(country);
    fit.first_year = first_year;
    fit.a.assign(a.data(), a.data() + n_ages);
    for (int i = 0; i < opt.n_components; ++i) {
        LeeCarterComponent comp;
        comp.singular_value = sv[i];
        Eigen::VectorXd age_vec = svd.matrixV().col(i);
        Eigen::VectorXd year_vec = svd.matrixU().col(i);
        if (opt.negate_singular_vectors) {
            age_vec = -age_vec;
            year_vec = -year_vec;
        }
        const double age_sum = age_vec.sum();
        if (!(sv[i] > tol) || std::abs(age_sum) < 1e-12) {
            comp.b.assign(static_cast<std::size_t>(n_ages), 1.0 / static_cast<double>(n_ages));
            comp.k.assign(static_cast<std::size_t>(n_years), 0.0);
            fit.components.push_back(std::move(comp));
            continue;
        }
        comp.b.resize(static_cast<std::size_t>(n_ages));
        comp.k.resize(static_cast<std::size_t>(n_years));
        for (Eigen::Index x = 0; x < n_ages; ++x) {
            comp.b[static_cast<std::size_t>(x)] = age_vec[x] / age_sum;
        }
        for (Eigen::Index t = 0; t < n_years; ++t) {
            comp.k[static_cast<std::size_t>(t)] = sv[i] * year_vec[t] * age_sum;
        }
        double kbar = mean(comp.k);
        for (double& kt : comp.k) {
            kt -= kbar;
        }
        for (std::size_t x = 0; x < comp.b.size(); ++x) {
            fit.a[x] += comp.b[x] * kbar;
        }
        fit.components.push_back(std::move(comp));
    }
    return fit;
}

enum class TrendMethod { RandomWalkDrift, AutoArima, Plugin };

/// Extends one period index by `horizon` steps; used for the plugin-backed
/// variant. Receives the index series, its first calendar year and horizon.
using TrendForecastFn = std::function<std::vector<double>(std::span<const double> k, int start_year, int horizon)>;

struct LeeCarterForecastOptions {
    TrendMethod trend = TrendMethod::RandomWalkDrift;
    bool drift = true; // only for RandomWalkDrift
    TrendForecastFn plugin;
};

inline std::vector<double> forecast_trend_rw(std::span<const double> k, int horizon, bool drift)
{
    const std::size_t n = k.size();
    double slope = (drift && n > 1) ? (k[n - 1] - k[0]) / static_cast<double>(n - 1) : 0.0;
    std::vector<double> out;
    for (int j = 1; j <= horizon; ++j) {
        out.push_back(k[n - 1] + j * slope);
    }
    return out;
}

/// Forecast matrix [horizon x ages] of central death rates.
inline Eigen::MatrixXd forecast_lee_carter(const LeeCarterFit& fit, int horizon, const LeeCarterForecastOptions& opt = {})
{
    const auto n_ages = static_cast<Eigen::Index>(fit.n_ages());
    Eigen::MatrixXd logm(horizon, n_ages);
    for (Eigen::Index x = 0; x < n_ages; ++x) {
        logm.col(x).setConstant(fit.a[static_cast<std::size_t>(x)]);
    }
    if (horizon <= 0) {
        return logm;
    }
    for (const auto& comp : fit.components) {
        std::vector<double> kf;
        switch (opt.trend) {
        case TrendMethod::RandomWalkDrift:
            kf = forecast_trend_rw(comp.k, horizon, opt.drift);
            break;
        case TrendMethod::AutoArima: {
            auto am = auto_arima(comp.k);
            kf = forecast_arima(am, comp.k, horizon);
            break;
        }
        case TrendMethod::Plugin:
            if (!opt.plugin) {
                throw PreconditionError("Lee-Carter plugin trend requested without a trend forecaster");
            }
            kf = opt.plugin(comp.k, fit.first_year, horizon);
            break;
        }
        if (static_cast<int>(kf.size()) != horizon) {
            throw FitError("trend forecaster returned " + std::to_string(kf.size()) + " values, expected " + std::to_string(horizon));
        }
        for (int j = 0; j < horizon; ++j) {
            if (!std::isfinite(kf[static_cast<std::size_t>(j)])) {
                throw FitError("trend forecaster returned a non-finite value");
            }
            for (Eigen::Index x = 0; x < n_ages; ++x) {
                logm(j, x) += comp.b[static_cast<std::size_t>(x)] * kf[static_cast<std::size_t>(j)];
            }
        }
    }
    return logm.array().exp().matrix();
}

inline void write_lee_carter_ages_csv(std::ostream& out, const std::vector<LeeCarterFit>& fits)
{
    out << "country,component,age,a_x,b_x\n";
    for (const auto& f : fits) {
        for (std::size_t i = 0; i < f.components.size(); ++i) {
            for (std::size_t x = 0; x < f.a.size(); ++x) {
                out << f.country << ',' << i + 1 << ',' << x << ',' << format_double(f.a[x]) << ',' << format_double(f.components[i].b[x]) << '\n';
            }
        }
    }
}

inline void write_lee_carter_periods_csv(std::ostream& out, const std::vector<LeeCarterFit>& fits)
{
    out << "country,component,year,k_t\n";
    for (const auto& f : fits) {
        for (std::size_t i = 0; i < f.components.size(); ++i) {
            for (std::size_t t = 0; t < f.components[i].k.size(); ++t) {
                out << f.country << ',' << i + 1 << ',' << f.first_year + static_cast<int>(t) << ',' << format_double(f.components[i].k[t]) << '\n';
            }
        }
    }
}

} // namespace mortfc
