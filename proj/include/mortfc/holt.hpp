#pragma once

// Holt's linear (additive trend, no seasonality) exponential smoothing.

#include <cmath>
#include <span>
#include <vector>

#include "mortfc/common.hpp"
#include "mortfc/optim.hpp"

namespace mortfc {

/// States are indexed so that (level_0, trend_0) describe the first
/// observation and one-step errors run over observations 2..n.
struct HoltFit {
    double alpha = 0.8;
    double beta = 0.2;
    double level_0 = 0.0;
    double trend_0 = 0.0;
    double sse = 0.0;
    double level_T = 0.0;
    double trend_T = 0.0;
    bool fallback = false;
};

namespace holt_detail {

template <typename T>
T logistic(const T& x)
{
    using std::exp;
    // Saturates beyond +-40 where the map is flat to double precision anyway.
    if (optim::value_of(x) > 40.0) {
        return T(logistic(40.0));
    }
    if (optim::value_of(x) < -40.0) {
        return T(logistic(-40.0));
    }
    return T(1.0) / (T(1.0) + exp(-x));
}

inline double logit(double p)
{
    return std::log(p / (1.0 - p));
}

template <typename T>
struct Pass {
    T sse = T(0.0);
    T level = T(0.0);
    T trend = T(0.0);
};

template <typename T, typename ErrorSink>
Pass<T> run(std::span<const double> y, const T& alpha, const T& beta, T level, T trend, ErrorSink&& sink)
{
    Pass<T> out;
    for (std::size_t t = 1; t < y.size(); ++t) {
        T err = y[t] - (level + trend);
        sink(t - 1, err);
        out.sse += err * err;
        T prev = level;
        level = alpha * y[t] + (T(1.0) - alpha) * (level + trend);
        trend = beta * (level - prev) + (T(1.0) - beta) * trend;
    }
    out.level = level;
    out.trend = trend;
    return out;
}

} // namespace holt_detail

inline HoltFit fit_holt(std::span<const double> y)
{
    using namespace holt_detail;
    const std::size_t n = y.size();
    if (n < 4) {
        throw PreconditionError("Holt smoothing needs at least 4 observations");
    }
    double scale = 0.0;
    for (double v : y) {
        scale += v * v;
    }
    scale = std::sqrt(scale / static_cast<double>(n));
    if (!(scale > 0.0) || !std::isfinite(scale)) {
        scale = 1.0;
    }
    std::vector<double> ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        ys[i] = y[i] / scale;
    }

    const double l0 = ys[0];
    const double b0 = ys[1] - ys[0];
    const int n_resid = static_cast<int>(n) - 1;
    // With fewer than 4 one-step errors the initial states stay at the heuristic.
    const bool free_states = n_resid >= 4;

    auto residual_fn = [&]<typename T>(const optim::Vec<T>& x, optim::Vec<T>& r) {
        T a = logistic(x[0]);
        T b = logistic(x[1]);
        T lv = free_states ? x[2] : T(l0);
        T tr = free_states ? x[3] : T(b0);
        run(ys, a, b, lv, tr, [&](std::size_t i, const T& e) { r[static_cast<Eigen::Index>(i)] = e; });
    };

    Eigen::VectorXd x0(free_states ? 4 : 2);
    x0[0] = logit(0.5);
    x0[1] = logit(0.1);
    if (free_states) {
        x0[2] = l0;
        x0[3] = b0;
    }
    auto ls = optim::least_squares(residual_fn, x0, n_resid);

    HoltFit fit;
    if (ls.converged) {
        fit.alpha = logistic(ls.params[0]);
        fit.beta = logistic(ls.params[1]);
        fit.level_0 = free_states ? ls.params[2] : l0;
        fit.trend_0 = free_states ? ls.params[3] : b0;
    } else {
        fit.alpha = 0.8;
        fit.beta = 0.2;
        fit.level_0 = l0;
        fit.trend_0 = b0;
        fit.fallback = true;
    }
    auto pass = run(ys, fit.alpha, fit.beta, fit.level_0, fit.trend_0, [](std::size_t, double) {});
    fit.level_0 *= scale;
    fit.trend_0 *= scale;
    fit.level_T = pass.level * scale;
    fit.trend_T = pass.trend * scale;
    fit.sse = pass.sse * scale * scale;
    return fit;
}

/// y_{T+k} = level_T + k * trend_T.
inline std::vector<double> forecast_holt(const HoltFit& fit, int horizon)
{
    std::vector<double> out;
    for (int k = 1; k <= horizon; ++k) {
        out.push_back(fit.level_T + k * fit.trend_T);
    }
    return out;
}

} // namespace mortfc
