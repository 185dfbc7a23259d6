#pragma once

// Non-seasonal ARIMA fitted by conditional sum of squares, KPSS-driven
// differencing and stepwise AICc order search.

#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "mortfc/common.hpp"
#include "mortfc/optim.hpp"

namespace mortfc {

struct ArimaOrder {
    int p = 0;
    int d = 0;
    int q = 0;
    bool with_constant = false;

    friend auto operator<=>(const ArimaOrder&, const ArimaOrder&) = default;

    [[nodiscard]] std::string to_string() const
    {
        return "(" + std::to_string(p) + "," + std::to_string(d) + "," + std::to_string(q) + ")" + (with_constant ? "+c" : "");
    }
};

struct ArimaFit {
    ArimaOrder order;
    std::vector<double> ar; // phi_1..phi_p
    std::vector<double> ma; // theta_1..theta_q
    double constant = 0.0;  // intercept of the differenced series
    double sigma2 = 0.0;
    // Likelihood and AICc are measured in units of the rms first difference of
    // the input, so they compare across differencing orders independently of
    // the units and level of the series.
    double loglik = 0.0;
    double aicc = std::numeric_limits<double>::infinity();
    std::size_t n_used = 0;
};

namespace arima_detail {

inline std::vector<double> difference(std::span<const double> y, int d)
{
    std::vector<double> w(y.begin(), y.end());
    for (int k = 0; k < d; ++k) {
        if (w.size() < 2) {
            return {};
        }
        for (std::size_t i = 0; i + 1 < w.size(); ++i) {
            w[i] = w[i + 1] - w[i];
        }
        w.pop_back();
    }
    return w;
}

/// Maps unconstrained reals to the coefficients of a stationary AR polynomial
/// through partial autocorrelations tanh(u) and the Durbin-Levinson recursion.
template <typename T>
std::vector<T> pacf_to_coeffs(std::span<const T> u)
{
    using std::tanh;
    std::vector<T> phi;
    for (std::size_t k = 0; k < u.size(); ++k) {
        T r = tanh(u[k]);
        std::vector<T> next(k + 1);
        for (std::size_t j = 0; j < k; ++j) {
            next[j] = phi[j] - r * phi[k - 1 - j];
        }
        next[k] = r;
        phi = std::move(next);
    }
    return phi;
}

inline std::vector<double> pacf_to_coeffs(std::span<const double> u)
{
    return pacf_to_coeffs<double>(u);
}

/// e_t = w_t - c - sum phi_i w_{t-i} - sum theta_j e_{t-j}, conditioning on
/// the first p observations (their residuals are zero).
template <typename T>
std::vector<T> css_residuals(std::span<const double> w, std::span<const T> ar, std::span<const T> ma, const T& c)
{
    const std::size_t p = ar.size();
    std::vector<T> e(w.size(), T(0.0));
    for (std::size_t t = p; t < w.size(); ++t) {
        T pred = c;
        for (std::size_t i = 0; i < p; ++i) {
            pred += ar[i] * w[t - 1 - i];
        }
        for (std::size_t j = 0; j < ma.size() && j < t; ++j) {
            pred += ma[j] * e[t - 1 - j];
        }
        e[t] = w[t] - pred;
    }
    return e;
}

inline std::vector<double> css_residuals(std::span<const double> w, std::span<const double> ar, std::span<const double> ma, double c)
{
    return css_residuals<double>(w, ar, ma, c);
}

inline double rms(std::span<const double> w)
{
    double s = 0.0;
    for (double v : w) {
        s += v * v;
    }
    return w.empty() ? 0.0 : std::sqrt(s / static_cast<double>(w.size()));
}

inline double aicc_score(double loglik, int k, std::size_t n)
{
    double nn = static_cast<double>(n);
    if (nn - k - 1 <= 0) {
        return std::numeric_limits<double>::infinity();
    }
    return -2.0 * loglik + 2.0 * k + 2.0 * k * (k + 1) / (nn - k - 1);
}

} // namespace arima_detail

/// KPSS level-stationarity statistic with Bartlett long-run variance and the
/// short lag truncation floor(4 (n/100)^(1/4)).
inline double kpss_statistic(std::span<const double> y)
{
    const std::size_t n = y.size();
    if (n < 2) {
        return 0.0;
    }
    double m = mean(y);
    std::vector<double> e(n);
    for (std::size_t i = 0; i < n; ++i) {
        e[i] = y[i] - m;
    }
    double partial = 0.0;
    double eta = 0.0;
    for (double v : e) {
        partial += v;
        eta += partial * partial;
    }
    const double nn = static_cast<double>(n);
    eta /= nn * nn;

    auto lags = static_cast<std::size_t>(std::floor(4.0 * std::pow(nn / 100.0, 0.25)));
    double s2 = 0.0;
    for (double v : e) {
        s2 += v * v;
    }
    s2 /= nn;
    for (std::size_t s = 1; s <= lags && s < n; ++s) {
        double acc = 0.0;
        for (std::size_t t = s; t < n; ++t) {
            acc += e[t] * e[t - s];
        }
        double w = 1.0 - static_cast<double>(s) / static_cast<double>(lags + 1);
        s2 += 2.0 * w * acc / nn;
    }
    if (!(s2 > 0.0)) {
        return 0.0;
    }
    return eta / s2;
}

inline constexpr double kKpssCritical5 = 0.463;

/// Number of differences: difference while KPSS rejects level stationarity
/// at 5%, up to max_d.
inline int select_differencing(std::span<const double> y, int max_d = 2)
{
    std::vector<double> x(y.begin(), y.end());
    int d = 0;
    while (d < max_d && x.size() >= 3) {
        bool constant = std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); });
        if (constant || kpss_statistic(x) <= kKpssCritical5) {
            break;
        }
        x = arima_detail::difference(x, 1);
        ++d;
    }
    return d;
}

/// CSS fit of ARIMA(p,d,q). Throws FitError when the optimizer fails or the
/// optimum sits on the stationarity/invertibility boundary.
inline ArimaFit fit_arima(std::span<const double> y, const ArimaOrder& order)
{
    using namespace arima_detail;
    if (order.p < 0 || order.p > 5 || order.q < 0 || order.q > 5 || order.d < 0 || order.d > 2) {
        throw PreconditionError("ARIMA order out of bounds: " + order.to_string());
    }
    auto w = difference(y, order.d);
    const int p = order.p;
    const int q = order.q;
    if (static_cast<int>(w.size()) < p + q + 5) {
        throw PreconditionError("series too short for ARIMA" + order.to_string());
    }

    // Work in units of the differenced series so the fit is scale-free.
    double scale = rms(w);
    if (!(scale > 0.0) || !std::isfinite(scale)) {
        scale = 1.0;
    }
    std::vector<double> ws(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        ws[i] = w[i] / scale;
    }

    const int n_params = p + q + (order.with_constant ? 1 : 0);
    const int n_resid = static_cast<int>(ws.size()) - p;

    auto unpack = [&]<typename T>(const optim::Vec<T>& x, std::vector<T>& ar, std::vector<T>& ma, T& c) {
        std::vector<T> u_ar(x.data(), x.data() + p);
        std::vector<T> u_ma(x.data() + p, x.data() + p + q);
        ar = pacf_to_coeffs<T>(u_ar);
        ma = pacf_to_coeffs<T>(u_ma);
        for (T& t : ma) {
            t = -t;
        }
        c = order.with_constant ? x[p + q] : T(0.0);
    };

    auto residual_fn = [&]<typename T>(const optim::Vec<T>& x, optim::Vec<T>& r) {
        std::vector<T> ar;
        std::vector<T> ma;
        T c;
        unpack(x, ar, ma, c);
        auto e = css_residuals<T>(ws, ar, ma, c);
        for (int i = 0; i < n_resid; ++i) {
            r[i] = e[static_cast<std::size_t>(i + p)];
        }
    };

    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(n_params);
    if (order.with_constant) {
        x0[p + q] = mean(ws);
    }
    auto ls = optim::least_squares(residual_fn, x0, n_resid);
    if (!ls.converged) {
        throw FitError("ARIMA" + order.to_string() + ": optimizer did not converge");
    }
    for (int i = 0; i < p + q; ++i) {
        if (std::abs(std::tanh(ls.params[i])) > 0.9995) {
            throw FitError("ARIMA" + order.to_string() + ": optimum on stationarity/invertibility boundary");
        }
    }

    ArimaFit fit;
    fit.order = order;
    unpack(ls.params, fit.ar, fit.ma, fit.constant);
    fit.constant *= scale;
    // Likelihood over the whole differenced series with sigma2 from the
    // conditional residuals, so every (p, q) at a given d shares the same n and
    // the AICc ranking does not depend on the units of the series.
    fit.n_used = ws.size();
    const double nn = static_cast<double>(fit.n_used);
    double sigma2_scaled = ls.sse / static_cast<double>(n_resid);
    fit.sigma2 = sigma2_scaled * scale * scale;
    double unit = rms(difference(y, 1));
    if (!(unit > 0.0) || !std::isfinite(unit)) {
        unit = 1.0;
    }
    // A perfect fit has zero innovation variance; keep the likelihood finite.
    double s2 = std::max(sigma2_scaled * (scale / unit) * (scale / unit), std::numeric_limits<double>::min());
    fit.loglik = -0.5 * nn * (std::log(2.0 * std::numbers::pi * s2) + 1.0);
    fit.aicc = aicc_score(fit.loglik, n_params + 1, fit.n_used);
    return fit;
}

/// Iterated conditional-expectation forecasts, undifferenced by cumulative
/// summation. MA terms use in-sample residuals, then zero.
inline std::vector<double> forecast_arima(const ArimaFit& fit, std::span<const double> y, int horizon)
{
    using namespace arima_detail;
    if (horizon <= 0) {
        return {};
    }
    const int d = fit.order.d;
    std::vector<std::vector<double>> levels;
    levels.emplace_back(y.begin(), y.end());
    for (int k = 0; k < d; ++k) {
        levels.push_back(difference(levels.back(), 1));
    }
    const auto& w = levels.back();
    if (w.size() < fit.ar.size()) {
        throw PreconditionError("series too short for ARIMA forecast");
    }
    auto e = css_residuals(w, fit.ar, fit.ma, fit.constant);

    std::vector<double> hist(w.begin(), w.end());
    std::vector<double> ehist(e.begin(), e.end());
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(horizon));
    for (int h = 0; h < horizon; ++h) {
        double pred = fit.constant;
        const std::size_t t = hist.size();
        for (std::size_t i = 0; i < fit.ar.size(); ++i) {
            pred += fit.ar[i] * hist[t - 1 - i];
        }
        for (std::size_t j = 0; j < fit.ma.size() && j < t; ++j) {
            pred += fit.ma[j] * ehist[t - 1 - j];
        }
        hist.push_back(pred);
        ehist.push_back(0.0);
        out.push_back(pred);
    }
    for (int k = d - 1; k >= 0; --k) {
        double acc = levels[static_cast<std::size_t>(k)].back();
        for (double& v : out) {
            acc += v;
            v = acc;
        }
    }
    return out;
}

struct AutoArimaOptions {
    int max_p = 5;
    int max_q = 5;
    int max_d = 2;
    int min_length = 10;
};

/// Hyndman-Khandakar style stepwise search over (p, q) minimizing AICc with d
/// picked by repeated KPSS tests. Falls back to a random walk with drift when
/// every candidate fails.
inline ArimaFit auto_arima(std::span<const double> y, const AutoArimaOptions& opt = {})
{
    if (static_cast<int>(y.size()) < opt.min_length) {
        throw PreconditionError("auto_arima needs at least " + std::to_string(opt.min_length) + " observations");
    }
    const int d = select_differencing(y, opt.max_d);
    const bool with_constant = d <= 1;
    const int n_w = static_cast<int>(y.size()) - d;

    std::map<std::pair<int, int>, std::optional<ArimaFit>> tried;
    auto evaluate = [&](int p, int q) -> const std::optional<ArimaFit>& {
        auto key = std::make_pair(p, q);
        auto it = tried.find(key);
        if (it != tried.end()) {
            return it->second;
        }
        std::optional<ArimaFit> fit;
        if (p >= 0 && q >= 0 && p <= opt.max_p && q <= opt.max_q && n_w >= p + q + 5) {
            try {
                fit = fit_arima(y, {p, d, q, with_constant});
                if (!std::isfinite(fit->aicc)) {
                    fit.reset();
                }
            } catch (const FitError&) {
                fit.reset();
            }
        }
        return tried.emplace(key, std::move(fit)).first->second;
    };

    std::optional<ArimaFit> best;
    auto consider = [&](int p, int q) {
        const auto& f = evaluate(p, q);
        if (f && (!best || f->aicc < best->aicc)) {
            best = f;
            return true;
        }
        return false;
    };
    for (auto [p, q] : {std::pair{0, 0}, {1, 0}, {0, 1}, {2, 2}}) {
        consider(p, q);
    }
    if (best) {
        for (;;) {
            const int bp = best->order.p;
            const int bq = best->order.q;
            bool improved = false;
            for (auto [dp, dq] : {std::pair{-1, 0}, {1, 0}, {0, -1}, {0, 1}, {-1, -1}, {1, 1}, {-1, 1}, {1, -1}}) {
                improved = consider(bp + dp, bq + dq) || improved;
            }
            if (!improved) {
                break;
            }
        }
    }

    std::optional<ArimaFit> fallback;
    try {
        fallback = fit_arima(y, {0, 1, 0, true});
    } catch (const std::exception&) {
        fallback.reset();
    }
    if (!best || (fallback && fallback->aicc < best->aicc)) {
        if (!fallback) {
            throw FitError("auto_arima: no candidate model could be fitted");
        }
        return *fallback;
    }
    return *best;
}

} // namespace mortfc
