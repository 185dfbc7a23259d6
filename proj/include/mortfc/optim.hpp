#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>
#include <Eigen/QR>
#include <unsupported/Eigen/AutoDiff>
#include <unsupported/Eigen/LevenbergMarquardt>

namespace mortfc::optim {

inline constexpr int kMaxParams = 12;

/// Forward-mode dual number with a fixed-size gradient (unused slots stay
/// zero); residual models are written once as templates and evaluated with
/// double or Dual.
using Gradient = Eigen::Matrix<double, kMaxParams, 1>;
using Dual = Eigen::AutoDiffScalar<Gradient>;

template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

inline double value_of(double v)
{
    return v;
}

inline double value_of(const Dual& v)
{
    return v.value();
}

struct LeastSquaresResult {
    Eigen::VectorXd params;
    double sse = 0.0;
    bool converged = false;
};

namespace detail {

template <typename Model>
struct Functor : Eigen::DenseFunctor<double> {
    Functor(const Model& m, int n_params, int n_residuals) : Eigen::DenseFunctor<double>(n_params, n_residuals), model(m) {}

    int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& fvec) const
    {
        model(x, fvec);
        return 0;
    }

    int df(const Eigen::VectorXd& x, Eigen::MatrixXd& fjac) const
    {
        Eigen::VectorXd r(values());
        jacobian(x, r, fjac);
        return 0;
    }

    void jacobian(const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd& J) const
    {
        const auto n = x.size();
        Vec<Dual> xd(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            xd[i] = Dual(x[i], Gradient::Unit(i));
        }
        Vec<Dual> rd(values());
        model(xd, rd);
        r.resize(rd.size());
        J.resize(rd.size(), n);
        for (Eigen::Index j = 0; j < rd.size(); ++j) {
            r[j] = rd[j].value();
            J.row(j) = rd[j].derivatives().head(n).transpose();
        }
    }

    const Model& model;
};

} // namespace detail

/// Unconstrained nonlinear least squares: Levenberg-Marquardt with exact
/// Jacobians, then Gauss-Newton polishing so the result satisfies J'r = 0 to
/// rounding rather than to the flatness of the SSE surface. `model` is a
/// generic callable (const Vec<T>& x, Vec<T>& r) for T = double and Dual.
/// Requires n_residuals >= params.size().
template <typename Model>
LeastSquaresResult least_squares(const Model& model, Eigen::VectorXd x0, int n_residuals, int max_evals = 4000)
{
    LeastSquaresResult out;
    const int n_params = static_cast<int>(x0.size());
    if (n_params > kMaxParams) {
        throw std::invalid_argument("least_squares: too many parameters");
    }
    Eigen::VectorXd r(n_residuals);
    model(x0, r);
    if (n_params == 0 || r.squaredNorm() == 0.0) {
        out.params = x0;
        out.sse = r.squaredNorm();
        out.converged = std::isfinite(out.sse);
        return out;
    }
    detail::Functor<Model> functor(model, n_params, n_residuals);
    Eigen::LevenbergMarquardt<detail::Functor<Model>> lm(functor);
    lm.setMaxfev(max_evals);
    lm.setXtol(1e-12);
    lm.setFtol(1e-14);
    auto status = lm.minimize(x0);
    using S = Eigen::LevenbergMarquardtSpace::Status;
    const bool lm_ok = status != S::ImproperInputParameters && status != S::TooManyFunctionEvaluation;

    model(x0, r);
    double sse = r.squaredNorm();
    if (lm_ok && std::isfinite(sse) && x0.allFinite()) {
        const Eigen::VectorXd start = x0;
        const double reach = 1e-3 * (1.0 + start.norm());
        Eigen::MatrixXd J;
        Eigen::VectorXd rn(n_residuals);
        for (int it = 0; it < 50; ++it) {
            functor.jacobian(x0, r, J);
            Eigen::VectorXd step = J.colPivHouseholderQr().solve(-r);
            if (!step.allFinite()) {
                break;
            }
            Eigen::VectorXd xn = x0 + step;
            if ((xn - start).norm() > reach) {
                break;
            }
            model(xn, rn);
            const double sn = rn.squaredNorm();
            if (!(sn <= sse * (1.0 + 1e-12))) {
                break;
            }
            x0 = xn;
            sse = sn;
            if (step.norm() <= 1e-15 * (1.0 + x0.norm())) {
                break;
            }
        }
    }
    out.params = x0;
    out.sse = sse;
    out.converged = std::isfinite(out.sse) && x0.allFinite() && lm_ok;
    return out;
}

} // namespace mortfc::optim
