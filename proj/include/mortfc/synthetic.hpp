#pragma once

// Lee-Carter generated mortality surfaces with noise, used for the bundled
// demo corpus and for tests.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mortfc/common.hpp"
#include "mortfc/hmd.hpp"

namespace mortfc {

struct SyntheticSpec {
    std::string country = "SYN";
    int first_year = 1961;
    int n_years = 60;
    double level = 0.0;        // shift of the whole log-rate profile
    double drift = -1.2;       // mean yearly change of k
    double k_noise = 0.6;      // sd of the random-walk innovations of k
    double obs_noise = 0.03;   // sd of iid noise on log rates
    std::uint64_t seed = 1;
};

struct SyntheticTruth {
    std::vector<double> a;
    std::vector<double> b; // sums to 1
    std::vector<double> k; // sums to 0
};

/// Smooth age profile: infant mortality, a young-adult hump and a Gompertz
/// slope, in log space.
inline std::vector<double> synthetic_age_profile(double level)
{
    std::vector<double> a(kAgeCount);
    for (int x = 0; x < kAgeCount; ++x) {
        const double gompertz = std::exp(-9.8 + 0.088 * x);
        const double infant = 0.02 * std::exp(-1.1 * x);
        const double hump = 0.0006 * std::exp(-0.5 * std::pow((x - 22.0) / 6.0, 2.0));
        a[static_cast<std::size_t>(x)] = std::log(std::min(gompertz + infant + hump + 0.00008, 0.95)) + level;
    }
    return a;
}

/// Age sensitivity: larger at young ages, tapering for the oldest.
inline std::vector<double> synthetic_age_loadings()
{
    std::vector<double> b(kAgeCount);
    double sum = 0.0;
    for (int x = 0; x < kAgeCount; ++x) {
        double v = 1.6 * std::exp(-x / 30.0) + 0.5 * std::exp(-std::pow((x - 60.0) / 25.0, 2.0)) + 0.05;
        b[static_cast<std::size_t>(x)] = v;
        sum += v;
    }
    for (double& v : b) {
        v /= sum;
    }
    return b;
}

inline MortalitySurface synthetic_surface(const SyntheticSpec& spec, SyntheticTruth* truth = nullptr)
{
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> z(0.0, 1.0);
    auto a = synthetic_age_profile(spec.level);
    auto b = synthetic_age_loadings();
    std::vector<double> k(static_cast<std::size_t>(spec.n_years));
    double cur = 0.0;
    for (auto& v : k) {
        v = cur;
        cur += spec.drift + spec.k_noise * z(rng);
    }
    double km = mean(k);
    for (auto& v : k) {
        v -= km;
    }
    MortalitySurface s(spec.country, spec.first_year, spec.n_years);
    for (int t = 0; t < spec.n_years; ++t) {
        for (int x = 0; x < kAgeCount; ++x) {
            const auto xi = static_cast<std::size_t>(x);
            double logm = a[xi] + b[xi] * k[static_cast<std::size_t>(t)] + spec.obs_noise * z(rng);
            double mx = std::min(std::exp(logm), 4.0);
            // Six significant digits, like published tables.
            char buf[32];
            auto res = std::to_chars(buf, buf + sizeof buf, mx, std::chars_format::general, 6);
            mx = *parse_double(std::string_view(buf, static_cast<std::size_t>(res.ptr - buf)));
            s.set_rate(spec.first_year + t, x, mx);
        }
    }
    if (truth != nullptr) {
        *truth = {std::move(a), std::move(b), std::move(k)};
    }
    return s;
}

/// The three-country demo corpus shipped under data/synthetic.
inline std::vector<SyntheticSpec> bundled_synthetic_specs()
{
    return {
        {"SYA", 1961, 60, 0.0, -1.2, 0.6, 0.03, 11},
        {"SYB", 1961, 60, 0.35, -0.8, 0.8, 0.04, 22},
        {"SYC", 1961, 60, -0.25, -1.6, 0.5, 0.03, 33},
    };
}

} // namespace mortfc
