#pragma once

// Wilcoxon signed-rank test on paired differences. Zero differences are
// dropped, tied magnitudes get average ranks. Small samples use the exact
// null distribution; larger ones a tie- and continuity-corrected normal
// approximation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

namespace mortfc {

struct WilcoxonResult {
    double p_value = 1.0;
    double w_plus = 0.0;
    double w_minus = 0.0;
    std::size_t n_effective = 0;
    bool exact = true;

    [[nodiscard]] double statistic() const { return std::min(w_plus, w_minus); }
};

struct SignedRanks {
    std::vector<double> ranks; // average ranks of |d| over the nonzero differences
    std::vector<bool> positive;
    double tie_term = 0.0;     // sum over tie groups of t^3 - t
};

inline SignedRanks signed_ranks(std::span<const double> diffs)
{
    std::vector<double> mag;
    SignedRanks out;
    for (double d : diffs) {
        if (d != 0.0) {
            mag.push_back(std::abs(d));
            out.positive.push_back(d > 0.0);
        }
    }
    const std::size_t n = mag.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return mag[a] < mag[b]; });
    out.ranks.assign(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && mag[idx[j + 1]] == mag[idx[i]]) {
            ++j;
        }
        // positions i..j (0-based) share ranks i+1..j+1
        const double avg = 0.5 * static_cast<double>(i + 1 + j + 1);
        for (std::size_t k = i; k <= j; ++k) {
            out.ranks[idx[k]] = avg;
        }
        const double t = static_cast<double>(j - i + 1);
        out.tie_term += t * t * t - t;
        i = j + 1;
    }
    return out;
}

/// Exact two-sided p-value, 2 * P(W+ <= min(W+, W-)) capped at 1, from the
/// null distribution of W+ over all 2^n sign assignments. Ranks are doubled so
/// tied (half-integer) ranks stay integral.
inline double wilcoxon_exact_p(const SignedRanks& sr)
{
    const std::size_t n = sr.ranks.size();
    if (n == 0) {
        return 1.0;
    }
    std::vector<int> r2(n);
    int total = 0;
    int w_plus2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        r2[i] = static_cast<int>(std::lround(2.0 * sr.ranks[i]));
        total += r2[i];
        if (sr.positive[i]) {
            w_plus2 += r2[i];
        }
    }
    const int w2 = std::min(w_plus2, total - w_plus2);
    std::vector<std::uint64_t> count(static_cast<std::size_t>(total) + 1, 0);
    count[0] = 1;
    for (int r : r2) {
        for (int s = total; s >= r; --s) {
            count[static_cast<std::size_t>(s)] += count[static_cast<std::size_t>(s - r)];
        }
    }
    std::uint64_t tail = 0;
    for (int s = 0; s <= w2; ++s) {
        tail += count[static_cast<std::size_t>(s)];
    }
    const double p = 2.0 * static_cast<double>(tail) / std::ldexp(1.0, static_cast<int>(n));
    return std::min(1.0, p);
}

/// Normal approximation with tie correction on the variance and a 0.5
/// continuity correction.
inline double wilcoxon_normal_p(const SignedRanks& sr)
{
    const double n = static_cast<double>(sr.ranks.size());
    if (n == 0) {
        return 1.0;
    }
    double w_plus = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < sr.ranks.size(); ++i) {
        total += sr.ranks[i];
        if (sr.positive[i]) {
            w_plus += sr.ranks[i];
        }
    }
    const double w = std::min(w_plus, total - w_plus);
    const double mu = n * (n + 1.0) / 4.0;
    const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - sr.tie_term / 48.0;
    if (!(var > 0.0)) {
        return 1.0;
    }
    const double z = std::max(0.0, std::abs(w - mu) - 0.5) / std::sqrt(var);
    return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> diffs, std::size_t exact_max_n = 25)
{
    WilcoxonResult res;
    auto sr = signed_ranks(diffs);
    res.n_effective = sr.ranks.size();
    for (std::size_t i = 0; i < sr.ranks.size(); ++i) {
        (sr.positive[i] ? res.w_plus : res.w_minus) += sr.ranks[i];
    }
    if (res.n_effective == 0) {
        res.p_value = 1.0;
        return res;
    }
    res.exact = res.n_effective <= exact_max_n;
    res.p_value = res.exact ? wilcoxon_exact_p(sr) : wilcoxon_normal_p(sr);
    return res;
}

} // namespace mortfc
