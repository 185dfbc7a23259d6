#pragma once

#include <cmath>
#include <span>
#include <string>

#include "mortfc/common.hpp"

namespace mortfc {

/// Symmetric MAPE in percent:
///   (factor / n) * sum |F - A| / (|A| + |F|)
/// The default factor of 200 is the usual (|A| + |F|) / 2 denominator form
/// with range [0, 200]. Steps where A = F = 0 contribute 0.
inline double smape(std::span<const double> actual, std::span<const double> predicted, double factor = 200.0)
{
    if (actual.size() != predicted.size()) {
        throw PreconditionError("smape: length mismatch (" + std::to_string(actual.size()) + " vs " + std::to_string(predicted.size()) + ")");
    }
    if (actual.empty()) {
        throw PreconditionError("smape: empty input");
    }
    double acc = 0.0;
    for (std::size_t t = 0; t < actual.size(); ++t) {
        const double denom = std::abs(actual[t]) + std::abs(predicted[t]);
        if (denom > 0.0) {
            acc += std::abs(predicted[t] - actual[t]) / denom;
        }
    }
    return factor * acc / static_cast<double>(actual.size());
}

} // namespace mortfc
