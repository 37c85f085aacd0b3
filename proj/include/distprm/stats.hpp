#pragma once

#include <span>

namespace distprm {

double mean(std::span<const double> values);

/// q-th quantile (q in [0, 1]) with linear interpolation between order statistics.
/// Throws std::invalid_argument on an empty input.
double percentile(std::span<const double> values, double q);

}  // namespace distprm
