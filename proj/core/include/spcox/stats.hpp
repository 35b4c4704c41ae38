#pragma once

namespace spcox {

/// Standard normal quantile (Wichura's AS241, double precision).
double normal_quantile(double p);

/// Two-sided normal p-value for a z statistic.
double two_sided_p_value(double z);

}  // namespace spcox
