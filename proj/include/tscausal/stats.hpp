#pragma once

namespace tscausal {

/// I_x(a, b), computed with the Lentz continued fraction. Requires a, b > 0
/// and x in [0, 1].
double regularized_incomplete_beta(double a, double b, double x);

/// Right-tail probability P(F_{df1, df2} > f). Returns 1 for f <= 0.
double f_test_p_value(double f, double df1, double df2);

}  // namespace tscausal
