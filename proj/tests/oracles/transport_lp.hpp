#pragma once

#include <vector>

// Test-only oracles, independent of the production Sinkhorn path.

namespace ct::oracle {

// Exact optimal transport cost between nonnegative mass vectors (normalized
// to unit mass internally) under an arbitrary cost matrix, solved with the
// transportation simplex. Intended for small bin counts.
double transport_lp(std::vector<double> a, std::vector<double> b, std::vector<double> cost);

// Independent 1-D Wasserstein-1 between histograms on sorted positions via
// the CDF-difference integral; cross-checks the simplex on collinear cases.
double w1_1d(std::vector<double> a, std::vector<double> b, const std::vector<double>& pos);

}  // namespace ct::oracle
