#pragma once

#include <vector>

namespace lfr::metrics {

// Minimum-cost perfect matching on a dense n x n cost matrix (row-major),
// shortest-augmenting-path with dual potentials. Returns the matched column
// for each row.
std::vector<int> solve_assignment(const std::vector<double>& cost, int n);

}  // namespace lfr::metrics
