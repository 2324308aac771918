#pragma once

#include <cstdint>
#include <vector>

namespace percdia {

// Exact minimum-cost one-to-one assignment on a square cost matrix (Hungarian
// algorithm with potentials, O(n^3)). Returns col_of_row: for each row i the
// assigned column. cost[i][j] is row-major n x n.
std::vector<int> solve_assignment_min(const std::vector<double>& cost, int n);

// Maximum-total-weight variant (negates and reuses the minimizer).
std::vector<int> solve_assignment_max(const std::vector<double>& weight, int n);

}  // namespace percdia
