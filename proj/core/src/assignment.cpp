#include "percdia/assignment.hpp"

#include <limits>
#include <stdexcept>

namespace percdia {

// Potentials formulation: rows are augmented one at a time along a shortest
// alternating path in reduced costs. Exact for real-valued costs.
std::vector<int> solve_assignment_min(const std::vector<double>& cost, int n) {
  if (n < 0 || static_cast<int64_t>(cost.size()) != static_cast<int64_t>(n) * n) {
    throw std::invalid_argument("assignment cost matrix must be square n x n");
  }
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based helpers with a virtual column 0.
  std::vector<double> u(static_cast<size_t>(n) + 1, 0.0), v(static_cast<size_t>(n) + 1, 0.0);
  std::vector<int> match_col(static_cast<size_t>(n) + 1, 0);  // column -> row
  std::vector<int> way(static_cast<size_t>(n) + 1, 0);

  for (int i = 1; i <= n; ++i) {
    match_col[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<size_t>(n) + 1, kInf);
    std::vector<char> used(static_cast<size_t>(n) + 1, 0);
    do {
      used[static_cast<size_t>(j0)] = 1;
      const int i0 = match_col[static_cast<size_t>(j0)];
      double delta = kInf;
      int j1 = -1;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        const double cur = cost[static_cast<size_t>(i0 - 1) * n + (j - 1)] - u[static_cast<size_t>(i0)] -
                           v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(match_col[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match_col[static_cast<size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<size_t>(j0)];
      match_col[static_cast<size_t>(j0)] = match_col[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> col_of_row(static_cast<size_t>(n), -1);
  for (int j = 1; j <= n; ++j) col_of_row[static_cast<size_t>(match_col[static_cast<size_t>(j)] - 1)] = j - 1;
  return col_of_row;
}

std::vector<int> solve_assignment_max(const std::vector<double>& weight, int n) {
  std::vector<double> neg(weight.size());
  for (size_t i = 0; i < weight.size(); ++i) neg[i] = -weight[i];
  return solve_assignment_min(neg, n);
}

}  // namespace percdia
