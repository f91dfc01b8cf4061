#include "sqtk/assignment.hpp"

#include <limits>

namespace sqtk {

// Potentials formulation over a square matrix padded with zeros. Padding
// columns/rows absorb the surplus side, so rectangular instances come out
// with exactly min(rows, cols) real pairs.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
  const int rows = static_cast<int>(cost.rows());
  const int cols = static_cast<int>(cost.cols());
  if (rows == 0 || cols == 0) return std::vector<int>(rows, -1);

  const int n = std::max(rows, cols);
  const double inf = std::numeric_limits<double>::infinity();

  auto at = [&](int i, int j) -> double {
    return (i < rows && j < cols) ? cost(i, j) : 0.0;
  };

  // 1-based arrays per the classic formulation.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> rowsol(rows, -1);
  for (int j = 1; j <= n; ++j) {
    int i = p[j];
    if (i >= 1 && i <= rows && j <= cols) rowsol[i - 1] = j - 1;
  }
  return rowsol;
}

double assignment_cost(const Eigen::MatrixXd& cost, const std::vector<int>& rowsol) {
  double total = 0.0;
  for (int i = 0; i < static_cast<int>(rowsol.size()); ++i)
    if (rowsol[i] >= 0) total += cost(i, rowsol[i]);
  return total;
}

}  // namespace sqtk
