#pragma once

#include <Eigen/Dense>
#include <vector>

namespace sqtk {

// Exact minimum-cost bipartite assignment (Kuhn-Munkres with potentials,
// O(n^3)). Rectangular inputs are padded internally; exactly
// min(rows, cols) pairs are produced. Returns row -> col, -1 for unassigned
// rows. Costs must be finite; use a large sentinel for forbidden pairs.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

double assignment_cost(const Eigen::MatrixXd& cost, const std::vector<int>& rowsol);

}  // namespace sqtk
