#pragma once

#include <Eigen/Dense>

#include "pairdiff/kernel.hpp"

namespace pairdiff {

// Silverman-type rule 1.06 * sd(W) * n^(-1/5).
double silverman_bandwidth(const Eigen::VectorXd& W);

// Nadaraya-Watson regression of z on W evaluated at the given grid
// points. Throws NumericalError("empty smoothing window") if some grid
// point has no observation with positive kernel weight.
Eigen::VectorXd nadaraya_watson(const Eigen::VectorXd& W, const Eigen::VectorXd& z,
                                const Eigen::VectorXd& grid, double bandwidth,
                                const Kernel& kernel);

// Leave-one-out box-kernel smoother of every column of Z against W,
// evaluated at the observations themselves: out(i, j) is the mean of
// Z(l, j) over l != i with |W_l - W_i| <= bandwidth/2. Runs in
// O(n log n + n p) via prefix sums over the W-sorted order. Throws
// NumericalError("empty smoothing window") when some observation has no
// neighbor.
Eigen::MatrixXd loo_box_smooth(const Eigen::VectorXd& W, const Eigen::MatrixXd& Z, double bandwidth);

} // namespace pairdiff
