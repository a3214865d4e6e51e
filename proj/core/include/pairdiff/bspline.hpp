#pragma once

#include <Eigen/Dense>

namespace pairdiff {

// B-spline basis on a clamped knot vector with interior knots placed at
// empirical quantiles of the observed W. The basis has
// n_interior_knots + degree + 1 functions and spans constants (and, for
// degree >= 1, all polynomials up to the degree) on [min W, max W].
class BsplineBasis {
public:
    // Throws NumericalError("degenerate knots") when quantile knots
    // collapse (duplicated W values) and DataError on bad parameters.
    static BsplineBasis quantile(const Eigen::VectorXd& W, int degree, int n_interior);

    Eigen::Index size() const { return n_basis_; }
    int degree() const { return degree_; }

    // Basis values at one point; w is clamped to the knot range.
    Eigen::VectorXd eval(double w) const;

    // n x size() design matrix.
    Eigen::MatrixXd design(const Eigen::VectorXd& w) const;

private:
    int degree_ = 3;
    Eigen::Index n_basis_ = 0;
    Eigen::VectorXd knots_; // clamped: (degree+1)-fold boundary knots
};

} // namespace pairdiff
