#pragma once

#include <Eigen/Dense>
#include <optional>

namespace pairdiff {

// One sample of the partially linear model Y = X beta + g(W) + u.
// beta_star / g_values are attached by the simulator so diagnostics can
// evaluate statistics at the truth; they are absent for real data.
struct Dataset {
    Eigen::MatrixXd X; // n x p
    Eigen::VectorXd Y; // n
    Eigen::VectorXd W; // n

    std::optional<Eigen::VectorXd> beta_star; // p
    std::optional<Eigen::VectorXd> g_values;  // n

    Eigen::Index n() const { return Y.size(); }
    Eigen::Index p() const { return X.cols(); }

    // Checks shape consistency and finiteness; throws DataError.
    void validate() const;

    // Noise recovered from the attached truth: u = Y - X beta* - g(W).
    // Throws DataError if beta_star or g_values are missing.
    Eigen::VectorXd noise_from_truth() const;
};

} // namespace pairdiff
