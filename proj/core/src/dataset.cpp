#include "pairdiff/dataset.hpp"

#include "pairdiff/errors.hpp"

namespace pairdiff {

void Dataset::validate() const {
    const Eigen::Index nn = Y.size();
    if (nn < 2)
        throw DataError("dataset needs at least 2 observations");
    if (X.rows() != nn || W.size() != nn)
        throw DataError("X/Y/W row counts disagree");
    if (!X.allFinite() || !Y.allFinite() || !W.allFinite())
        throw DataError("dataset contains non-finite values");
    if (beta_star && beta_star->size() != X.cols())
        throw DataError("beta_star length differs from p");
    if (g_values && g_values->size() != nn)
        throw DataError("g_values length differs from n");
}

Eigen::VectorXd Dataset::noise_from_truth() const {
    if (!beta_star || !g_values)
        throw DataError("noise recovery requires beta_star and g_values");
    return Y - X * (*beta_star) - *g_values;
}

} // namespace pairdiff
