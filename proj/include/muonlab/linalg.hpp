#pragma once

#include <vector>

#include "muonlab/matrix.hpp"

namespace muonlab {

/// Thin SVD m = u * diag(sigma) * vt with r = min(rows, cols).
struct SvdResult {
    Matrix u;                   // m x r, orthonormal columns
    std::vector<double> sigma;  // length r, non-increasing, >= 0
    Matrix vt;                  // r x n, orthonormal rows

    Matrix reconstruct() const;
};

/// One-sided Jacobi SVD. Deterministic sign convention: the largest-magnitude
/// entry of each left singular vector is non-negative.
SvdResult svd(const Matrix& m);

/// Singular values only, non-increasing.
std::vector<double> singular_values(const Matrix& m);

/// Lower-triangular Cholesky factor of an SPD matrix, positive diagonal.
Matrix cholesky(const Matrix& g);

struct SymEigResult {
    std::vector<double> eigenvalues;  // non-increasing
    Matrix eigenvectors;              // orthonormal columns
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
SymEigResult sym_eig(const Matrix& g);

/// Solves L * x = b for lower-triangular L, column by column.
Matrix solve_lower_triangular(const Matrix& l, const Matrix& b);

/// g^(-1/2) for SPD g via eigendecomposition.
Matrix spd_inverse_sqrt(const Matrix& g);

}  // namespace muonlab
