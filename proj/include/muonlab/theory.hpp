#pragma once

#include <cstdint>
#include <vector>

#include "muonlab/linalg.hpp"
#include "muonlab/matrix.hpp"
#include "muonlab/rng.hpp"

namespace muonlab {

/// Linear MSE model f(x) = Wx with Gaussian inputs of covariance s; errors
/// are tracked as E = W - W*.
struct LinearProblem {
    Matrix w_star;                // m x d
    Matrix s;                     // d x d input covariance, SPD
    Matrix e0;                    // m x d initial error
    double alpha = 1.0;           // E0^T E0 = alpha I when exact_isotropic
    bool exact_isotropic = false;
    std::vector<Matrix> aug_ops;  // d x d augmentation operators

    void validate() const;

    /// Random problem with E0 = sqrt(alpha) Q (orthonormal columns from QR of
    /// a Gaussian draw) so the isotropy assumption holds exactly.
    static LinearProblem random_isotropic(std::size_t m, std::size_t d, double alpha,
                                          std::size_t num_aug, std::uint64_t seed);
    /// Random problem with Gaussian (non-isotropic) E0.
    static LinearProblem random_generic(std::size_t m, std::size_t d, std::size_t num_aug,
                                        std::uint64_t seed);
};

/// Population gradient (w - w_star) s of the MSE objective.
Matrix exact_gradient(const LinearProblem& p, const Matrix& w);

/// (1/K) sum_k A_k s A_k^T, symmetrized against roundoff.
Matrix augmented_cov(const Matrix& s, const std::vector<Matrix>& aug_ops);

/// || polar_exact(E0 cov) - E0 / sqrt(alpha) ||_F / ||E0||_F. Requires the
/// exact-isotropic construction and full-rank cov.
double muon_invariance_check(const LinearProblem& p);
double muon_invariance_residual(const Matrix& e0, double alpha, const Matrix& cov);

struct RateReport {
    std::vector<double> error_norms;          // per step, ||E_t||_F
    double fitted_contraction = 1.0;          // geometric fit over the trajectory
    // Per-eigendirection first-step contraction: measured projections for GD,
    // the analytic 1 - eta/sqrt(alpha) for Muon.
    std::vector<double> direction_factors;
    double first_step_factor = 1.0;           // ||E_1||_F / ||E_0||_F
    bool diverged = false;
};

/// Exact population dynamics: GD runs E <- E (I - eta cov); Muon runs
/// E <- E - eta polar_exact(E cov). Both use the problem's augmented
/// covariance.
std::pair<RateReport, RateReport> rate_compare(const LinearProblem& p, double eta, long steps);

/// m x d matrix with orthonormal columns via modified Gram-Schmidt on a
/// Gaussian draw.
Matrix random_orthonormal(std::size_t m, std::size_t d, Rng& rng);

}  // namespace muonlab
