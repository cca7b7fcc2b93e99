#include "muonlab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace muonlab {

Matrix SvdResult::reconstruct() const {
    Matrix us = u;
    for (std::size_t i = 0; i < us.rows(); ++i)
        for (std::size_t j = 0; j < us.cols(); ++j) us(i, j) *= sigma[j];
    return matmul(us, vt);
}

namespace {

constexpr double kJacobiTol = 1e-12;
constexpr int kJacobiMaxSweeps = 60;

// One-sided Jacobi on a tall matrix (rows >= cols): orthogonalize columns of
// `a` by right rotations, accumulating them into `v` (n x n).
void one_sided_jacobi(Matrix& a, Matrix& v) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    v = Matrix::identity(n);
    for (int sweep = 0; sweep < kJacobiMaxSweeps; ++sweep) {
        double worst = 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    const double x = a(i, p), y = a(i, q);
                    app += x * x;
                    aqq += y * y;
                    apq += x * y;
                }
                const double denom = std::sqrt(app * aqq);
                if (denom == 0.0) continue;
                worst = std::max(worst, std::abs(apq) / denom);
                if (std::abs(apq) <= kJacobiTol * denom) continue;
                const double zeta = (aqq - app) / (2.0 * apq);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double x = a(i, p), y = a(i, q);
                    a(i, p) = c * x - s * y;
                    a(i, q) = s * x + c * y;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double x = v(i, p), y = v(i, q);
                    v(i, p) = c * x - s * y;
                    v(i, q) = s * x + c * y;
                }
            }
        }
        if (worst <= kJacobiTol) return;
    }
    // Measure the residual left after the sweep cap for the diagnostic.
    double resid = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p)
        for (std::size_t q = p + 1; q < n; ++q) {
            double app = 0.0, aqq = 0.0, apq = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                app += a(i, p) * a(i, p);
                aqq += a(i, q) * a(i, q);
                apq += a(i, p) * a(i, q);
            }
            if (app * aqq > 0.0) resid = std::max(resid, std::abs(apq) / std::sqrt(app * aqq));
        }
    throw NumericError("svd: Jacobi did not converge in " + std::to_string(kJacobiMaxSweeps) +
                       " sweeps, relative off-diagonal residual " + std::to_string(resid));
}

// Extend the orthonormal columns of u (some may be zero) to a full orthonormal
// set, replacing zero columns with completed basis vectors.
void complete_orthonormal_columns(Matrix& u, const std::vector<bool>& is_zero) {
    const std::size_t m = u.rows();
    const std::size_t r = u.cols();
    for (std::size_t j = 0; j < r; ++j) {
        if (!is_zero[j]) continue;
        for (std::size_t cand = 0; cand < m; ++cand) {
            std::vector<double> col(m, 0.0);
            col[cand] = 1.0;
            for (std::size_t k = 0; k < r; ++k) {
                if (is_zero[k] && k >= j) continue;  // only project onto filled columns
                double dot = 0.0;
                for (std::size_t i = 0; i < m; ++i) dot += col[i] * u(i, k);
                for (std::size_t i = 0; i < m; ++i) col[i] -= dot * u(i, k);
            }
            double norm = 0.0;
            for (double x : col) norm += x * x;
            norm = std::sqrt(norm);
            if (norm > 0.5) {
                for (std::size_t i = 0; i < m; ++i) u(i, j) = col[i] / norm;
                break;
            }
        }
    }
}

void apply_sign_convention(Matrix& u, Matrix& vt) {
    for (std::size_t j = 0; j < u.cols(); ++j) {
        std::size_t arg = 0;
        double best = 0.0;
        for (std::size_t i = 0; i < u.rows(); ++i) {
            if (std::abs(u(i, j)) > best) {
                best = std::abs(u(i, j));
                arg = i;
            }
        }
        if (u(arg, j) < 0.0) {
            for (std::size_t i = 0; i < u.rows(); ++i) u(i, j) = -u(i, j);
            for (std::size_t i = 0; i < vt.cols(); ++i) vt(j, i) = -vt(j, i);
        }
    }
}

}  // namespace

SvdResult svd(const Matrix& m) {
    require_finite(m, "svd");
    if (m.rows() == 0 || m.cols() == 0) throw DimensionError("svd: empty matrix");
    const bool flip = m.rows() < m.cols();
    Matrix a = flip ? m.transposed() : m;  // tall copy
    Matrix v;
    one_sided_jacobi(a, v);

    const std::size_t rows = a.rows();
    const std::size_t r = a.cols();
    std::vector<double> sigma(r);
    for (std::size_t j = 0; j < r; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < rows; ++i) acc += a(i, j) * a(i, j);
        sigma[j] = std::sqrt(acc);
    }
    std::vector<std::size_t> order(r);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return sigma[i] > sigma[j]; });

    const double tiny = sigma.empty() ? 0.0 : sigma[order[0]] * 1e-300;
    Matrix u(rows, r);
    Matrix vt(r, r);
    std::vector<double> sorted(r);
    std::vector<bool> is_zero(r, false);
    for (std::size_t k = 0; k < r; ++k) {
        const std::size_t j = order[k];
        sorted[k] = sigma[j];
        if (sigma[j] <= tiny || sigma[j] == 0.0) {
            is_zero[k] = true;
        } else {
            for (std::size_t i = 0; i < rows; ++i) u(i, k) = a(i, j) / sigma[j];
        }
        for (std::size_t i = 0; i < r; ++i) vt(k, i) = v(i, j);
    }
    complete_orthonormal_columns(u, is_zero);
    apply_sign_convention(u, vt);

    SvdResult result;
    if (flip) {
        result.u = vt.transposed();
        result.vt = u.transposed();
        // Re-apply the convention on the left factor after the swap.
        Matrix uu = std::move(result.u);
        Matrix vv = std::move(result.vt);
        apply_sign_convention(uu, vv);
        result.u = std::move(uu);
        result.vt = std::move(vv);
    } else {
        result.u = std::move(u);
        result.vt = std::move(vt);
    }
    result.sigma = std::move(sorted);
    return result;
}

std::vector<double> singular_values(const Matrix& m) { return svd(m).sigma; }

Matrix cholesky(const Matrix& g) {
    if (g.rows() != g.cols()) throw DimensionError("cholesky: matrix not square");
    require_finite(g, "cholesky");
    const std::size_t n = g.rows();
    const double scale = 1.0 + max_abs(g);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(g(i, j) - g(j, i)) > 1e-8 * scale)
                throw NumericError("cholesky: input not symmetric at (" + std::to_string(i) +
                                   "," + std::to_string(j) + ")");
    Matrix c(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = g(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= c(j, k) * c(j, k);
        if (d <= 0.0)
            throw DefinitenessError("cholesky: matrix not positive definite at pivot " +
                                    std::to_string(j));
        c(j, j) = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = g(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= c(i, k) * c(j, k);
            c(i, j) = s / c(j, j);
        }
    }
    return c;
}

SymEigResult sym_eig(const Matrix& g) {
    if (g.rows() != g.cols()) throw DimensionError("sym_eig: matrix not square");
    require_finite(g, "sym_eig");
    const std::size_t n = g.rows();
    const double scale = 1.0 + max_abs(g);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(g(i, j) - g(j, i)) > 1e-8 * scale)
                throw NumericError("sym_eig: input not symmetric at (" + std::to_string(i) +
                                   "," + std::to_string(j) + ")");

    Matrix a = g;
    Matrix h = Matrix::identity(n);
    for (int sweep = 0; sweep < kJacobiMaxSweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off = std::max(off, std::abs(a(p, q)));
        if (off <= kJacobiTol * scale) break;
        if (sweep == kJacobiMaxSweeps - 1)
            throw NumericError("sym_eig: Jacobi did not converge, off-diagonal " +
                               std::to_string(off));
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) <= kJacobiTol * scale * 1e-3) continue;
                const double zeta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < n; ++i) {
                    const double x = a(p, i), y = a(q, i);
                    a(p, i) = c * x - s * y;
                    a(q, i) = s * x + c * y;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double x = a(i, p), y = a(i, q);
                    a(i, p) = c * x - s * y;
                    a(i, q) = s * x + c * y;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double x = h(i, p), y = h(i, q);
                    h(i, p) = c * x - s * y;
                    h(i, q) = s * x + c * y;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    SymEigResult result;
    result.eigenvalues.resize(n);
    result.eigenvectors = Matrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        result.eigenvalues[k] = a(order[k], order[k]);
        for (std::size_t i = 0; i < n; ++i) result.eigenvectors(i, k) = h(i, order[k]);
    }
    // Same deterministic sign convention as the SVD.
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t arg = 0;
        double best = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (std::abs(result.eigenvectors(i, k)) > best) {
                best = std::abs(result.eigenvectors(i, k));
                arg = i;
            }
        if (result.eigenvectors(arg, k) < 0.0)
            for (std::size_t i = 0; i < n; ++i) result.eigenvectors(i, k) *= -1.0;
    }
    return result;
}

Matrix solve_lower_triangular(const Matrix& l, const Matrix& b) {
    if (l.rows() != l.cols() || l.rows() != b.rows())
        throw DimensionError("solve_lower_triangular: shape mismatch");
    const std::size_t n = l.rows();
    Matrix x = b;
    for (std::size_t col = 0; col < b.cols(); ++col) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = x(i, col);
            for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x(k, col);
            if (l(i, i) == 0.0)
                throw DefinitenessError("solve_lower_triangular: zero diagonal at " +
                                        std::to_string(i));
            x(i, col) = s / l(i, i);
        }
    }
    return x;
}

Matrix spd_inverse_sqrt(const Matrix& g) {
    SymEigResult eig = sym_eig(g);
    const std::size_t n = g.rows();
    for (double lam : eig.eigenvalues)
        if (lam <= 0.0)
            throw DefinitenessError("spd_inverse_sqrt: non-positive eigenvalue " +
                                    std::to_string(lam));
    Matrix scaled = eig.eigenvectors;
    for (std::size_t j = 0; j < n; ++j) {
        const double w = 1.0 / std::sqrt(eig.eigenvalues[j]);
        for (std::size_t i = 0; i < n; ++i) scaled(i, j) *= w;
    }
    return matmul_nt(scaled, eig.eigenvectors);
}

}  // namespace muonlab
