#include "muonlab/theory.hpp"

#include <cmath>

#include "muonlab/ortho.hpp"

namespace muonlab {
namespace {

Matrix random_gaussian(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (double& v : m.raw()) v = rng.normal();
    return m;
}

/// Random SPD matrix B B^T / d + 0.1 I.
Matrix random_spd(std::size_t d, Rng& rng) {
    const Matrix b = random_gaussian(d, d, rng);
    Matrix s = matmul_nt(b, b);
    s *= 1.0 / static_cast<double>(d);
    for (std::size_t i = 0; i < d; ++i) s(i, i) += 0.1;
    return s;
}

}  // namespace

Matrix random_orthonormal(std::size_t m, std::size_t d, Rng& rng) {
    if (m < d) throw DimensionError("random_orthonormal needs m >= d");
    Matrix a = random_gaussian(m, d, rng);
    // Modified Gram-Schmidt, column by column.
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t k = 0; k < j; ++k) {
            double dot = 0.0;
            for (std::size_t i = 0; i < m; ++i) dot += a(i, k) * a(i, j);
            for (std::size_t i = 0; i < m; ++i) a(i, j) -= dot * a(i, k);
        }
        double norm = 0.0;
        for (std::size_t i = 0; i < m; ++i) norm += a(i, j) * a(i, j);
        norm = std::sqrt(norm);
        if (norm < 1e-12) throw NumericError("degenerate draw in random_orthonormal");
        for (std::size_t i = 0; i < m; ++i) a(i, j) /= norm;
    }
    return a;
}

void LinearProblem::validate() const {
    const std::size_t m = w_star.rows(), d = w_star.cols();
    if (s.rows() != d || s.cols() != d) throw DimensionError("covariance shape mismatch");
    if (e0.rows() != m || e0.cols() != d) throw DimensionError("initial error shape mismatch");
    for (const Matrix& a : aug_ops)
        if (a.rows() != d || a.cols() != d)
            throw DimensionError("augmentation operator shape mismatch");
    const double scale = std::max(max_abs(s), 1.0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j)
            if (std::fabs(s(i, j) - s(j, i)) > 1e-8 * scale)
                throw DefinitenessError("input covariance is not symmetric");
    if (exact_isotropic) {
        if (m < d) throw DimensionError("exact isotropy requires m >= d");
        Matrix gram = matmul_tn(e0, e0);
        for (std::size_t i = 0; i < d; ++i) gram(i, i) -= alpha;
        if (frobenius_norm(gram) > 1e-10 * std::max(alpha, 1.0) * std::sqrt(static_cast<double>(d)))
            throw NumericError("E0^T E0 deviates from alpha I beyond tolerance");
    }
}

LinearProblem LinearProblem::random_isotropic(std::size_t m, std::size_t d, double alpha,
                                              std::size_t num_aug, std::uint64_t seed) {
    if (alpha <= 0.0) throw ConfigError("alpha must be positive");
    Rng rng(mix_seed(seed, 0x7e0, 0));
    LinearProblem p;
    p.w_star = random_gaussian(m, d, rng);
    p.s = random_spd(d, rng);
    p.e0 = random_orthonormal(m, d, rng);
    p.e0 *= std::sqrt(alpha);
    p.alpha = alpha;
    p.exact_isotropic = true;
    for (std::size_t k = 0; k < num_aug; ++k) {
        Matrix a = Matrix::identity(d);
        const Matrix noise = random_gaussian(d, d, rng);
        for (std::size_t i = 0; i < a.size(); ++i) a.raw()[i] += 0.3 * noise.raw()[i];
        p.aug_ops.push_back(std::move(a));
    }
    p.validate();
    return p;
}

LinearProblem LinearProblem::random_generic(std::size_t m, std::size_t d, std::size_t num_aug,
                                            std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x7e1, 0));
    LinearProblem p;
    p.w_star = random_gaussian(m, d, rng);
    p.s = random_spd(d, rng);
    p.e0 = random_gaussian(m, d, rng);
    p.alpha = 1.0;
    p.exact_isotropic = false;
    for (std::size_t k = 0; k < num_aug; ++k) {
        Matrix a = Matrix::identity(d);
        const Matrix noise = random_gaussian(d, d, rng);
        for (std::size_t i = 0; i < a.size(); ++i) a.raw()[i] += 0.3 * noise.raw()[i];
        p.aug_ops.push_back(std::move(a));
    }
    p.validate();
    return p;
}

Matrix exact_gradient(const LinearProblem& p, const Matrix& w) {
    if (!w.same_shape(p.w_star)) throw DimensionError("exact_gradient: weight shape mismatch");
    return matmul(w - p.w_star, p.s);
}

Matrix augmented_cov(const Matrix& s, const std::vector<Matrix>& aug_ops) {
    if (s.rows() != s.cols()) throw DimensionError("covariance must be square");
    if (aug_ops.empty()) throw DimensionError("augmented_cov needs at least one operator");
    const std::size_t d = s.rows();
    Matrix out(d, d);
    for (const Matrix& a : aug_ops) {
        if (a.rows() != d || a.cols() != d)
            throw DimensionError("augmentation operator shape mismatch");
        out += matmul_nt(matmul(a, s), a);
    }
    out *= 1.0 / static_cast<double>(aug_ops.size());
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j) {
            const double v = 0.5 * (out(i, j) + out(j, i));
            out(i, j) = v;
            out(j, i) = v;
        }
    return out;
}

double muon_invariance_residual(const Matrix& e0, double alpha, const Matrix& cov) {
    const auto eig = sym_eig(cov);
    double lam_min = eig.eigenvalues.front();
    for (double v : eig.eigenvalues) lam_min = std::min(lam_min, v);
    if (lam_min <= 1e-12)
        throw DefinitenessError("augmented covariance is rank deficient");
    const Matrix polar = polar_exact(matmul(e0, cov));
    const Matrix target = e0 * (1.0 / std::sqrt(alpha));
    return frobenius_norm(polar - target) / frobenius_norm(e0);
}

double muon_invariance_check(const LinearProblem& p) {
    p.validate();
    if (!p.exact_isotropic)
        throw ConfigError("muon_invariance_check requires the exact-isotropic construction");
    const Matrix cov = p.aug_ops.empty() ? p.s : augmented_cov(p.s, p.aug_ops);
    return muon_invariance_residual(p.e0, p.alpha, cov);
}

std::pair<RateReport, RateReport> rate_compare(const LinearProblem& p, double eta, long steps) {
    p.validate();
    if (steps < 1) throw ConfigError("rate_compare needs at least one step");
    const Matrix cov = p.aug_ops.empty() ? p.s : augmented_cov(p.s, p.aug_ops);
    const auto eig = sym_eig(cov);
    const std::size_t d = cov.rows();

    if (eta != 0.0) {
        for (double lam : eig.eigenvalues)
            if (1.0 - eta * lam <= -1.0)
                throw DivergenceError("eta too large for GD stability on this covariance");
    }

    RateReport gd, muon;
    // Measured per-eigendirection first-step contraction for GD: project the
    // error onto the eigenvectors of the covariance before and after one step.
    {
        const Matrix e1 = p.e0 - eta * matmul(p.e0, cov);
        const Matrix p0 = matmul(p.e0, eig.eigenvectors);
        const Matrix p1 = matmul(e1, eig.eigenvectors);
        for (std::size_t j = 0; j < d; ++j) {
            double n0 = 0.0, dot = 0.0;
            for (std::size_t i = 0; i < p0.rows(); ++i) {
                n0 += p0(i, j) * p0(i, j);
                dot += p0(i, j) * p1(i, j);
            }
            // Signed ratio: the post-step projection is exactly (1 - eta
            // lambda_j) times the pre-step projection.
            gd.direction_factors.push_back(n0 > 0.0 ? dot / n0 : 1.0);
        }
    }
    muon.direction_factors.assign(d, 1.0 - eta / std::sqrt(p.alpha));

    auto run = [&](bool is_muon) {
        RateReport& rep = is_muon ? muon : gd;
        Matrix e = p.e0;
        rep.error_norms.push_back(frobenius_norm(e));
        for (long t = 0; t < steps; ++t) {
            if (is_muon) {
                const Matrix g = matmul(e, cov);
                if (frobenius_norm(g) == 0.0) break;
                e -= eta * polar_exact(g);
            } else {
                e -= eta * matmul(e, cov);
            }
            const double norm = frobenius_norm(e);
            rep.error_norms.push_back(norm);
            if (norm > 10.0 * rep.error_norms.front()) {
                rep.diverged = true;
                break;
            }
        }
        if (rep.error_norms.size() > 1 && rep.error_norms.front() > 0.0)
            rep.first_step_factor = rep.error_norms[1] / rep.error_norms[0];
        double log_sum = 0.0;
        std::size_t count = 0;
        for (std::size_t t = 1; t < rep.error_norms.size(); ++t)
            if (rep.error_norms[t] > 0.0 && rep.error_norms[t - 1] > 0.0) {
                log_sum += std::log(rep.error_norms[t] / rep.error_norms[t - 1]);
                ++count;
            }
        rep.fitted_contraction = count > 0 ? std::exp(log_sum / static_cast<double>(count)) : 1.0;
    };
    run(false);
    run(true);
    return {gd, muon};
}

}  // namespace muonlab
