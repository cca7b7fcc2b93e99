#include "muonlab/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "muonlab/linalg.hpp"
#include "muonlab/ortho.hpp"
#include "muonlab/rng.hpp"
#include "muonlab/spectral.hpp"
#include "muonlab/theory.hpp"
#include "muonlab/tinyvit.hpp"

namespace muonlab {
namespace {

struct Reporter {
    std::ostringstream out;
    bool ok = true;

    void check(const std::string& name, bool pass, const std::string& details = "") {
        out << "check " << name << " " << (pass ? "pass" : "fail");
        if (!details.empty()) out << " " << details;
        out << "\n";
        if (!pass) ok = false;
    }
    void info(const std::string& line) { out << "info " << line << "\n"; }
};

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

Matrix random_gaussian(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (double& v : m.raw()) v = rng.normal();
    return m;
}

/// Random matrix with prescribed condition number via U diag V^T.
Matrix random_conditioned(std::size_t n, double cond, Rng& rng) {
    const Matrix u = random_orthonormal(n, n, rng);
    const Matrix v = random_orthonormal(n, n, rng);
    Matrix d(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
        d(i, i) = std::pow(cond, -t);  // sigma from 1 down to 1/cond
    }
    return matmul(matmul(u, d), v.transposed());
}

void suite_linalg(Reporter& rep) {
    Rng rng(41);
    double worst_recon = 0.0, worst_ortho = 0.0;
    const std::size_t shapes[][2] = {{8, 8}, {12, 5}, {5, 12}, {16, 16}, {1, 7}, {9, 1}};
    for (int trial = 0; trial < 5; ++trial)
        for (const auto& sh : shapes) {
            const Matrix m = random_gaussian(sh[0], sh[1], rng);
            const SvdResult s = svd(m);
            const double scale = std::max(frobenius_norm(m), 1e-30);
            worst_recon = std::max(worst_recon, frobenius_norm(s.reconstruct() - m) / scale);
            Matrix utu = matmul_tn(s.u, s.u);
            for (std::size_t i = 0; i < utu.rows(); ++i) utu(i, i) -= 1.0;
            Matrix vvt = matmul_nt(s.vt, s.vt);
            for (std::size_t i = 0; i < vvt.rows(); ++i) vvt(i, i) -= 1.0;
            worst_ortho = std::max({worst_ortho, frobenius_norm(utu), frobenius_norm(vvt)});
        }
    rep.check("svd_reconstruction", worst_recon <= 1e-10, "worst_rel=" + num(worst_recon));
    rep.check("svd_orthonormality", worst_ortho <= 1e-10, "worst=" + num(worst_ortho));

    double worst_chol = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 3 + static_cast<std::size_t>(rng.below(10));
        const Matrix b = random_gaussian(n, n, rng);
        Matrix g = matmul_nt(b, b);
        for (std::size_t i = 0; i < n; ++i) g(i, i) += 0.5;
        const Matrix l = cholesky(g);
        worst_chol = std::max(worst_chol,
                              frobenius_norm(matmul_nt(l, l) - g) / frobenius_norm(g));
    }
    rep.check("cholesky_reconstruction", worst_chol <= 1e-12, "worst_rel=" + num(worst_chol));

    double worst_eig = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 3 + static_cast<std::size_t>(rng.below(10));
        const Matrix b = random_gaussian(n, n, rng);
        Matrix g = matmul_nt(b, b);
        const SymEigResult e = sym_eig(g);
        Matrix recon(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t k = 0; k < n; ++k)
                    recon(i, j) += e.eigenvectors(i, k) * e.eigenvalues[k] * e.eigenvectors(j, k);
        worst_eig = std::max(worst_eig, frobenius_norm(recon - g) / frobenius_norm(g));
    }
    rep.check("sym_eig_reconstruction", worst_eig <= 1e-10, "worst_rel=" + num(worst_eig));
}

void suite_polar(Reporter& rep) {
    Rng rng(42);
    const auto schedules = load_schedules(default_schedule_path());
    for (const auto& [name, schedule] : schedules) {
        double worst = 0.0;
        bool diverged = false;
        std::string diag;
        for (int trial = 0; trial < 20 && !diverged; ++trial) {
            const Matrix m = random_conditioned(32, 100.0, rng);
            try {
                const Matrix x = newton_schulz(m, schedule);
                const double err = frobenius_norm(x - polar_exact(m));
                worst = std::max(worst, err);
            } catch (const DivergenceError& e) {
                diverged = true;
                diag = e.what();
            }
        }
        rep.check("ns_no_divergence." + name, !diverged, diag);
        if (name == "polar-express")
            rep.check("ns_accuracy." + name, !diverged && worst <= 1e-6, "worst_frob=" + num(worst));
        else
            rep.info("ns_accuracy." + name + " worst_frob=" + num(worst) + " (informational)");
    }

    const WhiteningKind kinds[] = {WhiteningKind::ZcaPolar, WhiteningKind::Pca,
                                   WhiteningKind::Cholesky, WhiteningKind::ZcaCor,
                                   WhiteningKind::PcaCor};
    double worst_white = 0.0, worst_zca = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix m = random_gaussian(8, 16, rng);
        for (WhiteningKind kind : kinds) {
            const Matrix wm = whiten(m, kind);
            Matrix gram = matmul_nt(wm, wm);
            for (std::size_t i = 0; i < gram.rows(); ++i) gram(i, i) -= 1.0;
            worst_white = std::max(worst_white, max_abs(gram));
        }
        worst_zca = std::max(worst_zca,
                             frobenius_norm(whiten(m, WhiteningKind::ZcaPolar) - polar_exact(m)));
    }
    rep.check("whitening_identity", worst_white <= 1e-8, "worst=" + num(worst_white));
    rep.check("zca_polar_coincidence", worst_zca <= 1e-9, "worst_frob=" + num(worst_zca));
}

void suite_spectral(Reporter& rep) {
    Rng rng(43);
    bool exact = true;
    for (int trial = 0; trial < 200 && exact; ++trial) {
        const std::size_t r = 1 + rng.below(12);
        std::vector<double> sigma(r);
        for (double& s : sigma) s = rng.uniform(0.0, 2.0);
        std::sort(sigma.rbegin(), sigma.rend());
        const double p = rng.uniform(0.05, 1.0);
        double total = 0.0;
        for (double s : sigma) total += s * s;
        double prefix = 0.0;
        double brute = 1.0;
        for (std::size_t k = 1; k <= r; ++k) {
            prefix += sigma[k - 1] * sigma[k - 1];
            if (prefix >= p * total) {
                brute = static_cast<double>(k) / static_cast<double>(r);
                break;
            }
        }
        if (energy_quantile_rank(sigma, p) != brute) exact = false;
    }
    rep.check("mu_p_brute_force", exact);

    // Uniform length-10 spectrum vs rank-1 at p = 0.9: ratio exactly 9.
    SpectrumSnapshot a, b;
    a.run_id = "a";
    b.run_id = "b";
    a.family = b.family = BlockFamily::MlpDown;
    a.sigma.assign(10, 1.0);
    b.sigma.assign(10, 0.0);
    b.sigma[0] = 3.0;
    const AtlasResult atlas = rank_ratio_atlas({a}, {b}, 0.9);
    const bool nine = atlas.cells.size() == 1 && std::fabs(atlas.cells[0].ratio - 9.0) <= 1e-9;
    rep.check("uniform_vs_rank1_ratio", nine,
              atlas.cells.empty() ? "no cells" : "ratio=" + num(atlas.cells[0].ratio));

    // Reciprocity over random snapshot pairs.
    double worst_recip = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        SpectrumSnapshot x = a, y = b;
        x.sigma.resize(8);
        y.sigma.resize(8);
        for (double& s : x.sigma) s = rng.uniform(0.1, 2.0);
        for (double& s : y.sigma) s = rng.uniform(0.1, 2.0);
        std::sort(x.sigma.rbegin(), x.sigma.rend());
        std::sort(y.sigma.rbegin(), y.sigma.rend());
        const AtlasResult ab = rank_ratio_atlas({x}, {y}, 0.9);
        const AtlasResult ba = rank_ratio_atlas({y}, {x}, 0.9);
        worst_recip = std::max(worst_recip,
                               std::fabs(ab.cells[0].ratio * ba.cells[0].ratio - 1.0));
    }
    rep.check("atlas_reciprocity", worst_recip <= 1e-12, "worst=" + num(worst_recip));
}

void suite_theory(Reporter& rep) {
    double worst_res = 0.0, worst_gd = 0.0, worst_muon = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng shape_rng(mix_seed(seed, 0xd1));
        const std::size_t d = 2 + shape_rng.below(31);
        const std::size_t m = d + shape_rng.below(33);
        const double alpha = 0.25 + 4.0 * (seed % 7) / 7.0;
        const LinearProblem p = LinearProblem::random_isotropic(m, d, alpha, 4, seed);
        worst_res = std::max(worst_res, muon_invariance_check(p));

        if (seed < 20) {
            const double eta = 0.05;
            const auto [gd, muon] = rate_compare(p, eta, 5);
            const Matrix cov = augmented_cov(p.s, p.aug_ops);
            const auto eig = sym_eig(cov);
            for (std::size_t i = 0; i < eig.eigenvalues.size(); ++i)
                worst_gd = std::max(worst_gd, std::fabs(gd.direction_factors[i] -
                                                        (1.0 - eta * eig.eigenvalues[i])));
            worst_muon = std::max(worst_muon, std::fabs(muon.first_step_factor -
                                                        (1.0 - eta / std::sqrt(alpha))));
        }
    }
    rep.check("muon_invariance_residual", worst_res <= 1e-8, "worst=" + num(worst_res));
    rep.check("gd_direction_factors", worst_gd <= 1e-10, "worst=" + num(worst_gd));
    rep.check("muon_first_step_factor", worst_muon <= 1e-10, "worst=" + num(worst_muon));

    // Non-isotropic control: the residual should be materially large.
    const LinearProblem generic = LinearProblem::random_generic(16, 16, 4, 7);
    const Matrix cov = augmented_cov(generic.s, generic.aug_ops);
    const double bad = muon_invariance_residual(generic.e0, 1.0, cov);
    rep.check("non_isotropic_control", bad > 1e-3, "residual=" + num(bad));
}

void suite_gradcheck(Reporter& rep) {
    VitConfig cfg;
    cfg.image_size = 8;
    cfg.patch_size = 4;
    cfg.embed_dim = 8;
    cfg.depth = 1;
    cfg.heads = 2;
    cfg.mlp_ratio = 2.0;
    cfg.num_classes = 3;
    VitModel model(cfg, 1, 99);

    Rng rng(44);
    ImageBatch batch;
    batch.n = 2;
    batch.c = 1;
    batch.h = 8;
    batch.w = 8;
    batch.pixels.resize(batch.n * batch.c * batch.h * batch.w);
    for (double& v : batch.pixels) v = rng.normal();
    batch.labels = Matrix(2, 3);
    for (std::size_t i = 0; i < 2; ++i) {
        double z = 0.0;
        for (std::size_t c = 0; c < 3; ++c) {
            batch.labels(i, c) = rng.uniform(0.1, 1.0);
            z += batch.labels(i, c);
        }
        for (std::size_t c = 0; c < 3; ++c) batch.labels(i, c) /= z;
    }

    auto loss_at = [&]() {
        const Matrix logits = model.forward(batch);
        double loss = 0.0;
        for (std::size_t i = 0; i < batch.n; ++i) {
            double mx = logits(i, 0);
            for (std::size_t c = 1; c < 3; ++c) mx = std::max(mx, logits(i, c));
            double z = 0.0;
            for (std::size_t c = 0; c < 3; ++c) z += std::exp(logits(i, c) - mx);
            for (std::size_t c = 0; c < 3; ++c)
                loss -= batch.labels(i, c) * (logits(i, c) - mx - std::log(z));
        }
        return loss / static_cast<double>(batch.n);
    };

    VitModel::Cache cache;
    model.forward(batch, &cache);
    model.loss_and_backward(batch, cache);

    const double h = 1e-4;
    for (auto& block : model.blocks()) {
        const Matrix analytic = block.grad;
        Matrix fd(analytic.rows(), analytic.cols());
        for (std::size_t i = 0; i < block.tensor.size(); ++i) {
            const double saved = block.tensor.raw()[i];
            block.tensor.raw()[i] = saved + h;
            const double up = loss_at();
            block.tensor.raw()[i] = saved - h;
            const double down = loss_at();
            block.tensor.raw()[i] = saved;
            fd.raw()[i] = (up - down) / (2.0 * h);
        }
        const double rel = frobenius_norm(fd - analytic) / std::max(frobenius_norm(fd), 1e-12);
        rep.check("gradcheck." + block.name, rel <= 1e-4, "rel=" + num(rel));
    }
}

}  // namespace

std::vector<std::string> suite_names() {
    return {"linalg", "polar", "spectral", "theory", "gradcheck", "all"};
}

SuiteResult run_suite(const std::string& name) {
    Reporter rep;
    if (name == "linalg") suite_linalg(rep);
    else if (name == "polar") suite_polar(rep);
    else if (name == "spectral") suite_spectral(rep);
    else if (name == "theory") suite_theory(rep);
    else if (name == "gradcheck") suite_gradcheck(rep);
    else if (name == "all") {
        suite_linalg(rep);
        suite_polar(rep);
        suite_spectral(rep);
        suite_theory(rep);
        suite_gradcheck(rep);
    } else {
        throw ConfigError("unknown verify suite: '" + name + "'");
    }
    SuiteResult result;
    result.name = name;
    result.ok = rep.ok;
    result.report = "suite " + name + " " + (rep.ok ? "pass" : "fail") + "\n" + rep.out.str();
    return result;
}

}  // namespace muonlab
