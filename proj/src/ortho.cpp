#include "muonlab/ortho.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#ifndef MUONLAB_BUNDLED_SCHEDULES
#define MUONLAB_BUNDLED_SCHEDULES "share/ns_schedules.txt"
#endif

namespace muonlab {

void NsCoeffSchedule::validate() const {
    if (per_iteration.empty())
        throw ConfigError("schedule '" + name + "': empty coefficient list");
    for (const auto& triple : per_iteration)
        for (double v : triple)
            if (!std::isfinite(v))
                throw ConfigError("schedule '" + name + "': non-finite coefficient");
}

std::map<std::string, NsCoeffSchedule> load_schedules(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open schedule file: " + path);
    std::map<std::string, NsCoeffSchedule> out;
    NsCoeffSchedule* current = nullptr;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        std::string first;
        if (!(ss >> first)) continue;
        if (first.front() == '[') {
            std::string name = line.substr(line.find('[') + 1);
            const auto close = name.find(']');
            if (close == std::string::npos)
                throw ConfigError("schedule file " + path + ":" + std::to_string(lineno) +
                                  ": unterminated section header");
            name.erase(close);
            current = &out[name];
            current->name = name;
        } else {
            if (!current)
                throw ConfigError("schedule file " + path + ":" + std::to_string(lineno) +
                                  ": coefficients before any [name] header");
            std::istringstream ts(line);
            double a, b, c;
            if (!(ts >> a >> b >> c))
                throw ConfigError("schedule file " + path + ":" + std::to_string(lineno) +
                                  ": expected three coefficients");
            current->per_iteration.push_back({a, b, c});
        }
    }
    for (auto& [name, sched] : out) sched.validate();
    if (out.empty()) throw ConfigError("schedule file " + path + ": no schedules defined");
    return out;
}

std::string default_schedule_path() {
    if (const char* env = std::getenv("MUONLAB_SCHEDULES")) return env;
    return MUONLAB_BUNDLED_SCHEDULES;
}

NsCoeffSchedule get_schedule(const std::string& name, const std::string& file) {
    const std::string path = file.empty() ? default_schedule_path() : file;
    auto all = load_schedules(path);
    auto it = all.find(name);
    if (it == all.end())
        throw ConfigError("schedule '" + name + "' not found in " + path);
    return it->second;
}

WhiteningKind whitening_kind_from_string(const std::string& s) {
    if (s == "zca_polar" || s == "zca") return WhiteningKind::ZcaPolar;
    if (s == "pca") return WhiteningKind::Pca;
    if (s == "cholesky") return WhiteningKind::Cholesky;
    if (s == "zca_cor") return WhiteningKind::ZcaCor;
    if (s == "pca_cor") return WhiteningKind::PcaCor;
    throw ConfigError("unknown whitening kind: " + s);
}

std::string to_string(WhiteningKind kind) {
    switch (kind) {
        case WhiteningKind::ZcaPolar: return "zca_polar";
        case WhiteningKind::Pca: return "pca";
        case WhiteningKind::Cholesky: return "cholesky";
        case WhiteningKind::ZcaCor: return "zca_cor";
        case WhiteningKind::PcaCor: return "pca_cor";
    }
    return "?";
}

PolarResult polar_exact_full(const Matrix& m) {
    require_finite(m, "polar_exact");
    PolarResult result;
    if (frobenius_norm(m) == 0.0) {
        result.factor = Matrix(m.rows(), m.cols());
        result.rank_deficient = true;
        return result;
    }
    SvdResult dec = svd(m);
    const double cutoff = dec.sigma.front() * 1e-12;
    std::size_t rank = 0;
    for (double s : dec.sigma)
        if (s > cutoff) ++rank;
    result.rank_deficient = rank < dec.sigma.size();
    // U V^T restricted to the rank support.
    Matrix u = dec.u;
    if (result.rank_deficient) {
        for (std::size_t j = rank; j < u.cols(); ++j)
            for (std::size_t i = 0; i < u.rows(); ++i) u(i, j) = 0.0;
    }
    result.factor = matmul(u, dec.vt);
    return result;
}

Matrix polar_exact(const Matrix& m) { return polar_exact_full(m).factor; }

Matrix newton_schulz(const Matrix& m, const NsCoeffSchedule& schedule) {
    require_finite(m, "newton_schulz");
    schedule.validate();
    const double norm = frobenius_norm(m);
    if (norm == 0.0) return Matrix(m.rows(), m.cols());

    const bool flip = m.rows() > m.cols();
    Matrix x = flip ? m.transposed() : m;  // rows <= cols from here on
    x *= 1.0 / (norm * 1.01);
    const double limit = 10.0 * std::sqrt(static_cast<double>(x.rows()));

    for (std::size_t it = 0; it < schedule.per_iteration.size(); ++it) {
        const auto [a, b, c] = schedule.per_iteration[it];
        // X(X^T X) = (X X^T) X; the Gram matrix on the small side.
        Matrix gram = matmul_nt(x, x);
        Matrix gram2 = matmul(gram, gram);
        Matrix poly = gram;
        poly *= b;
        gram2 *= c;
        poly += gram2;
        Matrix next = matmul(poly, x);
        x *= a;
        x += next;
        if (!x.all_finite() || frobenius_norm(x) > limit)
            throw DivergenceError("newton_schulz: iterate diverged at iteration " +
                                  std::to_string(it));
    }
    return flip ? x.transposed() : x;
}

RowNormalizeResult row_normalize(const Matrix& m) {
    require_finite(m, "row_normalize");
    RowNormalizeResult result;
    result.normalized = m;
    result.d.resize(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) acc += m(i, j) * m(i, j);
        if (acc == 0.0)
            throw NumericError("row_normalize: zero row at index " + std::to_string(i));
        result.d[i] = acc;
        const double inv = 1.0 / std::sqrt(acc);
        for (std::size_t j = 0; j < m.cols(); ++j) result.normalized(i, j) *= inv;
    }
    return result;
}

namespace {

void require_full_row_rank(const SvdResult& dec, const Matrix& m, WhiteningKind kind) {
    if (m.rows() > m.cols())
        throw DefinitenessError("whiten(" + to_string(kind) +
                                "): more rows than columns, M M^T cannot be full rank");
    if (dec.sigma.back() <= dec.sigma.front() * 1e-12 || dec.sigma.back() == 0.0)
        throw DefinitenessError("whiten(" + to_string(kind) + "): rank-deficient M M^T");
}

}  // namespace

Matrix whiten(const Matrix& m, WhiteningKind kind) {
    require_finite(m, "whiten");
    switch (kind) {
        case WhiteningKind::ZcaPolar:
            return polar_exact(m);
        case WhiteningKind::Pca: {
            SvdResult dec = svd(m);
            require_full_row_rank(dec, m, kind);
            return dec.vt;
        }
        case WhiteningKind::Cholesky: {
            SvdResult dec = svd(m);
            require_full_row_rank(dec, m, kind);
            Matrix gram = matmul_nt(m, m);
            Matrix c = cholesky(gram);
            return solve_lower_triangular(c, m);
        }
        case WhiteningKind::ZcaCor: {
            RowNormalizeResult rn = row_normalize(m);
            SvdResult dec = svd(rn.normalized);
            require_full_row_rank(dec, m, kind);
            return polar_exact(rn.normalized);
        }
        case WhiteningKind::PcaCor: {
            RowNormalizeResult rn = row_normalize(m);
            Matrix p = matmul_nt(rn.normalized, rn.normalized);
            SymEigResult eig = sym_eig(p);
            for (double lam : eig.eigenvalues)
                if (lam <= p.rows() * 1e-12)
                    throw DefinitenessError("whiten(pca_cor): correlation matrix not PD");
            // Theta^(-1/2) H^T D^(-1/2) M
            Matrix ht = eig.eigenvectors.transposed();
            Matrix proj = matmul(ht, rn.normalized);
            for (std::size_t i = 0; i < proj.rows(); ++i) {
                const double w = 1.0 / std::sqrt(eig.eigenvalues[i]);
                for (std::size_t j = 0; j < proj.cols(); ++j) proj(i, j) *= w;
            }
            return proj;
        }
    }
    throw ConfigError("whiten: unhandled kind");
}

}  // namespace muonlab
