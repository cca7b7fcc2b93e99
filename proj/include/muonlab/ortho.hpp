#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "muonlab/linalg.hpp"
#include "muonlab/matrix.hpp"

namespace muonlab {

/// Per-iteration coefficient triples for X <- aX + bX(X^T X) + cX(X^T X)^2.
struct NsCoeffSchedule {
    std::string name;
    std::vector<std::array<double, 3>> per_iteration;

    void validate() const;
};

/// Parses the bundled schedule file: "[name]" section headers followed by one
/// "a b c" triple per line; "#" starts a comment.
std::map<std::string, NsCoeffSchedule> load_schedules(const std::string& path);

/// Resolves the schedule file: $MUONLAB_SCHEDULES if set, otherwise the
/// compiled-in bundled path.
std::string default_schedule_path();

NsCoeffSchedule get_schedule(const std::string& name, const std::string& file = "");

enum class WhiteningKind { ZcaPolar, Pca, Cholesky, ZcaCor, PcaCor };

WhiteningKind whitening_kind_from_string(const std::string& s);
std::string to_string(WhiteningKind kind);

struct PolarResult {
    Matrix factor;
    bool rank_deficient = false;  // advisory: UV^T restricted to nonzero sigma
};

/// Exact polar factor U V^T from the thin SVD. The zero matrix maps to the
/// zero matrix by convention.
PolarResult polar_exact_full(const Matrix& m);
Matrix polar_exact(const Matrix& m);

/// Newton-Schulz style iteration toward the polar factor. Pre-normalizes by
/// frobenius_norm * 1.01; a tall input is processed transposed. The zero
/// matrix returns zero.
Matrix newton_schulz(const Matrix& m, const NsCoeffSchedule& schedule);

/// Whitened update per kind; (WM)(WM)^T = I on full-row-rank inputs.
Matrix whiten(const Matrix& m, WhiteningKind kind);

struct RowNormalizeResult {
    Matrix normalized;      // D^(-1/2) M, unit-norm rows
    std::vector<double> d;  // squared row norms of M
};

RowNormalizeResult row_normalize(const Matrix& m);

}  // namespace muonlab
