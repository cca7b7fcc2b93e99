#pragma once

#include <optional>
#include <string>
#include <vector>

#include "muonlab/matrix.hpp"
#include "muonlab/param.hpp"

namespace muonlab {

enum class SnapshotKind { Gradient, Momentum };

SnapshotKind snapshot_kind_from_string(const std::string& s);
std::string to_string(SnapshotKind kind);

/// Singular values of one captured matrix block at one training step.
struct SpectrumSnapshot {
    std::string run_id;
    long step = 0;
    BlockFamily family = BlockFamily::Other;
    int depth = 0;
    SnapshotKind kind = SnapshotKind::Gradient;
    std::vector<double> sigma;  // non-increasing, >= 0

    double total_energy() const;
};

// Dead blocks below this total energy are quarantined from ratio analysis
// rather than errored.
constexpr double kQuarantineEnergy = 1e-30;

/// C(mu): fraction of total spectral energy in the top floor(mu r) modes.
double cumulative_energy(const std::vector<double>& sigma, double mu);

/// Smallest k/r with top-k energy fraction >= p.
double energy_quantile_rank(const std::vector<double>& sigma, double p);

SpectrumSnapshot snapshot_from_matrix(const Matrix& m, const std::string& run_id, long step,
                                      BlockFamily family, int depth, SnapshotKind kind);

struct EnergyCurve {
    std::vector<double> grid;    // increasing mu values in (0, 1]
    std::vector<double> values;  // C(mu)
};

struct AtlasCell {
    BlockFamily family;
    int depth;
    long step;
    double ratio;  // mu_p(A) / mu_p(B)
};

struct AtlasResult {
    std::vector<AtlasCell> cells;
    double p = 0.9;
    int omitted = 0;  // lattice points missing from one side or quarantined
};

AtlasResult rank_ratio_atlas(const std::vector<SpectrumSnapshot>& run_a,
                             const std::vector<SpectrumSnapshot>& run_b, double p);

struct CurveSummary {
    EnergyCurve median;
    EnergyCurve q25;
    EnergyCurve q75;
};

/// Pointwise nearest-rank median/quartiles of C(mu) across snapshots.
CurveSummary curve_summary(const std::vector<SpectrumSnapshot>& snapshots,
                           const std::vector<double>& grid);

struct SnapshotFilter {
    std::optional<BlockFamily> family;
    std::optional<int> depth_min, depth_max;
    std::optional<long> step_min, step_max;
    std::optional<SnapshotKind> kind;

    bool matches(const SpectrumSnapshot& s) const;
};

/// Parses "family=mlp_down,depth_min=4,step_min=2000,kind=gradient".
SnapshotFilter parse_filter(const std::string& text);

std::vector<SpectrumSnapshot> select_snapshots(const std::vector<SpectrumSnapshot>& store,
                                               const SnapshotFilter& filter);

// --- Snapshot store ---------------------------------------------------------
// Append-only directory: index.txt has one metadata line per record
// (run_id step family depth kind r payload-file); each payload is a 1 x r
// matrix in the binary matrix format.

class SnapshotStore {
public:
    explicit SnapshotStore(std::string dir);

    void append(const SpectrumSnapshot& snapshot);
    std::vector<SpectrumSnapshot> load_all() const;
    const std::string& dir() const { return dir_; }

private:
    std::string dir_;
};

// --- Exports ----------------------------------------------------------------

void write_atlas_csv(const AtlasResult& atlas, const std::string& path);

/// 8-bit grayscale PGM of log2(ratio), one row per (family, depth) pair and
/// one column per step; clamp bounds are recorded in a sidecar ".meta" file.
void write_atlas_pgm(const AtlasResult& atlas, const std::string& path);

void write_curves_csv(const std::vector<std::pair<std::string, CurveSummary>>& labeled,
                      const std::string& path);

}  // namespace muonlab
