#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "muonlab/ortho.hpp"
#include "muonlab/param.hpp"

namespace muonlab {

struct MuonConfig {
    double lr = 1e-3;
    double beta = 0.95;
    NsCoeffSchedule schedule;
    double rms_scale = 0.2;
    double weight_decay = 0.0;

    void validate() const;
};

struct MuonState {
    Matrix v;  // momentum accumulator
    long step = 0;
};

struct AdamWConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.05;

    void validate() const;
};

struct AdamWState {
    Matrix m1;
    Matrix m2;
    long step = 0;
};

/// V_t = beta V_{t-1} + G_t, M_t = G_t + beta V_t, W <- W(1 - lr wd) - lr s O(M_t)
/// with s = rms_scale * sqrt(max(rows, cols)).
void muon_step(Matrix& w, const Matrix& g, MuonState& state, const MuonConfig& cfg);

/// Same update with the orthogonalizer replaced by an exact whitening
/// (Cholesky) or the row-normalized iterative path (ZcaCor).
void variant_step(Matrix& w, const Matrix& g, MuonState& state, const MuonConfig& cfg,
                  WhiteningKind kind);

void adamw_step(Matrix& w, const Matrix& g, AdamWState& state, const AdamWConfig& cfg);

/// The Nesterov-form momentum the Muon update orthogonalizes, computed from
/// the pre-step state without mutating it. Used by the gradient taps.
Matrix muon_momentum_preview(const Matrix& g, const MuonState& state, const MuonConfig& cfg);

enum class DispatchPolicy { MatrixToMuon, AllAdamW, AllMuonMatrices };

DispatchPolicy dispatch_policy_from_string(const std::string& s);
std::string to_string(DispatchPolicy policy);

/// Which matrix-side rule the hybrid dispatcher applies to Muon-routed blocks.
enum class MatrixRule { Muon, VariantCholesky, VariantZcaCor };

/// Hybrid parameter-group dispatcher. Per-block optimizer states persist
/// across calls keyed by block name; the block set is frozen after the first
/// call.
class OptimizerBank {
public:
    OptimizerBank(DispatchPolicy policy, MuonConfig muon_cfg, AdamWConfig adamw_cfg,
                  MatrixRule rule = MatrixRule::Muon);

    /// True when the block is routed to the matrix (Muon) rule.
    bool routes_to_muon(const ParamBlock& block) const;

    /// Applies one optimizer step to every block, scaling both configured
    /// learning rates by `lr_scale` (cosine schedule hook).
    void step(std::vector<ParamBlock>& blocks, double lr_scale = 1.0);

    const MuonState* muon_state(const std::string& name) const;
    const AdamWState* adamw_state(const std::string& name) const;
    const MuonConfig& muon_config() const { return muon_cfg_; }

private:
    DispatchPolicy policy_;
    MuonConfig muon_cfg_;
    AdamWConfig adamw_cfg_;
    MatrixRule rule_;
    bool frozen_ = false;
    std::set<std::string> known_;
    std::map<std::string, MuonState> muon_states_;
    std::map<std::string, AdamWState> adamw_states_;
};

/// base_lr * (min_ratio + (1 - min_ratio) * 0.5 * (1 + cos(pi step / total))).
double cosine_lr(long step, long total, double base_lr, double min_ratio);

}  // namespace muonlab
