#include "muonlab/optim.hpp"

#include <cmath>

#include "muonlab/param.hpp"

namespace muonlab {

void MuonConfig::validate() const {
    if (lr <= 0.0) throw ConfigError("muon: lr must be positive");
    if (beta < 0.0 || beta >= 1.0) throw ConfigError("muon: beta must be in [0,1)");
    if (rms_scale < 0.0) throw ConfigError("muon: rms_scale must be non-negative");
    if (weight_decay < 0.0) throw ConfigError("muon: weight_decay must be non-negative");
    schedule.validate();
}

void AdamWConfig::validate() const {
    if (lr <= 0.0) throw ConfigError("adamw: lr must be positive");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw ConfigError("adamw: betas must be in [0,1)");
    if (eps <= 0.0) throw ConfigError("adamw: eps must be positive");
    if (weight_decay < 0.0) throw ConfigError("adamw: weight_decay must be non-negative");
}

namespace {

void check_shapes(const Matrix& w, const Matrix& g, const Matrix& v, const char* who) {
    if (!w.same_shape(g) || !w.same_shape(v))
        throw DimensionError(std::string(who) + ": parameter/gradient/state shape mismatch");
}

double direction_scale(const Matrix& w, const MuonConfig& cfg) {
    return cfg.rms_scale * std::sqrt(static_cast<double>(std::max(w.rows(), w.cols())));
}

void apply_direction(Matrix& w, const Matrix& direction, const MuonConfig& cfg) {
    const double scale = direction_scale(w, cfg);
    if (cfg.weight_decay > 0.0) w *= 1.0 - cfg.lr * cfg.weight_decay;
    for (std::size_t i = 0; i < w.size(); ++i)
        w.data()[i] -= cfg.lr * scale * direction.data()[i];
}

}  // namespace

Matrix muon_momentum_preview(const Matrix& g, const MuonState& state, const MuonConfig& cfg) {
    // A fresh state (no step taken yet) carries zero velocity.
    Matrix v_next = state.v.size() > 0 ? state.v : Matrix(g.rows(), g.cols());
    v_next *= cfg.beta;
    v_next += g;
    Matrix m = v_next;
    m *= cfg.beta;
    m += g;
    return m;
}

void muon_step(Matrix& w, const Matrix& g, MuonState& state, const MuonConfig& cfg) {
    check_shapes(w, g, state.v, "muon_step");
    require_finite(g, "muon_step");
    state.v *= cfg.beta;
    state.v += g;
    Matrix m = state.v;
    m *= cfg.beta;
    m += g;
    Matrix direction = newton_schulz(m, cfg.schedule);
    apply_direction(w, direction, cfg);
    ++state.step;
}

void variant_step(Matrix& w, const Matrix& g, MuonState& state, const MuonConfig& cfg,
                  WhiteningKind kind) {
    if (kind != WhiteningKind::Cholesky && kind != WhiteningKind::ZcaCor)
        throw ConfigError("variant_step: kind must be cholesky or zca_cor");
    check_shapes(w, g, state.v, "variant_step");
    require_finite(g, "variant_step");
    state.v *= cfg.beta;
    state.v += g;
    Matrix m = state.v;
    m *= cfg.beta;
    m += g;
    Matrix direction;
    if (kind == WhiteningKind::Cholesky) {
        direction = whiten(m, WhiteningKind::Cholesky);
    } else {
        direction = newton_schulz(row_normalize(m).normalized, cfg.schedule);
    }
    apply_direction(w, direction, cfg);
    ++state.step;
}

void adamw_step(Matrix& w, const Matrix& g, AdamWState& state, const AdamWConfig& cfg) {
    check_shapes(w, g, state.m1, "adamw_step");
    if (!w.same_shape(state.m2)) throw DimensionError("adamw_step: m2 shape mismatch");
    require_finite(g, "adamw_step");
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    if (cfg.weight_decay > 0.0) w *= 1.0 - cfg.lr * cfg.weight_decay;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g.data()[i];
        double& m1 = state.m1.data()[i];
        double& m2 = state.m2.data()[i];
        m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * gi;
        m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * gi * gi;
        const double mhat = m1 / bc1;
        const double vhat = m2 / bc2;
        w.data()[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

DispatchPolicy dispatch_policy_from_string(const std::string& s) {
    if (s == "matrix_to_muon") return DispatchPolicy::MatrixToMuon;
    if (s == "all_adamw") return DispatchPolicy::AllAdamW;
    if (s == "all_muon_matrices") return DispatchPolicy::AllMuonMatrices;
    throw ConfigError("unknown dispatch policy: " + s);
}

std::string to_string(DispatchPolicy policy) {
    switch (policy) {
        case DispatchPolicy::MatrixToMuon: return "matrix_to_muon";
        case DispatchPolicy::AllAdamW: return "all_adamw";
        case DispatchPolicy::AllMuonMatrices: return "all_muon_matrices";
    }
    return "?";
}

OptimizerBank::OptimizerBank(DispatchPolicy policy, MuonConfig muon_cfg, AdamWConfig adamw_cfg,
                             MatrixRule rule)
    : policy_(policy), muon_cfg_(std::move(muon_cfg)), adamw_cfg_(adamw_cfg), rule_(rule) {
    if (policy_ != DispatchPolicy::AllAdamW) muon_cfg_.validate();
    adamw_cfg_.validate();
}

bool OptimizerBank::routes_to_muon(const ParamBlock& block) const {
    switch (policy_) {
        case DispatchPolicy::AllAdamW:
            return false;
        case DispatchPolicy::AllMuonMatrices:
            return block.matrix_shaped;
        case DispatchPolicy::MatrixToMuon:
            // Backbone matrix blocks only; embeddings, head, norms, biases and
            // other 1-D parameters stay on AdamW.
            return block.matrix_shaped && is_matrix_family(block.family);
    }
    return false;
}

void OptimizerBank::step(std::vector<ParamBlock>& blocks, double lr_scale) {
    for (ParamBlock& block : blocks) {
        if (frozen_ && !known_.count(block.name))
            throw ConfigError("optimizer registry: unknown block '" + block.name +
                              "' after first step");
        known_.insert(block.name);
        if (!block.tensor.same_shape(block.grad))
            throw DimensionError("dispatch_step: gradient shape mismatch for '" + block.name +
                                 "'");
        if (routes_to_muon(block)) {
            auto [it, fresh] = muon_states_.try_emplace(block.name);
            if (fresh) it->second.v = Matrix(block.tensor.rows(), block.tensor.cols());
            MuonConfig cfg = muon_cfg_;
            cfg.lr *= lr_scale;
            switch (rule_) {
                case MatrixRule::Muon:
                    muon_step(block.tensor, block.grad, it->second, cfg);
                    break;
                case MatrixRule::VariantCholesky:
                    variant_step(block.tensor, block.grad, it->second, cfg,
                                 WhiteningKind::Cholesky);
                    break;
                case MatrixRule::VariantZcaCor:
                    variant_step(block.tensor, block.grad, it->second, cfg,
                                 WhiteningKind::ZcaCor);
                    break;
            }
        } else {
            auto [it, fresh] = adamw_states_.try_emplace(block.name);
            if (fresh) {
                it->second.m1 = Matrix(block.tensor.rows(), block.tensor.cols());
                it->second.m2 = Matrix(block.tensor.rows(), block.tensor.cols());
            }
            AdamWConfig cfg = adamw_cfg_;
            cfg.lr *= lr_scale;
            adamw_step(block.tensor, block.grad, it->second, cfg);
        }
    }
    frozen_ = true;
}

const MuonState* OptimizerBank::muon_state(const std::string& name) const {
    auto it = muon_states_.find(name);
    return it == muon_states_.end() ? nullptr : &it->second;
}

const AdamWState* OptimizerBank::adamw_state(const std::string& name) const {
    auto it = adamw_states_.find(name);
    return it == adamw_states_.end() ? nullptr : &it->second;
}

double cosine_lr(long step, long total, double base_lr, double min_ratio) {
    if (min_ratio <= 0.0 || min_ratio > 1.0)
        throw ConfigError("cosine_lr: min_ratio must be in (0,1]");
    if (step < 0 || step > total) throw ConfigError("cosine_lr: step outside [0,total]");
    if (total == 0) return base_lr;
    const double phase = static_cast<double>(step) / static_cast<double>(total);
    return base_lr *
           (min_ratio + (1.0 - min_ratio) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * phase)));
}

}  // namespace muonlab
