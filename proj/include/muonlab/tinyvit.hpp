#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "muonlab/data.hpp"
#include "muonlab/optim.hpp"
#include "muonlab/param.hpp"
#include "muonlab/recipes.hpp"
#include "muonlab/spectral.hpp"

namespace muonlab {

struct VitConfig {
    std::size_t image_size = 32;
    std::size_t patch_size = 4;
    std::size_t embed_dim = 64;
    std::size_t depth = 6;
    std::size_t heads = 4;
    double mlp_ratio = 4.0;
    std::size_t num_classes = 10;

    void validate() const;
    std::size_t patches_per_side() const { return image_size / patch_size; }
    std::size_t num_patches() const { return patches_per_side() * patches_per_side(); }
    std::size_t tokens() const { return num_patches() + 1; }  // + class token
    std::size_t head_dim() const { return embed_dim / heads; }
    std::size_t mlp_dim() const { return static_cast<std::size_t>(mlp_ratio * static_cast<double>(embed_dim) + 0.5); }
};

/// Which (step, family, kind) combinations the training loop snapshots.
struct TapSchedule {
    std::set<long> steps;
    std::set<BlockFamily> families;   // empty = the four matrix families
    std::set<SnapshotKind> kinds = {SnapshotKind::Gradient};

    void validate(long total_steps) const;
    bool wants_step(long step) const { return steps.count(step) > 0; }
    bool wants_family(BlockFamily family) const;
    bool wants_kind(SnapshotKind kind) const { return kinds.count(kind) > 0; }
};

class VitModel {
public:
    VitModel(VitConfig cfg, std::size_t channels, std::uint64_t seed);

    const VitConfig& config() const { return cfg_; }
    std::size_t channels() const { return channels_; }
    std::vector<ParamBlock>& blocks() { return blocks_; }
    const std::vector<ParamBlock>& blocks() const { return blocks_; }
    ParamBlock& block(const std::string& name);
    const ParamBlock& block(const std::string& name) const;

    /// Opaque activation cache produced by forward and consumed by backward.
    struct Cache;

    /// Logits, n x num_classes. With a cache pointer, retains activations.
    Matrix forward(const ImageBatch& batch, Cache* cache = nullptr) const;

    /// Soft-label cross-entropy (mean over batch); fills every block's grad.
    double loss_and_backward(const ImageBatch& batch, const Cache& cache);

    void save_checkpoint(const std::string& dir) const;
    static VitModel load_checkpoint(const std::string& dir);

private:
    VitConfig cfg_;
    std::size_t channels_ = 3;
    std::vector<ParamBlock> blocks_;
};

struct VitModel::Cache {
    // Filled by forward; shapes are per-step internals.
    std::uint64_t batch_tag = 0;  // guards against stale-cache backward
    Matrix patches;               // (n*P) x patch_dim
    struct BlockCache {
        Matrix norm1_hat, norm2_hat;
        std::vector<double> norm1_inv, norm2_inv;
        Matrix qkv;               // (n*T) x 3E
        std::vector<Matrix> attn; // per (image, head) softmax matrices, T x T
        Matrix attn_concat;       // (n*T) x E, heads re-concatenated
        Matrix mlp_pre;           // (n*T) x mlp_dim, pre-activation
        Matrix mlp_tanh;          // inner tanh of the activation, reused by backward
        Matrix mlp_act;
    };
    std::vector<BlockCache> block_caches;
    Matrix final_hat;
    std::vector<double> final_inv;
    Matrix cls_features;          // n x E
    Matrix logits;
};

struct MetricRow {
    long step = 0;
    double loss = 0.0;
    double top1 = 0.0;
    double macro_top1 = 0.0;
};

struct EvalResult {
    double top1 = 0.0;
    double macro_top1 = 0.0;
    double loss = 0.0;
};

enum class RunStatus { Completed, Diverged, Aborted };

std::string to_string(RunStatus status);
RunStatus run_status_from_string(const std::string& s);

struct RunRecord {
    std::string name;
    std::uint64_t seed = 0;
    std::vector<MetricRow> metrics;
    long total_steps = 0;
    long snapshots_written = 0;
    RunStatus status = RunStatus::Completed;
    double final_train_loss = 0.0;
    // Wall-clock fields, excluded from determinism comparison.
    double wall_seconds = 0.0;
    double images_per_second = 0.0;
};

struct TrainOptions {
    long total_steps = 100;
    std::size_t batch_size = 32;
    long eval_every = 100;
    TapSchedule tap;
    RecipeConfig recipe;
    double lr_min_ratio = 0.05;  // cosine floor
};

/// Deterministic training loop; snapshots go to `store` when non-null.
RunRecord train(VitModel& model, const Dataset& data, OptimizerBank& bank,
                const TrainOptions& options, std::uint64_t seed,
                SnapshotStore* store = nullptr, const std::string& run_id = "run");

EvalResult evaluate(const VitModel& model, const Dataset& data,
                    std::size_t batch_size = 64);

}  // namespace muonlab
