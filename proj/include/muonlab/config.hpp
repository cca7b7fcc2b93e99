#pragma once

#include <cstdint>
#include <string>

#include "muonlab/optim.hpp"
#include "muonlab/recipes.hpp"
#include "muonlab/tinyvit.hpp"

namespace muonlab {

struct OptimizerSection {
    DispatchPolicy policy = DispatchPolicy::MatrixToMuon;
    MuonConfig muon;
    AdamWConfig adamw;
    std::string ns_schedule = "standard";
    double lr_min_ratio = 0.05;
};

/// Full experiment configuration; parse/serialize round-trips to a fixpoint.
struct RunConfig {
    std::string name = "run";
    std::uint64_t seed = 1;
    std::string dataset_path;  // generated dataset directory
    VitConfig model;
    RecipeConfig recipe;
    OptimizerSection optimizer;
    long total_steps = 100;
    std::size_t batch_size = 32;
    long eval_every = 100;
    long tap_every = 0;  // 0 = explicit step list only
    TapSchedule tap;

    static RunConfig parse_file(const std::string& path);
    static RunConfig parse_text(const std::string& text, const std::string& who);
    std::string serialize() const;
    void validate() const;

    /// FNV-1a over the canonical serialization, 8 hex digits.
    std::string hash8() const;
};

/// Named optimizer presets: "muon-1e-3" and "adamw-3e-4".
OptimizerSection optimizer_preset(const std::string& name);

/// $MUONLAB_RUN_ROOT or "runs".
std::string run_root();

/// <run_root>/<name>-<hash8>; throws if it already exists.
std::string create_run_dir(const RunConfig& cfg);

/// Deterministic record text (no wall-clock fields).
std::string serialize_record(const RunRecord& rec);
RunRecord parse_record(const std::string& text);

/// Executes a full run: opens the dataset, trains, persists config echo,
/// record, timing, snapshots and checkpoint under the run directory.
/// Returns the run directory.
std::string execute_run(const RunConfig& cfg);

}  // namespace muonlab
