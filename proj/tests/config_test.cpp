#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "muonlab/config.hpp"
#include "muonlab/data.hpp"

using namespace muonlab;

namespace {

RunConfig base_config() {
    RunConfig cfg;
    cfg.name = "unit";
    cfg.seed = 7;
    cfg.dataset_path = "/tmp/muonlab_cfg_data";
    cfg.model.image_size = 8;
    cfg.model.patch_size = 4;
    cfg.model.embed_dim = 8;
    cfg.model.depth = 1;
    cfg.model.heads = 2;
    cfg.model.mlp_ratio = 2.0;
    cfg.model.num_classes = 3;
    cfg.total_steps = 3;
    cfg.batch_size = 4;
    cfg.eval_every = 2;
    return cfg;
}

std::string fresh_dir(const std::string& name) {
    const std::string dir = "/tmp/muonlab_cfg_" + name;
    std::filesystem::remove_all(dir);
    return dir;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return s;
}

std::string thrown_message(const std::string& text) {
    try {
        RunConfig::parse_text(text, "cfg.txt");
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("serialize and parse reach a fixpoint") {
    RunConfig cfg = base_config();
    cfg.recipe = RecipeConfig::preset(RecipeVariant::Full);
    cfg.tap.steps = {0, 2};
    cfg.tap.families = {BlockFamily::MlpDown};
    cfg.tap.kinds = {SnapshotKind::Gradient, SnapshotKind::Momentum};

    const std::string once = RunConfig::parse_text(cfg.serialize(), "mem").serialize();
    const std::string twice = RunConfig::parse_text(once, "mem").serialize();
    CHECK(once == twice);
    CHECK(once == cfg.serialize());

    const RunConfig back = RunConfig::parse_text(once, "mem");
    CHECK(back.name == cfg.name);
    CHECK(back.seed == cfg.seed);
    CHECK(back.tap.steps == cfg.tap.steps);
    CHECK(back.tap.families == cfg.tap.families);
    CHECK(back.tap.kinds == cfg.tap.kinds);
    CHECK(back.model.embed_dim == cfg.model.embed_dim);
    CHECK(back.recipe.mixup_alpha == cfg.recipe.mixup_alpha);
}

TEST_CASE("optimizer presets") {
    const OptimizerSection muon = optimizer_preset("muon-1e-3");
    CHECK(muon.policy == DispatchPolicy::MatrixToMuon);
    CHECK(muon.muon.lr == 1e-3);

    const OptimizerSection adamw = optimizer_preset("adamw-3e-4");
    CHECK(adamw.policy == DispatchPolicy::AllAdamW);
    CHECK(adamw.adamw.lr == 3e-4);

    CHECK_THROWS_AS(optimizer_preset("sgd"), ConfigError);

    const RunConfig parsed = RunConfig::parse_text(
        "name = p\nseed = 1\n[dataset]\npath = d\n[optimizer]\npreset = adamw-3e-4\n", "mem");
    CHECK(parsed.optimizer.policy == DispatchPolicy::AllAdamW);
    CHECK(parsed.optimizer.adamw.lr == 3e-4);
}

TEST_CASE("parse errors carry file and line") {
    const std::string dup = thrown_message("name = a\n[dataset]\npath = x\npath = y\n");
    CHECK(dup.find("cfg.txt:4") != std::string::npos);
    CHECK(dup.find("duplicate key dataset.path") != std::string::npos);

    const std::string unterminated = thrown_message("[model\nembed_dim = 8\n");
    CHECK(unterminated.find("cfg.txt:1") != std::string::npos);
    CHECK(unterminated.find("unterminated") != std::string::npos);

    const std::string malformed = thrown_message("[dataset]\npath /tmp/x\n");
    CHECK(malformed.find("cfg.txt:2") != std::string::npos);
    CHECK(malformed.find("expected key = value") != std::string::npos);

    const std::string unknown =
        thrown_message("name = a\n[dataset]\npath = x\n[model]\nwidth = 4\n");
    CHECK(unknown.find("unknown key 'model.width'") != std::string::npos);

    CHECK_THROWS_AS(RunConfig::parse_text("version = 2\n", "mem"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse_file("/tmp/muonlab_no_such_config.txt"), IoError);
}

TEST_CASE("config hash is stable and sensitive") {
    RunConfig cfg = base_config();
    const std::string h = cfg.hash8();
    CHECK(h.size() == 8);
    CHECK(h.find_first_not_of("0123456789abcdef") == std::string::npos);
    CHECK(cfg.hash8() == h);

    RunConfig other = cfg;
    other.seed = 8;
    CHECK(other.hash8() != h);
}

TEST_CASE("run record round trip") {
    RunRecord rec;
    rec.name = "unit";
    rec.seed = 7;
    rec.total_steps = 10;
    rec.status = RunStatus::Completed;
    rec.snapshots_written = 4;
    rec.final_train_loss = 0.123456789012345;
    rec.metrics.push_back({0, 1.5, 0.1, 0.1});
    rec.metrics.push_back({5, 1.2, 0.3, 0.25});
    rec.metrics.push_back({10, 0.9, 0.5, 0.4});

    const std::string text = serialize_record(rec);
    const RunRecord back = parse_record(text);
    CHECK(back.name == rec.name);
    CHECK(back.seed == rec.seed);
    CHECK(back.total_steps == rec.total_steps);
    CHECK(back.status == rec.status);
    CHECK(back.snapshots_written == rec.snapshots_written);
    CHECK(back.final_train_loss == rec.final_train_loss);
    REQUIRE(back.metrics.size() == 3);
    CHECK(back.metrics[1].step == 5);
    CHECK(back.metrics[1].loss == 1.2);
    CHECK(serialize_record(back) == text);

    CHECK_THROWS_AS(
        parse_record("record_version = 1\nmetrics = 2\nmetric 5 1 0 0\nmetric 5 2 0 0\n"),
        IoError);
    CHECK_THROWS_AS(parse_record("record_version = 1\nmetrics = 2\nmetric 0 1 0 0\n"), IoError);
    CHECK_THROWS_AS(parse_record("record_version = 2\n"), IoError);
    CHECK_THROWS_AS(parse_record("record_version = 1\nbogus = 3\nmetrics = 0\n"), IoError);
}

TEST_CASE("run root honors the environment") {
    unsetenv("MUONLAB_RUN_ROOT");
    CHECK(run_root() == "runs");
    setenv("MUONLAB_RUN_ROOT", "/tmp/muonlab_cfg_root", 1);
    CHECK(run_root() == "/tmp/muonlab_cfg_root");
    unsetenv("MUONLAB_RUN_ROOT");
}

TEST_CASE("create run dir refuses to overwrite") {
    const std::string root = fresh_dir("create");
    setenv("MUONLAB_RUN_ROOT", root.c_str(), 1);
    RunConfig cfg = base_config();
    const std::string dir = create_run_dir(cfg);
    CHECK(std::filesystem::is_directory(dir));
    CHECK(dir == root + "/" + cfg.name + "-" + cfg.hash8());
    CHECK_THROWS_AS(create_run_dir(cfg), IoError);
    unsetenv("MUONLAB_RUN_ROOT");
}

TEST_CASE("run name validation") {
    RunConfig cfg = base_config();
    cfg.name = "ok-name_2";
    CHECK_NOTHROW(cfg.validate());
    cfg.name = "bad name";
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.name = "";
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.name = "unit";
    cfg.dataset_path = "";
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("execute run persists artifacts and reruns byte identically") {
    const std::string data_dir = fresh_dir("rundata");
    DatasetSpec spec;
    spec.num_classes = 3;
    spec.balanced = true;
    spec.samples_per_class = 8;
    spec.image_size = 8;
    spec.channels = 1;
    spec.seed = 11;
    generate_dataset(spec, data_dir);

    RunConfig cfg = base_config();
    cfg.dataset_path = data_dir;
    cfg.recipe = RecipeConfig::preset(RecipeVariant::NoMixNoRand);
    cfg.tap.steps = {1};
    cfg.tap.families = {BlockFamily::MlpDown};

    const std::string root_a = fresh_dir("root_a");
    setenv("MUONLAB_RUN_ROOT", root_a.c_str(), 1);
    const std::string dir_a = execute_run(cfg);

    CHECK(slurp(dir_a + "/config.txt") == cfg.serialize());
    CHECK(std::filesystem::is_directory(dir_a + "/checkpoint"));
    CHECK(std::filesystem::exists(dir_a + "/snapshots/index.txt"));
    CHECK(std::filesystem::exists(dir_a + "/timing.txt"));

    const std::string record_a = slurp(dir_a + "/record.txt");
    const RunRecord rec = parse_record(record_a);
    CHECK(rec.status == RunStatus::Completed);
    CHECK(rec.total_steps == cfg.total_steps);
    CHECK(rec.snapshots_written > 0);
    REQUIRE(!rec.metrics.empty());
    CHECK(rec.metrics.front().step == 0);
    CHECK(rec.metrics.back().step == cfg.total_steps);

    // A second run under a fresh root reproduces the record byte for byte.
    const std::string root_b = fresh_dir("root_b");
    setenv("MUONLAB_RUN_ROOT", root_b.c_str(), 1);
    const std::string dir_b = execute_run(cfg);
    CHECK(slurp(dir_b + "/record.txt") == record_a);
    CHECK(slurp(dir_b + "/snapshots/index.txt") == slurp(dir_a + "/snapshots/index.txt"));
    unsetenv("MUONLAB_RUN_ROOT");

    // Mismatched model geometry is rejected before any directory is created.
    RunConfig bad = cfg;
    bad.model.num_classes = 4;
    CHECK_THROWS_AS(execute_run(bad), ConfigError);
}
