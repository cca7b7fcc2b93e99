// muonlab command-line front end. Talks to the core only through the C API.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "muonlab.h"

namespace {

int report(ml_status status) {
    if (status != ML_OK) std::fprintf(stderr, "error: %s\n", ml_last_error());
    return static_cast<int>(status);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"muonlab: matrix-aware optimization laboratory"};
    app.require_subcommand(1);

    // generate
    std::string gen_spec, gen_out;
    CLI::App* generate = app.add_subcommand("generate", "Generate a synthetic dataset");
    generate->add_option("spec", gen_spec, "Dataset spec file")->required();
    generate->add_option("-o,--out", gen_out, "Output dataset directory")->required();

    // train
    std::string train_config;
    CLI::App* train = app.add_subcommand("train", "Run a training experiment");
    train->add_option("config", train_config, "Run config file")->required();

    // atlas
    std::string atlas_a, atlas_b, atlas_filter, atlas_csv, atlas_pgm;
    double atlas_p = 0.9;
    CLI::App* atlas = app.add_subcommand("atlas", "Rank-ratio atlas between two runs");
    atlas->add_option("run_a", atlas_a, "Numerator run directory")->required();
    atlas->add_option("run_b", atlas_b, "Denominator run directory")->required();
    atlas->add_option("-p", atlas_p, "Energy fraction p (default 0.9)");
    atlas->add_option("--filter", atlas_filter,
                      "Snapshot filter, e.g. family=mlp_down,step_min=2000");
    atlas->add_option("--csv", atlas_csv, "Output CSV path")->required();
    atlas->add_option("--pgm", atlas_pgm, "Optional PGM raster path");

    // curves
    std::vector<std::string> curve_runs;
    std::string curve_filter, curve_csv;
    std::vector<double> curve_grid;
    CLI::App* curves = app.add_subcommand("curves", "Cumulative-energy curve summaries");
    curves->add_option("runs", curve_runs, "Run directories")->required();
    curves->add_option("--filter", curve_filter, "Snapshot filter");
    curves->add_option("--grid", curve_grid, "Explicit mu grid values in (0, 1]");
    curves->add_option("--csv", curve_csv, "Output CSV path")->required();

    // verify
    std::string verify_suite = "all", verify_out;
    CLI::App* verify = app.add_subcommand("verify", "Run a verification suite");
    verify->add_option("suite", verify_suite,
                       "Suite: linalg, polar, spectral, theory, gradcheck, all");
    verify->add_option("-o,--out", verify_out, "Report file (default stdout)");

    // import-grad
    std::vector<std::string> import_files;
    std::string import_run = "imported", import_family, import_kind = "gradient", import_store;
    long import_step = 0;
    int import_depth = 0;
    CLI::App* import_grad =
        app.add_subcommand("import-grad", "Import gradient matrices into a snapshot store");
    import_grad->add_option("files", import_files, "Matrix files (binary matrix format)")
        ->required();
    import_grad->add_option("--run-id", import_run, "Run id recorded on the snapshots");
    import_grad->add_option("--step", import_step, "Training step metadata");
    import_grad->add_option("--family", import_family, "Block family, e.g. mlp_down")->required();
    import_grad->add_option("--depth", import_depth, "Block depth metadata");
    import_grad->add_option("--kind", import_kind, "gradient or momentum");
    import_grad->add_option("--store", import_store, "Snapshot store directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ML_ERR_USAGE);
    }

    if (*generate) return report(ml_cmd_generate(gen_spec.c_str(), gen_out.c_str()));

    if (*train) {
        char run_dir[4096] = {0};
        const ml_status status = ml_cmd_train(train_config.c_str(), run_dir, sizeof(run_dir));
        if (status == ML_OK) std::printf("run directory: %s\n", run_dir);
        return report(status);
    }

    if (*atlas)
        return report(ml_cmd_atlas(atlas_a.c_str(), atlas_b.c_str(), atlas_p,
                                   atlas_filter.c_str(), atlas_csv.c_str(), atlas_pgm.c_str()));

    if (*curves) {
        std::vector<const char*> dirs;
        for (const std::string& r : curve_runs) dirs.push_back(r.c_str());
        return report(ml_cmd_curves(dirs.data(), dirs.size(), curve_filter.c_str(),
                                    curve_grid.empty() ? nullptr : curve_grid.data(),
                                    curve_grid.size(), curve_csv.c_str()));
    }

    if (*verify) {
        int ok = 0;
        const ml_status status = ml_cmd_verify(verify_suite.c_str(), verify_out.c_str(), &ok);
        if (status != ML_OK) return report(status);
        return ok ? 0 : static_cast<int>(ML_ERR_NUMERIC);
    }

    if (*import_grad) {
        std::vector<const char*> files;
        for (const std::string& f : import_files) files.push_back(f.c_str());
        return report(ml_cmd_import_grad(files.data(), files.size(), import_run.c_str(),
                                         import_step, import_family.c_str(), import_depth,
                                         import_kind.c_str(), import_store.c_str()));
    }

    return static_cast<int>(ML_ERR_USAGE);
}
