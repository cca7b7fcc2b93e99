#include "muonlab.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "muonlab/config.hpp"
#include "muonlab/data.hpp"
#include "muonlab/linalg.hpp"
#include "muonlab/ortho.hpp"
#include "muonlab/spectral.hpp"
#include "muonlab/verify.hpp"

using namespace muonlab;

struct ml_matrix {
    Matrix m;
};

namespace {

thread_local std::string g_last_error;

ml_status fail(ml_status code, const std::string& message) {
    g_last_error = message;
    return code;
}

template <typename Fn>
ml_status guarded(Fn&& fn) {
    try {
        fn();
        return ML_OK;
    } catch (const ConfigError& e) {
        return fail(ML_ERR_USAGE, e.what());
    } catch (const IoError& e) {
        return fail(ML_ERR_IO, e.what());
    } catch (const Error& e) {
        return fail(ML_ERR_NUMERIC, e.what());
    } catch (const std::exception& e) {
        return fail(ML_ERR_NUMERIC, e.what());
    }
}

ml_status require(bool cond, const char* what) {
    return cond ? ML_OK : fail(ML_ERR_USAGE, std::string("null or invalid argument: ") + what);
}

std::vector<SpectrumSnapshot> load_run_snapshots(const std::string& run_dir) {
    const std::string store_dir = run_dir + "/snapshots";
    if (!std::filesystem::exists(store_dir + "/index.txt"))
        throw IoError("no snapshot store under run directory: " + run_dir);
    return SnapshotStore(store_dir).load_all();
}

}  // namespace

extern "C" {

const char* ml_last_error(void) { return g_last_error.c_str(); }

ml_status ml_matrix_create(size_t rows, size_t cols, const double* data, ml_matrix** out) {
    if (ml_status s = require(out && rows > 0 && cols > 0, "ml_matrix_create")) return s;
    return guarded([&] {
        auto* h = new ml_matrix{Matrix(rows, cols)};
        if (data) std::memcpy(h->m.data(), data, rows * cols * sizeof(double));
        *out = h;
    });
}

ml_status ml_matrix_load(const char* path, ml_matrix** out) {
    if (ml_status s = require(path && out, "ml_matrix_load")) return s;
    return guarded([&] { *out = new ml_matrix{load_matrix(path)}; });
}

ml_status ml_matrix_save(const ml_matrix* m, const char* path) {
    if (ml_status s = require(m && path, "ml_matrix_save")) return s;
    return guarded([&] { save_matrix(m->m, path); });
}

ml_status ml_matrix_shape(const ml_matrix* m, size_t* rows, size_t* cols) {
    if (ml_status s = require(m && rows && cols, "ml_matrix_shape")) return s;
    *rows = m->m.rows();
    *cols = m->m.cols();
    return ML_OK;
}

ml_status ml_matrix_data(const ml_matrix* m, const double** out) {
    if (ml_status s = require(m && out, "ml_matrix_data")) return s;
    *out = m->m.data();
    return ML_OK;
}

void ml_matrix_free(ml_matrix* m) { delete m; }

ml_status ml_polar_exact(const ml_matrix* m, ml_matrix** out) {
    if (ml_status s = require(m && out, "ml_polar_exact")) return s;
    return guarded([&] { *out = new ml_matrix{polar_exact(m->m)}; });
}

ml_status ml_newton_schulz(const ml_matrix* m, const char* schedule_name, ml_matrix** out) {
    if (ml_status s = require(m && schedule_name && out, "ml_newton_schulz")) return s;
    return guarded([&] {
        const NsCoeffSchedule schedule = get_schedule(schedule_name);
        *out = new ml_matrix{newton_schulz(m->m, schedule)};
    });
}

ml_status ml_whiten(const ml_matrix* m, const char* kind, ml_matrix** out) {
    if (ml_status s = require(m && kind && out, "ml_whiten")) return s;
    return guarded([&] { *out = new ml_matrix{whiten(m->m, whitening_kind_from_string(kind))}; });
}

ml_status ml_singular_values(const ml_matrix* m, double* sigma, size_t* count) {
    if (ml_status s = require(m && sigma && count, "ml_singular_values")) return s;
    return guarded([&] {
        const std::vector<double> sv = singular_values(m->m);
        std::memcpy(sigma, sv.data(), sv.size() * sizeof(double));
        *count = sv.size();
    });
}

ml_status ml_cumulative_energy(const double* sigma, size_t count, double mu, double* out) {
    if (ml_status s = require(sigma && out && count > 0, "ml_cumulative_energy")) return s;
    return guarded([&] {
        *out = cumulative_energy(std::vector<double>(sigma, sigma + count), mu);
    });
}

ml_status ml_energy_quantile_rank(const double* sigma, size_t count, double p, double* out) {
    if (ml_status s = require(sigma && out && count > 0, "ml_energy_quantile_rank")) return s;
    return guarded([&] {
        *out = energy_quantile_rank(std::vector<double>(sigma, sigma + count), p);
    });
}

ml_status ml_cmd_generate(const char* spec_file, const char* out_dir) {
    if (ml_status s = require(spec_file && out_dir, "ml_cmd_generate")) return s;
    return guarded([&] { generate_dataset(DatasetSpec::parse_file(spec_file), out_dir); });
}

ml_status ml_cmd_train(const char* config_file, char* run_dir, size_t run_dir_len) {
    if (ml_status s = require(config_file, "ml_cmd_train")) return s;
    return guarded([&] {
        const std::string dir = execute_run(RunConfig::parse_file(config_file));
        if (run_dir && run_dir_len > 0) {
            std::strncpy(run_dir, dir.c_str(), run_dir_len - 1);
            run_dir[run_dir_len - 1] = '\0';
        }
    });
}

ml_status ml_cmd_atlas(const char* run_a, const char* run_b, double p, const char* filter,
                       const char* out_csv, const char* out_pgm) {
    if (ml_status s = require(run_a && run_b && out_csv, "ml_cmd_atlas")) return s;
    return guarded([&] {
        std::vector<SpectrumSnapshot> a = load_run_snapshots(run_a);
        std::vector<SpectrumSnapshot> b = load_run_snapshots(run_b);
        if (filter && *filter) {
            const SnapshotFilter f = parse_filter(filter);
            a = select_snapshots(a, f);
            b = select_snapshots(b, f);
        }
        const AtlasResult atlas = rank_ratio_atlas(a, b, p);
        write_atlas_csv(atlas, out_csv);
        if (out_pgm && *out_pgm) write_atlas_pgm(atlas, out_pgm);
    });
}

ml_status ml_cmd_curves(const char** run_dirs, size_t run_count, const char* filter,
                        const double* grid, size_t grid_len, const char* out_csv) {
    if (ml_status s = require(run_dirs && run_count > 0 && out_csv, "ml_cmd_curves")) return s;
    return guarded([&] {
        std::vector<double> mu;
        if (grid && grid_len > 0) mu.assign(grid, grid + grid_len);
        else
            for (int i = 1; i <= 20; ++i) mu.push_back(static_cast<double>(i) / 20.0);
        std::vector<std::pair<std::string, CurveSummary>> labeled;
        for (size_t i = 0; i < run_count; ++i) {
            std::vector<SpectrumSnapshot> snaps = load_run_snapshots(run_dirs[i]);
            if (filter && *filter) snaps = select_snapshots(snaps, parse_filter(filter));
            if (snaps.empty())
                throw NumericError(std::string("selection empty for run ") + run_dirs[i]);
            const std::string label =
                std::filesystem::path(run_dirs[i]).filename().string();
            labeled.emplace_back(label, curve_summary(snaps, mu));
        }
        write_curves_csv(labeled, out_csv);
    });
}

ml_status ml_cmd_verify(const char* suite, const char* out_path, int* ok) {
    if (ml_status s = require(suite, "ml_cmd_verify")) return s;
    return guarded([&] {
        const SuiteResult result = run_suite(suite);
        if (out_path && *out_path) {
            std::ofstream out(out_path, std::ios::trunc);
            if (!out) throw IoError(std::string("cannot write report: ") + out_path);
            out << result.report;
        } else {
            std::cout << result.report;
        }
        if (ok) *ok = result.ok ? 1 : 0;
    });
}

ml_status ml_cmd_import_grad(const char** files, size_t file_count, const char* run_id, long step,
                             const char* family, int depth, const char* kind,
                             const char* store_dir) {
    if (ml_status s = require(files && file_count > 0 && run_id && family && kind && store_dir,
                              "ml_cmd_import_grad"))
        return s;
    return guarded([&] {
        SnapshotStore store(store_dir);
        const BlockFamily fam = block_family_from_string(family);
        const SnapshotKind k = snapshot_kind_from_string(kind);
        for (size_t i = 0; i < file_count; ++i) {
            const Matrix m = load_matrix(files[i]);
            store.append(snapshot_from_matrix(m, run_id, step, fam, depth, k));
        }
    });
}

}  // extern "C"
