/* C interface to the muonlab core. All functions return ml_status; results
 * are written through out-parameters. Handles are opaque and must be released
 * with the matching free function. The library is not thread-safe across a
 * single handle; distinct handles may be used from distinct threads. */

#ifndef MUONLAB_H
#define MUONLAB_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ml_status {
    ML_OK = 0,
    ML_ERR_USAGE = 1,   /* configuration / argument errors */
    ML_ERR_NUMERIC = 2, /* numeric contract violations */
    ML_ERR_IO = 3       /* filesystem and format errors */
} ml_status;

/* Message describing the most recent failure on this thread. */
const char* ml_last_error(void);

/* ---- matrices ---------------------------------------------------------- */

typedef struct ml_matrix ml_matrix;

ml_status ml_matrix_create(size_t rows, size_t cols, const double* data, ml_matrix** out);
ml_status ml_matrix_load(const char* path, ml_matrix** out);
ml_status ml_matrix_save(const ml_matrix* m, const char* path);
ml_status ml_matrix_shape(const ml_matrix* m, size_t* rows, size_t* cols);
ml_status ml_matrix_data(const ml_matrix* m, const double** out);
void ml_matrix_free(ml_matrix* m);

/* ---- orthogonalization and whitening ----------------------------------- */

ml_status ml_polar_exact(const ml_matrix* m, ml_matrix** out);

/* schedule_name: a section of the bundled schedule file ("standard",
 * "polar-express"); override the file with $MUONLAB_SCHEDULES. */
ml_status ml_newton_schulz(const ml_matrix* m, const char* schedule_name, ml_matrix** out);

/* kind: zca_polar, pca, cholesky, zca_cor, pca_cor. */
ml_status ml_whiten(const ml_matrix* m, const char* kind, ml_matrix** out);

/* ---- spectra ----------------------------------------------------------- */

/* Singular values, non-increasing; *count receives min(rows, cols). The
 * buffer must hold at least that many doubles. */
ml_status ml_singular_values(const ml_matrix* m, double* sigma, size_t* count);

ml_status ml_cumulative_energy(const double* sigma, size_t count, double mu, double* out);
ml_status ml_energy_quantile_rank(const double* sigma, size_t count, double p, double* out);

/* ---- commands (mirror the CLI) ----------------------------------------- */

ml_status ml_cmd_generate(const char* spec_file, const char* out_dir);

/* Writes the run directory path into run_dir (buffer of run_dir_len bytes). */
ml_status ml_cmd_train(const char* config_file, char* run_dir, size_t run_dir_len);

ml_status ml_cmd_atlas(const char* run_a, const char* run_b, double p, const char* filter,
                       const char* out_csv, const char* out_pgm /* nullable */);

/* run_dirs: array of run directory paths. grid: increasing mu values in
 * (0, 1]; pass NULL/0 for the default 20-point grid. */
ml_status ml_cmd_curves(const char** run_dirs, size_t run_count, const char* filter,
                        const double* grid, size_t grid_len, const char* out_csv);

/* Writes the report to out_path ("" or NULL for stdout); *ok receives 1 when
 * every contract holds. */
ml_status ml_cmd_verify(const char* suite, const char* out_path, int* ok);

ml_status ml_cmd_import_grad(const char** files, size_t file_count, const char* run_id, long step,
                             const char* family, int depth, const char* kind,
                             const char* store_dir);

#ifdef __cplusplus
}
#endif

#endif /* MUONLAB_H */
