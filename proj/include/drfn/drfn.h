/* C interface to the DRFN super-resolution library.
 *
 * Every fallible call returns a drfn_status. On failure the message is
 * available from drfn_last_error() on the calling thread until the next call
 * into the library from that thread. Handles are opaque and owned by the
 * caller; destroy functions accept NULL.
 */
#ifndef DRFN_H
#define DRFN_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DRFN_API __declspec(dllexport)
#else
#define DRFN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum drfn_status {
  DRFN_OK = 0,
  DRFN_ERR_ARGUMENT = 1, /* null pointer or out-of-range argument */
  DRFN_ERR_SHAPE = 2,
  DRFN_ERR_FORMAT = 3, /* malformed checkpoint, archive or image */
  DRFN_ERR_IO = 4,
  DRFN_ERR_CONFIG = 5,
  DRFN_ERR_STATE = 6,
  DRFN_ERR_DIVERGED = 7, /* training produced a non-finite loss */
  DRFN_ERR_INTERNAL = 8
} drfn_status;

DRFN_API const char* drfn_last_error(void);
DRFN_API const char* drfn_status_name(drfn_status status);

/* 0 selects the hardware thread count; 1 is sequential and bit-reproducible. */
DRFN_API drfn_status drfn_set_threads(int threads);
DRFN_API int drfn_get_threads(void);

/* ---- model ---- */

typedef struct drfn_model drfn_model;

typedef struct drfn_model_config {
  uint32_t scale;    /* 2, 3, 4 or 8 */
  uint32_t channels;
  uint32_t cycles;   /* recurrences per residual block */
  uint32_t blocks;   /* must be 2 */
  uint32_t levels;   /* 1..3 fused recovery stages */
} drfn_model_config;

DRFN_API void drfn_model_config_default(drfn_model_config* cfg);

DRFN_API drfn_status drfn_model_create(const drfn_model_config* cfg, uint64_t seed, drfn_model** out);
/* cycles_override 0 keeps the stored cycle count. */
DRFN_API drfn_status drfn_model_load(const char* path, uint32_t cycles_override, drfn_model** out);
DRFN_API drfn_status drfn_model_save(const drfn_model* model, const char* path);
DRFN_API void drfn_model_destroy(drfn_model* model);

DRFN_API drfn_status drfn_model_get_config(const drfn_model* model, drfn_model_config* out);
DRFN_API uint64_t drfn_model_param_count(const drfn_model* model);

/* input is n*h*w floats (n single-channel images, row-major); output must hold
 * n*(scale*h)*(scale*w) floats. */
DRFN_API drfn_status drfn_model_forward(const drfn_model* model, const float* input, size_t n, size_t h, size_t w,
                                        float* output, size_t output_len);

/* Super-resolves an image file. Colour inputs get the network on luminance and
 * bicubic chroma; grayscale inputs stay grayscale. The encoder follows the
 * output extension (.png, .pgm, .ppm). */
DRFN_API drfn_status drfn_sr_image_file(const drfn_model* model, const char* in_path, const char* out_path);

/* ---- patch archives ---- */

typedef struct drfn_archive drfn_archive;

typedef struct drfn_dataset_options {
  uint32_t scale;
  uint32_t lr_patch; /* 0 selects 16 for x8, otherwise 32 */
  uint32_t stride;   /* in LR pixels */
  int augment;       /* nonzero adds all eight orientations */
} drfn_dataset_options;

DRFN_API void drfn_dataset_options_default(drfn_dataset_options* opts);

typedef void (*drfn_message_fn)(const char* message, void* user);

/* Builds patch pairs from every decodable image in hr_dir and writes them to
 * out_path. Skipped files are reported through on_warning (may be NULL). */
DRFN_API drfn_status drfn_prepare_dataset(const char* hr_dir, const char* out_path, const drfn_dataset_options* opts,
                                          drfn_message_fn on_warning, void* user, uint64_t* pairs_out);

DRFN_API drfn_status drfn_archive_load(const char* path, drfn_archive** out);
DRFN_API void drfn_archive_destroy(drfn_archive* archive);
DRFN_API uint64_t drfn_archive_size(const drfn_archive* archive);
DRFN_API uint32_t drfn_archive_scale(const drfn_archive* archive);
DRFN_API uint32_t drfn_archive_lr_patch(const drfn_archive* archive);

/* ---- training ---- */

typedef struct drfn_train_config {
  uint32_t batch;
  double momentum;
  double weight_decay;
  double lr_initial;
  double lr_decay;
  uint32_t lr_step_epochs;
  double clip_A;
  uint32_t epochs;
  uint64_t seed;
  uint64_t max_iterations; /* 0 = no cap */
  int stop_on_plateau;
  double plateau_tolerance;
  uint32_t plateau_patience;
} drfn_train_config;

DRFN_API void drfn_train_config_default(drfn_train_config* cfg);

typedef void (*drfn_iteration_fn)(uint64_t iteration, uint32_t epoch, double lr, double loss, void* user);
/* model is the live model after the epoch; valid only during the call. */
typedef void (*drfn_epoch_fn)(uint32_t epoch, double mean_loss, const drfn_model* model, void* user);

typedef struct drfn_train_summary {
  uint64_t iterations;
  uint32_t epochs_completed;
  int stopped_on_plateau;
  double first_loss;
  double last_loss;
} drfn_train_summary;

/* Trains model in place; callbacks may be NULL. On DRFN_ERR_DIVERGED the model
 * keeps the parameters that produced the non-finite loss. */
DRFN_API drfn_status drfn_train(drfn_model* model, const drfn_archive* archive, const drfn_train_config* cfg,
                                drfn_iteration_fn on_iteration, drfn_epoch_fn on_epoch, void* user,
                                drfn_train_summary* summary);

/* ---- evaluation ---- */

typedef struct drfn_report drfn_report;

/* Scores every image in gt_dir against the same-named file in sr_dir on
 * luminance, shaving `scale` pixels. Per-image failures are recorded in the
 * report rather than returned as errors. */
DRFN_API drfn_status drfn_evaluate(const char* sr_dir, const char* gt_dir, uint32_t scale, drfn_report** out);
DRFN_API void drfn_report_destroy(drfn_report* report);
DRFN_API size_t drfn_report_count(const drfn_report* report);
DRFN_API size_t drfn_report_failures(const drfn_report* report);
/* error is NULL for scored images. Strings live as long as the report. */
DRFN_API drfn_status drfn_report_entry(const drfn_report* report, size_t index, const char** name, double* psnr,
                                       double* ssim, const char** error);
DRFN_API void drfn_report_means(const drfn_report* report, double* psnr, double* ssim);
DRFN_API const char* drfn_report_text(const drfn_report* report);
DRFN_API const char* drfn_report_csv(const drfn_report* report);

/* Writes the bicubic down/up-scaled version of an HR image (luminance only,
 * grayscale output), the reference baseline for evaluation. */
DRFN_API drfn_status drfn_bicubic_baseline_file(const char* hr_path, uint32_t scale, const char* out_path);

/* ---- self-verification ---- */

typedef void (*drfn_check_fn)(const char* name, int passed, const char* detail, void* user);

/* Runs gradient oracles, parameter identities and unrolled-equivalence
 * checks. perturb (may be NULL) names a gradient check whose analytic side is
 * deliberately corrupted. failures_out receives the number of failed checks. */
DRFN_API drfn_status drfn_selftest(const char* perturb, uint64_t seed, drfn_check_fn on_check, void* user,
                                   uint32_t* failures_out);

#ifdef __cplusplus
}
#endif

#endif /* DRFN_H */
