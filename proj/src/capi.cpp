#include "drfn/drfn.h"

#include <cmath>
#include <cstring>
#include <string>

#include "drfn/dataset.hpp"
#include "drfn/image.hpp"
#include "drfn/metrics.hpp"
#include "drfn/model.hpp"
#include "drfn/parallel.hpp"
#include "drfn/selftest.hpp"
#include "drfn/train.hpp"

struct drfn_model {
  drfn::DrfnModel model;
};

struct drfn_archive {
  drfn::PatchArchive archive;
};

struct drfn_report {
  drfn::EvalReport report;
  std::string text;
  std::string csv;
};

namespace {

thread_local std::string g_last_error;

drfn_status fail(drfn_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

// Runs body, mapping library exceptions onto status codes.
template <typename Fn>
drfn_status guarded(Fn&& body) {
  g_last_error.clear();
  try {
    body();
    return DRFN_OK;
  } catch (const drfn::ShapeError& e) {
    return fail(DRFN_ERR_SHAPE, e.what());
  } catch (const drfn::FormatError& e) {
    return fail(DRFN_ERR_FORMAT, e.what());
  } catch (const drfn::IoError& e) {
    return fail(DRFN_ERR_IO, e.what());
  } catch (const drfn::ConfigError& e) {
    return fail(DRFN_ERR_CONFIG, e.what());
  } catch (const drfn::StateError& e) {
    return fail(DRFN_ERR_STATE, e.what());
  } catch (const drfn::DivergenceError& e) {
    return fail(DRFN_ERR_DIVERGED, e.what());
  } catch (const drfn::Error& e) {
    return fail(DRFN_ERR_INTERNAL, e.what());
  } catch (const std::bad_alloc&) {
    return fail(DRFN_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(DRFN_ERR_INTERNAL, e.what());
  }
}

drfn_status null_arg(const char* fn, const char* name) {
  return fail(DRFN_ERR_ARGUMENT, std::string(fn) + ": " + name + " is NULL");
}

drfn::ModelConfig to_cpp(const drfn_model_config& c) {
  return drfn::ModelConfig{c.scale, c.channels, c.cycles, c.blocks, c.levels};
}

drfn_model_config to_c(const drfn::ModelConfig& c) {
  return drfn_model_config{c.scale, c.channels, c.cycles, c.blocks, c.levels};
}

drfn::TrainConfig to_cpp(const drfn_train_config& c) {
  drfn::TrainConfig t;
  t.batch = c.batch;
  t.momentum = c.momentum;
  t.weight_decay = c.weight_decay;
  t.lr_initial = c.lr_initial;
  t.lr_decay = c.lr_decay;
  t.lr_step_epochs = c.lr_step_epochs;
  t.clip_A = c.clip_A;
  t.epochs = c.epochs;
  t.seed = c.seed;
  t.max_iterations = c.max_iterations;
  t.stop_on_plateau = c.stop_on_plateau != 0;
  t.plateau_tolerance = c.plateau_tolerance;
  t.plateau_patience = c.plateau_patience;
  return t;
}

}  // namespace

extern "C" {

const char* drfn_last_error(void) { return g_last_error.c_str(); }

const char* drfn_status_name(drfn_status status) {
  switch (status) {
    case DRFN_OK: return "ok";
    case DRFN_ERR_ARGUMENT: return "argument error";
    case DRFN_ERR_SHAPE: return "shape error";
    case DRFN_ERR_FORMAT: return "format error";
    case DRFN_ERR_IO: return "I/O error";
    case DRFN_ERR_CONFIG: return "configuration error";
    case DRFN_ERR_STATE: return "state error";
    case DRFN_ERR_DIVERGED: return "training diverged";
    case DRFN_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

drfn_status drfn_set_threads(int threads) {
  if (threads < 0) return fail(DRFN_ERR_ARGUMENT, "drfn_set_threads: threads must be >= 0");
  return guarded([&] { drfn::set_num_threads(threads); });
}

int drfn_get_threads(void) { return drfn::num_threads(); }

void drfn_model_config_default(drfn_model_config* cfg) {
  if (cfg) *cfg = to_c(drfn::ModelConfig{});
}

drfn_status drfn_model_create(const drfn_model_config* cfg, uint64_t seed, drfn_model** out) {
  if (!cfg) return null_arg("drfn_model_create", "cfg");
  if (!out) return null_arg("drfn_model_create", "out");
  *out = nullptr;
  return guarded([&] { *out = new drfn_model{drfn::build_drfn<float>(to_cpp(*cfg), seed)}; });
}

drfn_status drfn_model_load(const char* path, uint32_t cycles_override, drfn_model** out) {
  if (!path) return null_arg("drfn_model_load", "path");
  if (!out) return null_arg("drfn_model_load", "out");
  *out = nullptr;
  return guarded([&] {
    std::optional<std::uint32_t> cycles;
    if (cycles_override) cycles = cycles_override;
    *out = new drfn_model{drfn::load_checkpoint(path, cycles)};
  });
}

drfn_status drfn_model_save(const drfn_model* model, const char* path) {
  if (!model) return null_arg("drfn_model_save", "model");
  if (!path) return null_arg("drfn_model_save", "path");
  return guarded([&] { drfn::save_checkpoint(model->model, path); });
}

void drfn_model_destroy(drfn_model* model) { delete model; }

drfn_status drfn_model_get_config(const drfn_model* model, drfn_model_config* out) {
  if (!model) return null_arg("drfn_model_get_config", "model");
  if (!out) return null_arg("drfn_model_get_config", "out");
  *out = to_c(model->model.config);
  return DRFN_OK;
}

uint64_t drfn_model_param_count(const drfn_model* model) { return model ? drfn::param_count(model->model) : 0; }

drfn_status drfn_model_forward(const drfn_model* model, const float* input, size_t n, size_t h, size_t w,
                               float* output, size_t output_len) {
  if (!model) return null_arg("drfn_model_forward", "model");
  if (!input) return null_arg("drfn_model_forward", "input");
  if (!output) return null_arg("drfn_model_forward", "output");
  return guarded([&] {
    const drfn::Dims d{n, 1, h, w};
    drfn::require_valid(d);
    const drfn::Tensor x(d, std::vector<float>(input, input + d.count()));
    const drfn::Tensor y = drfn::forward(model->model, x);
    if (y.size() != output_len) {
      throw drfn::ShapeError("drfn_model_forward: output buffer holds " + std::to_string(output_len) +
                             " floats, result needs " + std::to_string(y.size()));
    }
    std::memcpy(output, y.data().data(), y.size() * sizeof(float));
  });
}

drfn_status drfn_sr_image_file(const drfn_model* model, const char* in_path, const char* out_path) {
  if (!model) return null_arg("drfn_sr_image_file", "model");
  if (!in_path) return null_arg("drfn_sr_image_file", "in_path");
  if (!out_path) return null_arg("drfn_sr_image_file", "out_path");
  return guarded([&] {
    const drfn::Image8 img = drfn::read_image(in_path);
    const std::size_t s = model->model.config.scale;
    const std::size_t oh = img.h * s, ow = img.w * s;
    auto upscale_y = [&](const drfn::ImageY& y) {
      return drfn::ImageY::from_tensor(drfn::forward(model->model, y.to_tensor()));
    };
    if (img.channels == 1) {
      drfn::write_image(out_path, drfn::luminance_to_gray(upscale_y(drfn::rgb_to_luminance(img))));
      return;
    }
    const drfn::YCbCrPlanes planes = drfn::rgb_to_ycbcr(img);
    const drfn::YCbCrPlanes hr{upscale_y(planes.y), drfn::bicubic_resize(planes.cb, oh, ow),
                               drfn::bicubic_resize(planes.cr, oh, ow)};
    drfn::write_image(out_path, drfn::ycbcr_to_rgb(hr));
  });
}

void drfn_dataset_options_default(drfn_dataset_options* opts) {
  if (!opts) return;
  const drfn::DatasetOptions d;
  *opts = drfn_dataset_options{d.scale, static_cast<uint32_t>(d.lr_patch), static_cast<uint32_t>(d.stride),
                               d.augment ? 1 : 0};
}

drfn_status drfn_prepare_dataset(const char* hr_dir, const char* out_path, const drfn_dataset_options* opts,
                                 drfn_message_fn on_warning, void* user, uint64_t* pairs_out) {
  if (!hr_dir) return null_arg("drfn_prepare_dataset", "hr_dir");
  if (!out_path) return null_arg("drfn_prepare_dataset", "out_path");
  if (!opts) return null_arg("drfn_prepare_dataset", "opts");
  return guarded([&] {
    drfn::DatasetOptions o;
    o.scale = opts->scale;
    o.lr_patch = opts->lr_patch;
    o.stride = opts->stride;
    o.augment = opts->augment != 0;
    const drfn::DatasetBuild build = drfn::build_dataset(hr_dir, o);
    if (on_warning) {
      for (const auto& w : build.warnings) on_warning(w.c_str(), user);
    }
    drfn::save_archive(build.archive, out_path);
    if (pairs_out) *pairs_out = build.archive.pairs.size();
  });
}

drfn_status drfn_archive_load(const char* path, drfn_archive** out) {
  if (!path) return null_arg("drfn_archive_load", "path");
  if (!out) return null_arg("drfn_archive_load", "out");
  *out = nullptr;
  return guarded([&] { *out = new drfn_archive{drfn::load_archive(path)}; });
}

void drfn_archive_destroy(drfn_archive* archive) { delete archive; }
uint64_t drfn_archive_size(const drfn_archive* archive) { return archive ? archive->archive.pairs.size() : 0; }
uint32_t drfn_archive_scale(const drfn_archive* archive) { return archive ? archive->archive.scale : 0; }
uint32_t drfn_archive_lr_patch(const drfn_archive* archive) { return archive ? archive->archive.lr_patch : 0; }

void drfn_train_config_default(drfn_train_config* cfg) {
  if (!cfg) return;
  const drfn::TrainConfig t;
  *cfg = drfn_train_config{t.batch,          t.momentum, t.weight_decay, t.lr_initial,
                           t.lr_decay,       t.lr_step_epochs, t.clip_A, t.epochs,
                           t.seed,           t.max_iterations, t.stop_on_plateau ? 1 : 0,
                           t.plateau_tolerance, t.plateau_patience};
}

drfn_status drfn_train(drfn_model* model, const drfn_archive* archive, const drfn_train_config* cfg,
                       drfn_iteration_fn on_iteration, drfn_epoch_fn on_epoch, void* user,
                       drfn_train_summary* summary) {
  if (!model) return null_arg("drfn_train", "model");
  if (!archive) return null_arg("drfn_train", "archive");
  if (!cfg) return null_arg("drfn_train", "cfg");
  return guarded([&] {
    drfn::TrainSink sink;
    if (on_iteration) {
      sink.on_iteration = [&](const drfn::IterationEvent& e) { on_iteration(e.iteration, e.epoch, e.lr, e.loss, user); };
    }
    if (on_epoch) {
      sink.on_epoch = [&](const drfn::EpochEvent& e, const drfn::DrfnModel&) { on_epoch(e.epoch, e.mean_loss, model, user); };
    }
    const drfn::TrainResult r = drfn::train_loop(model->model, archive->archive, to_cpp(*cfg), sink);
    if (summary) {
      summary->iterations = r.iterations;
      summary->epochs_completed = r.epochs_completed;
      summary->stopped_on_plateau = r.stopped_on_plateau ? 1 : 0;
      summary->first_loss = r.losses.empty() ? NAN : r.losses.front();
      summary->last_loss = r.losses.empty() ? NAN : r.losses.back();
    }
  });
}

drfn_status drfn_evaluate(const char* sr_dir, const char* gt_dir, uint32_t scale, drfn_report** out) {
  if (!sr_dir) return null_arg("drfn_evaluate", "sr_dir");
  if (!gt_dir) return null_arg("drfn_evaluate", "gt_dir");
  if (!out) return null_arg("drfn_evaluate", "out");
  *out = nullptr;
  return guarded([&] {
    drfn::EvalReport r = drfn::evaluate_dataset(sr_dir, gt_dir, scale);
    std::string text = r.to_text(), csv = r.to_csv();
    *out = new drfn_report{std::move(r), std::move(text), std::move(csv)};
  });
}

void drfn_report_destroy(drfn_report* report) { delete report; }
size_t drfn_report_count(const drfn_report* report) { return report ? report->report.per_image.size() : 0; }
size_t drfn_report_failures(const drfn_report* report) { return report ? report->report.failures() : 0; }

drfn_status drfn_report_entry(const drfn_report* report, size_t index, const char** name, double* psnr, double* ssim,
                              const char** error) {
  if (!report) return null_arg("drfn_report_entry", "report");
  if (index >= report->report.per_image.size()) {
    return fail(DRFN_ERR_ARGUMENT, "drfn_report_entry: index " + std::to_string(index) + " out of range");
  }
  const auto& s = report->report.per_image[index];
  if (name) *name = s.name.c_str();
  if (psnr) *psnr = s.psnr;
  if (ssim) *ssim = s.ssim;
  if (error) *error = s.error ? s.error->c_str() : nullptr;
  return DRFN_OK;
}

void drfn_report_means(const drfn_report* report, double* psnr, double* ssim) {
  if (!report) return;
  if (psnr) *psnr = report->report.mean_psnr;
  if (ssim) *ssim = report->report.mean_ssim;
}

const char* drfn_report_text(const drfn_report* report) { return report ? report->text.c_str() : ""; }
const char* drfn_report_csv(const drfn_report* report) { return report ? report->csv.c_str() : ""; }

drfn_status drfn_bicubic_baseline_file(const char* hr_path, uint32_t scale, const char* out_path) {
  if (!hr_path) return null_arg("drfn_bicubic_baseline_file", "hr_path");
  if (!out_path) return null_arg("drfn_bicubic_baseline_file", "out_path");
  if (scale < 1) return fail(DRFN_ERR_ARGUMENT, "drfn_bicubic_baseline_file: scale must be >= 1");
  return guarded([&] {
    const drfn::ImageY hr = drfn::rgb_to_luminance(drfn::read_image(hr_path));
    drfn::write_image(out_path, drfn::luminance_to_gray(drfn::bicubic_baseline(hr, scale)));
  });
}

drfn_status drfn_selftest(const char* perturb, uint64_t seed, drfn_check_fn on_check, void* user,
                          uint32_t* failures_out) {
  return guarded([&] {
    drfn::SelftestOptions opts;
    if (perturb) opts.perturb = perturb;
    opts.seed = seed;
    uint32_t failures = 0;
    drfn::run_selftest(opts, [&](const drfn::CheckResult& r) {
      failures += !r.passed;
      if (on_check) on_check(r.name.c_str(), r.passed ? 1 : 0, r.detail.c_str(), user);
    });
    if (failures_out) *failures_out = failures;
  });
}

}  // extern "C"
