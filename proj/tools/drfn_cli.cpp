// drfn: prepare patch archives, train, super-resolve, evaluate and self-check.
#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "drfn/drfn.h"

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kCheck = 3 };

int exit_for(drfn_status s) {
  switch (s) {
    case DRFN_OK: return kOk;
    case DRFN_ERR_ARGUMENT:
    case DRFN_ERR_CONFIG: return kUsage;
    default: return kData;
  }
}

int report(drfn_status s, const char* what) {
  if (s == DRFN_OK) return kOk;
  std::cerr << "drfn: " << what << ": " << drfn_status_name(s) << ": " << drfn_last_error() << "\n";
  return exit_for(s);
}

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Reads key=value lines ('#' comments, blank lines ignored) into --key=value tokens.
std::vector<std::string> config_tokens(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  std::vector<std::string> out;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || key == "config") throw UsageError(path + ":" + std::to_string(lineno) + ": bad key");
    out.push_back("--" + key + "=" + value);
  }
  return out;
}

class ResolvedConfig {
 public:
  template <typename T>
  void add(const std::string& key, const T& value) {
    std::ostringstream s;
    s << value;
    entries_.emplace_back(key, s.str());
  }
  void print() const {
    std::cout << "resolved config:\n";
    for (const auto& [k, v] : entries_) std::cout << "  " << k << " = " << v << "\n";
    std::cout.flush();
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

struct Common {
  std::uint64_t seed = 1;
  int threads = 0;
  bool deterministic = false;
  std::string config;

  void apply(ResolvedConfig& rc) const {
    rc.add("seed", seed);
    rc.add("threads", deterministic ? 1 : threads);
    rc.add("deterministic", deterministic ? "true" : "false");
    if (!config.empty()) rc.add("config", config);
  }
};

struct PrepareArgs {
  std::string hr_dir, out;
  drfn_dataset_options opts{};
};

struct TrainArgs {
  std::string archive, out, log, init;
  drfn_model_config model{};
  drfn_train_config train{};
  bool per_epoch = true;
};

struct SrArgs {
  std::string model, in, out;
  std::uint32_t cycles = 0;
};

struct EvalArgs {
  std::string sr_dir, gt_dir, csv = "eval.csv";
  std::uint32_t scale = 4;
};

struct SelftestArgs {
  std::string perturb;
};

int run_prepare(const Common& common, PrepareArgs& a) {
  ResolvedConfig rc;
  common.apply(rc);
  rc.add("hr-dir", a.hr_dir);
  rc.add("out", a.out);
  rc.add("scale", a.opts.scale);
  rc.add("lr-patch", a.opts.lr_patch == 0 ? std::string("auto") : std::to_string(a.opts.lr_patch));
  rc.add("stride", a.opts.stride);
  rc.add("augment", a.opts.augment ? "true" : "false");
  rc.print();

  std::uint64_t pairs = 0;
  const drfn_status s = drfn_prepare_dataset(
      a.hr_dir.c_str(), a.out.c_str(), &a.opts,
      [](const char* msg, void*) { std::cerr << "warning: " << msg << "\n"; }, nullptr, &pairs);
  if (s != DRFN_OK) return report(s, "prepare");
  std::cout << "wrote " << pairs << " patch pairs to " << a.out << "\n";
  return kOk;
}

struct TrainContext {
  std::FILE* log;
  std::string out;
  bool per_epoch;
  bool write_failed = false;
};

int run_train(const Common& common, TrainArgs& a) {
  drfn_archive* archive = nullptr;
  if (int rc = report(drfn_archive_load(a.archive.c_str(), &archive), "loading archive")) return rc;
  std::unique_ptr<drfn_archive, decltype(&drfn_archive_destroy)> archive_guard(archive, drfn_archive_destroy);

  if (a.model.scale == 0) a.model.scale = drfn_archive_scale(archive);
  a.train.seed = common.seed;
  if (a.log.empty()) a.log = a.out + ".log";

  drfn_model* model = nullptr;
  if (!a.init.empty()) {
    if (int rc = report(drfn_model_load(a.init.c_str(), a.model.cycles, &model), "loading initial checkpoint")) {
      return rc;
    }
    drfn_model_get_config(model, &a.model);
  } else if (int rc = report(drfn_model_create(&a.model, common.seed, &model), "creating model")) {
    return rc;
  }
  std::unique_ptr<drfn_model, decltype(&drfn_model_destroy)> model_guard(model, drfn_model_destroy);

  ResolvedConfig rc;
  common.apply(rc);
  rc.add("archive", a.archive);
  rc.add("out", a.out);
  rc.add("log", a.log);
  if (!a.init.empty()) rc.add("init", a.init);
  rc.add("scale", a.model.scale);
  rc.add("channels", a.model.channels);
  rc.add("cycles", a.model.cycles);
  rc.add("levels", a.model.levels);
  rc.add("batch", a.train.batch);
  rc.add("momentum", a.train.momentum);
  rc.add("weight-decay", a.train.weight_decay);
  rc.add("lr", a.train.lr_initial);
  rc.add("lr-decay", a.train.lr_decay);
  rc.add("lr-step", a.train.lr_step_epochs);
  rc.add("clip", a.train.clip_A);
  rc.add("epochs", a.train.epochs);
  rc.add("max-iterations", a.train.max_iterations);
  rc.add("stop-on-plateau", a.train.stop_on_plateau ? "true" : "false");
  rc.add("per-epoch-checkpoints", a.per_epoch ? "true" : "false");
  rc.print();
  std::cout << "archive: " << drfn_archive_size(archive) << " pairs, LR patch " << drfn_archive_lr_patch(archive)
            << "; model: " << drfn_model_param_count(model) << " parameters\n";

  std::FILE* log = std::fopen(a.log.c_str(), "w");
  if (!log) {
    std::cerr << "drfn: cannot write loss log " << a.log << "\n";
    return kData;
  }
  std::fputs("iteration,epoch,lr,loss\n", log);
  TrainContext ctx{log, a.out, a.per_epoch};

  drfn_train_summary summary{};
  const drfn_status s = drfn_train(
      model, archive, &a.train,
      [](std::uint64_t it, std::uint32_t epoch, double lr, double loss, void* user) {
        auto* c = static_cast<TrainContext*>(user);
        std::fprintf(c->log, "%llu,%u,%.17g,%.17g\n", static_cast<unsigned long long>(it), epoch, lr, loss);
      },
      [](std::uint32_t epoch, double mean_loss, const drfn_model* m, void* user) {
        auto* c = static_cast<TrainContext*>(user);
        std::fflush(c->log);
        std::printf("epoch %u: mean loss %.6g\n", epoch + 1, mean_loss);
        if (c->per_epoch) {
          const std::string path = c->out + ".epoch" + std::to_string(epoch + 1);
          if (drfn_model_save(m, path.c_str()) != DRFN_OK) {
            std::cerr << "drfn: " << drfn_last_error() << "\n";
            c->write_failed = true;
          }
        }
      },
      &ctx, &summary);
  std::fclose(log);
  if (s != DRFN_OK) return report(s, "training");
  if (ctx.write_failed) return kData;
  if (int rc = report(drfn_model_save(model, a.out.c_str()), "saving checkpoint")) return rc;
  std::printf("trained %llu iterations over %u epochs", static_cast<unsigned long long>(summary.iterations),
              summary.epochs_completed);
  if (summary.iterations) std::printf(", loss %.6g -> %.6g", summary.first_loss, summary.last_loss);
  if (summary.stopped_on_plateau) std::printf(" (stopped on plateau)");
  std::printf("\nwrote %s and %s\n", a.out.c_str(), a.log.c_str());
  return kOk;
}

int run_sr(const Common& common, SrArgs& a) {
  drfn_model* model = nullptr;
  if (int rc = report(drfn_model_load(a.model.c_str(), a.cycles, &model), "loading checkpoint")) return rc;
  std::unique_ptr<drfn_model, decltype(&drfn_model_destroy)> guard(model, drfn_model_destroy);
  drfn_model_config cfg{};
  drfn_model_get_config(model, &cfg);

  ResolvedConfig rc;
  common.apply(rc);
  rc.add("model", a.model);
  rc.add("in", a.in);
  rc.add("out", a.out);
  rc.add("scale", cfg.scale);
  rc.add("channels", cfg.channels);
  rc.add("cycles", cfg.cycles);
  rc.add("levels", cfg.levels);
  rc.print();

  if (int rc2 = report(drfn_sr_image_file(model, a.in.c_str(), a.out.c_str()), "super-resolving")) return rc2;
  std::cout << "wrote " << a.out << "\n";
  return kOk;
}

int run_eval(const Common& common, EvalArgs& a) {
  ResolvedConfig rc;
  common.apply(rc);
  rc.add("sr-dir", a.sr_dir);
  rc.add("gt-dir", a.gt_dir);
  rc.add("scale", a.scale);
  rc.add("csv", a.csv);
  rc.print();

  drfn_report* r = nullptr;
  if (int code = report(drfn_evaluate(a.sr_dir.c_str(), a.gt_dir.c_str(), a.scale, &r), "evaluating")) return code;
  std::unique_ptr<drfn_report, decltype(&drfn_report_destroy)> guard(r, drfn_report_destroy);
  std::cout << drfn_report_text(r);
  std::ofstream csv(a.csv);
  if (!(csv << drfn_report_csv(r))) {
    std::cerr << "drfn: cannot write " << a.csv << "\n";
    return kData;
  }
  if (drfn_report_count(r) == 0) {
    std::cerr << "drfn: no ground-truth images in " << a.gt_dir << "\n";
    return kData;
  }
  return drfn_report_failures(r) ? kData : kOk;
}

int run_selftest(const Common& common, SelftestArgs& a) {
  ResolvedConfig rc;
  common.apply(rc);
  if (!a.perturb.empty()) rc.add("perturb", a.perturb);
  rc.print();

  std::uint32_t failures = 0;
  const drfn_status s = drfn_selftest(
      a.perturb.empty() ? nullptr : a.perturb.c_str(), common.seed,
      [](const char* name, int passed, const char* detail, void*) {
        std::printf("%s  %s: %s\n", passed ? "PASS" : "FAIL", name, detail);
        std::fflush(stdout);
      },
      nullptr, &failures);
  if (s != DRFN_OK) return report(s, "selftest");
  if (failures) {
    std::printf("%u check(s) failed\n", failures);
    return kCheck;
  }
  std::printf("all checks passed\n");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DRFN image super-resolution"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  Common common;
  app.add_option("--seed", common.seed, "Seed for initialisation and shuffling")->capture_default_str();
  app.add_option("--threads", common.threads, "Worker threads (0 = all cores)")->capture_default_str()->check(
      CLI::NonNegativeNumber);
  app.add_flag("--deterministic", common.deterministic, "Sequential, bit-reproducible execution");
  app.add_option("--config", common.config, "File of key=value lines; command-line flags take precedence");

  PrepareArgs prep;
  drfn_dataset_options_default(&prep.opts);
  auto* prepare = app.add_subcommand("prepare", "Cut HR images into LR/HR patch pairs");
  prepare->add_option("--hr-dir", prep.hr_dir, "Directory of HR images")->required();
  prepare->add_option("--out", prep.out, "Output patch archive")->required();
  prepare->add_option("--scale", prep.opts.scale, "Upscaling factor")->capture_default_str();
  prepare->add_option("--lr-patch", prep.opts.lr_patch, "LR patch side (0 = 16 for x8, else 32)")
      ->capture_default_str();
  prepare->add_option("--stride", prep.opts.stride, "Patch stride in LR pixels")->capture_default_str();
  bool augment = false;
  prepare->add_flag("--augment", augment, "Add all eight orientations of every image");

  TrainArgs tr;
  drfn_model_config_default(&tr.model);
  tr.model.scale = 0;
  drfn_train_config_default(&tr.train);
  auto* train = app.add_subcommand("train", "Train a model on a patch archive");
  train->add_option("--archive", tr.archive, "Patch archive from 'prepare'")->required();
  train->add_option("--out", tr.out, "Final checkpoint path")->required();
  train->add_option("--log", tr.log, "Loss log (default <out>.log)");
  train->add_option("--init", tr.init, "Start from this checkpoint instead of a fresh model");
  train->add_option("--scale", tr.model.scale, "Upscaling factor (default: the archive's)");
  train->add_option("--channels", tr.model.channels, "Feature channels")->capture_default_str();
  train->add_option("--cycles", tr.model.cycles, "Recurrences per residual block")->capture_default_str();
  train->add_option("--levels", tr.model.levels, "Fused recovery stages (1-3)")->capture_default_str();
  train->add_option("--batch", tr.train.batch, "Mini-batch size")->capture_default_str();
  train->add_option("--momentum", tr.train.momentum)->capture_default_str();
  train->add_option("--weight-decay", tr.train.weight_decay)->capture_default_str();
  train->add_option("--lr", tr.train.lr_initial, "Initial learning rate")->capture_default_str();
  train->add_option("--lr-decay", tr.train.lr_decay, "Learning-rate multiplier per step")->capture_default_str();
  train->add_option("--lr-step", tr.train.lr_step_epochs, "Epochs between decays")->capture_default_str();
  train->add_option("--clip", tr.train.clip_A, "Clip constant A; gradients bounded by A/lr")->capture_default_str();
  train->add_option("--epochs", tr.train.epochs)->capture_default_str();
  train->add_option("--max-iterations", tr.train.max_iterations, "Iteration cap (0 = none)")->capture_default_str();
  bool plateau = false;
  train->add_flag("--stop-on-plateau", plateau, "Stop when the epoch loss stops improving");
  train->add_option("--plateau-patience", tr.train.plateau_patience)->capture_default_str();
  train->add_flag("!--no-epoch-checkpoints", tr.per_epoch, "Skip the <out>.epochN checkpoints");

  SrArgs sr;
  auto* srcmd = app.add_subcommand("sr", "Super-resolve one image");
  srcmd->add_option("--model", sr.model, "Checkpoint")->required();
  srcmd->add_option("--in", sr.in, "Input image (.png, .pgm, .ppm)")->required();
  srcmd->add_option("--out", sr.out, "Output image; format follows the extension")->required();
  srcmd->add_option("--cycles", sr.cycles, "Run with this many recurrences (0 = as trained)");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Score SR images against ground truth (PSNR/SSIM on luminance)");
  eval->add_option("--sr-dir", ev.sr_dir, "Super-resolved images")->required();
  eval->add_option("--gt-dir", ev.gt_dir, "Ground-truth images, matched by file name")->required();
  eval->add_option("--scale", ev.scale, "Scale factor; also the border shave")->capture_default_str();
  eval->add_option("--csv", ev.csv, "Per-image CSV output")->capture_default_str();

  SelftestArgs st;
  auto* selftest = app.add_subcommand("selftest", "Gradient oracles and parameter identities");
  selftest->add_option("--perturb", st.perturb, "Corrupt the named gradient check (harness sanity)");

  // Splice config-file entries in right after the subcommand name so that
  // anything given on the command line later wins.
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    std::vector<std::string> file_tokens;
    for (std::size_t i = 0; i < args.size(); ++i) {
      if (args[i] == "--config" && i + 1 < args.size()) {
        file_tokens = config_tokens(args[i + 1]);
      } else if (args[i].rfind("--config=", 0) == 0) {
        file_tokens = config_tokens(args[i].substr(9));
      }
    }
    std::size_t at = 0;
    while (at < args.size() && !app.get_subcommand_no_throw(args[at])) ++at;
    args.insert(at < args.size() ? args.begin() + static_cast<std::ptrdiff_t>(at) + 1 : args.end(),
                file_tokens.begin(), file_tokens.end());
  } catch (const UsageError& e) {
    std::cerr << "drfn: " << e.what() << "\n";
    return kUsage;
  }

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (common.deterministic) common.threads = 1;
  if (int rc = report(drfn_set_threads(common.threads), "setting threads")) return rc;

  if (*prepare) {
    prep.opts.augment = augment ? 1 : 0;
    return run_prepare(common, prep);
  }
  if (*train) {
    tr.train.stop_on_plateau = plateau ? 1 : 0;
    return run_train(common, tr);
  }
  if (*srcmd) return run_sr(common, sr);
  if (*eval) return run_eval(common, ev);
  if (*selftest) return run_selftest(common, st);
  return kUsage;
}
