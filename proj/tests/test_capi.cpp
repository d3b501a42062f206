#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "drfn/drfn.h"

namespace fs = std::filesystem;

namespace {

struct Dir {
  fs::path path;
  explicit Dir(const std::string& tag) {
    path = fs::temp_directory_path() / ("drfn-capi-" + tag + "-" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~Dir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

void write_pgm(const fs::path& p, int h, int w, int variant) {
  std::ofstream out(p, std::ios::binary);
  out << "P5\n" << w << " " << h << "\n255\n";
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.put(char((x * 5 + y * 3 + variant * 40 + (x * y) % 17) % 256));
}

drfn_model_config tiny_config(uint32_t scale) {
  drfn_model_config c;
  drfn_model_config_default(&c);
  c.scale = scale;
  c.channels = 4;
  c.cycles = 2;
  return c;
}

}  // namespace

TEST(CApi, NullArgumentsAreReported) {
  EXPECT_EQ(drfn_model_create(nullptr, 1, nullptr), DRFN_ERR_ARGUMENT);
  EXPECT_NE(std::string(drfn_last_error()), "");
  drfn_model* m = nullptr;
  EXPECT_EQ(drfn_model_load(nullptr, 0, &m), DRFN_ERR_ARGUMENT);
  EXPECT_EQ(m, nullptr);
  drfn_model_destroy(nullptr);
  drfn_archive_destroy(nullptr);
  drfn_report_destroy(nullptr);
  EXPECT_STREQ(drfn_status_name(DRFN_ERR_FORMAT), "format error");
}

TEST(CApi, InvalidConfigIsConfigError) {
  drfn_model_config c = tiny_config(5);
  drfn_model* m = nullptr;
  EXPECT_EQ(drfn_model_create(&c, 1, &m), DRFN_ERR_CONFIG);
  EXPECT_NE(std::string(drfn_last_error()).find("scale"), std::string::npos);
}

TEST(CApi, DefaultConfigAndCount) {
  drfn_model_config c;
  drfn_model_config_default(&c);
  EXPECT_EQ(c.scale, 4u);
  EXPECT_EQ(c.channels, 64u);
  EXPECT_EQ(c.cycles, 10u);
  drfn_model* m = nullptr;
  ASSERT_EQ(drfn_model_create(&c, 1, &m), DRFN_OK);
  EXPECT_EQ(drfn_model_param_count(m), 401153u);
  drfn_model_destroy(m);
}

TEST(CApi, ForwardShapesAndBufferCheck) {
  drfn_model_config c = tiny_config(4);
  drfn_model* m = nullptr;
  ASSERT_EQ(drfn_model_create(&c, 3, &m), DRFN_OK);
  std::vector<float> in(64, 0.5f), out(32 * 32);
  EXPECT_EQ(drfn_model_forward(m, in.data(), 1, 8, 8, out.data(), out.size()), DRFN_OK);
  for (float v : out) EXPECT_TRUE(std::isfinite(v));
  EXPECT_EQ(drfn_model_forward(m, in.data(), 1, 8, 8, out.data(), out.size() - 1), DRFN_ERR_SHAPE);
  drfn_model_destroy(m);
}

TEST(CApi, SaveLoadAndCyclesOverride) {
  Dir dir("ckpt");
  drfn_model_config c = tiny_config(2);
  drfn_model* m = nullptr;
  ASSERT_EQ(drfn_model_create(&c, 4, &m), DRFN_OK);
  const std::string path = (dir.path / "m.drfn").string();
  ASSERT_EQ(drfn_model_save(m, path.c_str()), DRFN_OK);

  drfn_model *same = nullptr, *deeper = nullptr;
  ASSERT_EQ(drfn_model_load(path.c_str(), 0, &same), DRFN_OK);
  ASSERT_EQ(drfn_model_load(path.c_str(), 6, &deeper), DRFN_OK);
  drfn_model_config got;
  drfn_model_get_config(deeper, &got);
  EXPECT_EQ(got.cycles, 6u);

  std::vector<float> in(16), a(64), b(64), d(64);
  for (std::size_t k = 0; k < in.size(); ++k) in[k] = float(k) / 16.0f;
  drfn_model_forward(m, in.data(), 1, 4, 4, a.data(), a.size());
  drfn_model_forward(same, in.data(), 1, 4, 4, b.data(), b.size());
  drfn_model_forward(deeper, in.data(), 1, 4, 4, d.data(), d.size());
  EXPECT_EQ(a, b);
  EXPECT_NE(a, d);

  const std::string junk = (dir.path / "junk").string();
  std::ofstream(junk) << "not a checkpoint";
  drfn_model* bad = nullptr;
  EXPECT_EQ(drfn_model_load(junk.c_str(), 0, &bad), DRFN_ERR_FORMAT);
  EXPECT_EQ(drfn_model_load((dir.path / "none").string().c_str(), 0, &bad), DRFN_ERR_IO);
  drfn_model_destroy(m);
  drfn_model_destroy(same);
  drfn_model_destroy(deeper);
}

TEST(CApi, PrepareTrainEvaluate) {
  Dir dir("pipeline");
  fs::create_directories(dir.path / "hr");
  write_pgm(dir.path / "hr" / "a.pgm", 32, 32, 0);
  write_pgm(dir.path / "hr" / "b.pgm", 32, 32, 1);
  std::ofstream(dir.path / "hr" / "readme.txt") << "x";

  drfn_dataset_options opts;
  drfn_dataset_options_default(&opts);
  opts.scale = 2;
  opts.lr_patch = 8;
  opts.stride = 8;
  std::vector<std::string> warnings;
  uint64_t pairs = 0;
  const std::string arc = (dir.path / "p.drfp").string();
  ASSERT_EQ(drfn_prepare_dataset(
                (dir.path / "hr").string().c_str(), arc.c_str(), &opts,
                [](const char* msg, void* u) { static_cast<std::vector<std::string>*>(u)->push_back(msg); },
                &warnings, &pairs),
            DRFN_OK);
  EXPECT_EQ(pairs, 8u);
  EXPECT_EQ(warnings.size(), 1u);

  drfn_archive* a = nullptr;
  ASSERT_EQ(drfn_archive_load(arc.c_str(), &a), DRFN_OK);
  EXPECT_EQ(drfn_archive_size(a), 8u);
  EXPECT_EQ(drfn_archive_scale(a), 2u);
  EXPECT_EQ(drfn_archive_lr_patch(a), 8u);

  drfn_model_config c = tiny_config(2);
  drfn_model* m = nullptr;
  ASSERT_EQ(drfn_model_create(&c, 1, &m), DRFN_OK);
  drfn_train_config tc;
  drfn_train_config_default(&tc);
  tc.batch = 4;
  tc.lr_initial = 0.01;
  tc.epochs = 2;
  int iterations = 0, epochs = 0;
  struct Counts {
    int* it;
    int* ep;
  } counts{&iterations, &epochs};
  drfn_train_summary s;
  ASSERT_EQ(drfn_train(
                m, a, &tc, [](uint64_t, uint32_t, double, double, void* u) { ++*static_cast<Counts*>(u)->it; },
                [](uint32_t, double, const drfn_model*, void* u) { ++*static_cast<Counts*>(u)->ep; }, &counts, &s),
            DRFN_OK);
  EXPECT_EQ(s.iterations, 4u);
  EXPECT_EQ(s.epochs_completed, 2u);
  EXPECT_EQ(iterations, 4);
  EXPECT_EQ(epochs, 2);

  fs::create_directories(dir.path / "sr");
  ASSERT_EQ(drfn_sr_image_file(m, (dir.path / "hr" / "a.pgm").string().c_str(),
                               (dir.path / "sr" / "a.pgm").string().c_str()),
            DRFN_OK);
  drfn_report* r = nullptr;
  ASSERT_EQ(drfn_evaluate((dir.path / "sr").string().c_str(), (dir.path / "sr").string().c_str(), 2, &r), DRFN_OK);
  EXPECT_EQ(drfn_report_count(r), 1u);
  EXPECT_EQ(drfn_report_failures(r), 0u);
  const char *name = nullptr, *err = nullptr;
  double p = 0, q = 0;
  ASSERT_EQ(drfn_report_entry(r, 0, &name, &p, &q, &err), DRFN_OK);
  EXPECT_STREQ(name, "a.pgm");
  EXPECT_EQ(err, nullptr);
  EXPECT_TRUE(std::isinf(p));
  EXPECT_EQ(drfn_report_entry(r, 1, &name, &p, &q, &err), DRFN_ERR_ARGUMENT);
  EXPECT_NE(std::string(drfn_report_csv(r)).find("a.pgm"), std::string::npos);
  drfn_report_destroy(r);
  drfn_model_destroy(m);
  drfn_archive_destroy(a);
}

TEST(CApi, EmptyDatasetDirectoryFails) {
  Dir dir("empty");
  drfn_dataset_options opts;
  drfn_dataset_options_default(&opts);
  uint64_t pairs = 0;
  EXPECT_EQ(drfn_prepare_dataset(dir.path.string().c_str(), (dir.path / "x.drfp").string().c_str(), &opts, nullptr,
                                 nullptr, &pairs),
            DRFN_ERR_IO);
}

TEST(CApi, SelftestReportsPerturbation) {
  uint32_t failures = 99;
  std::vector<std::string> failed;
  ASSERT_EQ(drfn_selftest(
                "grad/prelu/f64", 2024,
                [](const char* name, int passed, const char*, void* u) {
                  if (!passed) static_cast<std::vector<std::string>*>(u)->push_back(name);
                },
                &failed, &failures),
            DRFN_OK);
  EXPECT_EQ(failures, 1u);
  EXPECT_EQ(failed, std::vector<std::string>{"grad/prelu/f64"});
}

TEST(CApi, ThreadSetting) {
  EXPECT_EQ(drfn_set_threads(1), DRFN_OK);
  EXPECT_EQ(drfn_get_threads(), 1);
  EXPECT_EQ(drfn_set_threads(-1), DRFN_ERR_ARGUMENT);
  EXPECT_EQ(drfn_set_threads(0), DRFN_OK);
}
