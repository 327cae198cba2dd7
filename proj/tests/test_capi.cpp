#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cpsets.h"

namespace {

const char* kConfig = R"(
[data]
classes = 3
dim = 2
n = 600
class_sep = 4.0
within_std = 1.0
seed = 9

[split]
train = 0.5
val = 0.1
cal = 0.25
test = 0.15
seed = 2
n_cal = 80

[experiment]
methods = map
alphas = 0.1
shift_kinds = translate
eval_seeds = 1

[map]
kind = map
epochs = 25
batch_size = 100
step_size = 0.05
seed = 3
prior_precision = 0.01
)";

std::string write_config() {
  const auto path = std::filesystem::temp_directory_path() / "cps_capi_config.ini";
  std::ofstream f(path);
  f << kConfig;
  return path.string();
}

}  // namespace

TEST_CASE("dataset lifecycle through the c api") {
  cps_dataset* ds = nullptr;
  REQUIRE(cps_dataset_make_blobs(3, 2, 90, 3.0, 0.5, 11, &ds) == CPS_OK);
  CHECK(cps_dataset_size(ds) == 90);
  CHECK(cps_dataset_dim(ds) == 2);
  CHECK(cps_dataset_num_classes(ds) == 3);

  cps_dataset* shifted = nullptr;
  REQUIRE(cps_dataset_apply_shift(ds, "translate", 2, &shifted) == CPS_OK);
  CHECK(cps_dataset_size(shifted) == 90);

  // invalid arguments surface as status codes plus a readable message
  cps_dataset* bad = nullptr;
  CHECK(cps_dataset_apply_shift(ds, "translate", 9, &bad) == CPS_ERR_INVALID_ARGUMENT);
  CHECK(std::strlen(cps_last_error()) > 0);
  CHECK(cps_dataset_apply_shift(ds, "wobble", 2, &bad) == CPS_ERR_INVALID_ARGUMENT);
  CHECK(cps_dataset_make_blobs(1, 2, 90, 3.0, 0.5, 11, &bad) == CPS_ERR_INVALID_ARGUMENT);

  const double fractions[4] = {0.5, 0.2, 0.2, 0.1};
  cps_dataset* parts[4] = {};
  REQUIRE(cps_dataset_split(ds, fractions, 1, parts) == CPS_OK);
  CHECK(cps_dataset_size(parts[0]) == 45);
  CHECK(cps_dataset_size(parts[3]) == 9);

  const auto csv = (std::filesystem::temp_directory_path() / "cps_capi_ds.csv").string();
  REQUIRE(cps_dataset_save_csv(ds, csv.c_str()) == CPS_OK);
  cps_dataset* loaded = nullptr;
  REQUIRE(cps_dataset_load_csv(csv.c_str(), &loaded) == CPS_OK);
  CHECK(cps_dataset_size(loaded) == 90);
  CHECK(cps_dataset_load_csv("/nonexistent/nope.csv", &bad) != CPS_OK);

  cps_dataset_free(loaded);
  for (auto* p : parts) cps_dataset_free(p);
  cps_dataset_free(shifted);
  cps_dataset_free(ds);
  std::filesystem::remove(csv);
  std::filesystem::remove(csv + ".meta.json");
}

TEST_CASE("train, predict, calibrate, and predict sets through the c api") {
  const auto config = write_config();

  cps_dataset* full = nullptr;
  REQUIRE(cps_dataset_make_blobs(3, 2, 600, 4.0, 1.0, 9, &full) == CPS_OK);
  const double fractions[4] = {0.5, 0.1, 0.25, 0.15};
  cps_dataset* parts[4] = {};
  REQUIRE(cps_dataset_split(full, fractions, 2, parts) == CPS_OK);

  cps_posterior* post = nullptr;
  REQUIRE(cps_train(config.c_str(), "map", parts[0], parts[1], &post) == CPS_OK);
  CHECK(std::string(cps_posterior_kind(post)) == "point");

  const double x[2] = {0.0, 0.0};
  double probs[3] = {};
  REQUIRE(cps_posterior_predict(post, x, 2, 30, 1, probs, 3) == CPS_OK);
  CHECK(probs[0] + probs[1] + probs[2] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(cps_posterior_predict(post, x, 5, 30, 1, probs, 3) == CPS_ERR_INVALID_ARGUMENT);

  const auto ckpt = (std::filesystem::temp_directory_path() / "cps_capi.ckpt").string();
  REQUIRE(cps_posterior_save(post, ckpt.c_str()) == CPS_OK);
  cps_posterior* back = nullptr;
  REQUIRE(cps_posterior_load(ckpt.c_str(), &back) == CPS_OK);
  double probs2[3] = {};
  REQUIRE(cps_posterior_predict(back, x, 2, 30, 1, probs2, 3) == CPS_OK);
  CHECK(probs2[0] == probs[0]);
  CHECK(probs2[1] == probs[1]);
  CHECK(probs2[2] == probs[2]);

  // calibrate on hand-built probabilities: p[y] = 0.9 everywhere, so the thr
  // quantile is 0.1 and sets are the argmax labels
  const long n = 19;
  std::vector<double> cal_probs(n * 3, 0.05);
  std::vector<int> cal_labels(n, 1);
  for (long i = 0; i < n; ++i) cal_probs[i * 3 + 1] = 0.9;
  cps_calibration* cal = nullptr;
  REQUIRE(cps_calibrate(cal_probs.data(), cal_labels.data(), n, 3, 0.1, "thr", 5, &cal) ==
          CPS_OK);
  CHECK(cps_calibration_tau(cal) == doctest::Approx(0.1).epsilon(1e-12));

  int mask[3] = {};
  const double q[3] = {0.05, 0.9, 0.05};
  REQUIRE(cps_predict_set(cal, q, 3, 1, mask) == CPS_OK);
  CHECK(mask[0] == 0);
  CHECK(mask[1] == 1);
  CHECK(mask[2] == 0);

  REQUIRE(cps_credible_set(q, 3, 0.2, mask) == CPS_OK);
  CHECK(mask[1] == 1);
  const double not_probs[3] = {0.9, 0.9, 0.9};
  CHECK(cps_credible_set(not_probs, 3, 0.2, mask) == CPS_ERR_INVALID_ARGUMENT);

  const auto cal_path = (std::filesystem::temp_directory_path() / "cps_capi_cal.json").string();
  REQUIRE(cps_calibration_save(cal, cal_path.c_str()) == CPS_OK);
  cps_calibration* cal2 = nullptr;
  REQUIRE(cps_calibration_load(cal_path.c_str(), &cal2) == CPS_OK);
  CHECK(cps_calibration_tau(cal2) == cps_calibration_tau(cal));

  double cov = 0.0;
  int verdict = -1;
  REQUIRE(cps_diagnose(cal_probs.data(), cal_labels.data(), n, 3, 0.1, 80, &cov, &verdict) ==
          CPS_OK);
  CHECK(cov == doctest::Approx(1.0));
  CHECK(verdict == 2);  // always covered: underconfident

  cps_calibration_free(cal2);
  cps_calibration_free(cal);
  cps_posterior_free(back);
  cps_posterior_free(post);
  for (auto* p : parts) cps_dataset_free(p);
  cps_dataset_free(full);
  std::filesystem::remove(ckpt);
  std::filesystem::remove(cal_path);
  std::filesystem::remove(config);
}

TEST_CASE("pipeline run through the c api") {
  const auto config = write_config();
  const auto dir = (std::filesystem::temp_directory_path() / "cps_capi_pipe").string();
  std::filesystem::remove_all(dir);

  REQUIRE(cps_pipeline_run(config.c_str(), dir.c_str(), "run-all", 2, 0, nullptr, 0) == CPS_OK);
  CHECK(std::filesystem::exists(std::filesystem::path(dir) / "report.csv"));
  CHECK(std::filesystem::exists(std::filesystem::path(dir) / "summary.json"));

  CHECK(cps_pipeline_run(config.c_str(), dir.c_str(), "fly", 1, 0, nullptr, 0) ==
        CPS_ERR_INVALID_ARGUMENT);
  CHECK(cps_pipeline_run("/nonexistent.ini", dir.c_str(), "run-all", 1, 0, nullptr, 0) != CPS_OK);

  // alpha override reaches the calibration artifacts
  const double alphas[1] = {0.2};
  REQUIRE(cps_pipeline_run(config.c_str(), dir.c_str(), "calibrate", 1, 0, alphas, 1) == CPS_OK);
  CHECK(std::filesystem::exists(std::filesystem::path(dir) / "calibration" /
                                "map_a0.2_thr_s1.json"));

  std::filesystem::remove_all(dir);
  std::filesystem::remove(config);
}
