#include "cpsets.h"

#include <cstdio>
#include <cstring>
#include <exception>
#include <ios>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpsets/config.hpp"
#include "cpsets/conformal.hpp"
#include "cpsets/data.hpp"
#include "cpsets/harness.hpp"
#include "cpsets/serialize.hpp"

namespace {

thread_local std::string g_last_error;

int fail(int code, const char* what) {
  g_last_error = what;
  return code;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return CPS_OK;
  } catch (const std::invalid_argument& e) {
    return fail(CPS_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::ios_base::failure& e) {
    return fail(CPS_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(CPS_ERR_RUNTIME, e.what());
  }
}

cps::ProbVector prob_vector(const double* probs, int num_classes) {
  cps::ProbVector p;
  p.probs.assign(probs, probs + num_classes);
  return p;
}

void fill_mask(const cps::PredictionSet& set, int num_classes, int* mask_out) {
  std::memset(mask_out, 0, sizeof(int) * num_classes);
  for (int y : set.members) mask_out[y] = 1;
}

}  // namespace

struct cps_dataset {
  cps::SyntheticDataset ds;
};

struct cps_posterior {
  cps::Checkpoint ckpt;
};

struct cps_calibration {
  cps::ConformalCalibration cal;
};

extern "C" {

const char* cps_last_error(void) { return g_last_error.c_str(); }

int cps_dataset_make_blobs(int num_classes, int dim, long n, double class_sep,
                           double within_std, uint64_t seed, cps_dataset** out) {
  return guarded([&] {
    *out = new cps_dataset{cps::make_blobs(num_classes, dim, n, class_sep, within_std, seed)};
  });
}

int cps_dataset_apply_shift(const cps_dataset* ds, const char* kind, int intensity,
                            cps_dataset** out) {
  return guarded([&] {
    *out = new cps_dataset{
        cps::apply_shift(ds->ds, cps::shift_kind_from_string(kind), intensity)};
  });
}

int cps_dataset_split(const cps_dataset* ds, const double fractions[4], uint64_t seed,
                      cps_dataset* out[4]) {
  return guarded([&] {
    cps::SplitSpec spec;
    spec.fractions = {fractions[0], fractions[1], fractions[2], fractions[3]};
    spec.seed = seed;
    auto parts = cps::split(ds->ds, spec);
    out[0] = new cps_dataset{std::move(parts.train)};
    out[1] = new cps_dataset{std::move(parts.val)};
    out[2] = new cps_dataset{std::move(parts.calibration)};
    out[3] = new cps_dataset{std::move(parts.test)};
  });
}

int cps_dataset_save_csv(const cps_dataset* ds, const char* path) {
  return guarded([&] { cps::save_csv(ds->ds, path); });
}

int cps_dataset_load_csv(const char* path, cps_dataset** out) {
  return guarded([&] { *out = new cps_dataset{cps::load_csv(path)}; });
}

long cps_dataset_size(const cps_dataset* ds) { return ds->ds.size(); }
int cps_dataset_dim(const cps_dataset* ds) { return ds->ds.dim(); }
int cps_dataset_num_classes(const cps_dataset* ds) { return ds->ds.provenance.num_classes; }
void cps_dataset_free(cps_dataset* ds) { delete ds; }

int cps_train(const char* config_path, const char* method, const cps_dataset* train,
              const cps_dataset* validation, cps_posterior** out) {
  return guarded([&] {
    const auto ini = cps::IniConfig::parse_file(config_path);
    auto cfg = cps::ExperimentConfig::from_ini(ini);
    cfg.dim = train->ds.dim();
    cfg.num_classes = train->ds.provenance.num_classes;
    const auto m = cps::method_config_from_ini(ini, method);
    *out = new cps_posterior{
        cps::train_method(cfg, m, train->ds.batch, validation->ds.batch)};
  });
}

int cps_posterior_save(const cps_posterior* p, const char* path) {
  return guarded([&] { cps::save_checkpoint(p->ckpt, path); });
}

int cps_posterior_load(const char* path, cps_posterior** out) {
  return guarded([&] { *out = new cps_posterior{cps::load_checkpoint(path)}; });
}

const char* cps_posterior_kind(const cps_posterior* p) {
  return cps::posterior_kind(p->ckpt.posterior);
}

int cps_posterior_predict(const cps_posterior* p, const double* x, int dim, int n_samples,
                          uint64_t seed, double* probs_out, int num_classes) {
  return guarded([&] {
    if (dim != p->ckpt.spec.input_dim())
      throw std::invalid_argument("cps_posterior_predict: input dimension mismatch");
    if (num_classes != p->ckpt.spec.num_classes())
      throw std::invalid_argument("cps_posterior_predict: class count mismatch");
    const auto probs = cps::posterior_predictive(
        p->ckpt.posterior, p->ckpt.spec, {x, static_cast<std::size_t>(dim)}, n_samples, seed);
    std::memcpy(probs_out, probs.data(), sizeof(double) * num_classes);
  });
}

void cps_posterior_free(cps_posterior* p) { delete p; }

int cps_calibrate(const double* probs, const int* labels, long n, int num_classes,
                  double alpha, const char* kind, uint64_t seed, cps_calibration** out) {
  return guarded([&] {
    std::vector<cps::ProbVector> pv;
    pv.reserve(n);
    for (long i = 0; i < n; ++i) pv.push_back(prob_vector(probs + i * num_classes, num_classes));
    std::vector<int> lv(labels, labels + n);
    *out = new cps_calibration{
        cps::calibrate(pv, lv, alpha, cps::score_kind_from_string(kind), seed)};
  });
}

int cps_calibration_save(const cps_calibration* cal, const char* path) {
  return guarded([&] { cps::save_calibration(cal->cal, path); });
}

int cps_calibration_load(const char* path, cps_calibration** out) {
  return guarded([&] { *out = new cps_calibration{cps::load_calibration(path)}; });
}

double cps_calibration_tau(const cps_calibration* cal) { return cal->cal.tau; }

int cps_predict_set(const cps_calibration* cal, const double* probs, int num_classes,
                    uint64_t seed, int* mask_out) {
  return guarded([&] {
    std::mt19937_64 rng(seed);
    const auto set = cps::predict_set(prob_vector(probs, num_classes), cal->cal, rng);
    fill_mask(set, num_classes, mask_out);
  });
}

int cps_credible_set(const double* probs, int num_classes, double alpha, int* mask_out) {
  return guarded([&] {
    const auto set = cps::credible_set(prob_vector(probs, num_classes), alpha);
    fill_mask(set, num_classes, mask_out);
  });
}

void cps_calibration_free(cps_calibration* cal) { delete cal; }

int cps_diagnose(const double* probs, const int* labels, long n, int num_classes, double alpha,
                 long n_cal, double* coverage_out, int* verdict_out) {
  return guarded([&] {
    std::vector<cps::ProbVector> pv;
    pv.reserve(n);
    for (long i = 0; i < n; ++i) pv.push_back(prob_vector(probs + i * num_classes, num_classes));
    std::vector<int> lv(labels, labels + n);
    const auto d = cps::diagnose_confidence(pv, lv, alpha, n_cal);
    *coverage_out = d.credible_coverage_on_cal;
    switch (d.verdict) {
      case cps::ConfidenceDiagnosis::Verdict::Overconfident: *verdict_out = 0; break;
      case cps::ConfidenceDiagnosis::Verdict::WithinBand: *verdict_out = 1; break;
      default: *verdict_out = 2; break;
    }
  });
}

int cps_pipeline_run(const char* config_path, const char* out_dir, const char* stage, int jobs,
                     uint64_t seed_override, const double* alphas, int n_alphas) {
  return guarded([&] {
    auto ini = cps::IniConfig::parse_file(config_path);
    if (seed_override != 0) ini.set("data", "seed", std::to_string(seed_override));
    if (alphas && n_alphas > 0) {
      std::string joined;
      for (int i = 0; i < n_alphas; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%g", alphas[i]);
        if (i) joined += ", ";
        joined += buf;
      }
      ini.set("experiment", "alphas", joined);
    }
    const auto cfg = cps::ExperimentConfig::from_ini(ini);
    const std::string s = stage;
    if (jobs < 1) jobs = 1;
    if (s == "generate-data")
      cps::pipeline::generate_data(cfg, out_dir);
    else if (s == "train")
      cps::pipeline::train(cfg, out_dir, jobs);
    else if (s == "calibrate")
      cps::pipeline::calibrate(cfg, out_dir);
    else if (s == "evaluate")
      cps::pipeline::evaluate(cfg, out_dir);
    else if (s == "diagnose")
      cps::pipeline::diagnose(cfg, out_dir);
    else if (s == "run-all")
      cps::pipeline::run_all(cfg, out_dir, jobs);
    else
      throw std::invalid_argument("unknown pipeline stage: " + s);
  });
}

}  // extern "C"
