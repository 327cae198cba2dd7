#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cpsets/config.hpp"
#include "cpsets/conformal.hpp"
#include "cpsets/data.hpp"
#include "cpsets/inference.hpp"
#include "cpsets/serialize.hpp"

namespace cps {

struct MethodConfig {
  std::string name;
  std::string kind;  // map | ensemble | mfvi | sghmc | laplace
  TrainConfig train;
  SghmcConfig sghmc;
  int ensemble_size = 5;
  double init_sigma = 0.01;
  int train_samples = 1;
  int predictive_samples = 30;
  double temperature = 1.0;  // >1 softens the predictive, <1 sharpens
};

/// Reads one method's hyperparameters from its [name] section, with defaults.
MethodConfig method_config_from_ini(const IniConfig& ini, const std::string& name);

struct ExperimentConfig {
  int num_classes = 3;
  int dim = 2;
  long n = 4000;
  double class_sep = 4.0;
  double within_std = 1.0;
  std::uint64_t data_seed = 1;

  SplitSpec split;
  long n_cal = 500;
  std::vector<ShiftKind> shift_kinds{ShiftKind::GaussianNoise};
  ShiftParams shift_params;

  std::vector<MethodConfig> methods;
  std::vector<double> alphas{0.05};
  std::vector<std::string> set_methods{"cred", "thr", "aps"};
  std::vector<std::uint64_t> eval_seeds{1, 2, 3};

  std::string resolved_text;  // canonical config text, hashed for provenance

  static ExperimentConfig from_ini(const IniConfig& ini);
  void validate() const;
};

struct ReportRow {
  std::string method;
  std::string set_method;
  double alpha = 0.0;
  std::string shift_kind;
  int intensity = 0;
  double coverage = 0.0;
  double avg_set_size = 0.0;
  double accuracy = 0.0;
  double empty_set_rate = 0.0;
  long n_test = 0;
  long eval_seed = 0;
};

struct ConfidenceDiagnosis {
  double credible_coverage_on_cal = 0.0;
  enum class Verdict { Overconfident, Underconfident, WithinBand } verdict = Verdict::WithinBand;
};

const char* to_string(ConfidenceDiagnosis::Verdict v);

struct ExperimentReport {
  std::vector<ReportRow> rows;           // one per grid cell per eval seed
  std::vector<ReportRow> averaged;       // across eval seeds (eval_seed = -1)
  std::vector<ReportRow> calibration_rows;  // coverage/size on the calibration split
  std::map<std::string, ConfidenceDiagnosis> diagnoses;  // key "<method>|<alpha>"
  std::string config_hash;
};

double coverage(std::span<const PredictionSet> sets, std::span<const int> labels);
double avg_set_size(std::span<const PredictionSet> sets);
double empty_set_rate(std::span<const PredictionSet> sets);

ConfidenceDiagnosis diagnose_confidence(std::span<const ProbVector> probs_cal,
                                        std::span<const int> labels_cal, double alpha,
                                        long n_cal);

/// p^(1/T) renormalized; T = 1 is the identity.
ProbVector apply_temperature(const ProbVector& p, double temperature);

/// Trains one method on the given train/validation split.
Checkpoint train_method(const ExperimentConfig& cfg, const MethodConfig& method,
                        const LabeledBatch& train, const LabeledBatch& validation);

ExperimentReport run_experiment(const ExperimentConfig& cfg, int jobs = 1);

void write_report(const ExperimentReport& report, const std::string& out_dir);
std::string report_csv(std::span<const ReportRow> rows, bool with_eval_seed);

// Staged pipeline: each stage reads artifacts the previous one wrote under out_dir.
namespace pipeline {

void generate_data(const ExperimentConfig& cfg, const std::string& out_dir);
void train(const ExperimentConfig& cfg, const std::string& out_dir, int jobs);
void calibrate(const ExperimentConfig& cfg, const std::string& out_dir);
ExperimentReport evaluate(const ExperimentConfig& cfg, const std::string& out_dir);
std::map<std::string, ConfidenceDiagnosis> diagnose(const ExperimentConfig& cfg,
                                                    const std::string& out_dir);
ExperimentReport run_all(const ExperimentConfig& cfg, const std::string& out_dir, int jobs);

}  // namespace pipeline

}  // namespace cps
