#include "cpsets/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace fs = std::filesystem;

namespace cps {

const char* to_string(ConfidenceDiagnosis::Verdict v) {
  switch (v) {
    case ConfidenceDiagnosis::Verdict::Overconfident: return "overconfident";
    case ConfidenceDiagnosis::Verdict::Underconfident: return "underconfident";
    default: return "within_band";
  }
}

// ---------------------------------------------------------------------------
// config

namespace {

TrainConfig train_config_from(const IniConfig& ini, const std::string& sec) {
  TrainConfig t;
  t.epochs = static_cast<int>(ini.get_long(sec, "epochs", 100));
  t.batch_size = static_cast<int>(ini.get_long(sec, "batch_size", 80));
  t.step_size = ini.get_double(sec, "step_size", 0.05);
  t.momentum_decay = ini.get_double(sec, "momentum_decay", 0.9);
  t.seed = static_cast<std::uint64_t>(ini.get_long(sec, "seed", 1));
  t.prior.precision = ini.get_double(sec, "prior_precision", 1.0);
  t.schedule = schedule_from_string(ini.get_str(sec, "schedule", "cosine"));
  t.cycle_epochs = static_cast<int>(ini.get_long(sec, "cycle_epochs", 75));
  t.checkpoint_epochs = static_cast<int>(ini.get_long(sec, "checkpoint_epochs", 10));
  return t;
}

}  // namespace

MethodConfig method_config_from_ini(const IniConfig& ini, const std::string& name) {
  MethodConfig m;
  m.name = name;
  m.kind = ini.get_str(name, "kind", name);
  m.train = train_config_from(ini, name);
  m.sghmc.base = m.train;
  m.sghmc.burnin_epochs = static_cast<int>(ini.get_long(name, "burnin_epochs", 0));
  m.sghmc.thin_epochs = static_cast<int>(ini.get_long(name, "thin_epochs", 10));
  m.sghmc.friction = ini.get_double(name, "friction", 0.1);
  m.sghmc.rmsprop = ini.get_str(name, "preconditioner", "none") == "rmsprop";
  m.sghmc.rmsprop_decay = ini.get_double(name, "rmsprop_decay", 0.99);
  m.sghmc.rmsprop_eps = ini.get_double(name, "rmsprop_eps", 1e-8);
  m.ensemble_size = static_cast<int>(ini.get_long(name, "ensemble_size", 5));
  m.init_sigma = ini.get_double(name, "init_sigma", 0.01);
  m.train_samples = static_cast<int>(ini.get_long(name, "train_samples", 1));
  m.predictive_samples = static_cast<int>(ini.get_long(name, "predictive_samples", 30));
  m.temperature = ini.get_double(name, "temperature", 1.0);
  return m;
}

ExperimentConfig ExperimentConfig::from_ini(const IniConfig& ini) {
  ExperimentConfig cfg;
  cfg.num_classes = static_cast<int>(ini.get_long("data", "classes", 3));
  cfg.dim = static_cast<int>(ini.get_long("data", "dim", 2));
  cfg.n = ini.get_long("data", "n", 4000);
  cfg.class_sep = ini.get_double("data", "class_sep", 4.0);
  cfg.within_std = ini.get_double("data", "within_std", 1.0);
  cfg.data_seed = static_cast<std::uint64_t>(ini.get_long("data", "seed", 1));

  cfg.split.fractions = {ini.get_double("split", "train", 0.5),
                         ini.get_double("split", "val", 0.1),
                         ini.get_double("split", "cal", 0.25),
                         ini.get_double("split", "test", 0.15)};
  cfg.split.seed = static_cast<std::uint64_t>(ini.get_long("split", "seed", 2));
  cfg.n_cal = ini.get_long("split", "n_cal", 500);

  cfg.shift_params = ShiftParams::defaults_for(cfg.within_std);
  cfg.shift_params.translate_delta =
      ini.get_double("data", "translate_delta", cfg.shift_params.translate_delta);
  cfg.shift_params.rotate_degrees =
      ini.get_double("data", "rotate_degrees", cfg.shift_params.rotate_degrees);
  cfg.shift_params.noise_std = ini.get_double("data", "noise_std", cfg.shift_params.noise_std);
  cfg.shift_params.scale_step = ini.get_double("data", "scale_step", cfg.shift_params.scale_step);

  if (ini.has("experiment", "shift_kinds")) {
    cfg.shift_kinds.clear();
    for (const auto& k : ini.get_list("experiment", "shift_kinds"))
      cfg.shift_kinds.push_back(shift_kind_from_string(k));
  }
  if (ini.has("experiment", "alphas")) cfg.alphas = ini.get_double_list("experiment", "alphas");
  if (ini.has("experiment", "set_methods"))
    cfg.set_methods = ini.get_list("experiment", "set_methods");
  if (ini.has("experiment", "eval_seeds")) {
    cfg.eval_seeds.clear();
    for (double s : ini.get_double_list("experiment", "eval_seeds"))
      cfg.eval_seeds.push_back(static_cast<std::uint64_t>(s));
  }

  std::vector<std::string> method_names = ini.has("experiment", "methods")
                                              ? ini.get_list("experiment", "methods")
                                              : std::vector<std::string>{"map"};
  for (const auto& name : method_names)
    cfg.methods.push_back(method_config_from_ini(ini, name));

  cfg.resolved_text = ini.dump();
  cfg.validate();
  return cfg;
}

void ExperimentConfig::validate() const {
  if (methods.empty()) throw std::invalid_argument("config: at least one method required");
  if (alphas.empty()) throw std::invalid_argument("config: at least one alpha required");
  if (set_methods.empty()) throw std::invalid_argument("config: at least one set method required");
  if (eval_seeds.empty()) throw std::invalid_argument("config: at least one eval seed required");
  for (double a : alphas)
    if (!(a > 0.0 && a < 1.0)) throw std::invalid_argument("config: alpha must be in (0,1)");
  for (const auto& s : set_methods)
    if (s != "cred" && s != "thr" && s != "aps")
      throw std::invalid_argument("config: unknown set method " + s);
  for (const auto& m : methods)
    if (m.kind != "map" && m.kind != "ensemble" && m.kind != "mfvi" && m.kind != "sghmc" &&
        m.kind != "laplace")
      throw std::invalid_argument("config: unknown method kind " + m.kind);
  if (n_cal < 1) throw std::invalid_argument("config: n_cal must be >= 1");
  split.validate();
}

// ---------------------------------------------------------------------------
// metrics

double coverage(std::span<const PredictionSet> sets, std::span<const int> labels) {
  if (sets.size() != labels.size()) throw std::invalid_argument("coverage: length mismatch");
  if (sets.empty()) throw std::invalid_argument("coverage: empty input");
  long hits = 0;
  for (std::size_t i = 0; i < sets.size(); ++i)
    if (sets[i].contains(labels[i])) ++hits;
  return double(hits) / double(sets.size());
}

double avg_set_size(std::span<const PredictionSet> sets) {
  if (sets.empty()) throw std::invalid_argument("avg_set_size: empty input");
  double total = 0.0;
  for (const auto& s : sets) total += double(s.size());
  return total / double(sets.size());
}

double empty_set_rate(std::span<const PredictionSet> sets) {
  if (sets.empty()) throw std::invalid_argument("empty_set_rate: empty input");
  long empties = 0;
  for (const auto& s : sets)
    if (s.empty()) ++empties;
  return double(empties) / double(sets.size());
}

ConfidenceDiagnosis diagnose_confidence(std::span<const ProbVector> probs_cal,
                                        std::span<const int> labels_cal, double alpha,
                                        long n_cal) {
  if (probs_cal.empty() || probs_cal.size() != labels_cal.size())
    throw std::invalid_argument("diagnose_confidence: bad input lengths");
  std::vector<PredictionSet> sets;
  sets.reserve(probs_cal.size());
  for (const auto& p : probs_cal) sets.push_back(credible_set(p, alpha));
  ConfidenceDiagnosis d;
  d.credible_coverage_on_cal = coverage(sets, labels_cal);
  const double lo = 1.0 - alpha;
  const double hi = 1.0 - alpha + 1.0 / (double(n_cal) + 1.0);
  if (d.credible_coverage_on_cal < lo)
    d.verdict = ConfidenceDiagnosis::Verdict::Overconfident;
  else if (d.credible_coverage_on_cal > hi)
    d.verdict = ConfidenceDiagnosis::Verdict::Underconfident;
  else
    d.verdict = ConfidenceDiagnosis::Verdict::WithinBand;
  return d;
}

ProbVector apply_temperature(const ProbVector& p, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
  if (temperature == 1.0) return p;
  ProbVector out;
  out.probs.resize(p.probs.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < p.probs.size(); ++k) {
    out.probs[k] = std::pow(std::max(p.probs[k], 1e-300), 1.0 / temperature);
    sum += out.probs[k];
  }
  for (double& v : out.probs) v /= sum;
  return out;
}

// ---------------------------------------------------------------------------
// training and prediction

namespace {

NetworkSpec network_spec_for(const ExperimentConfig& cfg) {
  NetworkSpec spec;
  spec.layer_widths = {cfg.dim, 32, 32, cfg.num_classes};
  spec.activation = Activation::Tanh;
  return spec;
}

struct Variant {
  ShiftKind kind = ShiftKind::None;
  int intensity = 0;
  std::string label() const { return std::string(to_string(kind)) + std::to_string(intensity); }
};

std::vector<Variant> variants_of(const ExperimentConfig& cfg) {
  std::vector<Variant> out{{ShiftKind::None, 0}};
  for (ShiftKind k : cfg.shift_kinds)
    for (int i = 1; i <= 5; ++i) out.push_back({k, i});
  return out;
}

struct PreparedData {
  SplitResult splits;
  std::vector<Variant> variants;
  std::vector<SyntheticDataset> variant_test;  // aligned with variants
};

PreparedData prepare_data(const ExperimentConfig& cfg) {
  auto full = make_blobs(cfg.num_classes, cfg.dim, cfg.n, cfg.class_sep, cfg.within_std,
                         cfg.data_seed);
  PreparedData out;
  out.splits = split(full, cfg.split);
  out.variants = variants_of(cfg);
  for (const auto& v : out.variants)
    out.variant_test.push_back(v.kind == ShiftKind::None
                                   ? out.splits.test
                                   : apply_shift(out.splits.test, v.kind, v.intensity,
                                                 cfg.shift_params));
  return out;
}

std::vector<ProbVector> predictive_probs(const Checkpoint& ckpt, const MethodConfig& method,
                                         const LabeledBatch& batch, const std::string& tag) {
  const std::uint64_t base_seed = fnv1a64(method.name + "|" + tag);
  std::vector<ProbVector> out;
  out.reserve(batch.size());
  for (long i = 0; i < batch.size(); ++i) {
    ProbVector p;
    p.probs = posterior_predictive(ckpt.posterior, ckpt.spec, batch.row(i),
                                   method.predictive_samples,
                                   base_seed + 0x9e3779b97f4a7c15ULL * std::uint64_t(i));
    out.push_back(apply_temperature(p, method.temperature));
  }
  return out;
}

double argmax_accuracy(std::span<const ProbVector> probs, std::span<const int> labels) {
  long hits = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const auto& p = probs[i].probs;
    if (int(std::max_element(p.begin(), p.end()) - p.begin()) == labels[i]) ++hits;
  }
  return double(hits) / double(probs.size());
}

std::vector<long> calibration_subsample(long pool_size, long n_cal, std::uint64_t eval_seed) {
  if (n_cal > pool_size)
    throw std::invalid_argument("n_cal exceeds the calibration pool size");
  std::vector<long> idx(pool_size);
  std::iota(idx.begin(), idx.end(), 0L);
  std::mt19937_64 rng(eval_seed * 1000003ULL + 0x8f1bbcdcULL);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(n_cal);
  return idx;
}

std::string format_alpha(double a) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", a);
  return buf;
}

using CalProvider = std::function<ConformalCalibration(
    const MethodConfig&, double alpha, ScoreKind kind, std::uint64_t eval_seed,
    std::span<const ProbVector> cal_probs, std::span<const int> cal_labels)>;

ConformalCalibration compute_calibration(const MethodConfig&, double alpha, ScoreKind kind,
                                         std::uint64_t eval_seed,
                                         std::span<const ProbVector> cal_probs,
                                         std::span<const int> cal_labels) {
  return calibrate(cal_probs, cal_labels, alpha, kind, eval_seed);
}

ExperimentReport evaluate_core(const ExperimentConfig& cfg, const PreparedData& data,
                               std::span<const Checkpoint> ckpts, const CalProvider& provider,
                               int jobs) {
  ExperimentReport report;
  report.config_hash = [&] {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(cfg.resolved_text)));
    return std::string(buf);
  }();

  const std::size_t n_methods = cfg.methods.size();
  const auto& variants = data.variants;

  // per-method predictive probabilities on the calibration pool and every test variant
  std::vector<std::vector<ProbVector>> cal_pool_probs(n_methods);
  std::vector<std::vector<std::vector<ProbVector>>> test_probs(n_methods);
  auto compute_method_probs = [&](std::size_t mi) {
    const auto& m = cfg.methods[mi];
    cal_pool_probs[mi] =
        predictive_probs(ckpts[mi], m, data.splits.calibration.batch, "calibration");
    test_probs[mi].resize(variants.size());
    for (std::size_t v = 0; v < variants.size(); ++v)
      test_probs[mi][v] =
          predictive_probs(ckpts[mi], m, data.variant_test[v].batch, variants[v].label());
  };
  if (jobs > 1) {
    std::vector<std::future<void>> futs;
    for (std::size_t mi = 0; mi < n_methods; ++mi)
      futs.push_back(std::async(std::launch::async, compute_method_probs, mi));
    for (auto& f : futs) f.get();
  } else {
    for (std::size_t mi = 0; mi < n_methods; ++mi) compute_method_probs(mi);
  }

  std::vector<ReportRow> calibration_rows;  // reported via summary.json

  for (std::size_t mi = 0; mi < n_methods; ++mi) {
    const auto& m = cfg.methods[mi];
    const auto& cal_pool = data.splits.calibration.batch;

    for (double alpha : cfg.alphas)
      report.diagnoses[m.name + "|" + format_alpha(alpha)] =
          diagnose_confidence(cal_pool_probs[mi], cal_pool.labels, alpha, cfg.n_cal);

    for (double alpha : cfg.alphas) {
      for (const auto& set_method : cfg.set_methods) {
        for (std::size_t v = 0; v < variants.size(); ++v) {
          const auto& labels = data.variant_test[v].batch.labels;
          const double acc = argmax_accuracy(test_probs[mi][v], labels);
          for (std::uint64_t eval_seed : cfg.eval_seeds) {
            const auto sub = calibration_subsample(cal_pool.size(), cfg.n_cal, eval_seed);
            std::vector<ProbVector> cal_probs;
            std::vector<int> cal_labels;
            cal_probs.reserve(sub.size());
            for (long i : sub) {
              cal_probs.push_back(cal_pool_probs[mi][i]);
              cal_labels.push_back(cal_pool.labels[i]);
            }

            std::vector<PredictionSet> sets, cal_sets;
            sets.reserve(labels.size());
            if (set_method == "cred") {
              for (const auto& p : test_probs[mi][v]) sets.push_back(credible_set(p, alpha));
              if (v == 0)
                for (const auto& p : cal_probs) cal_sets.push_back(credible_set(p, alpha));
            } else {
              const ScoreKind kind = score_kind_from_string(set_method);
              const auto cal = provider(m, alpha, kind, eval_seed, cal_probs, cal_labels);
              const std::string cell = m.name + "|" + format_alpha(alpha) + "|" + set_method +
                                       "|" + variants[v].label() + "|" +
                                       std::to_string(eval_seed);
              std::mt19937_64 rng(fnv1a64(cell));
              for (const auto& p : test_probs[mi][v]) sets.push_back(predict_set(p, cal, rng));
              if (v == 0) {
                std::mt19937_64 cal_rng(fnv1a64(cell + "|calset"));
                for (const auto& p : cal_probs)
                  cal_sets.push_back(predict_set(p, cal, cal_rng));
              }
            }

            ReportRow row;
            row.method = m.name;
            row.set_method = set_method;
            row.alpha = alpha;
            row.shift_kind = to_string(variants[v].kind);
            row.intensity = variants[v].intensity;
            row.coverage = coverage(sets, labels);
            row.avg_set_size = avg_set_size(sets);
            row.accuracy = acc;
            row.empty_set_rate = empty_set_rate(sets);
            row.n_test = static_cast<long>(labels.size());
            row.eval_seed = static_cast<long>(eval_seed);
            report.rows.push_back(row);

            if (v == 0) {
              ReportRow crow = row;
              crow.shift_kind = "calibration";
              crow.intensity = 0;
              crow.coverage = coverage(cal_sets, cal_labels);
              crow.avg_set_size = avg_set_size(cal_sets);
              crow.accuracy = argmax_accuracy(cal_probs, cal_labels);
              crow.empty_set_rate = empty_set_rate(cal_sets);
              crow.n_test = static_cast<long>(cal_labels.size());
              calibration_rows.push_back(crow);
            }
          }
          // averaged across eval seeds
          const std::size_t ns = cfg.eval_seeds.size();
          ReportRow avg = report.rows[report.rows.size() - ns];
          avg.eval_seed = -1;
          avg.coverage = avg.avg_set_size = avg.accuracy = avg.empty_set_rate = 0.0;
          for (std::size_t s = 0; s < ns; ++s) {
            const auto& r = report.rows[report.rows.size() - ns + s];
            avg.coverage += r.coverage;
            avg.avg_set_size += r.avg_set_size;
            avg.accuracy += r.accuracy;
            avg.empty_set_rate += r.empty_set_rate;
          }
          avg.coverage /= double(ns);
          avg.avg_set_size /= double(ns);
          avg.accuracy /= double(ns);
          avg.empty_set_rate /= double(ns);
          report.averaged.push_back(avg);
        }
      }
    }
  }

  report.calibration_rows = std::move(calibration_rows);
  return report;
}

}  // namespace

Checkpoint train_method(const ExperimentConfig& cfg, const MethodConfig& method,
                        const LabeledBatch& train, const LabeledBatch& validation) {
  const NetworkSpec spec = network_spec_for(cfg);
  Checkpoint ckpt;
  ckpt.spec = spec;
  ckpt.seed = method.train.seed;
  if (method.kind == "map") {
    ckpt.posterior = train_map(spec, train, method.train, &validation);
  } else if (method.kind == "ensemble") {
    ckpt.posterior = train_ensemble(spec, train, method.train, method.ensemble_size, &validation);
  } else if (method.kind == "mfvi") {
    ckpt.posterior = train_mfvi(spec, train, method.train, method.init_sigma,
                                method.train_samples, &validation)
                         .posterior;
  } else if (method.kind == "sghmc") {
    ckpt.posterior = run_sghmc(spec, train, method.sghmc);
  } else if (method.kind == "laplace") {
    const auto map = train_map(spec, train, method.train, &validation);
    ckpt.posterior = fit_laplace_last_layer(spec, map.weights, train, method.train.prior);
  } else {
    throw std::invalid_argument("train_method: unknown kind " + method.kind);
  }
  return ckpt;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, int jobs) {
  cfg.validate();
  const auto data = prepare_data(cfg);
  std::vector<Checkpoint> ckpts(cfg.methods.size());
  auto train_one = [&](std::size_t mi) {
    try {
      ckpts[mi] = train_method(cfg, cfg.methods[mi], data.splits.train.batch,
                               data.splits.val.batch);
    } catch (const std::exception& e) {
      throw std::runtime_error("method '" + cfg.methods[mi].name + "': " + e.what());
    }
  };
  if (jobs > 1) {
    std::vector<std::future<void>> futs;
    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi)
      futs.push_back(std::async(std::launch::async, train_one, mi));
    for (auto& f : futs) f.get();
  } else {
    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) train_one(mi);
  }
  return evaluate_core(cfg, data, ckpts, compute_calibration, jobs);
}

// ---------------------------------------------------------------------------
// report output

std::string report_csv(std::span<const ReportRow> rows, bool with_eval_seed) {
  std::ostringstream out;
  out << "method,set_method,alpha,shift_kind,intensity,coverage,avg_set_size,accuracy,"
         "empty_set_rate,n_test";
  if (with_eval_seed) out << ",eval_seed";
  out << "\n";
  char buf[40];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
  };
  for (const auto& r : rows) {
    out << r.method << "," << r.set_method << ",";
    num(r.alpha);
    out << "," << r.shift_kind << "," << r.intensity << ",";
    num(r.coverage);
    out << ",";
    num(r.avg_set_size);
    out << ",";
    num(r.accuracy);
    out << ",";
    num(r.empty_set_rate);
    out << "," << r.n_test;
    if (with_eval_seed) out << "," << r.eval_seed;
    out << "\n";
  }
  return out.str();
}

namespace {

nlohmann::json diagnosis_json(const std::map<std::string, ConfidenceDiagnosis>& diagnoses) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& [key, d] : diagnoses) {
    const auto bar = key.find('|');
    arr.push_back({{"method", key.substr(0, bar)},
                   {"alpha", std::stod(key.substr(bar + 1))},
                   {"credible_coverage_on_cal", d.credible_coverage_on_cal},
                   {"verdict", to_string(d.verdict)}});
  }
  return arr;
}

nlohmann::json rows_json(std::span<const ReportRow> rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows)
    arr.push_back({{"method", r.method},
                   {"set_method", r.set_method},
                   {"alpha", r.alpha},
                   {"eval_seed", r.eval_seed},
                   {"coverage", r.coverage},
                   {"avg_set_size", r.avg_set_size},
                   {"empty_set_rate", r.empty_set_rate},
                   {"n", r.n_test}});
  return arr;
}

}  // namespace

void write_report(const ExperimentReport& report, const std::string& out_dir) {
  fs::create_directories(out_dir);
  {
    std::ofstream f(fs::path(out_dir) / "report.csv");
    if (!f) throw std::runtime_error("write_report: cannot write report.csv");
    f << report_csv(report.rows, true);
  }
  {
    std::ofstream f(fs::path(out_dir) / "report_avg.csv");
    f << report_csv(report.averaged, false);
  }
  nlohmann::json summary = {
      {"config_hash", report.config_hash},
      {"diagnoses", diagnosis_json(report.diagnoses)},
      {"calibration_set", rows_json(report.calibration_rows)},
  };
  std::ofstream f(fs::path(out_dir) / "summary.json");
  if (!f) throw std::runtime_error("write_report: cannot write summary.json");
  f << summary.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// staged pipeline

namespace pipeline {

namespace {

fs::path data_dir(const std::string& out) { return fs::path(out) / "data"; }
fs::path ckpt_dir(const std::string& out) { return fs::path(out) / "checkpoints"; }
fs::path cal_dir(const std::string& out) { return fs::path(out) / "calibration"; }

std::string cal_file_name(const std::string& method, double alpha, ScoreKind kind,
                          std::uint64_t eval_seed) {
  return method + "_a" + format_alpha(alpha) + "_" + to_string(kind) + "_s" +
         std::to_string(eval_seed) + ".json";
}

SyntheticDataset load_part(const std::string& out, const std::string& name) {
  return load_csv((data_dir(out) / (name + ".csv")).string());
}

std::vector<Checkpoint> load_checkpoints(const ExperimentConfig& cfg, const std::string& out) {
  std::vector<Checkpoint> ckpts;
  for (const auto& m : cfg.methods)
    ckpts.push_back(load_checkpoint((ckpt_dir(out) / (m.name + ".ckpt")).string()));
  return ckpts;
}

void write_resolved_config(const ExperimentConfig& cfg, const std::string& out) {
  fs::create_directories(out);
  std::ofstream f(fs::path(out) / "resolved_config.ini");
  f << cfg.resolved_text;
}

}  // namespace

void generate_data(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  write_resolved_config(cfg, out_dir);
  fs::create_directories(data_dir(out_dir));
  const auto data = prepare_data(cfg);
  save_csv(data.splits.train, (data_dir(out_dir) / "train.csv").string());
  save_csv(data.splits.val, (data_dir(out_dir) / "val.csv").string());
  save_csv(data.splits.calibration, (data_dir(out_dir) / "calibration.csv").string());
  save_csv(data.splits.test, (data_dir(out_dir) / "test.csv").string());
  for (std::size_t v = 1; v < data.variants.size(); ++v)
    save_csv(data.variant_test[v],
             (data_dir(out_dir) / ("test_" + data.variants[v].label() + ".csv")).string());
}

void train(const ExperimentConfig& cfg, const std::string& out_dir, int jobs) {
  cfg.validate();
  const auto train_ds = load_part(out_dir, "train");
  const auto val_ds = load_part(out_dir, "val");
  fs::create_directories(ckpt_dir(out_dir));
  auto train_one = [&](std::size_t mi) {
    const auto& m = cfg.methods[mi];
    const auto ckpt = train_method(cfg, m, train_ds.batch, val_ds.batch);
    save_checkpoint(ckpt, (ckpt_dir(out_dir) / (m.name + ".ckpt")).string());
  };
  if (jobs > 1) {
    std::vector<std::future<void>> futs;
    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi)
      futs.push_back(std::async(std::launch::async, train_one, mi));
    for (auto& f : futs) f.get();
  } else {
    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) train_one(mi);
  }
}

void calibrate(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  const auto cal_ds = load_part(out_dir, "calibration");
  const auto ckpts = load_checkpoints(cfg, out_dir);
  fs::create_directories(cal_dir(out_dir));
  for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
    const auto& m = cfg.methods[mi];
    const auto pool_probs = predictive_probs(ckpts[mi], m, cal_ds.batch, "calibration");
    for (std::uint64_t eval_seed : cfg.eval_seeds) {
      const auto sub = calibration_subsample(cal_ds.size(), cfg.n_cal, eval_seed);
      std::vector<ProbVector> probs;
      std::vector<int> labels;
      for (long i : sub) {
        probs.push_back(pool_probs[i]);
        labels.push_back(cal_ds.batch.labels[i]);
      }
      for (double alpha : cfg.alphas)
        for (ScoreKind kind : {ScoreKind::Thr, ScoreKind::Aps}) {
          const auto cal = cps::calibrate(probs, labels, alpha, kind, eval_seed);
          save_calibration(cal,
                           (cal_dir(out_dir) / cal_file_name(m.name, alpha, kind, eval_seed))
                               .string());
        }
    }
  }
}

ExperimentReport evaluate(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  PreparedData data;
  data.splits.train = load_part(out_dir, "train");
  data.splits.val = load_part(out_dir, "val");
  data.splits.calibration = load_part(out_dir, "calibration");
  data.splits.test = load_part(out_dir, "test");
  data.variants = variants_of(cfg);
  data.variant_test.push_back(data.splits.test);
  for (std::size_t v = 1; v < data.variants.size(); ++v)
    data.variant_test.push_back(
        load_part(out_dir, "test_" + data.variants[v].label()));

  const auto ckpts = load_checkpoints(cfg, out_dir);
  const auto provider = [&](const MethodConfig& m, double alpha, ScoreKind kind,
                            std::uint64_t eval_seed, std::span<const ProbVector>,
                            std::span<const int>) {
    return load_calibration(
        (cal_dir(out_dir) / cal_file_name(m.name, alpha, kind, eval_seed)).string());
  };
  auto report = evaluate_core(cfg, data, ckpts, provider, 1);
  write_report(report, out_dir);
  write_resolved_config(cfg, out_dir);
  return report;
}

std::map<std::string, ConfidenceDiagnosis> diagnose(const ExperimentConfig& cfg,
                                                    const std::string& out_dir) {
  cfg.validate();
  const auto cal_ds = load_part(out_dir, "calibration");
  const auto ckpts = load_checkpoints(cfg, out_dir);
  std::map<std::string, ConfidenceDiagnosis> out;
  for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
    const auto& m = cfg.methods[mi];
    const auto probs = predictive_probs(ckpts[mi], m, cal_ds.batch, "calibration");
    for (double alpha : cfg.alphas)
      out[m.name + "|" + format_alpha(alpha)] =
          diagnose_confidence(probs, cal_ds.batch.labels, alpha, cfg.n_cal);
  }
  nlohmann::json j = diagnosis_json(out);
  fs::create_directories(out_dir);
  std::ofstream f(fs::path(out_dir) / "diagnosis.json");
  f << j.dump(2) << "\n";
  return out;
}

ExperimentReport run_all(const ExperimentConfig& cfg, const std::string& out_dir, int jobs) {
  generate_data(cfg, out_dir);
  train(cfg, out_dir, jobs);
  calibrate(cfg, out_dir);
  return evaluate(cfg, out_dir);
}

}  // namespace pipeline

}  // namespace cps
