#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "cpsets/nn.hpp"

namespace cps {

enum class Schedule { Constant, Cosine, Cyclical };

Schedule schedule_from_string(const std::string& s);
const char* to_string(Schedule s);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 80;
  double step_size = 0.05;
  double momentum_decay = 0.9;
  std::uint64_t seed = 1;
  PriorSpec prior;
  Schedule schedule = Schedule::Constant;
  int cycle_epochs = 75;       // cyclical schedule only
  int checkpoint_epochs = 10;  // validation checkpoint frequency
  void validate() const;
};

struct SghmcConfig {
  TrainConfig base;
  int burnin_epochs = 0;
  int thin_epochs = 10;
  double friction = 0.1;
  bool rmsprop = false;
  double rmsprop_decay = 0.99;
  double rmsprop_eps = 1e-8;
  void validate() const;
};

struct Point {
  std::vector<double> weights;
};

struct Ensemble {
  std::vector<std::vector<double>> members;
};

struct MeanField {
  std::vector<double> means;
  std::vector<double> log_sigmas;
};

struct SampleChain {
  std::vector<std::vector<double>> samples;
};

/// Gaussian over the output-layer weights (class-major, bias appended per class);
/// the rest of the network stays at the MAP solution.
struct LaplaceLastLayer {
  std::vector<double> map_weights;
  std::vector<double> last_layer_mean;
  std::vector<double> last_layer_cov;  // D x D row-major, D = K * (h + 1)
  int feature_dim = 0;                 // h + 1
};

using PosteriorApproximation =
    std::variant<Point, Ensemble, MeanField, SampleChain, LaplaceLastLayer>;

const char* posterior_kind(const PosteriorApproximation& p);

/// Minibatch SGD with momentum on neg_log_joint. When a validation set is given,
/// keeps the checkpoint with best validation accuracy (earliest on ties).
Point train_map(const NetworkSpec& spec, const LabeledBatch& data, const TrainConfig& cfg,
                const LabeledBatch* validation = nullptr);

Ensemble train_ensemble(const NetworkSpec& spec, const LabeledBatch& data,
                        const TrainConfig& cfg, int members,
                        const LabeledBatch* validation = nullptr);

/// KL(q || p) for diagonal Gaussian q against the zero-mean isotropic prior.
double kl_gaussian_diag(std::span<const double> means, std::span<const double> log_sigmas,
                        const PriorSpec& prior);

struct MfviResult {
  MeanField posterior;
  std::vector<double> elbo_trace;  // one entry per optimizer step
};

MfviResult train_mfvi(const NetworkSpec& spec, const LabeledBatch& data, const TrainConfig& cfg,
                      double init_sigma = 0.01, int n_train_samples = 1,
                      const LabeledBatch* validation = nullptr);

SampleChain run_sghmc(const NetworkSpec& spec, const LabeledBatch& data,
                      const SghmcConfig& cfg);

/// Generic multiclass GLM Laplace fit at a given expansion point: logits_k = w_k . phi,
/// weights class-major. H = sum_i Lambda_i kron phi_i phi_i^T + lambda I, cov = H^{-1}.
struct GlmLaplaceFit {
  std::vector<double> mean;  // copy of the expansion-point weights
  std::vector<double> cov;   // D x D row-major
};

GlmLaplaceFit fit_laplace_glm(std::span<const double> features, long n, int feature_dim,
                              int num_classes, std::span<const double> weights,
                              const PriorSpec& prior);

LaplaceLastLayer fit_laplace_last_layer(const NetworkSpec& spec,
                                        std::span<const double> map_weights,
                                        const LabeledBatch& data, const PriorSpec& prior);

/// Bayesian model average for one input. n_samples and seed apply to MeanField only.
std::vector<double> posterior_predictive(const PosteriorApproximation& posterior,
                                         const NetworkSpec& spec, std::span<const double> x,
                                         int n_samples = 30, std::uint64_t seed = 0);

}  // namespace cps
