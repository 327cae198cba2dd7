#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cps {

enum class Activation { Relu, Tanh };

Activation activation_from_string(const std::string& s);
const char* to_string(Activation a);

/// Architecture of a fully-connected classifier: input dim, hidden widths, K.
struct NetworkSpec {
  std::vector<int> layer_widths;
  Activation activation = Activation::Tanh;

  int input_dim() const { return layer_widths.front(); }
  int num_classes() const { return layer_widths.back(); }
  int num_layers() const { return static_cast<int>(layer_widths.size()) - 1; }
  std::size_t param_count() const;
  void validate() const;  // throws std::invalid_argument
};

/// Zero-mean isotropic Gaussian prior over all weights, precision lambda.
struct PriorSpec {
  double precision = 1.0;
  void validate() const;
};

/// n labeled examples, inputs stored row-major.
struct LabeledBatch {
  std::vector<double> inputs;
  std::vector<int> labels;
  int dim = 0;

  long size() const { return static_cast<long>(labels.size()); }
  std::span<const double> row(long i) const {
    return {inputs.data() + i * dim, static_cast<std::size_t>(dim)};
  }
  void validate(int num_classes) const;
};

struct InitRule {
  enum class Kind { FanIn, Fixed };
  Kind kind = Kind::FanIn;
  double scale = 0.0;

  static InitRule fan_in() { return {Kind::FanIn, 0.0}; }
  static InitRule fixed(double s) { return {Kind::Fixed, s}; }
};

/// Weights drawn N(0, 1/fan_in) (or N(0, scale^2)); biases zero. Deterministic per seed.
std::vector<double> init_weights(const NetworkSpec& spec, std::uint64_t seed,
                                 InitRule rule = InitRule::fan_in());

/// Logits for a single input. Throws on dimension mismatch.
std::vector<double> forward(const NetworkSpec& spec, std::span<const double> weights,
                            std::span<const double> x);

/// Activations of the last hidden layer (the features seen by the output layer).
std::vector<double> penultimate_features(const NetworkSpec& spec,
                                         std::span<const double> weights,
                                         std::span<const double> x);

/// Numerically stable softmax (max-subtraction).
std::vector<double> softmax(std::span<const double> logits);

/// -sum_i log softmax(forward(x_i))[y_i], no prior term.
double nll_data(const NetworkSpec& spec, std::span<const double> weights,
                const LabeledBatch& batch);

/// nll_data + (lambda/2)·||w||^2 (prior normalizing constant dropped).
double neg_log_joint(const NetworkSpec& spec, std::span<const double> weights,
                     const LabeledBatch& batch, const PriorSpec& prior);

/// grad += scale * d(nll over batch rows in idx)/dw. Exact reverse mode.
void accumulate_grad_nll(const NetworkSpec& spec, std::span<const double> weights,
                         const LabeledBatch& batch, std::span<const long> idx,
                         double scale, std::span<double> grad);

std::vector<double> grad_nll_data(const NetworkSpec& spec, std::span<const double> weights,
                                  const LabeledBatch& batch);

std::vector<double> grad_neg_log_joint(const NetworkSpec& spec, std::span<const double> weights,
                                       const LabeledBatch& batch, const PriorSpec& prior);

/// Central differences of neg_log_joint. Test oracle, not used by training code.
std::vector<double> finite_diff_grad(const NetworkSpec& spec, std::span<const double> weights,
                                     const LabeledBatch& batch, const PriorSpec& prior,
                                     double h);

}  // namespace cps
