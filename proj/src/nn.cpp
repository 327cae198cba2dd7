#include "cpsets/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace cps {

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  throw std::invalid_argument("unknown activation: " + s);
}

const char* to_string(Activation a) {
  return a == Activation::Relu ? "relu" : "tanh";
}

std::size_t NetworkSpec::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_widths.size(); ++l)
    n += static_cast<std::size_t>(layer_widths[l]) * layer_widths[l + 1] + layer_widths[l + 1];
  return n;
}

void NetworkSpec::validate() const {
  if (layer_widths.size() < 2)
    throw std::invalid_argument("NetworkSpec needs at least input and output widths");
  for (int w : layer_widths)
    if (w < 1) throw std::invalid_argument("NetworkSpec widths must be >= 1");
  if (layer_widths.back() < 2)
    throw std::invalid_argument("NetworkSpec output width (K) must be >= 2");
}

void PriorSpec::validate() const {
  if (!(precision > 0.0)) throw std::invalid_argument("prior precision must be > 0");
}

void LabeledBatch::validate(int num_classes) const {
  if (labels.empty()) throw std::invalid_argument("LabeledBatch must be non-empty");
  if (inputs.size() != labels.size() * static_cast<std::size_t>(dim))
    throw std::invalid_argument("LabeledBatch inputs/labels size mismatch");
  for (int y : labels)
    if (y < 0 || y >= num_classes) throw std::invalid_argument("label out of range");
}

std::vector<double> init_weights(const NetworkSpec& spec, std::uint64_t seed, InitRule rule) {
  spec.validate();
  std::vector<double> w(spec.param_count(), 0.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::size_t off = 0;
  for (int l = 0; l < spec.num_layers(); ++l) {
    const int in = spec.layer_widths[l];
    const int out = spec.layer_widths[l + 1];
    const double sd = rule.kind == InitRule::Kind::FanIn ? 1.0 / std::sqrt(double(in))
                                                         : rule.scale;
    for (int j = 0; j < out * in; ++j) w[off + j] = sd * gauss(rng);
    off += static_cast<std::size_t>(out) * in + out;  // biases stay zero
  }
  return w;
}

namespace {

double act(double z, Activation a) {
  return a == Activation::Relu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

// derivative wrt pre-activation; ReLU subgradient at 0 is 0
double act_prime(double z, Activation a) {
  if (a == Activation::Relu) return z > 0.0 ? 1.0 : 0.0;
  const double t = std::tanh(z);
  return 1.0 - t * t;
}

// forward pass keeping post-activation values per layer; acts[0] = x
void forward_pass(const NetworkSpec& spec, std::span<const double> w,
                  std::span<const double> x, std::vector<std::vector<double>>& acts,
                  std::vector<std::vector<double>>& preacts) {
  const int L = spec.num_layers();
  acts.assign(L + 1, {});
  preacts.assign(L, {});
  acts[0].assign(x.begin(), x.end());
  std::size_t off = 0;
  for (int l = 0; l < L; ++l) {
    const int in = spec.layer_widths[l];
    const int out = spec.layer_widths[l + 1];
    const double* W = w.data() + off;
    const double* b = w.data() + off + static_cast<std::size_t>(out) * in;
    preacts[l].resize(out);
    for (int j = 0; j < out; ++j) {
      double z = b[j];
      const double* wr = W + static_cast<std::size_t>(j) * in;
      for (int i = 0; i < in; ++i) z += wr[i] * acts[l][i];
      preacts[l][j] = z;
    }
    acts[l + 1].resize(out);
    if (l + 1 < L)
      for (int j = 0; j < out; ++j) acts[l + 1][j] = act(preacts[l][j], spec.activation);
    else
      acts[l + 1] = preacts[l];  // logits
    off += static_cast<std::size_t>(out) * in + out;
  }
}

void check_weights(const NetworkSpec& spec, std::span<const double> w) {
  if (w.size() != spec.param_count())
    throw std::invalid_argument("weight vector length does not match spec");
}

}  // namespace

std::vector<double> forward(const NetworkSpec& spec, std::span<const double> weights,
                            std::span<const double> x) {
  spec.validate();
  check_weights(spec, weights);
  if (static_cast<int>(x.size()) != spec.input_dim())
    throw std::invalid_argument("input dimension mismatch");
  std::vector<std::vector<double>> acts, pre;
  forward_pass(spec, weights, x, acts, pre);
  return acts.back();
}

std::vector<double> penultimate_features(const NetworkSpec& spec,
                                         std::span<const double> weights,
                                         std::span<const double> x) {
  spec.validate();
  check_weights(spec, weights);
  if (static_cast<int>(x.size()) != spec.input_dim())
    throw std::invalid_argument("input dimension mismatch");
  std::vector<std::vector<double>> acts, pre;
  forward_pass(spec, weights, x, acts, pre);
  return acts[spec.num_layers() - 1];
}

std::vector<double> softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = std::exp(logits[k] - m);
    sum += p[k];
  }
  for (double& v : p) v /= sum;
  return p;
}

namespace {

// log softmax(z)[y], stable
double log_softmax_at(const std::vector<double>& z, int y) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - m);
  return z[y] - m - std::log(sum);
}

}  // namespace

double nll_data(const NetworkSpec& spec, std::span<const double> weights,
                const LabeledBatch& batch) {
  spec.validate();
  check_weights(spec, weights);
  double total = 0.0;
  std::vector<std::vector<double>> acts, pre;
  for (long i = 0; i < batch.size(); ++i) {
    forward_pass(spec, weights, batch.row(i), acts, pre);
    total -= log_softmax_at(acts.back(), batch.labels[i]);
  }
  return total;
}

double neg_log_joint(const NetworkSpec& spec, std::span<const double> weights,
                     const LabeledBatch& batch, const PriorSpec& prior) {
  prior.validate();
  double sq = 0.0;
  for (double v : weights) sq += v * v;
  return nll_data(spec, weights, batch) + 0.5 * prior.precision * sq;
}

void accumulate_grad_nll(const NetworkSpec& spec, std::span<const double> weights,
                         const LabeledBatch& batch, std::span<const long> idx,
                         double scale, std::span<double> grad) {
  check_weights(spec, weights);
  if (grad.size() != weights.size())
    throw std::invalid_argument("gradient buffer length mismatch");
  const int L = spec.num_layers();
  std::vector<std::vector<double>> acts, pre;
  std::vector<double> delta, delta_prev;
  for (long i : idx) {
    forward_pass(spec, weights, batch.row(i), acts, pre);
    delta = softmax(acts.back());
    delta[batch.labels[i]] -= 1.0;  // d nll / d logits
    // walk layers backwards; offsets recomputed per layer
    std::size_t off = weights.size();
    for (int l = L - 1; l >= 0; --l) {
      const int in = spec.layer_widths[l];
      const int out = spec.layer_widths[l + 1];
      off -= static_cast<std::size_t>(out) * in + out;
      double* gW = grad.data() + off;
      double* gb = gW + static_cast<std::size_t>(out) * in;
      for (int j = 0; j < out; ++j) {
        const double dj = scale * delta[j];
        gb[j] += dj;
        double* gr = gW + static_cast<std::size_t>(j) * in;
        for (int k = 0; k < in; ++k) gr[k] += dj * acts[l][k];
      }
      if (l > 0) {
        const double* W = weights.data() + off;
        delta_prev.assign(in, 0.0);
        for (int j = 0; j < out; ++j) {
          const double* wr = W + static_cast<std::size_t>(j) * in;
          for (int k = 0; k < in; ++k) delta_prev[k] += wr[k] * delta[j];
        }
        for (int k = 0; k < in; ++k)
          delta_prev[k] *= act_prime(pre[l - 1][k], spec.activation);
        delta.swap(delta_prev);
      }
    }
  }
}

std::vector<double> grad_nll_data(const NetworkSpec& spec, std::span<const double> weights,
                                  const LabeledBatch& batch) {
  std::vector<double> g(weights.size(), 0.0);
  std::vector<long> idx(batch.size());
  std::iota(idx.begin(), idx.end(), 0L);
  accumulate_grad_nll(spec, weights, batch, idx, 1.0, g);
  return g;
}

std::vector<double> grad_neg_log_joint(const NetworkSpec& spec, std::span<const double> weights,
                                       const LabeledBatch& batch, const PriorSpec& prior) {
  prior.validate();
  std::vector<double> g = grad_nll_data(spec, weights, batch);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += prior.precision * weights[i];
  return g;
}

std::vector<double> finite_diff_grad(const NetworkSpec& spec, std::span<const double> weights,
                                     const LabeledBatch& batch, const PriorSpec& prior,
                                     double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be > 0");
  std::vector<double> w(weights.begin(), weights.end());
  std::vector<double> g(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double orig = w[i];
    w[i] = orig + h;
    const double fp = neg_log_joint(spec, w, batch, prior);
    w[i] = orig - h;
    const double fm = neg_log_joint(spec, w, batch, prior);
    w[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace cps
