#include "cpsets/inference.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace cps {

Schedule schedule_from_string(const std::string& s) {
  if (s == "constant") return Schedule::Constant;
  if (s == "cosine") return Schedule::Cosine;
  if (s == "cyclical") return Schedule::Cyclical;
  throw std::invalid_argument("unknown schedule: " + s);
}

const char* to_string(Schedule s) {
  switch (s) {
    case Schedule::Constant: return "constant";
    case Schedule::Cosine: return "cosine";
    default: return "cyclical";
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (step_size < 0.0) throw std::invalid_argument("step_size must be >= 0");
  if (momentum_decay < 0.0 || momentum_decay >= 1.0)
    throw std::invalid_argument("momentum_decay must be in [0, 1)");
  if (schedule == Schedule::Cyclical && cycle_epochs < 1)
    throw std::invalid_argument("cycle_epochs must be >= 1");
  prior.validate();
}

void SghmcConfig::validate() const {
  base.validate();
  if (burnin_epochs < 0) throw std::invalid_argument("burnin_epochs must be >= 0");
  if (thin_epochs < 1) throw std::invalid_argument("thin_epochs must be >= 1");
  if (!(friction > 0.0)) throw std::invalid_argument("friction must be > 0");
}

const char* posterior_kind(const PosteriorApproximation& p) {
  struct V {
    const char* operator()(const Point&) const { return "point"; }
    const char* operator()(const Ensemble&) const { return "ensemble"; }
    const char* operator()(const MeanField&) const { return "mean_field"; }
    const char* operator()(const SampleChain&) const { return "sample_chain"; }
    const char* operator()(const LaplaceLastLayer&) const { return "laplace_last_layer"; }
  };
  return std::visit(V{}, p);
}

namespace {

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  switch (cfg.schedule) {
    case Schedule::Constant:
      return cfg.step_size;
    case Schedule::Cosine:
      return cfg.step_size * 0.5 * (1.0 + std::cos(M_PI * double(epoch) / double(cfg.epochs)));
    default: {
      const int e = epoch % cfg.cycle_epochs;
      return cfg.step_size * 0.5 * (1.0 + std::cos(M_PI * double(e) / double(cfg.cycle_epochs)));
    }
  }
}

void check_finite(std::span<const double> w, const char* where) {
  for (double v : w)
    if (!std::isfinite(v)) throw std::runtime_error(std::string(where) + ": non-finite value encountered");
}

double accuracy(const NetworkSpec& spec, std::span<const double> w, const LabeledBatch& data) {
  long hits = 0;
  for (long i = 0; i < data.size(); ++i) {
    const auto logits = forward(spec, w, data.row(i));
    const int pred = int(std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (pred == data.labels[i]) ++hits;
  }
  return double(hits) / double(data.size());
}

// nll over a subset of rows, full-dataset scaling left to the caller
double nll_subset(const NetworkSpec& spec, std::span<const double> w, const LabeledBatch& data,
                  std::span<const long> idx) {
  double total = 0.0;
  for (long i : idx) {
    const auto logits = forward(spec, w, data.row(i));
    const auto p = softmax(logits);
    total -= std::log(std::max(p[data.labels[i]], 1e-300));
  }
  return total;
}

std::vector<std::vector<long>> minibatches(long n, int batch_size, std::mt19937_64& rng) {
  std::vector<long> order(n);
  std::iota(order.begin(), order.end(), 0L);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<long>> out;
  for (long s = 0; s < n; s += batch_size) {
    const long e = std::min<long>(s + batch_size, n);
    out.emplace_back(order.begin() + s, order.begin() + e);
  }
  return out;
}

}  // namespace

Point train_map(const NetworkSpec& spec, const LabeledBatch& data, const TrainConfig& cfg,
                const LabeledBatch* validation) {
  spec.validate();
  cfg.validate();
  data.validate(spec.num_classes());

  std::vector<double> w = init_weights(spec, cfg.seed);
  std::vector<double> v(w.size(), 0.0), g(w.size());
  std::mt19937_64 shuffle_rng(cfg.seed + 0x517cc1b727220a95ULL);
  const long n = data.size();

  std::vector<double> best_w = w;
  double best_acc = -1.0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    for (const auto& mb : minibatches(n, cfg.batch_size, shuffle_rng)) {
      const double scale = double(n) / double(mb.size());
      std::fill(g.begin(), g.end(), 0.0);
      accumulate_grad_nll(spec, w, data, mb, scale, g);
      for (std::size_t i = 0; i < w.size(); ++i) {
        g[i] += cfg.prior.precision * w[i];
        v[i] = cfg.momentum_decay * v[i] - lr * g[i];
        w[i] += v[i];
      }
    }
    check_finite(w, "train_map");
    if (validation && ((epoch + 1) % cfg.checkpoint_epochs == 0 || epoch + 1 == cfg.epochs)) {
      const double acc = accuracy(spec, w, *validation);
      if (acc > best_acc) {  // strict: ties keep the earliest checkpoint
        best_acc = acc;
        best_w = w;
      }
    }
  }
  return Point{validation ? std::move(best_w) : std::move(w)};
}

Ensemble train_ensemble(const NetworkSpec& spec, const LabeledBatch& data,
                        const TrainConfig& cfg, int members, const LabeledBatch* validation) {
  if (members < 1) throw std::invalid_argument("ensemble needs at least one member");
  Ensemble ens;
  ens.members.reserve(members);
  for (int j = 0; j < members; ++j) {
    TrainConfig c = cfg;
    c.seed = cfg.seed + static_cast<std::uint64_t>(j);
    ens.members.push_back(train_map(spec, data, c, validation).weights);
  }
  return ens;
}

double kl_gaussian_diag(std::span<const double> means, std::span<const double> log_sigmas,
                        const PriorSpec& prior) {
  if (means.size() != log_sigmas.size())
    throw std::invalid_argument("kl_gaussian_diag: length mismatch");
  prior.validate();
  const double prior_var = 1.0 / prior.precision;
  const double half_log_prior_var = 0.5 * std::log(prior_var);
  double kl = 0.0;
  for (std::size_t i = 0; i < means.size(); ++i) {
    const double sigma = std::exp(log_sigmas[i]);
    kl += half_log_prior_var - log_sigmas[i] +
          (sigma * sigma + means[i] * means[i]) / (2.0 * prior_var) - 0.5;
  }
  return kl;
}

MfviResult train_mfvi(const NetworkSpec& spec, const LabeledBatch& data, const TrainConfig& cfg,
                      double init_sigma, int n_train_samples, const LabeledBatch* validation) {
  spec.validate();
  cfg.validate();
  if (!(init_sigma > 0.0)) throw std::invalid_argument("init_sigma must be > 0");
  if (n_train_samples < 1) throw std::invalid_argument("n_train_samples must be >= 1");
  const long n = data.size();
  if (n > 0) data.validate(spec.num_classes());

  const std::size_t P = spec.param_count();
  std::vector<double> mu = init_weights(spec, cfg.seed);
  std::vector<double> log_sigma(P, std::log(init_sigma));

  // Adam state over the concatenated (mu, log_sigma) parameters
  std::vector<double> m(2 * P, 0.0), vv(2 * P, 0.0);
  const double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;
  long t = 0;

  std::mt19937_64 rng(cfg.seed + 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<double> g_mu(P), g_ls(P), gw(P), eps(P), w(P);
  MfviResult result;

  std::vector<double> best_mu = mu, best_ls = log_sigma;
  double best_acc = -1.0;

  const double lam = cfg.prior.precision;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    auto batches = n > 0 ? minibatches(n, cfg.batch_size, rng)
                         : std::vector<std::vector<long>>{std::vector<long>{}};
    for (const auto& mb : batches) {
      const double scale = mb.empty() ? 0.0 : double(n) / double(mb.size());
      std::fill(g_mu.begin(), g_mu.end(), 0.0);
      std::fill(g_ls.begin(), g_ls.end(), 0.0);
      double nll_hat = 0.0;
      for (int s = 0; s < n_train_samples; ++s) {
        for (std::size_t i = 0; i < P; ++i) {
          eps[i] = gauss(rng);
          w[i] = mu[i] + std::exp(log_sigma[i]) * eps[i];
        }
        std::fill(gw.begin(), gw.end(), 0.0);
        if (!mb.empty()) {
          accumulate_grad_nll(spec, w, data, mb, scale / n_train_samples, gw);
          nll_hat += scale * nll_subset(spec, w, data, mb) / n_train_samples;
        }
        for (std::size_t i = 0; i < P; ++i) {
          g_mu[i] += gw[i];
          g_ls[i] += gw[i] * eps[i] * std::exp(log_sigma[i]);
        }
      }
      // KL gradient in closed form
      for (std::size_t i = 0; i < P; ++i) {
        const double sigma2 = std::exp(2.0 * log_sigma[i]);
        g_mu[i] += lam * mu[i];
        g_ls[i] += lam * sigma2 - 1.0;
      }
      const double elbo = -(nll_hat + kl_gaussian_diag(mu, log_sigma, cfg.prior));
      if (!std::isfinite(elbo)) throw std::runtime_error("train_mfvi: non-finite ELBO");
      result.elbo_trace.push_back(elbo);

      ++t;
      const double corr = std::sqrt(1.0 - std::pow(b2, double(t))) / (1.0 - std::pow(b1, double(t)));
      for (std::size_t i = 0; i < 2 * P; ++i) {
        double& param = i < P ? mu[i] : log_sigma[i - P];
        const double grad = i < P ? g_mu[i] : g_ls[i - P];
        m[i] = b1 * m[i] + (1.0 - b1) * grad;
        vv[i] = b2 * vv[i] + (1.0 - b2) * grad * grad;
        param -= lr * corr * m[i] / (std::sqrt(vv[i]) + adam_eps);
      }
    }
    if (validation && ((epoch + 1) % cfg.checkpoint_epochs == 0 || epoch + 1 == cfg.epochs)) {
      const double acc = accuracy(spec, mu, *validation);
      if (acc > best_acc) {
        best_acc = acc;
        best_mu = mu;
        best_ls = log_sigma;
      }
    }
  }
  if (validation) {
    mu = std::move(best_mu);
    log_sigma = std::move(best_ls);
  }
  result.posterior = MeanField{std::move(mu), std::move(log_sigma)};
  return result;
}

SampleChain run_sghmc(const NetworkSpec& spec, const LabeledBatch& data,
                      const SghmcConfig& cfg) {
  spec.validate();
  cfg.validate();
  const long n = data.size();
  if (n > 0) data.validate(spec.num_classes());

  const std::size_t P = spec.param_count();
  std::vector<double> w = init_weights(spec, cfg.base.seed);
  std::vector<double> v(P, 0.0), g(P), r(P, 0.0);
  std::mt19937_64 rng(cfg.base.seed + 0x2545f4914f6cdd1dULL);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double gamma = cfg.friction;
  const double lam = cfg.base.prior.precision;
  SampleChain chain;

  for (int epoch = 0; epoch < cfg.base.epochs; ++epoch) {
    const double eta = lr_at_epoch(cfg.base, epoch);
    auto batches = n > 0 ? minibatches(n, cfg.base.batch_size, rng)
                         : std::vector<std::vector<long>>{std::vector<long>{}};
    for (const auto& mb : batches) {
      std::fill(g.begin(), g.end(), 0.0);
      if (!mb.empty())
        accumulate_grad_nll(spec, w, data, mb, double(n) / double(mb.size()), g);
      for (std::size_t i = 0; i < P; ++i) g[i] += lam * w[i];
      double max_abs = 0.0;
      for (std::size_t i = 0; i < P; ++i) {
        double scale = 1.0;
        if (cfg.rmsprop) {
          r[i] = cfg.rmsprop_decay * r[i] + (1.0 - cfg.rmsprop_decay) * g[i] * g[i];
          scale = 1.0 / (std::sqrt(r[i]) + cfg.rmsprop_eps);
        }
        v[i] = (1.0 - gamma) * v[i] - eta * scale * g[i] +
               std::sqrt(2.0 * gamma * eta * scale) * gauss(rng);
        w[i] += v[i];
        max_abs = std::max(max_abs, std::abs(w[i]));
      }
      if (!std::isfinite(max_abs) || max_abs > 1e8)
        throw std::runtime_error("run_sghmc: chain diverged");
    }
    if (epoch + 1 > cfg.burnin_epochs && (epoch + 1 - cfg.burnin_epochs) % cfg.thin_epochs == 0)
      chain.samples.push_back(w);
  }
  if (chain.samples.empty())
    throw std::runtime_error("run_sghmc: no samples collected (check epochs/burnin/thin)");
  return chain;
}

GlmLaplaceFit fit_laplace_glm(std::span<const double> features, long n, int feature_dim,
                              int num_classes, std::span<const double> weights,
                              const PriorSpec& prior) {
  prior.validate();
  const int m = feature_dim, K = num_classes;
  if (features.size() != static_cast<std::size_t>(n) * m)
    throw std::invalid_argument("fit_laplace_glm: feature buffer size mismatch");
  if (weights.size() != static_cast<std::size_t>(K) * m)
    throw std::invalid_argument("fit_laplace_glm: weight length mismatch");
  const int D = K * m;

  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(D, D);
  std::vector<double> logits(K);
  for (long i = 0; i < n; ++i) {
    const double* phi = features.data() + static_cast<std::size_t>(i) * m;
    for (int k = 0; k < K; ++k) {
      double z = 0.0;
      for (int j = 0; j < m; ++j) z += weights[static_cast<std::size_t>(k) * m + j] * phi[j];
      logits[k] = z;
    }
    const auto p = softmax(logits);
    Eigen::Map<const Eigen::VectorXd> phi_v(phi, m);
    const Eigen::MatrixXd outer = phi_v * phi_v.transpose();
    for (int k = 0; k < K; ++k)
      for (int kp = 0; kp < K; ++kp) {
        const double lam_kk = (k == kp ? p[k] * (1.0 - p[k]) : -p[k] * p[kp]);
        H.block(k * m, kp * m, m, m) += lam_kk * outer;
      }
  }
  H += prior.precision * Eigen::MatrixXd::Identity(D, D);

  auto invert = [D](const Eigen::MatrixXd& A, Eigen::MatrixXd& out) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return false;
    out = ldlt.solve(Eigen::MatrixXd::Identity(D, D));
    return true;
  };
  Eigen::MatrixXd cov;
  if (!invert(H, cov)) {
    H += 1e-8 * Eigen::MatrixXd::Identity(D, D);
    if (!invert(H, cov)) throw std::runtime_error("fit_laplace_glm: Hessian not invertible");
  }
  cov = 0.5 * (cov + cov.transpose().eval());

  GlmLaplaceFit fit;
  fit.mean.assign(weights.begin(), weights.end());
  fit.cov.resize(static_cast<std::size_t>(D) * D);
  for (int a = 0; a < D; ++a)
    for (int b = 0; b < D; ++b) fit.cov[static_cast<std::size_t>(a) * D + b] = cov(a, b);
  return fit;
}

LaplaceLastLayer fit_laplace_last_layer(const NetworkSpec& spec,
                                        std::span<const double> map_weights,
                                        const LabeledBatch& data, const PriorSpec& prior) {
  spec.validate();
  data.validate(spec.num_classes());
  if (map_weights.size() != spec.param_count())
    throw std::invalid_argument("fit_laplace_last_layer: weight length mismatch");
  const int L = spec.num_layers();
  const int h = spec.layer_widths[L - 1];
  const int K = spec.num_classes();
  const int m = h + 1;  // bias folded into the feature vector

  // features phi~(x) = [penultimate activations; 1]
  std::vector<double> features(static_cast<std::size_t>(data.size()) * m);
  for (long i = 0; i < data.size(); ++i) {
    const auto phi = penultimate_features(spec, map_weights, data.row(i));
    std::copy(phi.begin(), phi.end(), features.begin() + static_cast<std::size_t>(i) * m);
    features[static_cast<std::size_t>(i) * m + h] = 1.0;
  }

  // last-layer weights in class-major layout
  const std::size_t off = spec.param_count() - (static_cast<std::size_t>(K) * h + K);
  std::vector<double> wll(static_cast<std::size_t>(K) * m);
  for (int k = 0; k < K; ++k) {
    for (int j = 0; j < h; ++j)
      wll[static_cast<std::size_t>(k) * m + j] = map_weights[off + static_cast<std::size_t>(k) * h + j];
    wll[static_cast<std::size_t>(k) * m + h] = map_weights[off + static_cast<std::size_t>(K) * h + k];
  }

  auto fit = fit_laplace_glm(features, data.size(), m, K, wll, prior);
  LaplaceLastLayer out;
  out.map_weights.assign(map_weights.begin(), map_weights.end());
  out.last_layer_mean = std::move(fit.mean);
  out.last_layer_cov = std::move(fit.cov);
  out.feature_dim = m;
  return out;
}

namespace {

std::vector<double> laplace_predictive(const LaplaceLastLayer& lap, const NetworkSpec& spec,
                                       std::span<const double> x) {
  const int K = spec.num_classes();
  const int m = lap.feature_dim;
  const int D = K * m;
  auto phi = penultimate_features(spec, lap.map_weights, x);
  phi.push_back(1.0);
  std::vector<double> logits(K);
  for (int k = 0; k < K; ++k) {
    double z = 0.0, var = 0.0;
    for (int a = 0; a < m; ++a) {
      z += lap.last_layer_mean[static_cast<std::size_t>(k) * m + a] * phi[a];
      for (int b = 0; b < m; ++b)
        var += phi[a] * phi[b] *
               lap.last_layer_cov[static_cast<std::size_t>(k * m + a) * D + (k * m + b)];
    }
    logits[k] = z / std::sqrt(1.0 + (M_PI / 8.0) * var);  // probit adjustment
  }
  return softmax(logits);
}

}  // namespace

std::vector<double> posterior_predictive(const PosteriorApproximation& posterior,
                                         const NetworkSpec& spec, std::span<const double> x,
                                         int n_samples, std::uint64_t seed) {
  struct V {
    const NetworkSpec& spec;
    std::span<const double> x;
    int n_samples;
    std::uint64_t seed;

    std::vector<double> operator()(const Point& p) const {
      return softmax(forward(spec, p.weights, x));
    }
    std::vector<double> operator()(const Ensemble& e) const {
      if (e.members.empty()) throw std::invalid_argument("posterior_predictive: empty ensemble");
      std::vector<double> mean(spec.num_classes(), 0.0);
      for (const auto& w : e.members) {
        const auto p = softmax(forward(spec, w, x));
        for (std::size_t k = 0; k < p.size(); ++k) mean[k] += p[k];
      }
      for (double& v : mean) v /= double(e.members.size());
      return mean;
    }
    std::vector<double> operator()(const MeanField& q) const {
      if (n_samples < 1) throw std::invalid_argument("posterior_predictive: n_samples must be >= 1");
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> gauss(0.0, 1.0);
      const std::size_t P = q.means.size();
      std::vector<double> w(P), mean(spec.num_classes(), 0.0);
      for (int s = 0; s < n_samples; ++s) {
        for (std::size_t i = 0; i < P; ++i)
          w[i] = q.means[i] + std::exp(q.log_sigmas[i]) * gauss(rng);
        const auto p = softmax(forward(spec, w, x));
        for (std::size_t k = 0; k < p.size(); ++k) mean[k] += p[k];
      }
      for (double& v : mean) v /= double(n_samples);
      return mean;
    }
    std::vector<double> operator()(const SampleChain& c) const {
      if (c.samples.empty()) throw std::invalid_argument("posterior_predictive: empty chain");
      std::vector<double> mean(spec.num_classes(), 0.0);
      for (const auto& w : c.samples) {
        const auto p = softmax(forward(spec, w, x));
        for (std::size_t k = 0; k < p.size(); ++k) mean[k] += p[k];
      }
      for (double& v : mean) v /= double(c.samples.size());
      return mean;
    }
    std::vector<double> operator()(const LaplaceLastLayer& l) const {
      return laplace_predictive(l, spec, x);
    }
  };
  return std::visit(V{spec, x, n_samples, seed}, posterior);
}

}  // namespace cps
