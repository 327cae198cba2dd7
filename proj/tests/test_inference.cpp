#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "cpsets/data.hpp"
#include "cpsets/inference.hpp"

using namespace cps;

namespace {

NetworkSpec spec_for(int dim, int hidden, int K) {
  NetworkSpec s;
  s.layer_widths = hidden > 0 ? std::vector<int>{dim, hidden, K} : std::vector<int>{dim, K};
  s.activation = Activation::Tanh;
  return s;
}

double predictive_accuracy(const PosteriorApproximation& post, const NetworkSpec& spec,
                           const LabeledBatch& data) {
  long hits = 0;
  for (long i = 0; i < data.size(); ++i) {
    const auto p = posterior_predictive(post, spec, data.row(i), 30, 5);
    const int pred = int(std::max_element(p.begin(), p.end()) - p.begin());
    if (pred == data.labels[i]) ++hits;
  }
  return double(hits) / double(data.size());
}

LabeledBatch empty_batch(int dim) {
  LabeledBatch b;
  b.dim = dim;
  return b;
}

}  // namespace

TEST_CASE("train_map fits separable blobs and is deterministic") {
  const auto ds = make_blobs(3, 2, 300, 4.0, 0.3, 14);
  const auto spec = spec_for(2, 8, 3);
  TrainConfig cfg;
  cfg.epochs = 150;
  cfg.batch_size = 50;
  cfg.step_size = 0.02;
  cfg.seed = 3;
  cfg.prior.precision = 1e-2;

  const auto p1 = train_map(spec, ds.batch, cfg);
  CHECK(predictive_accuracy(p1, spec, ds.batch) >= 0.99);

  const auto p2 = train_map(spec, ds.batch, cfg);
  CHECK(p1.weights == p2.weights);

  cfg.seed = 4;
  const auto p3 = train_map(spec, ds.batch, cfg);
  CHECK(p1.weights != p3.weights);
}

TEST_CASE("train_map with zero step size leaves the initialization untouched") {
  const auto ds = make_blobs(2, 2, 40, 2.0, 0.5, 2);
  const auto spec = spec_for(2, 4, 2);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.step_size = 0.0;
  cfg.seed = 11;
  const auto p = train_map(spec, ds.batch, cfg);
  CHECK(p.weights == init_weights(spec, 11));
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS(cfg.validate());
  cfg = {};
  cfg.momentum_decay = 1.0;
  CHECK_THROWS(cfg.validate());
  cfg = {};
  cfg.step_size = -0.1;
  CHECK_THROWS(cfg.validate());
  cfg = {};
  cfg.prior.precision = 0.0;
  CHECK_THROWS(cfg.validate());
  SghmcConfig sg;
  sg.thin_epochs = 0;
  CHECK_THROWS(sg.validate());
  sg = {};
  sg.friction = 0.0;
  CHECK_THROWS(sg.validate());
}

TEST_CASE("ensemble members reproduce train_map at shifted seeds") {
  const auto ds = make_blobs(2, 2, 80, 3.0, 0.4, 8);
  const auto spec = spec_for(2, 4, 2);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 40;
  cfg.step_size = 0.02;
  cfg.seed = 20;

  const auto ens = train_ensemble(spec, ds.batch, cfg, 3);
  REQUIRE(ens.members.size() == 3);
  for (int j = 0; j < 3; ++j) {
    TrainConfig cj = cfg;
    cj.seed = cfg.seed + j;
    CHECK(ens.members[j] == train_map(spec, ds.batch, cj).weights);
  }
  CHECK(ens.members[0] != ens.members[1]);
  CHECK_THROWS(train_ensemble(spec, ds.batch, cfg, 0));
}

TEST_CASE("kl_gaussian_diag hand values") {
  PriorSpec prior;  // precision 1
  std::vector<double> mu{0.0}, ls{0.0};
  CHECK(kl_gaussian_diag(mu, ls, prior) == doctest::Approx(0.0).epsilon(1e-12));

  mu[0] = 1.0;
  CHECK(kl_gaussian_diag(mu, ls, prior) == doctest::Approx(0.5));

  // q = N(0, sigma^2) against N(0,1): -log sigma + (sigma^2 - 1)/2
  mu[0] = 0.0;
  ls[0] = std::log(0.5);
  CHECK(kl_gaussian_diag(mu, ls, prior) ==
        doctest::Approx(-std::log(0.5) + (0.25 - 1.0) / 2.0));

  // additivity over dimensions
  std::vector<double> mu2{1.0, 1.0}, ls2{0.0, 0.0};
  CHECK(kl_gaussian_diag(mu2, ls2, prior) == doctest::Approx(1.0));

  CHECK_THROWS(kl_gaussian_diag(mu2, ls, prior));
}

TEST_CASE("kl_gaussian_diag matches a Monte Carlo estimate") {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int cfg_i = 0; cfg_i < 4; ++cfg_i) {
    const int P = 3;
    std::vector<double> mu(P), ls(P);
    for (int i = 0; i < P; ++i) {
      mu[i] = unif(rng);
      ls[i] = 0.5 * unif(rng);
    }
    PriorSpec prior;
    prior.precision = 0.5 + 1.5 * std::abs(unif(rng));

    const double closed = kl_gaussian_diag(mu, ls, prior);

    const long S = 100000;
    double sum = 0.0, sumsq = 0.0;
    const double log_lam = std::log(prior.precision);
    for (long s = 0; s < S; ++s) {
      double val = 0.0;
      for (int i = 0; i < P; ++i) {
        const double sigma = std::exp(ls[i]);
        const double w = mu[i] + sigma * gauss(rng);
        const double log_q = -ls[i] - 0.5 * std::log(2.0 * M_PI) -
                             (w - mu[i]) * (w - mu[i]) / (2.0 * sigma * sigma);
        const double log_p = 0.5 * (log_lam - std::log(2.0 * M_PI)) -
                             0.5 * prior.precision * w * w;
        val += log_q - log_p;
      }
      sum += val;
      sumsq += val * val;
    }
    const double mc = sum / S;
    const double se = std::sqrt((sumsq / S - mc * mc) / S);
    CHECK(std::abs(closed - mc) < 3.0 * se + 1e-9);
  }
}

TEST_CASE("mfvi with no data converges to the prior") {
  const auto spec = spec_for(2, 0, 2);  // 6 parameters
  TrainConfig cfg;
  cfg.epochs = 4000;
  cfg.step_size = 0.02;
  cfg.seed = 5;
  cfg.prior.precision = 1.0;

  const auto res = train_mfvi(spec, empty_batch(2), cfg, 0.01, 1);
  const auto& q = res.posterior;
  for (std::size_t i = 0; i < q.means.size(); ++i) {
    CHECK(std::abs(q.means[i]) < 0.05);
    CHECK(std::exp(q.log_sigmas[i]) == doctest::Approx(1.0).epsilon(0.1));
  }
}

TEST_CASE("mfvi fits blobs and logs an improving elbo") {
  const auto ds = make_blobs(3, 2, 300, 4.0, 0.3, 14);
  const auto spec = spec_for(2, 8, 3);
  TrainConfig cfg;
  cfg.epochs = 120;
  cfg.batch_size = 100;
  cfg.step_size = 0.02;
  cfg.seed = 6;
  cfg.prior.precision = 1e-2;

  const auto res = train_mfvi(spec, ds.batch, cfg, 0.01, 1);
  CHECK(predictive_accuracy(res.posterior, spec, ds.batch) >= 0.95);
  REQUIRE(res.elbo_trace.size() >= 8);

  const std::size_t q = res.elbo_trace.size() / 4;
  const double head = std::accumulate(res.elbo_trace.begin(), res.elbo_trace.begin() + q, 0.0) / q;
  const double tail = std::accumulate(res.elbo_trace.end() - q, res.elbo_trace.end(), 0.0) / q;
  CHECK(tail > head);

  const auto res2 = train_mfvi(spec, ds.batch, cfg, 0.01, 1);
  CHECK(res.posterior.means == res2.posterior.means);
  CHECK(res.posterior.log_sigmas == res2.posterior.log_sigmas);
}

TEST_CASE("sghmc samples a quadratic target with the right moments") {
  // no data: the potential is (lambda/2)||w||^2, so the target is N(0, 1/lambda)
  const auto spec = spec_for(2, 0, 2);  // 6 parameters
  SghmcConfig cfg;
  cfg.base.epochs = 120000;
  cfg.base.step_size = 0.002;
  cfg.base.seed = 31;
  cfg.base.prior.precision = 4.0;  // target variance 0.25
  cfg.burnin_epochs = 2000;
  cfg.thin_epochs = 20;
  cfg.friction = 0.1;

  const auto chain = run_sghmc(spec, empty_batch(2), cfg);
  CHECK(chain.samples.size() == (120000 - 2000) / 20);

  const std::size_t P = spec.param_count();
  for (std::size_t i = 0; i < P; ++i) {
    double mean = 0.0, var = 0.0;
    for (const auto& w : chain.samples) mean += w[i];
    mean /= double(chain.samples.size());
    for (const auto& w : chain.samples) var += (w[i] - mean) * (w[i] - mean);
    var /= double(chain.samples.size() - 1);
    CHECK(std::abs(mean) < 0.05);
    CHECK(var == doctest::Approx(0.25).epsilon(0.12));
  }

  const auto chain2 = run_sghmc(spec, empty_batch(2), cfg);
  CHECK(chain.samples == chain2.samples);
}

TEST_CASE("sghmc aborts on divergence") {
  const auto ds = make_blobs(2, 2, 40, 2.0, 0.5, 3);
  const auto spec = spec_for(2, 4, 2);
  SghmcConfig cfg;
  cfg.base.epochs = 200;
  cfg.base.step_size = 1e6;
  cfg.base.prior.precision = 1.0;
  cfg.thin_epochs = 10;
  cfg.friction = 0.1;
  CHECK_THROWS(run_sghmc(spec, ds.batch, cfg));
}

TEST_CASE("laplace glm fit: prior-dominated limit and shape invariants") {
  // zero features: H = lambda I exactly, cov = (1/lambda) I
  const int n = 5, m = 2, K = 3, D = K * m;
  std::vector<double> features(n * m, 0.0);
  std::vector<double> weights(D, 0.3);
  PriorSpec prior;
  prior.precision = 2.0;
  const auto fit = fit_laplace_glm(features, n, m, K, weights, prior);
  CHECK(fit.mean == weights);
  for (int a = 0; a < D; ++a)
    for (int b = 0; b < D; ++b)
      CHECK(fit.cov[a * D + b] == doctest::Approx(a == b ? 0.5 : 0.0).epsilon(1e-9));

  // with data: symmetric, positive diagonal, and smaller than the prior alone
  std::mt19937_64 rng(12);
  std::normal_distribution<double> gauss;
  for (auto& f : features) f = gauss(rng);
  const auto fit2 = fit_laplace_glm(features, n, m, K, weights, prior);
  for (int a = 0; a < D; ++a) {
    CHECK(fit2.cov[a * D + a] > 0.0);
    CHECK(fit2.cov[a * D + a] <= 0.5 + 1e-9);
    for (int b = 0; b < D; ++b)
      CHECK(fit2.cov[a * D + b] == doctest::Approx(fit2.cov[b * D + a]).epsilon(1e-9));
  }

  CHECK_THROWS(fit_laplace_glm(features, n, m + 1, K, weights, prior));
}

TEST_CASE("laplace last layer: layout and zero-covariance limit") {
  const auto ds = make_blobs(3, 2, 200, 3.5, 0.4, 14);
  const auto spec = spec_for(2, 6, 3);
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.batch_size = 50;
  cfg.step_size = 0.02;
  cfg.seed = 9;
  cfg.prior.precision = 1e-2;
  const auto map = train_map(spec, ds.batch, cfg);

  auto lap = fit_laplace_last_layer(spec, map.weights, ds.batch, cfg.prior);
  CHECK(lap.feature_dim == 7);
  CHECK(lap.map_weights == map.weights);

  // the class-major mean must reproduce the network logits
  for (long i = 0; i < 5; ++i) {
    auto phi = penultimate_features(spec, map.weights, ds.batch.row(i));
    phi.push_back(1.0);
    const auto logits = forward(spec, map.weights, ds.batch.row(i));
    for (int k = 0; k < 3; ++k) {
      double z = 0.0;
      for (int a = 0; a < lap.feature_dim; ++a)
        z += lap.last_layer_mean[k * lap.feature_dim + a] * phi[a];
      CHECK(z == doctest::Approx(logits[k]).epsilon(1e-10));
    }
  }

  // zero covariance: the probit adjustment vanishes, recovering the MAP predictive
  auto degenerate = lap;
  std::fill(degenerate.last_layer_cov.begin(), degenerate.last_layer_cov.end(), 0.0);
  const PosteriorApproximation as_point = Point{map.weights};
  const PosteriorApproximation as_lap = degenerate;
  for (long i = 0; i < 10; ++i) {
    const auto a = posterior_predictive(as_point, spec, ds.batch.row(i));
    const auto b = posterior_predictive(as_lap, spec, ds.batch.row(i));
    for (int k = 0; k < 3; ++k) CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-10));
  }

  // nonzero covariance pulls the predictive toward uniform (less confident)
  const PosteriorApproximation full = lap;
  double conf_map = 0.0, conf_lap = 0.0;
  for (long i = 0; i < 50; ++i) {
    const auto a = posterior_predictive(as_point, spec, ds.batch.row(i));
    const auto b = posterior_predictive(full, spec, ds.batch.row(i));
    conf_map += *std::max_element(a.begin(), a.end());
    conf_lap += *std::max_element(b.begin(), b.end());
  }
  CHECK(conf_lap <= conf_map + 1e-9);
}

TEST_CASE("posterior_predictive special cases") {
  const auto spec = spec_for(2, 4, 3);
  const auto w = init_weights(spec, 77);
  const std::vector<double> x{0.3, -0.2};

  const PosteriorApproximation point = Point{w};
  const auto base = posterior_predictive(point, spec, x);
  CHECK(base == softmax(forward(spec, w, x)));

  const PosteriorApproximation ens = Ensemble{{w, w, w}};
  const auto pe = posterior_predictive(ens, spec, x);
  for (int k = 0; k < 3; ++k) CHECK(pe[k] == doctest::Approx(base[k]).epsilon(1e-12));

  const PosteriorApproximation chain = SampleChain{{w}};
  CHECK(posterior_predictive(chain, spec, x) == base);

  MeanField q;
  q.means = w;
  q.log_sigmas.assign(w.size(), -40.0);  // essentially a point mass
  const PosteriorApproximation mf = q;
  const auto pm = posterior_predictive(mf, spec, x, 10, 3);
  for (int k = 0; k < 3; ++k) CHECK(pm[k] == doctest::Approx(base[k]).epsilon(1e-9));

  // mean-field sampling is seed-deterministic
  MeanField qw;
  qw.means = w;
  qw.log_sigmas.assign(w.size(), std::log(0.2));
  const PosteriorApproximation mfw = qw;
  const auto a = posterior_predictive(mfw, spec, x, 30, 5);
  const auto b = posterior_predictive(mfw, spec, x, 30, 5);
  const auto c = posterior_predictive(mfw, spec, x, 30, 6);
  CHECK(a == b);
  CHECK(a != c);

  CHECK_THROWS(posterior_predictive(PosteriorApproximation{Ensemble{}}, spec, x));
  CHECK_THROWS(posterior_predictive(PosteriorApproximation{SampleChain{}}, spec, x));
}

TEST_CASE("posterior_kind names") {
  CHECK(std::string(posterior_kind(Point{})) == "point");
  CHECK(std::string(posterior_kind(Ensemble{})) == "ensemble");
  CHECK(std::string(posterior_kind(MeanField{})) == "mean_field");
  CHECK(std::string(posterior_kind(SampleChain{})) == "sample_chain");
  CHECK(std::string(posterior_kind(LaplaceLastLayer{})) == "laplace_last_layer");
}
