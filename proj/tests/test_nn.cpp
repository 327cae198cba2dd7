#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "cpsets/nn.hpp"

using namespace cps;

namespace {

NetworkSpec spec_of(std::vector<int> widths, Activation act = Activation::Tanh) {
  NetworkSpec s;
  s.layer_widths = std::move(widths);
  s.activation = act;
  return s;
}

LabeledBatch random_batch(int n, int d, int K, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  LabeledBatch b;
  b.dim = d;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) b.inputs.push_back(gauss(rng));
    b.labels.push_back(int(rng() % K));
  }
  return b;
}

// straight-line matrix-arithmetic oracle for forward()
std::vector<double> forward_oracle(const NetworkSpec& spec, const std::vector<double>& w,
                                   const std::vector<double>& x) {
  std::vector<double> h = x;
  std::size_t off = 0;
  for (int l = 0; l + 1 < int(spec.layer_widths.size()); ++l) {
    const int in = spec.layer_widths[l], out = spec.layer_widths[l + 1];
    std::vector<double> z(out);
    for (int j = 0; j < out; ++j) {
      z[j] = w[off + std::size_t(out) * in + j];
      for (int i = 0; i < in; ++i) z[j] += w[off + std::size_t(j) * in + i] * h[i];
    }
    off += std::size_t(out) * in + out;
    if (l + 2 < int(spec.layer_widths.size())) {
      h.resize(out);
      for (int j = 0; j < out; ++j)
        h[j] = spec.activation == Activation::Tanh ? std::tanh(z[j]) : std::max(z[j], 0.0);
    } else {
      h = z;
    }
  }
  return h;
}

}  // namespace

TEST_CASE("init_weights: fixed(0) gives the all-zero vector of the right length") {
  const auto spec = spec_of({2, 3, 2});
  const auto w = init_weights(spec, 7, InitRule::fixed(0.0));
  CHECK(w.size() == 17);  // (2*3+3)+(3*2+2)
  for (double v : w) CHECK(v == 0.0);
}

TEST_CASE("init_weights: deterministic per seed, biases zero") {
  const auto spec = spec_of({2, 3, 2});
  const auto a = init_weights(spec, 7);
  const auto b = init_weights(spec, 7);
  CHECK(a == b);
  const auto c = init_weights(spec, 8);
  CHECK(a != c);
  // bias slots of the first layer: offsets 6..8
  CHECK(a[6] == 0.0);
  CHECK(a[7] == 0.0);
  CHECK(a[8] == 0.0);
}

TEST_CASE("param_count matches a hand count") {
  CHECK(spec_of({4, 8, 3}).param_count() == 67);  // (4*8+8)+(8*3+3)
  CHECK(init_weights(spec_of({4, 8, 3}), 3).size() == 67);
}

TEST_CASE("init_weights fan_in variance is close to 1/fan_in") {
  const auto spec = spec_of({100, 50, 2});
  const auto w = init_weights(spec, 42);
  double var = 0.0;
  for (int i = 0; i < 100 * 50; ++i) var += w[i] * w[i];
  var /= 100 * 50;
  CHECK(var == doctest::Approx(1.0 / 100).epsilon(0.1));
}

TEST_CASE("forward: zero weights give zero logits") {
  const auto spec = spec_of({3, 4, 2});
  const std::vector<double> w(spec.param_count(), 0.0);
  const auto z = forward(spec, w, std::vector<double>{1.0, -2.0, 0.5});
  CHECK(z.size() == 2);
  CHECK(z[0] == 0.0);
  CHECK(z[1] == 0.0);
}

TEST_CASE("forward: identity single-layer network") {
  const auto spec = spec_of({2, 2});
  std::vector<double> w(spec.param_count(), 0.0);
  w[0] = 1.0;  // row 0 = (1,0)
  w[3] = 1.0;  // row 1 = (0,1)
  const auto z = forward(spec, w, std::vector<double>{1.0, 0.0});
  CHECK(z[0] == doctest::Approx(1.0));
  CHECK(z[1] == doctest::Approx(0.0));
}

TEST_CASE("forward matches an independent re-implementation") {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const auto spec = spec_of({3, 5, 4, 3}, seed % 2 ? Activation::Relu : Activation::Tanh);
    const auto w = init_weights(spec, seed);
    std::mt19937_64 rng(seed + 99);
    std::normal_distribution<double> gauss;
    std::vector<double> x(3);
    for (auto& v : x) v = gauss(rng);
    const auto got = forward(spec, w, x);
    const auto want = forward_oracle(spec, w, x);
    for (std::size_t k = 0; k < got.size(); ++k)
      CHECK(got[k] == doctest::Approx(want[k]).epsilon(1e-12));
  }
}

TEST_CASE("forward rejects dimension mismatch") {
  const auto spec = spec_of({2, 2});
  const std::vector<double> w(spec.param_count(), 0.0);
  CHECK_THROWS_AS(forward(spec, w, std::vector<double>{1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST_CASE("softmax basics") {
  const auto u = softmax(std::vector<double>{0.0, 0.0, 0.0});
  for (double v : u) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-14));

  const auto s = softmax(std::vector<double>{1000.0, 0.0});
  CHECK(s[0] == doctest::Approx(1.0));
  CHECK(s[1] < 1e-300);
  CHECK(std::isfinite(s[0]));

  const auto p = softmax(std::vector<double>{1.0, 2.0, 3.0});
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(p[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-15));
  CHECK(p[2] == doctest::Approx(std::exp(3.0) / z).epsilon(1e-15));
}

TEST_CASE("softmax normalization and translation invariance") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> big(-1e3, 1e3);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> z(4);
    for (auto& v : z) v = big(rng);
    const auto p = softmax(z);
    double sum = 0.0;
    for (double v : p) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-12);

    const double c = big(rng);
    auto zc = z;
    for (auto& v : zc) v += c;
    const auto pc = softmax(zc);
    for (std::size_t k = 0; k < p.size(); ++k) CHECK(std::abs(p[k] - pc[k]) < 1e-12);
  }
}

TEST_CASE("neg_log_joint: uniform predictive at zero weights") {
  const auto spec = spec_of({2, 3, 2});
  const std::vector<double> w(spec.param_count(), 0.0);
  LabeledBatch b;
  b.dim = 2;
  b.inputs = {0.3, -0.7};
  b.labels = {1};
  CHECK(neg_log_joint(spec, w, b, {1.0}) == doctest::Approx(std::log(2.0)));
  // zero weights: the quadratic penalty contributes nothing regardless of lambda
  CHECK(neg_log_joint(spec, w, b, {2.0}) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("neg_log_joint matches per-example cross-entropies plus penalty") {
  const auto spec = spec_of({3, 4, 3});
  const auto w = init_weights(spec, 21);
  const auto b = random_batch(6, 3, 3, 22);
  const PriorSpec prior{0.7};
  double want = 0.0;
  for (long i = 0; i < b.size(); ++i) {
    const auto p = softmax(forward(spec, w, b.row(i)));
    want -= std::log(p[b.labels[i]]);
  }
  double sq = 0.0;
  for (double v : w) sq += v * v;
  want += 0.5 * prior.precision * sq;
  CHECK(neg_log_joint(spec, w, b, prior) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("gradient: zero inputs and zero weights leave only output-bias terms") {
  const auto spec = spec_of({2, 3});
  const std::vector<double> w(spec.param_count(), 0.0);
  LabeledBatch b;
  b.dim = 2;
  b.inputs = {0, 0, 0, 0, 0, 0};
  b.labels = {0, 1, 1};
  const auto g = grad_nll_data(spec, w, b);
  // weight-matrix gradients are zero (inputs are zero)
  for (int i = 0; i < 6; ++i) CHECK(g[i] == 0.0);
  // bias gradient: sum of softmax-minus-onehot = (3/3-1, 3/3-2, 3/3-0)
  CHECK(g[6] == doctest::Approx(0.0));
  CHECK(g[7] == doctest::Approx(-1.0));
  CHECK(g[8] == doctest::Approx(1.0));
}

TEST_CASE("gradient consistency against central finite differences (tanh)") {
  double worst = 0.0;
  for (std::uint64_t t = 0; t < 20; ++t) {
    const auto spec = spec_of({2 + int(t % 3), 4, 3}, Activation::Tanh);
    auto w = init_weights(spec, 100 + t);
    for (auto& v : w) v += 0.1;  // nonzero biases too
    const auto batch = random_batch(5, spec.input_dim(), 3, 200 + t);
    const PriorSpec prior{0.5};
    const auto g = grad_neg_log_joint(spec, w, batch, prior);
    const auto fd = finite_diff_grad(spec, w, batch, prior, 1e-5);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double denom = std::max(std::abs(fd[i]), 1e-3);
      worst = std::max(worst, std::abs(g[i] - fd[i]) / denom);
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("prior gradient contribution is exactly lambda * w") {
  const auto spec = spec_of({2, 3, 2});
  const auto w = init_weights(spec, 31);
  const auto b = random_batch(4, 2, 2, 32);
  const double lam = 1.7;
  const auto g_joint = grad_neg_log_joint(spec, w, b, {lam});
  const auto g_data = grad_nll_data(spec, w, b);
  for (std::size_t i = 0; i < w.size(); ++i)
    CHECK(g_joint[i] - g_data[i] == doctest::Approx(lam * w[i]).epsilon(1e-12));
}

TEST_CASE("finite differences on a quadratic-only objective recover lambda * w") {
  const auto spec = spec_of({2, 3, 2});
  const auto w = init_weights(spec, 41);
  LabeledBatch empty;
  empty.dim = 2;
  const double lam = 2.5;
  const auto fd = finite_diff_grad(spec, w, empty, {lam}, 1e-4);
  for (std::size_t i = 0; i < w.size(); ++i)
    CHECK(fd[i] == doctest::Approx(lam * w[i]).epsilon(1e-8));
}

TEST_CASE("finite difference error shrinks ~4x when h is halved") {
  const auto spec = spec_of({2, 4, 2}, Activation::Tanh);
  auto w = init_weights(spec, 51);
  for (auto& v : w) v += 0.05;
  const auto b = random_batch(4, 2, 2, 52);
  const PriorSpec prior{0.3};
  const auto exact = grad_neg_log_joint(spec, w, b, prior);
  auto max_err = [&](double h) {
    const auto fd = finite_diff_grad(spec, w, b, prior, h);
    double worst = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i)
      worst = std::max(worst, std::abs(fd[i] - exact[i]));
    return worst;
  };
  const double e1 = max_err(1e-2);
  const double e2 = max_err(5e-3);
  CHECK(e2 < e1 / 2.5);  // second order: ideally ~4x
}

TEST_CASE("a small gradient step decreases neg_log_joint") {
  const auto spec = spec_of({2, 4, 3}, Activation::Tanh);
  auto w = init_weights(spec, 61);
  const auto b = random_batch(10, 2, 3, 62);
  const PriorSpec prior{1.0};
  const double before = neg_log_joint(spec, w, b, prior);
  const auto g = grad_neg_log_joint(spec, w, b, prior);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= 1e-3 * g[i];
  CHECK(neg_log_joint(spec, w, b, prior) < before);
}

TEST_CASE("spec validation rejects bad shapes") {
  CHECK_THROWS_AS(spec_of({3}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(spec_of({3, 1}).validate(), std::invalid_argument);  // K must be >= 2
  CHECK_THROWS_AS(spec_of({0, 2}).validate(), std::invalid_argument);
  CHECK_NOTHROW(spec_of({3, 2}).validate());
}
