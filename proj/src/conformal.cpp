#include "cpsets/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace cps {

void ProbVector::validate() const {
  if (probs.empty()) throw std::invalid_argument("ProbVector must be non-empty");
  double sum = 0.0;
  for (double v : probs) {
    if (!(v >= 0.0)) throw std::invalid_argument("ProbVector entries must be >= 0");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw std::invalid_argument("ProbVector entries must sum to 1");
}

bool PredictionSet::contains(int y) const {
  return std::binary_search(members.begin(), members.end(), y);
}

ScoreKind score_kind_from_string(const std::string& s) {
  if (s == "thr") return ScoreKind::Thr;
  if (s == "aps") return ScoreKind::Aps;
  throw std::invalid_argument("unknown score kind: " + s);
}

const char* to_string(ScoreKind k) { return k == ScoreKind::Thr ? "thr" : "aps"; }

std::vector<int> sorted_labels(const ProbVector& p) {
  std::vector<int> order(p.probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return p.probs[a] > p.probs[b]; });
  return order;
}

PredictionSet credible_set(const ProbVector& p, double alpha) {
  p.validate();
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in (0,1)");
  const auto order = sorted_labels(p);
  PredictionSet set;
  double mass = 0.0;
  for (int y : order) {
    set.members.push_back(y);
    mass += p.probs[y];
    if (mass > 1.0 - alpha) break;
  }
  std::sort(set.members.begin(), set.members.end());
  return set;
}

double thr_score(const ProbVector& p, int y) {
  if (y < 0 || y >= p.num_classes()) throw std::invalid_argument("label out of range");
  return 1.0 - p.probs[y];
}

double aps_score(const ProbVector& p, int y, double u) {
  if (y < 0 || y >= p.num_classes()) throw std::invalid_argument("label out of range");
  const auto order = sorted_labels(p);
  double above = 0.0;
  for (int lbl : order) {
    if (lbl == y) break;
    above += p.probs[lbl];
  }
  return above + u * p.probs[y];
}

double conformal_quantile(std::span<const double> scores, double alpha) {
  if (scores.empty()) throw std::invalid_argument("conformal_quantile: empty scores");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in (0,1)");
  const long n = static_cast<long>(scores.size());
  const long k = static_cast<long>(std::ceil((double(n) + 1.0) * (1.0 - alpha)));
  if (k > n) return std::numeric_limits<double>::infinity();
  std::vector<double> sorted(scores.begin(), scores.end());
  std::nth_element(sorted.begin(), sorted.begin() + (k - 1), sorted.end());
  return sorted[k - 1];
}

ConformalCalibration calibrate(std::span<const ProbVector> probs, std::span<const int> labels,
                               double alpha, ScoreKind kind, std::uint64_t seed) {
  if (probs.size() != labels.size())
    throw std::invalid_argument("calibrate: probs/labels length mismatch");
  if (probs.empty()) throw std::invalid_argument("calibrate: empty calibration set");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> scores(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    scores[i] = kind == ScoreKind::Thr ? thr_score(probs[i], labels[i])
                                       : aps_score(probs[i], labels[i], unif(rng));
  }
  ConformalCalibration cal;
  cal.tau = conformal_quantile(scores, alpha);
  cal.alpha = alpha;
  cal.n_cal = static_cast<long>(probs.size());
  cal.kind = kind;
  cal.seed = seed;
  return cal;
}

PredictionSet predict_set_with_u(const ProbVector& p, const ConformalCalibration& cal,
                                 double u) {
  p.validate();
  PredictionSet set;
  const int K = p.num_classes();
  if (std::isinf(cal.tau)) {
    set.members.resize(K);
    std::iota(set.members.begin(), set.members.end(), 0);
    return set;
  }
  if (cal.kind == ScoreKind::Thr) {
    for (int y = 0; y < K; ++y)
      if (1.0 - p.probs[y] <= cal.tau) set.members.push_back(y);
  } else {
    // cumulative mass above each label's sorted position, one shared u
    const auto order = sorted_labels(p);
    double above = 0.0;
    for (int lbl : order) {
      if (above + u * p.probs[lbl] <= cal.tau) set.members.push_back(lbl);
      above += p.probs[lbl];
    }
    std::sort(set.members.begin(), set.members.end());
  }
  return set;
}

PredictionSet predict_set(const ProbVector& p, const ConformalCalibration& cal,
                          std::mt19937_64& rng) {
  double u = 0.0;
  if (cal.kind == ScoreKind::Aps)
    u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return predict_set_with_u(p, cal, u);
}

}  // namespace cps
