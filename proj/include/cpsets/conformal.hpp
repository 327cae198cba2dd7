#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace cps {

/// Length-K categorical output of a predictive model for one input.
struct ProbVector {
  std::vector<double> probs;
  int num_classes() const { return static_cast<int>(probs.size()); }
  void validate() const;  // entries >= 0, sum within 1e-6 of 1
};

/// Subset of the K labels, kept as a sorted list of label indices.
struct PredictionSet {
  std::vector<int> members;
  bool contains(int y) const;
  std::size_t size() const { return members.size(); }
  bool empty() const { return members.empty(); }
};

enum class ScoreKind { Thr, Aps };

ScoreKind score_kind_from_string(const std::string& s);
const char* to_string(ScoreKind k);

/// Fitted conformal threshold. tau == +infinity means every candidate is admitted.
struct ConformalCalibration {
  double tau = 0.0;
  double alpha = 0.1;
  long n_cal = 0;
  ScoreKind kind = ScoreKind::Thr;
  std::uint64_t seed = 0;
};

/// Smallest set whose cumulative probability strictly exceeds 1 - alpha.
/// Descending probability order, ties broken by ascending label index. Never empty.
PredictionSet credible_set(const ProbVector& p, double alpha);

/// 1 - p[y].
double thr_score(const ProbVector& p, int y);

/// Cumulative mass strictly above y's sorted position plus u * p[y].
double aps_score(const ProbVector& p, int y, double u);

/// k-th smallest score with k = ceil((n+1)(1-alpha)); +infinity when k > n.
double conformal_quantile(std::span<const double> scores, double alpha);

ConformalCalibration calibrate(std::span<const ProbVector> probs, std::span<const int> labels,
                               double alpha, ScoreKind kind, std::uint64_t seed);

/// thr: {y : 1-p[y] <= tau}. aps: one uniform draw u shared across the candidate
/// labels of this input, {y : aps_score(p,y,u) <= tau}.
PredictionSet predict_set(const ProbVector& p, const ConformalCalibration& cal,
                          std::mt19937_64& rng);

/// Same, with the uniform draw supplied explicitly (ignored for thr).
PredictionSet predict_set_with_u(const ProbVector& p, const ConformalCalibration& cal, double u);

/// Labels sorted by descending probability, ties by ascending index.
std::vector<int> sorted_labels(const ProbVector& p);

}  // namespace cps
