#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cpsets/nn.hpp"

namespace cps {

enum class ShiftKind { None, Translate, Rotate, GaussianNoise, FeatureScale };

ShiftKind shift_kind_from_string(const std::string& s);
const char* to_string(ShiftKind k);

/// Magnitude knobs for apply_shift; defaults scale with the blob within-class std.
struct ShiftParams {
  double translate_delta = 0.5;
  double rotate_degrees = 10.0;
  double noise_std = 0.4;
  double scale_step = 0.15;

  static ShiftParams defaults_for(double within_std);
};

struct DatasetProvenance {
  std::uint64_t seed = 0;
  ShiftKind shift_kind = ShiftKind::None;
  int intensity = 0;
  int num_classes = 0;
  double class_sep = 0.0;
  double within_std = 0.0;
};

struct SyntheticDataset {
  LabeledBatch batch;
  DatasetProvenance provenance;

  long size() const { return batch.size(); }
  int dim() const { return batch.dim; }
};

struct SplitSpec {
  std::array<double, 4> fractions{0.7, 0.1, 0.1, 0.1};  // train/val/cal/test
  std::uint64_t seed = 0;
  void validate() const;
};

struct SplitResult {
  SyntheticDataset train, val, calibration, test;
};

/// Balanced K-class Gaussian blobs: class means on a seeded sphere of radius
/// class_sep, isotropic within-class noise. Deterministic per seed.
SyntheticDataset make_blobs(int num_classes, int dim, long n, double class_sep,
                            double within_std, std::uint64_t seed);

/// Regenerates the class means make_blobs(seed) used, row-major K x d.
std::vector<double> blob_means(int num_classes, int dim, double class_sep, std::uint64_t seed);

/// True conditional class probabilities of the blob mixture at x (balanced classes).
std::vector<double> blob_posterior(std::span<const double> means, int num_classes, int dim,
                                   double within_std, std::span<const double> x);

SyntheticDataset apply_shift(const SyntheticDataset& ds, ShiftKind kind, int intensity,
                             const ShiftParams& params);

SyntheticDataset apply_shift(const SyntheticDataset& ds, ShiftKind kind, int intensity);

SplitResult split(const SyntheticDataset& ds, const SplitSpec& spec);

/// CSV with header x0..x{d-1},label plus a <path>.meta.json provenance sidecar.
void save_csv(const SyntheticDataset& ds, const std::string& path);
SyntheticDataset load_csv(const std::string& path);

}  // namespace cps
