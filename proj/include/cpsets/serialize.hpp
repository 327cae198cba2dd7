#pragma once

#include <cstdint>
#include <string>

#include "cpsets/conformal.hpp"
#include "cpsets/inference.hpp"

namespace cps {

struct Checkpoint {
  NetworkSpec spec;
  PosteriorApproximation posterior;
  std::uint64_t seed = 0;
};

/// One-line JSON header (kind, spec, array shapes, seed) followed by a raw
/// little-endian f64 payload. Round-trips bit-exact.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// {"tau": number or "inf", "alpha", "n_cal", "kind", "seed"}
void save_calibration(const ConformalCalibration& cal, const std::string& path);
ConformalCalibration load_calibration(const std::string& path);

std::string calibration_to_json(const ConformalCalibration& cal);
ConformalCalibration calibration_from_json(const std::string& text);

}  // namespace cps
