#include "cpsets/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace cps {

ShiftKind shift_kind_from_string(const std::string& s) {
  if (s == "none") return ShiftKind::None;
  if (s == "translate") return ShiftKind::Translate;
  if (s == "rotate") return ShiftKind::Rotate;
  if (s == "gaussian_noise") return ShiftKind::GaussianNoise;
  if (s == "feature_scale") return ShiftKind::FeatureScale;
  throw std::invalid_argument("unknown shift kind: " + s);
}

const char* to_string(ShiftKind k) {
  switch (k) {
    case ShiftKind::None: return "none";
    case ShiftKind::Translate: return "translate";
    case ShiftKind::Rotate: return "rotate";
    case ShiftKind::GaussianNoise: return "gaussian_noise";
    default: return "feature_scale";
  }
}

ShiftParams ShiftParams::defaults_for(double within_std) {
  ShiftParams p;
  p.translate_delta = 0.5 * within_std;
  p.noise_std = 0.4 * within_std;
  return p;
}

void SplitSpec::validate() const {
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw std::invalid_argument("split fractions must be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("split fractions must sum to 1");
}

std::vector<double> blob_means(int num_classes, int dim, double class_sep, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> means(static_cast<std::size_t>(num_classes) * dim);
  for (int k = 0; k < num_classes; ++k) {
    double norm2 = 0.0;
    for (int j = 0; j < dim; ++j) {
      const double v = gauss(rng);
      means[static_cast<std::size_t>(k) * dim + j] = v;
      norm2 += v * v;
    }
    const double scale = class_sep / std::max(std::sqrt(norm2), 1e-12);
    for (int j = 0; j < dim; ++j) means[static_cast<std::size_t>(k) * dim + j] *= scale;
  }
  return means;
}

SyntheticDataset make_blobs(int num_classes, int dim, long n, double class_sep,
                            double within_std, std::uint64_t seed) {
  if (num_classes < 2) throw std::invalid_argument("make_blobs: K must be >= 2");
  if (dim < 2) throw std::invalid_argument("make_blobs: d must be >= 2");
  if (n < num_classes) throw std::invalid_argument("make_blobs: n must be >= K");
  if (within_std < 0.0) throw std::invalid_argument("make_blobs: within_std must be >= 0");

  const auto means = blob_means(num_classes, dim, class_sep, seed);
  std::mt19937_64 rng(seed + 0x6a09e667f3bcc909ULL);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SyntheticDataset ds;
  ds.batch.dim = dim;
  ds.batch.inputs.resize(static_cast<std::size_t>(n) * dim);
  ds.batch.labels.resize(n);
  for (long i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % num_classes);
    ds.batch.labels[i] = y;
    for (int j = 0; j < dim; ++j)
      ds.batch.inputs[static_cast<std::size_t>(i) * dim + j] =
          means[static_cast<std::size_t>(y) * dim + j] + within_std * gauss(rng);
  }
  ds.provenance = {seed, ShiftKind::None, 0, num_classes, class_sep, within_std};
  return ds;
}

std::vector<double> blob_posterior(std::span<const double> means, int num_classes, int dim,
                                   double within_std, std::span<const double> x) {
  // balanced mixture of isotropic Gaussians: softmax of -||x - mu_k||^2 / (2 s^2)
  std::vector<double> logits(num_classes);
  const double inv2s2 = 1.0 / (2.0 * within_std * within_std);
  for (int k = 0; k < num_classes; ++k) {
    double d2 = 0.0;
    for (int j = 0; j < dim; ++j) {
      const double diff = x[j] - means[static_cast<std::size_t>(k) * dim + j];
      d2 += diff * diff;
    }
    logits[k] = -d2 * inv2s2;
  }
  return softmax(logits);
}

SyntheticDataset apply_shift(const SyntheticDataset& ds, ShiftKind kind, int intensity,
                             const ShiftParams& params) {
  if (kind == ShiftKind::None) throw std::invalid_argument("apply_shift: kind must not be none");
  if (intensity < 1 || intensity > 5)
    throw std::invalid_argument("apply_shift: intensity must be in 1..5");

  SyntheticDataset out = ds;
  out.provenance.shift_kind = kind;
  out.provenance.intensity = intensity;
  const int d = ds.dim();
  const long n = ds.size();

  switch (kind) {
    case ShiftKind::Translate: {
      const double step = intensity * params.translate_delta / std::sqrt(double(d));
      for (double& v : out.batch.inputs) v += step;
      break;
    }
    case ShiftKind::Rotate: {
      if (d < 2) throw std::invalid_argument("apply_shift: rotate needs d >= 2");
      const double theta = intensity * params.rotate_degrees * M_PI / 180.0;
      const double c = std::cos(theta), s = std::sin(theta);
      for (long i = 0; i < n; ++i) {
        double& x0 = out.batch.inputs[static_cast<std::size_t>(i) * d];
        double& x1 = out.batch.inputs[static_cast<std::size_t>(i) * d + 1];
        const double a = x0, b = x1;
        x0 = c * a - s * b;
        x1 = s * a + c * b;
      }
      break;
    }
    case ShiftKind::GaussianNoise: {
      std::mt19937_64 rng(ds.provenance.seed + 0x9e3779b9ULL * (intensity + 7));
      std::normal_distribution<double> gauss(0.0, intensity * params.noise_std);
      for (double& v : out.batch.inputs) v += gauss(rng);
      break;
    }
    case ShiftKind::FeatureScale: {
      const double factor = 1.0 + intensity * params.scale_step;
      for (double& v : out.batch.inputs) v *= factor;
      break;
    }
    default:
      break;
  }
  return out;
}

SyntheticDataset apply_shift(const SyntheticDataset& ds, ShiftKind kind, int intensity) {
  return apply_shift(ds, kind, intensity, ShiftParams::defaults_for(ds.provenance.within_std));
}

namespace {

SyntheticDataset take_rows(const SyntheticDataset& ds, std::span<const long> idx) {
  SyntheticDataset out;
  out.provenance = ds.provenance;
  out.batch.dim = ds.dim();
  out.batch.labels.reserve(idx.size());
  out.batch.inputs.reserve(idx.size() * ds.dim());
  for (long i : idx) {
    out.batch.labels.push_back(ds.batch.labels[i]);
    const auto row = ds.batch.row(i);
    out.batch.inputs.insert(out.batch.inputs.end(), row.begin(), row.end());
  }
  return out;
}

}  // namespace

SplitResult split(const SyntheticDataset& ds, const SplitSpec& spec) {
  spec.validate();
  const long n = ds.size();
  std::vector<long> order(n);
  std::iota(order.begin(), order.end(), 0L);
  std::mt19937_64 rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);

  // cumulative rounding keeps the partition exhaustive
  std::array<long, 5> bounds{0, 0, 0, 0, n};
  double cum = 0.0;
  for (int i = 0; i < 3; ++i) {
    cum += spec.fractions[i];
    bounds[i + 1] = std::llround(cum * n);
  }
  SplitResult out;
  SyntheticDataset* parts[4] = {&out.train, &out.val, &out.calibration, &out.test};
  for (int i = 0; i < 4; ++i) {
    std::span<const long> idx(order.data() + bounds[i], static_cast<std::size_t>(bounds[i + 1] - bounds[i]));
    *parts[i] = take_rows(ds, idx);
  }
  return out;
}

void save_csv(const SyntheticDataset& ds, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_csv: cannot open " + path);
  const int d = ds.dim();
  for (int j = 0; j < d; ++j) f << "x" << j << ",";
  f << "label\n";
  char buf[40];
  for (long i = 0; i < ds.size(); ++i) {
    for (int j = 0; j < d; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", ds.batch.inputs[static_cast<std::size_t>(i) * d + j]);
      f << buf << ",";
    }
    f << ds.batch.labels[i] << "\n";
  }
  if (!f) throw std::runtime_error("save_csv: write failed for " + path);

  nlohmann::json meta = {
      {"seed", ds.provenance.seed},
      {"shift_kind", to_string(ds.provenance.shift_kind)},
      {"intensity", ds.provenance.intensity},
      {"num_classes", ds.provenance.num_classes},
      {"class_sep", ds.provenance.class_sep},
      {"within_std", ds.provenance.within_std},
  };
  std::ofstream mf(path + ".meta.json");
  if (!mf) throw std::runtime_error("save_csv: cannot open " + path + ".meta.json");
  mf << meta.dump(2) << "\n";
}

namespace {

double parse_double(std::string_view tok, long line_no) {
  double v = 0.0;
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc{} || ptr != end)
    throw std::runtime_error("load_csv: bad number at line " + std::to_string(line_no));
  return v;
}

}  // namespace

SyntheticDataset load_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_csv: cannot open " + path);

  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("load_csv: empty file " + path);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) header.push_back(tok);
  }
  if (header.empty() || header.back() != "label")
    throw std::runtime_error("load_csv: missing label column in " + path);
  const int d = static_cast<int>(header.size()) - 1;
  if (d < 1) throw std::runtime_error("load_csv: no feature columns in " + path);

  SyntheticDataset ds;
  ds.batch.dim = d;
  long line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::string_view sv(line);
    for (int j = 0; j < d; ++j) {
      const auto pos = sv.find(',');
      if (pos == std::string_view::npos)
        throw std::runtime_error("load_csv: too few columns at line " + std::to_string(line_no));
      ds.batch.inputs.push_back(parse_double(sv.substr(0, pos), line_no));
      sv.remove_prefix(pos + 1);
    }
    if (sv.find(',') != std::string_view::npos)
      throw std::runtime_error("load_csv: too many columns at line " + std::to_string(line_no));
    int label = 0;
    const auto* end = sv.data() + sv.size();
    auto [ptr, ec] = std::from_chars(sv.data(), end, label);
    if (ec != std::errc{} || ptr != end || label < 0)
      throw std::runtime_error("load_csv: bad label at line " + std::to_string(line_no));
    ds.batch.labels.push_back(label);
  }

  std::ifstream mf(path + ".meta.json");
  if (mf) {
    const auto meta = nlohmann::json::parse(mf);
    ds.provenance.seed = meta.value("seed", std::uint64_t{0});
    ds.provenance.shift_kind = shift_kind_from_string(meta.value("shift_kind", "none"));
    ds.provenance.intensity = meta.value("intensity", 0);
    ds.provenance.num_classes = meta.value("num_classes", 0);
    ds.provenance.class_sep = meta.value("class_sep", 0.0);
    ds.provenance.within_std = meta.value("within_std", 0.0);
  }
  if (ds.provenance.num_classes == 0 && !ds.batch.labels.empty())
    ds.provenance.num_classes = *std::max_element(ds.batch.labels.begin(), ds.batch.labels.end()) + 1;
  return ds;
}

}  // namespace cps
