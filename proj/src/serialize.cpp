#include "cpsets/serialize.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian f64");

namespace cps {

namespace {

using nlohmann::json;

struct ArrayRef {
  std::string name;
  const std::vector<double>* data;
};

std::vector<ArrayRef> arrays_of(const PosteriorApproximation& p) {
  struct V {
    std::vector<ArrayRef> operator()(const Point& p) const {
      return {{"weights", &p.weights}};
    }
    std::vector<ArrayRef> operator()(const Ensemble& e) const {
      std::vector<ArrayRef> out;
      for (std::size_t j = 0; j < e.members.size(); ++j)
        out.push_back({"member_" + std::to_string(j), &e.members[j]});
      return out;
    }
    std::vector<ArrayRef> operator()(const MeanField& q) const {
      return {{"means", &q.means}, {"log_sigmas", &q.log_sigmas}};
    }
    std::vector<ArrayRef> operator()(const SampleChain& c) const {
      std::vector<ArrayRef> out;
      for (std::size_t j = 0; j < c.samples.size(); ++j)
        out.push_back({"sample_" + std::to_string(j), &c.samples[j]});
      return out;
    }
    std::vector<ArrayRef> operator()(const LaplaceLastLayer& l) const {
      return {{"map_weights", &l.map_weights},
              {"last_layer_mean", &l.last_layer_mean},
              {"last_layer_cov", &l.last_layer_cov}};
    }
  };
  return std::visit(V{}, p);
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const auto arrays = arrays_of(ckpt.posterior);
  json header = {
      {"magic", "cpsets-checkpoint"},
      {"version", 1},
      {"kind", posterior_kind(ckpt.posterior)},
      {"spec", {{"layer_widths", ckpt.spec.layer_widths},
                {"activation", to_string(ckpt.spec.activation)}}},
      {"seed", ckpt.seed},
  };
  json shapes = json::array();
  for (const auto& a : arrays) shapes.push_back({{"name", a.name}, {"len", a.data->size()}});
  header["arrays"] = shapes;
  if (const auto* lap = std::get_if<LaplaceLastLayer>(&ckpt.posterior))
    header["feature_dim"] = lap->feature_dim;

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  f << header.dump() << "\n";
  for (const auto& a : arrays)
    f.write(reinterpret_cast<const char*>(a.data->data()),
            static_cast<std::streamsize>(a.data->size() * sizeof(double)));
  if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::string header_line;
  if (!std::getline(f, header_line))
    throw std::runtime_error("load_checkpoint: missing header in " + path);
  const auto header = json::parse(header_line);
  if (header.value("magic", "") != "cpsets-checkpoint")
    throw std::runtime_error("load_checkpoint: bad magic in " + path);

  Checkpoint ckpt;
  ckpt.spec.layer_widths = header.at("spec").at("layer_widths").get<std::vector<int>>();
  ckpt.spec.activation = activation_from_string(header.at("spec").at("activation"));
  ckpt.seed = header.value("seed", std::uint64_t{0});

  std::vector<std::vector<double>> payload;
  for (const auto& entry : header.at("arrays")) {
    const std::size_t len = entry.at("len").get<std::size_t>();
    std::vector<double> arr(len);
    f.read(reinterpret_cast<char*>(arr.data()), static_cast<std::streamsize>(len * sizeof(double)));
    if (!f) throw std::runtime_error("load_checkpoint: truncated payload in " + path);
    payload.push_back(std::move(arr));
  }

  const std::string kind = header.at("kind");
  if (kind == "point") {
    ckpt.posterior = Point{std::move(payload.at(0))};
  } else if (kind == "ensemble") {
    ckpt.posterior = Ensemble{std::move(payload)};
  } else if (kind == "mean_field") {
    ckpt.posterior = MeanField{std::move(payload.at(0)), std::move(payload.at(1))};
  } else if (kind == "sample_chain") {
    ckpt.posterior = SampleChain{std::move(payload)};
  } else if (kind == "laplace_last_layer") {
    LaplaceLastLayer lap;
    lap.map_weights = std::move(payload.at(0));
    lap.last_layer_mean = std::move(payload.at(1));
    lap.last_layer_cov = std::move(payload.at(2));
    lap.feature_dim = header.at("feature_dim").get<int>();
    ckpt.posterior = std::move(lap);
  } else {
    throw std::runtime_error("load_checkpoint: unknown kind " + kind);
  }
  return ckpt;
}

std::string calibration_to_json(const ConformalCalibration& cal) {
  json j = {
      {"alpha", cal.alpha},
      {"n_cal", cal.n_cal},
      {"kind", to_string(cal.kind)},
      {"seed", cal.seed},
  };
  if (std::isinf(cal.tau))
    j["tau"] = "inf";
  else
    j["tau"] = cal.tau;
  return j.dump(2);
}

ConformalCalibration calibration_from_json(const std::string& text) {
  const auto j = json::parse(text);
  ConformalCalibration cal;
  if (j.at("tau").is_string()) {
    if (j.at("tau") != "inf")
      throw std::runtime_error("calibration_from_json: bad tau string");
    cal.tau = std::numeric_limits<double>::infinity();
  } else {
    cal.tau = j.at("tau").get<double>();
  }
  cal.alpha = j.at("alpha").get<double>();
  cal.n_cal = j.at("n_cal").get<long>();
  cal.kind = score_kind_from_string(j.at("kind"));
  cal.seed = j.at("seed").get<std::uint64_t>();
  return cal;
}

void save_calibration(const ConformalCalibration& cal, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_calibration: cannot open " + path);
  f << calibration_to_json(cal) << "\n";
}

ConformalCalibration load_calibration(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_calibration: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return calibration_from_json(text);
}

}  // namespace cps
