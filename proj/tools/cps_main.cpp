// Command-line driver for the cpsets pipeline. Talks to the library through
// the C API only.
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cpsets.h"

int main(int argc, char** argv) {
  CLI::App app{"cpsets: conformal prediction sets over Bayesian posterior approximations"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  std::vector<double> alphas;
  int jobs = 1;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config file")->required();
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--seed", seed, "override the data seed");
    cmd->add_option("--alpha", alphas, "error tolerance (repeatable)");
    cmd->add_option("--jobs", jobs, "parallel jobs for independent work");
  };

  const char* stages[] = {"generate-data", "train", "calibrate", "evaluate", "diagnose",
                          "run-all"};
  const char* help[] = {
      "generate the synthetic splits and shifted test variants",
      "train every configured method and write checkpoints",
      "fit conformal thresholds per method/alpha/eval-seed",
      "evaluate coverage and set size over the full grid",
      "report per-method over/under-confidence on the calibration data",
      "run every stage in order",
  };
  for (int i = 0; i < 6; ++i) add_common(app.add_subcommand(stages[i], help[i]));

  CLI11_PARSE(app, argc, argv);

  const std::string stage = app.get_subcommands().front()->get_name();
  const int rc = cps_pipeline_run(config_path.c_str(), out_dir.c_str(), stage.c_str(), jobs,
                                  seed, alphas.empty() ? nullptr : alphas.data(),
                                  static_cast<int>(alphas.size()));
  if (rc != CPS_OK) {
    std::fprintf(stderr, "error: %s\n", cps_last_error());
    return 1;
  }
  return 0;
}
