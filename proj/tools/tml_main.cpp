#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "tml/common.hpp"
#include "tml/experiment.hpp"

namespace {

std::pair<int, int> parse_frame_selector(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
    throw tml::ConfigError("bad --frame '" + text + "', expected PROCEDURE:FRAME");
  }
  try {
    return {std::stoi(text.substr(0, colon)), std::stoi(text.substr(colon + 1))};
  } catch (const std::exception&) {
    throw tml::ConfigError("bad --frame '" + text + "', expected PROCEDURE:FRAME");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"metric-learning experiments for rare-event frame detection"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir;
  uint64_t seed = 0;
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  app.add_option("--config", config_path, "experiment config (JSON)");
  CLI::Option* seed_opt = app.add_option("--seed", seed, "override the config seed");
  app.add_option("--out", out_dir, "output directory (must not hold a previous run)")->required();
  app.add_option("--jobs", jobs, "worker threads for fold/sweep parallelism")
      ->check(CLI::PositiveNumber);

  CLI::App* c_gen = app.add_subcommand("gen-data", "render a synthetic dataset");
  CLI::App* c_train = app.add_subcommand("train", "train one model, hold out one fold");
  CLI::App* c_eval = app.add_subcommand("eval", "procedure-grouped cross-validation");
  CLI::App* c_sweep = app.add_subcommand("sweep", "margin, embedding or imbalance sweep");
  CLI::App* c_cam = app.add_subcommand("cam", "class activation maps for a checkpoint");

  std::string sweep_kind;
  c_sweep->add_option("--kind", sweep_kind, "margin | embedding | imbalance")->required();

  std::string checkpoint;
  std::vector<std::string> frame_args;
  c_cam->add_option("--checkpoint", checkpoint, "model file from a train run")->required();
  c_cam->add_option("--frame", frame_args, "explicit PROCEDURE:FRAME to map (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    tml::ExperimentConfig cfg = tml::load_experiment_config(config_path);
    if (seed_opt->count() > 0) {
      cfg.seed = seed;
      cfg.dataset.gen.seed = seed;
      cfg.train.cfg.seed = seed;
    }
    if (c_gen->parsed()) {
      tml::cmd_gen_data(cfg, out_dir, jobs);
    } else if (c_train->parsed()) {
      tml::cmd_train(cfg, out_dir, jobs);
    } else if (c_eval->parsed()) {
      tml::cmd_eval(cfg, out_dir, jobs);
    } else if (c_sweep->parsed()) {
      tml::cmd_sweep(cfg, sweep_kind, out_dir, jobs);
    } else if (c_cam->parsed()) {
      std::vector<std::pair<int, int>> frames;
      frames.reserve(frame_args.size());
      for (const std::string& f : frame_args) frames.push_back(parse_frame_selector(f));
      tml::cmd_cam(cfg, checkpoint, frames, out_dir, jobs);
    }
  } catch (const tml::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
