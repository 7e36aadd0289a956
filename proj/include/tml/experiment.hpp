#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tml/evaluator.hpp"
#include "tml/synthdata.hpp"
#include "tml/trainer.hpp"

namespace tml {

struct DatasetSection {
  GeneratorConfig gen;
  std::string path;  // consumed by train/eval/sweep/cam; gen-data writes <out>/dataset
};

struct TrainSection {
  TrainConfig cfg;
  int val_fold = 0;  // held-out fold for cmd_train and cmd_cam galleries
};

struct EvalSection {
  EvalConfig cfg;
  int folds = 5;
};

struct SweepSection {
  std::vector<double> margins = {0.1, 0.2, 0.5, 1.0};
  std::vector<int> embedding_sizes = {0, 16, 32};
  std::vector<int> degrees = {1, 10, 25, 50, 100};
  int repeats = 10;
};

struct CamSection {
  double target_specificity = 0.95;
  int dilation_px = 2;
  int max_gallery = 12;
};

struct ExperimentConfig {
  DatasetSection dataset;
  TrainSection train;
  EvalSection eval;
  SweepSection sweep;
  CamSection cam;
  uint64_t seed = 1;
};

// Strict parse: unknown keys anywhere are configuration errors.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Every field materialized, defaults included, stable key order.
nlohmann::ordered_json resolved_config_json(const ExperimentConfig& cfg);

uint64_t fnv1a64(const std::string& text);

// Writes <out>/run.json with command, seed, jobs, version, config hash and
// the resolved config. Refuses a directory that already holds a run record.
void write_run_record(const std::filesystem::path& out_dir, const std::string& command,
                      const ExperimentConfig& cfg, int jobs);

void cmd_gen_data(const ExperimentConfig& cfg, const std::filesystem::path& out, int jobs);
void cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out, int jobs);
void cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& out, int jobs);
void cmd_sweep(const ExperimentConfig& cfg, const std::string& kind,
               const std::filesystem::path& out, int jobs);
void cmd_cam(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
             const std::vector<std::pair<int, int>>& frames, const std::filesystem::path& out,
             int jobs);

}  // namespace tml
