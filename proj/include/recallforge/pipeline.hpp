#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "recallforge/calibration.hpp"
#include "recallforge/oracle.hpp"
#include "recallforge/ranker.hpp"
#include "recallforge/synth.hpp"

namespace recallforge {

enum class CalibratorMode : int { WilsonRnd = 0, WilsonHash = 1, Ivw1 = 2, Proposed = 3 };

const char* mode_name(CalibratorMode mode);
CalibratorMode parse_mode(const std::string& name);

struct PipelineConfig {
  std::string source_path = "data/sources.csv";
  std::string target_path = "data/targets.csv";
  std::string truth_path = "data/truth.csv";
  std::string out_dir = "out";

  double recall_target = 0.80;
  double alpha = 0.10;
  std::uint64_t seed = 2025;
  std::size_t train_sample = 80000;
  std::size_t train_labels = 2000;
  std::size_t calib_sample = 117000;
  std::size_t subsamples = 9;  // K
  std::size_t bootstrap = 200;  // B
  std::size_t budget = 50000;
  CalibratorMode mode = CalibratorMode::Proposed;
  EnsembleMode ensemble = EnsembleMode::Min;
  unsigned threads = 0;  // 0 = hardware concurrency

  TrainConfig train;
  MatchPredicateConfig predicate;
  SynthConfig synth;

  std::vector<CalibratorMode> experiment_modes = {
      CalibratorMode::Proposed, CalibratorMode::Ivw1, CalibratorMode::WilsonHash,
      CalibratorMode::WilsonRnd};
  std::vector<double> experiment_targets = {0.70, 0.80, 0.90};
  bool vary_init = true;  // false pins every per-trial seed to trial 0

  // 0 lets the neural-init seed derive from (seed, trial).
  std::uint64_t init_seed = 0;
};

// Effective per-trial seeds; echoed into every report.
std::uint64_t trial_seed(const PipelineConfig& cfg, std::uint64_t trial);
std::uint64_t effective_init_seed(const PipelineConfig& cfg, std::uint64_t trial);
std::uint64_t wilson_rnd_seed(const PipelineConfig& cfg, std::uint64_t trial);

PipelineConfig desk_defaults();

// INI-style config: [section] headers, key = value lines, # or ; comments.
// Unknown sections or keys are errors. Values not present keep the desk
// defaults.
PipelineConfig load_config(const std::string& path);

// Individual stages, each consuming and producing the on-disk artifacts
// (geometry CSVs, candidates.rfcs, model.rfnn, scores.rfsc) so any stage can
// be rerun in isolation with bit-identical downstream results.
void cmd_generate(const PipelineConfig& cfg);
void cmd_filter(const PipelineConfig& cfg);
void cmd_train(const PipelineConfig& cfg);
void cmd_score(const PipelineConfig& cfg);
nlohmann::ordered_json cmd_calibrate(const PipelineConfig& cfg, std::uint64_t trial = 0);

struct RunOutcome {
  nlohmann::ordered_json report;
  double tau = 0.0;
  double achieved_recall = 0.0;
  bool attainable = true;
};

// Full pipeline: filter, train, score, calibrate, verify; writes report.json
// into out_dir and returns the same report.
RunOutcome run_pipeline(const PipelineConfig& cfg);

struct ExperimentCell {
  CalibratorMode mode = CalibratorMode::Proposed;
  double target = 0.0;
  std::vector<double> recalls;  // one per trial
  double recall_mean = 0.0;
  double recall_sd = 0.0;
  double review_fraction_mean = 0.0;
  double tau_mean = 0.0;
};

struct ExperimentOutcome {
  nlohmann::ordered_json report;
  std::vector<ExperimentCell> cells;
};

// Multi-trial harness: upstream stages are shared, only the neural-init seed
// (and the random-baseline sample seed) vary per trial; every configured
// mode and target is calibrated against the same per-trial scores. Writes
// experiment.json into out_dir.
ExperimentOutcome run_experiment(const PipelineConfig& cfg, std::size_t trials);

// Score file: magic RFSC, version u16, count u64, then f64 LE scores in
// candidate (CSR flat) order.
void write_scores(const std::string& path, const std::vector<double>& scores);
std::vector<double> read_scores(const std::string& path);

}  // namespace recallforge
