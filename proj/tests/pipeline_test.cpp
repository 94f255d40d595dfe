#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "recallforge/common.hpp"
#include "recallforge/xxhash64.hpp"
#include "recallforge/pipeline.hpp"

using namespace recallforge;
namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Drops every timing-related key, at any depth, so two reports produced by
// runs with different wall clocks or thread counts can be compared whole.
void scrub_volatile(ordered_json& j) {
  if (j.is_object()) {
    j.erase("timings");
    j.erase("threads");
    for (auto& kv : j.items()) scrub_volatile(kv.value());
  } else if (j.is_array()) {
    for (auto& el : j) scrub_volatile(el);
  }
}

void write_text(const fs::path& p, const std::string& body) {
  std::ofstream os(p);
  os << body;
  REQUIRE(os.good());
}

// Small corpus that still produces a few thousand candidates and a healthy
// positive rate, so training quotas and calibration subsamples all fill.
PipelineConfig tiny_config(const fs::path& dir) {
  PipelineConfig cfg = desk_defaults();
  cfg.source_path = (dir / "sources.csv").string();
  cfg.target_path = (dir / "targets.csv").string();
  cfg.truth_path = (dir / "truth.csv").string();
  cfg.out_dir = (dir / "out").string();
  cfg.synth.n_source = 250;
  cfg.synth.n_target = 1000;
  cfg.synth.world_extent = 12.0;
  cfg.train_sample = 20000;
  cfg.train_labels = 240;
  cfg.calib_sample = 5000;
  cfg.subsamples = 5;
  cfg.bootstrap = 60;
  cfg.budget = 1000000;
  cfg.threads = 2;
  cfg.train.max_epochs = 6;
  cfg.train.patience = 2;
  return cfg;
}

}  // namespace

TEST_CASE("mode names round trip") {
  const CalibratorMode modes[] = {CalibratorMode::Proposed, CalibratorMode::Ivw1,
                                  CalibratorMode::WilsonHash, CalibratorMode::WilsonRnd};
  for (const CalibratorMode m : modes) {
    CHECK(parse_mode(mode_name(m)) == m);
  }
  CHECK(std::string(mode_name(CalibratorMode::Proposed)) == "proposed");
  CHECK(std::string(mode_name(CalibratorMode::Ivw1)) == "ivw_1");
  CHECK(std::string(mode_name(CalibratorMode::WilsonHash)) == "wilson_hash");
  CHECK(std::string(mode_name(CalibratorMode::WilsonRnd)) == "wilson_rnd");
  CHECK_THROWS_AS(parse_mode("nonsense"), InputError);
  CHECK_THROWS_AS(parse_mode(""), InputError);
}

TEST_CASE("per-trial seeds derive as documented") {
  PipelineConfig cfg;
  cfg.seed = 2025;
  cfg.init_seed = 0;
  cfg.vary_init = true;

  CHECK(trial_seed(cfg, 0) == cfg.seed);
  CHECK(trial_seed(cfg, 1) == derive_seed(cfg.seed, 5, 1));
  CHECK(trial_seed(cfg, 1) != trial_seed(cfg, 0));
  CHECK(trial_seed(cfg, 1) != trial_seed(cfg, 2));

  // The derived seeds for init and the random-sample baseline come from the
  // trial seed through distinct purpose tags, so they never collide.
  for (std::uint64_t t : {0ull, 1ull, 5ull}) {
    const std::uint64_t ts = trial_seed(cfg, t);
    CHECK(effective_init_seed(cfg, t) == derive_seed(ts, 3, 0));
    CHECK(wilson_rnd_seed(cfg, t) == derive_seed(ts, 4, 0));
    CHECK(effective_init_seed(cfg, t) != wilson_rnd_seed(cfg, t));
  }

  cfg.vary_init = false;
  CHECK(trial_seed(cfg, 7) == trial_seed(cfg, 0));
  CHECK(trial_seed(cfg, 7) == cfg.seed);

  cfg.vary_init = true;
  cfg.init_seed = 555;
  CHECK(trial_seed(cfg, 0) == 555);
  CHECK(trial_seed(cfg, 9) == 555);
}

TEST_CASE("desk defaults pin the documented values") {
  const PipelineConfig cfg = desk_defaults();
  CHECK(cfg.seed == 2025);
  CHECK(cfg.recall_target == doctest::Approx(0.80));
  CHECK(cfg.alpha == doctest::Approx(0.10));
  CHECK(cfg.train_sample == 80000);
  CHECK(cfg.train_labels == 2000);
  CHECK(cfg.calib_sample == 117000);
  CHECK(cfg.subsamples == 9);
  CHECK(cfg.bootstrap == 200);
  CHECK(cfg.budget == 50000);
  CHECK(cfg.mode == CalibratorMode::Proposed);
  CHECK(cfg.ensemble == EnsembleMode::Min);
  CHECK(cfg.vary_init);
  CHECK(cfg.init_seed == 0);
  CHECK(cfg.synth.n_source == 5000);
  CHECK(cfg.synth.n_target == 20000);
  CHECK(cfg.synth.match_fraction == doctest::Approx(0.80));
  CHECK(cfg.synth.jitter_sd == doctest::Approx(0.02));
  CHECK(cfg.synth.scale_sd == doctest::Approx(0.03));
  CHECK(cfg.experiment_targets == std::vector<double>{0.70, 0.80, 0.90});
  REQUIRE(cfg.experiment_modes.size() == 4);
}

TEST_CASE("config files populate every section") {
  const fs::path dir = "rf_pipeline_ini";
  fs::create_directories(dir);
  const fs::path file = dir / "full.ini";
  write_text(file,
             "# full configuration exercise\n"
             "[paths]\n"
             "source = data/a.csv\n"
             "target = data/b.csv\n"
             "truth = data/c.csv   ; inline comment\n"
             "out_dir = scratch/run#1\n"
             "\n"
             "[pipeline]\n"
             "recall_target = 0.85\n"
             "alpha = 0.05\n"
             "seed = 99\n"
             "train_sample = 1234\n"
             "train_labels = 77\n"
             "calib_sample = 4321\n"
             "subsamples = 7\n"
             "bootstrap = 55\n"
             "budget = 12345\n"
             "mode = wilson_hash\n"
             "ensemble = median\n"
             "threads = 3\n"
             "init_seed = 42\n"
             "\n"
             "[train]\n"
             "learning_rate = 0.005\n"
             "max_epochs = 21\n"
             "patience = 4\n"
             "batch = 128\n"
             "\n"
             "[oracle]\n"
             "predicate = mbr\n"
             "min_overlap = 0.6\n"
             "\n"
             "[synth]\n"
             "n_source = 111\n"
             "n_target = 222\n"
             "match_fraction = 0.25\n"
             "jitter_sd = 0.01\n"
             "scale_sd = 0.02\n"
             "world_extent = 33.5\n"
             "seed = 7\n"
             "\n"
             "[experiment]\n"
             "modes = proposed, wilson_rnd\n"
             "targets = 0.75, 0.85\n"
             "vary_init = no\n");

  const PipelineConfig cfg = load_config(file.string());
  CHECK(cfg.source_path == "data/a.csv");
  CHECK(cfg.target_path == "data/b.csv");
  CHECK(cfg.truth_path == "data/c.csv");
  // A '#' with no whitespace before it belongs to the value.
  CHECK(cfg.out_dir == "scratch/run#1");
  CHECK(cfg.recall_target == doctest::Approx(0.85));
  CHECK(cfg.alpha == doctest::Approx(0.05));
  CHECK(cfg.seed == 99);
  CHECK(cfg.train_sample == 1234);
  CHECK(cfg.train_labels == 77);
  CHECK(cfg.calib_sample == 4321);
  CHECK(cfg.subsamples == 7);
  CHECK(cfg.bootstrap == 55);
  CHECK(cfg.budget == 12345);
  CHECK(cfg.mode == CalibratorMode::WilsonHash);
  CHECK(cfg.ensemble == EnsembleMode::Median);
  CHECK(cfg.threads == 3);
  CHECK(cfg.init_seed == 42);
  CHECK(cfg.train.learning_rate == doctest::Approx(0.005));
  CHECK(cfg.train.max_epochs == 21);
  CHECK(cfg.train.patience == 4);
  CHECK(cfg.train.train_batch == 128);
  CHECK(cfg.predicate.mode == PredicateMode::MbrOverlapRatio);
  CHECK(cfg.predicate.min_overlap == doctest::Approx(0.6));
  CHECK(cfg.synth.n_source == 111);
  CHECK(cfg.synth.n_target == 222);
  CHECK(cfg.synth.match_fraction == doctest::Approx(0.25));
  CHECK(cfg.synth.jitter_sd == doctest::Approx(0.01));
  CHECK(cfg.synth.scale_sd == doctest::Approx(0.02));
  CHECK(cfg.synth.world_extent == doctest::Approx(33.5));
  CHECK(cfg.synth.seed == 7);
  REQUIRE(cfg.experiment_modes.size() == 2);
  CHECK(cfg.experiment_modes[0] == CalibratorMode::Proposed);
  CHECK(cfg.experiment_modes[1] == CalibratorMode::WilsonRnd);
  CHECK(cfg.experiment_targets == std::vector<double>{0.75, 0.85});
  CHECK_FALSE(cfg.vary_init);

  // Untouched keys keep the desk defaults.
  const fs::path sparse = dir / "sparse.ini";
  write_text(sparse, "[pipeline]\nseed = 17\n");
  const PipelineConfig sp = load_config(sparse.string());
  CHECK(sp.seed == 17);
  CHECK(sp.calib_sample == desk_defaults().calib_sample);
  CHECK(sp.synth.match_fraction == doctest::Approx(0.80));

  fs::remove_all(dir);
}

TEST_CASE("config files reject malformed input") {
  const fs::path dir = "rf_pipeline_ini_bad";
  fs::create_directories(dir);
  const auto bad = [&](const char* name, const std::string& body) {
    const fs::path p = dir / name;
    write_text(p, body);
    CHECK_THROWS_AS(load_config(p.string()), InputError);
  };
  bad("unknown_key.ini", "[pipeline]\nbogus = 3\n");
  bad("unknown_section.ini", "[nope]\nx = 1\n");
  bad("orphan_key.ini", "seed = 5\n[pipeline]\n");
  bad("no_equals.ini", "[pipeline]\nrecall_target 0.8\n");
  bad("open_header.ini", "[pipeline\nseed = 5\n");
  bad("bad_mode.ini", "[pipeline]\nmode = fancy\n");
  bad("bad_bool.ini", "[experiment]\nvary_init = maybe\n");
  CHECK_THROWS_AS(load_config((dir / "missing.ini").string()), InputError);
  fs::remove_all(dir);
}

TEST_CASE("invalid pipeline settings are rejected before any work") {
  PipelineConfig cfg = tiny_config("rf_pipeline_never_created");

  PipelineConfig c1 = cfg;
  c1.recall_target = 1.5;
  CHECK_THROWS_AS(run_pipeline(c1), InputError);

  PipelineConfig c2 = cfg;
  c2.train.patience = c2.train.max_epochs;
  CHECK_THROWS_AS(run_pipeline(c2), InputError);

  PipelineConfig c3 = cfg;
  c3.subsamples = 0;
  CHECK_THROWS_AS(run_pipeline(c3), InputError);

  PipelineConfig c4 = cfg;
  c4.train_labels = 1;
  CHECK_THROWS_AS(run_pipeline(c4), InputError);

  PipelineConfig c5 = cfg;
  c5.experiment_targets = {0.5, 1.2};
  CHECK_THROWS_AS(run_experiment(c5, 1), InputError);

  CHECK_FALSE(fs::exists("rf_pipeline_never_created"));
}

TEST_CASE("score files round trip and reject damage") {
  const fs::path dir = "rf_pipeline_scores";
  fs::create_directories(dir);
  const std::string path = (dir / "s.rfsc").string();
  const std::vector<double> scores = {0.0, 1.0, 0.25, 1e-9, 0.9999999, 0.5};
  write_scores(path, scores);
  const std::vector<double> back = read_scores(path);
  REQUIRE(back.size() == scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) CHECK(back[i] == scores[i]);

  // Trailing garbage, wrong magic, wrong version, truncation, missing file.
  {
    std::ofstream os(path, std::ios::binary | std::ios::app);
    os.put('\0');
  }
  CHECK_THROWS_AS(read_scores(path), InputError);

  const std::string magic = (dir / "magic.rfsc").string();
  write_text(magic, "RFXXjunk");
  CHECK_THROWS_AS(read_scores(magic), InputError);

  const std::string vers = (dir / "vers.rfsc").string();
  {
    std::ofstream os(vers, std::ios::binary);
    os.write("RFSC", 4);
    write_u16_le(os, 9);
    write_u64_le(os, 0);
  }
  CHECK_THROWS_AS(read_scores(vers), InputError);

  const std::string trunc = (dir / "trunc.rfsc").string();
  write_scores(trunc, scores);
  fs::resize_file(trunc, fs::file_size(trunc) - 5);
  CHECK_THROWS_AS(read_scores(trunc), InputError);

  CHECK_THROWS_AS(read_scores((dir / "missing.rfsc").string()), InputError);
  fs::remove_all(dir);
}

TEST_CASE("pipeline end to end on a tiny synthetic corpus") {
  const fs::path dir = "rf_pipeline_e2e";
  fs::remove_all(dir);
  const PipelineConfig cfg = tiny_config(dir);

  cmd_generate(cfg);
  REQUIRE(fs::exists(cfg.source_path));
  REQUIRE(fs::exists(cfg.target_path));
  REQUIRE(fs::exists(cfg.truth_path));

  RunOutcome first = run_pipeline(cfg);
  const fs::path out = cfg.out_dir;
  CHECK(fs::exists(out / "candidates.rfcs"));
  CHECK(fs::exists(out / "model.rfnn"));
  CHECK(fs::exists(out / "scores.rfsc"));
  CHECK(fs::exists(out / "report.json"));

  const ordered_json& rep = first.report;
  CHECK(rep["tool"] == "recall-forge");
  CHECK(rep["kind"] == "run");
  CHECK(rep["counts"]["sources"].get<std::size_t>() == 250);
  CHECK(rep["counts"]["targets"].get<std::size_t>() == 1000);
  const std::size_t truth_n = rep["counts"]["ground_truth"].get<std::size_t>();
  CHECK(truth_n > 500);
  CHECK(truth_n <= 1000);
  const std::size_t cand = rep["counts"]["candidates"].get<std::size_t>();
  CHECK(cand >= cfg.calib_sample);
  CHECK(rep["counts"]["train_labeled"].get<std::size_t>() == cfg.train_labels);
  CHECK(rep["counts"]["train_inspected"].get<std::size_t>() >= cfg.train_labels);
  CHECK(rep["counts"]["calibration_labeled"].get<std::size_t>() == cfg.calib_sample);
  CHECK(rep["counts"]["candidate_fraction"].get<double>() ==
        doctest::Approx(static_cast<double>(cand) / (250.0 * 1000.0)));

  const ordered_json& th = rep["threshold"];
  CHECK(th["mode"] == "proposed");
  CHECK(th["target"].get<double>() == doctest::Approx(0.80));
  CHECK(th["attainable"].get<bool>());
  const double tau = th["tau"].get<double>();
  CHECK(tau > 0.0);
  CHECK(tau < 1.0);
  CHECK(th["ci_low"].get<double>() <= tau + 1e-12);
  CHECK(th["ci_high"].get<double>() >= tau - 1e-12);
  REQUIRE(th["per_subsample_tau"].size() == cfg.subsamples);
  REQUIRE(th["subsample_sizes"].size() == cfg.subsamples);
  REQUIRE(th["subsample_positives"].size() == cfg.subsamples);
  for (const auto& sz : th["subsample_sizes"]) {
    CHECK(sz.get<std::size_t>() == cfg.calib_sample / cfg.subsamples);
  }
  for (const auto& np : th["subsample_positives"]) {
    CHECK(np.get<std::size_t>() > 0);
  }
  // Min ensemble: the fused threshold is the smallest per-subsample one.
  double min_tau = 1.0;
  for (const auto& t : th["per_subsample_tau"]) min_tau = std::min(min_tau, t.get<double>());
  CHECK(tau == doctest::Approx(min_tau).epsilon(1e-12));

  const ordered_json& ver = rep["verification"];
  CHECK(ver["budget"].get<std::size_t>() == cfg.budget);
  CHECK_FALSE(ver["overrun"].get<bool>());
  CHECK(ver["reviewed"].get<std::size_t>() == ver["retained"].get<std::size_t>());
  const double achieved = ver["achieved_recall"].get<double>();
  CHECK(achieved >= 0.5);
  CHECK(achieved <= 1.0);
  CHECK(first.achieved_recall == doctest::Approx(achieved));
  CHECK(first.tau == doctest::Approx(tau));
  CHECK(first.attainable);

  CHECK(rep["costs"]["c_feat"].get<std::size_t>() == 2 * cand);
  CHECK(rep["costs"]["c_geom"].get<std::size_t>() >=
        rep["counts"]["train_inspected"].get<std::size_t>() + cfg.calib_sample);

  CHECK(read_scores((out / "scores.rfsc").string()).size() == cand);

  // Bit-identical rerun, and thread count must not leak into results.
  RunOutcome second = run_pipeline(cfg);
  PipelineConfig wide = cfg;
  wide.threads = 4;
  RunOutcome third = run_pipeline(wide);
  ordered_json a = first.report;
  ordered_json b = second.report;
  ordered_json c = third.report;
  scrub_volatile(a);
  scrub_volatile(b);
  scrub_volatile(c);
  CHECK(a.dump() == b.dump());
  CHECK(a.dump() == c.dump());

  // Stage-by-stage rebuild reproduces the monolithic run.
  cmd_filter(cfg);
  cmd_train(cfg);
  cmd_score(cfg);
  ordered_json staged = cmd_calibrate(cfg);
  CHECK(staged["threshold"].dump() == first.report["threshold"].dump());
  CHECK(staged["verification"].dump() == first.report["verification"].dump());

  // Single-sample baselines spend one subsample worth of labels.
  PipelineConfig hash_cfg = cfg;
  hash_cfg.mode = CalibratorMode::WilsonHash;
  ordered_json hash_rep = cmd_calibrate(hash_cfg);
  CHECK(hash_rep["threshold"]["mode"] == "wilson_hash");
  CHECK(hash_rep["threshold"]["per_subsample_tau"].size() == 1);
  CHECK(hash_rep["counts"]["calibration_labeled"].get<std::size_t>() ==
        cfg.calib_sample / cfg.subsamples);
  CHECK(hash_rep["threshold"]["ci_low"].get<double>() ==
        doctest::Approx(hash_rep["threshold"]["tau"].get<double>()));

  PipelineConfig rnd_cfg = cfg;
  rnd_cfg.mode = CalibratorMode::WilsonRnd;
  ordered_json rnd_rep = cmd_calibrate(rnd_cfg);
  CHECK(rnd_rep["threshold"]["mode"] == "wilson_rnd");
  CHECK(rnd_rep["threshold"]["per_subsample_tau"].size() == 1);

  // A target no subsample can certify at this sample size.
  PipelineConfig hard = cfg;
  hard.recall_target = 0.95;
  hard.calib_sample = 1000;
  ordered_json hard_rep = cmd_calibrate(hard);
  CHECK_FALSE(hard_rep["threshold"]["attainable"].get<bool>());
  CHECK(hard_rep["threshold"]["tau"].get<double>() >= 0.0);

  // Subsamples larger than the calibration budget cannot be formed.
  PipelineConfig starved = cfg;
  starved.calib_sample = 3;
  CHECK_THROWS_AS(cmd_calibrate(starved), InputError);

  fs::remove_all(dir);
}

TEST_CASE("experiment harness shares the corpus and pins seeds") {
  const fs::path dir = "rf_pipeline_exp";
  fs::remove_all(dir);
  PipelineConfig cfg = tiny_config(dir);
  cfg.experiment_modes = {CalibratorMode::Proposed, CalibratorMode::WilsonRnd};
  cfg.experiment_targets = {0.80};
  cfg.init_seed = 777;  // freezes every per-trial seed

  cmd_generate(cfg);
  CHECK_THROWS_AS(run_experiment(cfg, 0), InputError);

  const ExperimentOutcome out = run_experiment(cfg, 2);
  REQUIRE(out.cells.size() == 2);
  CHECK(out.cells[0].mode == CalibratorMode::Proposed);
  CHECK(out.cells[1].mode == CalibratorMode::WilsonRnd);
  for (const ExperimentCell& cell : out.cells) {
    CHECK(cell.target == doctest::Approx(0.80));
    REQUIRE(cell.recalls.size() == 2);
    // With init_seed pinned, both trials are the same experiment.
    CHECK(cell.recalls[0] == cell.recalls[1]);
    CHECK(cell.recall_sd == 0.0);
    CHECK(cell.recall_mean == doctest::Approx(cell.recalls[0]));
    CHECK(cell.review_fraction_mean > 0.0);
    CHECK(cell.review_fraction_mean <= 1.0);
  }

  const ordered_json& rep = out.report;
  CHECK(rep["kind"] == "experiment");
  CHECK(rep["trials"].get<std::size_t>() == 2);
  REQUIRE(rep["modes"].size() == 2);
  CHECK(rep["modes"][0] == "proposed");
  CHECK(rep["modes"][1] == "wilson_rnd");
  REQUIRE(rep["summary"].size() == 2);
  for (const auto& row : rep["summary"]) {
    CHECK(row["recall_sd"].get<double>() == 0.0);
    CHECK(row["recall_trials"].size() == 2);
    CHECK_FALSE(row["overrun_any"].get<bool>());
  }
  CHECK(rep["reports"].size() == 4);
  CHECK(fs::exists(fs::path(cfg.out_dir) / "experiment.json"));

  fs::remove_all(dir);
}
