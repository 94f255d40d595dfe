#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "recallforge/common.hpp"
#include "recallforge/pipeline.hpp"

namespace rf = recallforge;

namespace {

struct CommonOpts {
  std::string config;
  std::uint64_t seed = 0;
  std::string mode;
  double target = 0.0;
  unsigned threads = 0;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* mode_opt = nullptr;
  CLI::Option* target_opt = nullptr;
  CLI::Option* threads_opt = nullptr;
};

void add_common(CLI::App* sub, CommonOpts& o) {
  sub->add_option("--config", o.config, "pipeline config file (INI)")->required();
  o.seed_opt = sub->add_option("--seed", o.seed, "override [pipeline] seed");
  o.mode_opt = sub->add_option(
      "--mode", o.mode, "override calibrator mode (proposed|ivw_1|wilson_hash|wilson_rnd)");
  o.target_opt = sub->add_option("--target", o.target, "override the recall target");
  o.threads_opt = sub->add_option("--threads", o.threads, "override the worker count (0 = auto)");
}

rf::PipelineConfig build_config(const CommonOpts& o) {
  rf::PipelineConfig cfg = rf::load_config(o.config);
  if (o.seed_opt->count() > 0) cfg.seed = o.seed;
  if (o.mode_opt->count() > 0) {
    cfg.mode = rf::parse_mode(o.mode);
    cfg.experiment_modes = {cfg.mode};
  }
  if (o.target_opt->count() > 0) {
    if (!(o.target > 0.0 && o.target < 1.0)) {
      throw rf::InputError("--target must lie in (0, 1)");
    }
    cfg.recall_target = o.target;
    cfg.experiment_targets = {o.target};
  }
  if (o.threads_opt->count() > 0) cfg.threads = o.threads;
  return cfg;
}

int print_report(const rf::PipelineConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path run_path = fs::path(cfg.out_dir) / "report.json";
  const fs::path exp_path = fs::path(cfg.out_dir) / "experiment.json";
  if (fs::exists(run_path)) {
    std::ifstream is(run_path);
    const auto j = nlohmann::ordered_json::parse(is);
    const auto& th = j.at("threshold");
    const auto& v = j.at("verification");
    std::printf("run report (%s)\n", run_path.string().c_str());
    std::printf("  mode %s, target %.4f, alpha %.4f\n",
                th.at("mode").get<std::string>().c_str(), th.at("target").get<double>(),
                th.at("alpha").get<double>());
    std::printf("  tau %.6f  ci [%.6f, %.6f]  attainable %s\n", th.at("tau").get<double>(),
                th.at("ci_low").get<double>(), th.at("ci_high").get<double>(),
                th.at("attainable").get<bool>() ? "yes" : "no");
    std::printf("  achieved recall %.4f  reviewed %zu of budget %zu%s\n",
                v.at("achieved_recall").get<double>(), v.at("reviewed").get<std::size_t>(),
                v.at("budget").get<std::size_t>(),
                v.at("overrun").get<bool>() ? "  (overrun)" : "");
    const auto& c = j.at("costs");
    std::printf("  costs: c_geom %llu  c_feat %llu\n",
                static_cast<unsigned long long>(c.at("c_geom").get<std::uint64_t>()),
                static_cast<unsigned long long>(c.at("c_feat").get<std::uint64_t>()));
    return 0;
  }
  if (fs::exists(exp_path)) {
    std::ifstream is(exp_path);
    const auto j = nlohmann::ordered_json::parse(is);
    std::printf("experiment report (%s), %zu trials\n", exp_path.string().c_str(),
                j.at("trials").get<std::size_t>());
    for (const auto& cell : j.at("summary")) {
      std::printf("  %-12s @ %.2f: recall %.4f +- %.4f  review %.4f  tau %.6f\n",
                  cell.at("mode").get<std::string>().c_str(), cell.at("target").get<double>(),
                  cell.at("recall_mean").get<double>(), cell.at("recall_sd").get<double>(),
                  cell.at("review_fraction_mean").get<double>(),
                  cell.at("tau_mean").get<double>());
    }
    return 0;
  }
  throw rf::InputError("no report.json or experiment.json under " + cfg.out_dir);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"recall-forge: recall-calibrated geospatial entity matching"};
  app.require_subcommand(1);

  CommonOpts o_generate, o_filter, o_train, o_score, o_calibrate, o_run, o_experiment, o_report;
  std::size_t trials = 10;

  CLI::App* sub_generate =
      app.add_subcommand("generate", "synthesize sources, targets and ground truth");
  add_common(sub_generate, o_generate);
  CLI::App* sub_filter = app.add_subcommand("filter", "enumerate candidate pairs on the grid");
  add_common(sub_filter, o_filter);
  CLI::App* sub_train = app.add_subcommand("train", "label a training sample and fit the ranker");
  add_common(sub_train, o_train);
  CLI::App* sub_score = app.add_subcommand("score", "score every candidate with a saved model");
  add_common(sub_score, o_score);
  CLI::App* sub_calibrate =
      app.add_subcommand("calibrate", "calibrate the threshold, verify and write the report");
  add_common(sub_calibrate, o_calibrate);
  CLI::App* sub_run = app.add_subcommand("run", "full pipeline: filter, train, score, calibrate");
  add_common(sub_run, o_run);
  CLI::App* sub_experiment =
      app.add_subcommand("experiment", "repeated trials across calibrator modes");
  add_common(sub_experiment, o_experiment);
  sub_experiment->add_option("--trials", trials, "number of trials")->check(CLI::PositiveNumber);
  CLI::App* sub_report = app.add_subcommand("report", "print a summary of the stored report");
  add_common(sub_report, o_report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 3;
  }

  try {
    if (sub_generate->parsed()) {
      const rf::PipelineConfig cfg = build_config(o_generate);
      rf::cmd_generate(cfg);
      std::printf("wrote %s, %s, %s\n", cfg.source_path.c_str(), cfg.target_path.c_str(),
                  cfg.truth_path.c_str());
    } else if (sub_filter->parsed()) {
      const rf::PipelineConfig cfg = build_config(o_filter);
      rf::cmd_filter(cfg);
      std::printf("candidates written under %s\n", cfg.out_dir.c_str());
    } else if (sub_train->parsed()) {
      const rf::PipelineConfig cfg = build_config(o_train);
      rf::cmd_train(cfg);
      std::printf("model written under %s\n", cfg.out_dir.c_str());
    } else if (sub_score->parsed()) {
      const rf::PipelineConfig cfg = build_config(o_score);
      rf::cmd_score(cfg);
      std::printf("scores written under %s\n", cfg.out_dir.c_str());
    } else if (sub_calibrate->parsed()) {
      const rf::PipelineConfig cfg = build_config(o_calibrate);
      const auto report = rf::cmd_calibrate(cfg);
      const bool attainable = report.at("threshold").at("attainable").get<bool>();
      std::printf("tau %.6f  achieved recall %.4f  attainable %s\n",
                  report.at("threshold").at("tau").get<double>(),
                  report.at("verification").at("achieved_recall").get<double>(),
                  attainable ? "yes" : "no");
      if (!attainable) return 2;
    } else if (sub_run->parsed()) {
      const rf::PipelineConfig cfg = build_config(o_run);
      const rf::RunOutcome out = rf::run_pipeline(cfg);
      std::printf("tau %.6f  achieved recall %.4f  attainable %s\n", out.tau,
                  out.achieved_recall, out.attainable ? "yes" : "no");
      std::printf("report written under %s\n", cfg.out_dir.c_str());
      if (!out.attainable) return 2;
    } else if (sub_experiment->parsed()) {
      const rf::PipelineConfig cfg = build_config(o_experiment);
      const rf::ExperimentOutcome out = rf::run_experiment(cfg, trials);
      bool all_attainable = true;
      for (const auto& rep : out.report.at("reports")) {
        if (!rep.at("threshold").at("attainable").get<bool>()) all_attainable = false;
      }
      for (const rf::ExperimentCell& cell : out.cells) {
        std::printf("%-12s @ %.2f: recall %.4f +- %.4f\n", rf::mode_name(cell.mode), cell.target,
                    cell.recall_mean, cell.recall_sd);
      }
      std::printf("experiment written under %s\n", cfg.out_dir.c_str());
      if (!all_attainable) return 2;
    } else if (sub_report->parsed()) {
      return print_report(build_config(o_report));
    }
  } catch (const rf::InputError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
