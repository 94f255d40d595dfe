#include "recallforge/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "recallforge/common.hpp"
#include "recallforge/features.hpp"
#include "recallforge/geometry.hpp"
#include "recallforge/grid_filter.hpp"
#include "recallforge/rng.hpp"
#include "recallforge/sampler.hpp"
#include "recallforge/wkt.hpp"
#include "recallforge/xxhash64.hpp"

namespace recallforge {
namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

constexpr char kCandidatesFile[] = "candidates.rfcs";
constexpr char kModelFile[] = "model.rfnn";
constexpr char kScoresFile[] = "scores.rfsc";
constexpr char kReportFile[] = "report.json";
constexpr char kExperimentFile[] = "experiment.json";

// Seed-stream tags. Tags 0..2 belong to the trainer's internal streams.
constexpr std::uint64_t kInitSeedTag = 3;
constexpr std::uint64_t kRandomSampleTag = 4;
constexpr std::uint64_t kTrialSeedTag = 5;

class StageClock {
 public:
  StageClock() : t0_(std::chrono::steady_clock::now()) {}

  double lap_ms() {
    const auto now = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(now - t0_).count();
    t0_ = now;
    return ms;
  }

 private:
  std::chrono::steady_clock::time_point t0_;
};

unsigned effective_threads(const PipelineConfig& cfg) {
  if (cfg.threads != 0) return cfg.threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

std::string artifact_path(const PipelineConfig& cfg, const char* name) {
  return (fs::path(cfg.out_dir) / name).string();
}

void ensure_out_dir(const PipelineConfig& cfg) { fs::create_directories(cfg.out_dir); }

struct Corpus {
  std::vector<Geometry> sources;
  std::vector<Geometry> targets;
  std::vector<IdPair> truth_pairs;
  PairSet truth;
};

Corpus load_corpus(const PipelineConfig& cfg, bool with_truth) {
  Corpus c;
  c.sources = read_geometry_csv(cfg.source_path);
  c.targets = read_geometry_csv(cfg.target_path);
  if (c.sources.empty()) throw InputError("source corpus is empty: " + cfg.source_path);
  if (c.targets.empty()) throw InputError("target corpus is empty: " + cfg.target_path);
  if (with_truth) {
    c.truth_pairs = read_pair_csv(cfg.truth_path);
    if (c.truth_pairs.empty()) throw InputError("ground truth is empty: " + cfg.truth_path);
    c.truth.reserve(c.truth_pairs.size() * 2);
    for (const IdPair& p : c.truth_pairs) c.truth.insert(p);
  }
  return c;
}

IdPair ids_at(const Corpus& c, const CsrCandidates& csr, std::size_t flat) {
  const auto rc = csr.pair(flat);
  return {c.sources[rc.first].id, c.targets[rc.second].id};
}

CsrCandidates load_candidates(const PipelineConfig& cfg, const Corpus& c) {
  CsrCandidates csr = read_csr(artifact_path(cfg, kCandidatesFile));
  if (csr.rows() != c.sources.size()) {
    throw InputError("candidate file does not match the source corpus (" +
                     std::to_string(csr.rows()) + " rows vs " +
                     std::to_string(c.sources.size()) + " sources)");
  }
  return csr;
}

// Oracle-labels the hashed training sample in key order until both class
// quotas are filled. Labels come from ground-truth membership, so they agree
// with the recall metric by construction; every inspected pair is one oracle
// call whether or not it is kept.
struct LabeledTrainSet {
  std::vector<std::uint64_t> rows;  // candidate flat indices, inspection order
  std::vector<std::uint8_t> labels;
  std::size_t inspected = 0;
};

LabeledTrainSet label_train_set(const PipelineConfig& cfg, const Corpus& c,
                                const CsrCandidates& csr) {
  const std::uint64_t pool =
      std::min<std::uint64_t>(cfg.train_sample, csr.pair_count());
  const std::vector<std::uint64_t> order =
      hashed_sample_order(csr.pair_count(), pool, cfg.seed);
  const std::size_t want_pos = cfg.train_labels / 2;
  const std::size_t want_neg = cfg.train_labels - want_pos;

  LabeledTrainSet out;
  out.rows.reserve(cfg.train_labels);
  out.labels.reserve(cfg.train_labels);
  std::size_t have_pos = 0;
  std::size_t have_neg = 0;
  for (const std::uint64_t flat : order) {
    if (have_pos == want_pos && have_neg == want_neg) break;
    ++out.inspected;
    const bool positive = c.truth.count(ids_at(c, csr, flat)) != 0;
    if (positive && have_pos < want_pos) {
      out.rows.push_back(flat);
      out.labels.push_back(1);
      ++have_pos;
    } else if (!positive && have_neg < want_neg) {
      out.rows.push_back(flat);
      out.labels.push_back(0);
      ++have_neg;
    }
  }
  if (have_pos < want_pos || have_neg < want_neg) {
    throw InputError("training sample exhausted before filling class quotas (" +
                     std::to_string(have_pos) + "/" + std::to_string(want_pos) +
                     " positive, " + std::to_string(have_neg) + "/" +
                     std::to_string(want_neg) +
                     " negative); raise train_sample or check the candidate filter");
  }
  return out;
}

FeatureMatrix gather_rows(const FeatureMatrix& all, const std::vector<std::uint64_t>& rows) {
  FeatureMatrix out = FeatureMatrix::zeros(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const float* src = all.row(rows[i]);
    std::copy(src, src + kFeatureCount, out.row(i));
  }
  return out;
}

// Everything the calibrate+verify stage needs, already in memory.
struct PipelineState {
  const PipelineConfig* cfg = nullptr;
  const Corpus* corpus = nullptr;
  const CsrCandidates* csr = nullptr;
  const std::vector<double>* scores = nullptr;
  const StratumAssignment* strata = nullptr;
  std::size_t train_inspected = 0;
  double filter_ms = 0.0;
  double train_ms = 0.0;
  double score_ms = 0.0;
};

struct ModeOutcome {
  EnsembleResult ensemble;
  std::vector<std::size_t> subsample_totals;
  std::vector<std::size_t> subsample_positives;
  std::size_t labeled = 0;
};

CalibrationSample collect_positives(const PipelineState& st,
                                    const std::vector<std::uint64_t>& ids,
                                    std::size_t* labeled) {
  std::vector<double> pos;
  for (const std::uint64_t flat : ids) {
    ++*labeled;
    if (st.corpus->truth.count(ids_at(*st.corpus, *st.csr, flat)) != 0) {
      pos.push_back((*st.scores)[flat]);
    }
  }
  return CalibrationSample::from_unsorted(std::move(pos));
}

void require_positives(const CalibrationSample& s, const char* what) {
  if (s.n() == 0) {
    throw InputError(std::string(what) +
                     " contains no labeled positives; raise calib_sample");
  }
}

EnsembleResult single_rule_result(const ThresholdDecision& d, double target, double alpha) {
  EnsembleResult r;
  r.per_subsample = {d.tau};
  r.final_tau = d.tau;
  r.ci_low = d.tau;
  r.ci_high = d.tau;
  r.alpha = alpha;
  r.target = target;
  r.attainable = d.attainable;
  return r;
}

ModeOutcome calibrate_mode(const PipelineState& st, CalibratorMode mode, double target,
                           std::uint64_t trial) {
  const PipelineConfig& cfg = *st.cfg;
  const std::uint64_t n = st.csr->pair_count();
  const std::uint64_t k = std::min<std::uint64_t>(cfg.calib_sample, n);
  // Every mode works with subsample-sized draws so labeling cost per sample is
  // equal and recall variance differences are attributable to the estimator.
  const std::uint64_t k_sub = k / cfg.subsamples;
  if (k_sub == 0) {
    throw InputError("calib_sample too small for " + std::to_string(cfg.subsamples) +
                     " subsamples");
  }
  ModeOutcome out;
  const std::uint64_t ms = trial_seed(cfg, trial);

  switch (mode) {
    case CalibratorMode::Proposed: {
      std::vector<CalibrationSample> subs;
      subs.reserve(cfg.subsamples);
      for (std::size_t s = 0; s < cfg.subsamples; ++s) {
        const std::vector<std::uint64_t> ids =
            hashed_sample_ids(n, k_sub, ms + 1 + s, st.strata);
        out.subsample_totals.push_back(ids.size());
        CalibrationSample cs = collect_positives(st, ids, &out.labeled);
        require_positives(cs, "calibration subsample");
        out.subsample_positives.push_back(cs.n());
        subs.push_back(std::move(cs));
      }
      // Bootstrap index draws stay keyed to the config seed: resample patterns
      // are common across trials, so trial-to-trial variation reflects the
      // subsample draws and scores alone.
      out.ensemble =
          calibrate_ensemble(subs, target, cfg.alpha, cfg.bootstrap, cfg.seed, cfg.ensemble);
      break;
    }
    case CalibratorMode::Ivw1: {
      const std::vector<std::uint64_t> ids = hashed_sample_ids(n, k_sub, ms + 1, st.strata);
      out.subsample_totals.push_back(ids.size());
      CalibrationSample cs = collect_positives(st, ids, &out.labeled);
      require_positives(cs, "calibration sample");
      out.subsample_positives.push_back(cs.n());
      out.ensemble = calibrate_ensemble({std::move(cs)}, target, cfg.alpha, cfg.bootstrap,
                                        cfg.seed, cfg.ensemble);
      break;
    }
    case CalibratorMode::WilsonHash: {
      const std::vector<std::uint64_t> ids = hashed_sample_ids(n, k_sub, ms + 1, st.strata);
      out.subsample_totals.push_back(ids.size());
      CalibrationSample cs = collect_positives(st, ids, &out.labeled);
      require_positives(cs, "calibration sample");
      out.subsample_positives.push_back(cs.n());
      out.ensemble = single_rule_result(
          threshold_for_target(RuleKind::Wilson, cs, target, cfg.alpha), target, cfg.alpha);
      break;
    }
    case CalibratorMode::WilsonRnd: {
      const std::vector<std::uint32_t> draw = sample_without_replacement(
          static_cast<std::size_t>(n), static_cast<std::size_t>(k_sub),
          wilson_rnd_seed(cfg, trial));
      std::vector<std::uint64_t> ids(draw.begin(), draw.end());
      out.subsample_totals.push_back(ids.size());
      CalibrationSample cs = collect_positives(st, ids, &out.labeled);
      require_positives(cs, "calibration sample");
      out.subsample_positives.push_back(cs.n());
      out.ensemble = single_rule_result(
          threshold_for_target(RuleKind::Wilson, cs, target, cfg.alpha), target, cfg.alpha);
      break;
    }
  }
  return out;
}

ordered_json config_json(const PipelineConfig& cfg, std::uint64_t trial, bool with_trial) {
  ordered_json j;
  j["paths"] = ordered_json{{"source", cfg.source_path},
                            {"target", cfg.target_path},
                            {"truth", cfg.truth_path},
                            {"out_dir", cfg.out_dir}};
  j["recall_target"] = cfg.recall_target;
  j["alpha"] = cfg.alpha;
  j["seed"] = cfg.seed;
  j["train_sample"] = cfg.train_sample;
  j["train_labels"] = cfg.train_labels;
  j["calib_sample"] = cfg.calib_sample;
  j["subsamples"] = cfg.subsamples;
  j["bootstrap"] = cfg.bootstrap;
  j["budget"] = cfg.budget;
  j["mode"] = mode_name(cfg.mode);
  j["ensemble"] = cfg.ensemble == EnsembleMode::Min ? "min" : "median";
  j["vary_init"] = cfg.vary_init;
  if (with_trial) {
    j["trial"] = trial;
    j["trial_seed"] = trial_seed(cfg, trial);
    j["init_seed"] = effective_init_seed(cfg, trial);
    j["random_sample_seed"] = wilson_rnd_seed(cfg, trial);
  }
  j["train"] = ordered_json{{"learning_rate", cfg.train.learning_rate},
                            {"max_epochs", cfg.train.max_epochs},
                            {"patience", cfg.train.patience},
                            {"batch", cfg.train.train_batch}};
  j["oracle"] = ordered_json{
      {"predicate", cfg.predicate.mode == PredicateMode::PolygonOverlapRatio ? "polygon" : "mbr"},
      {"min_overlap", cfg.predicate.min_overlap}};
  return j;
}

struct FinalOutcome {
  ordered_json report;
  double tau = 0.0;
  double recall = 0.0;
  bool attainable = true;
  std::size_t reviewed = 0;
};

FinalOutcome calibrate_and_verify(const PipelineState& st, CalibratorMode mode, double target,
                                  std::uint64_t trial) {
  const PipelineConfig& cfg = *st.cfg;
  StageClock clock;
  const ModeOutcome mo = calibrate_mode(st, mode, target, trial);
  const double calibrate_ms = clock.lap_ms();

  const double tau = mo.ensemble.final_tau;
  std::vector<IdPair> retained;
  for (std::size_t flat = 0; flat < st.scores->size(); ++flat) {
    if ((*st.scores)[flat] >= tau) retained.push_back(ids_at(*st.corpus, *st.csr, flat));
  }
  CostCounters counters;
  const VerificationOutcome v =
      verify_with_budget(retained, st.corpus->sources, st.corpus->targets, st.corpus->truth,
                         cfg.predicate, cfg.budget, &counters);
  const double verify_ms = clock.lap_ms();

  const std::uint64_t pair_count = st.csr->pair_count();
  const double matrix_cells = static_cast<double>(st.corpus->sources.size()) *
                              static_cast<double>(st.corpus->targets.size());

  FinalOutcome out;
  out.tau = tau;
  out.recall = v.achieved_recall;
  out.attainable = mo.ensemble.attainable;
  out.reviewed = v.reviewed_count;

  ordered_json& j = out.report;
  j["tool"] = "recall-forge";
  j["kind"] = "run";
  PipelineConfig echoed = cfg;
  echoed.mode = mode;
  echoed.recall_target = target;
  j["config"] = config_json(echoed, trial, true);
  j["counts"] = ordered_json{
      {"sources", st.corpus->sources.size()},
      {"targets", st.corpus->targets.size()},
      {"ground_truth", st.corpus->truth_pairs.size()},
      {"candidates", pair_count},
      {"candidate_fraction", static_cast<double>(pair_count) / matrix_cells},
      {"train_inspected", st.train_inspected},
      {"train_labeled", cfg.train_labels},
      {"calibration_labeled", mo.labeled}};
  j["threshold"] = ordered_json{{"mode", mode_name(mode)},
                                {"target", target},
                                {"alpha", cfg.alpha},
                                {"tau", tau},
                                {"ci_low", mo.ensemble.ci_low},
                                {"ci_high", mo.ensemble.ci_high},
                                {"attainable", mo.ensemble.attainable},
                                {"per_subsample_tau", mo.ensemble.per_subsample},
                                {"subsample_sizes", mo.subsample_totals},
                                {"subsample_positives", mo.subsample_positives}};
  j["verification"] = ordered_json{{"retained", retained.size()},
                                   {"reviewed", v.reviewed_count},
                                   {"budget", v.budget},
                                   {"overrun", v.overrun},
                                   {"achieved_recall", v.achieved_recall}};
  j["costs"] = ordered_json{
      {"c_geom", st.train_inspected + mo.labeled + counters.c_geom},
      {"c_feat", 2 * pair_count}};
  j["timings"] = ordered_json{{"threads", effective_threads(cfg)},
                              {"filter_ms", st.filter_ms},
                              {"train_ms", st.train_ms},
                              {"score_ms", st.score_ms},
                              {"calibrate_ms", calibrate_ms},
                              {"verify_ms", verify_ms},
                              {"total_ms", st.filter_ms + st.train_ms + st.score_ms +
                                               calibrate_ms + verify_ms}};
  return out;
}

void write_json_file(const std::string& path, const ordered_json& j) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open for writing: " + path);
  os << j.dump(2) << '\n';
  if (!os) throw InputError("failed writing " + path);
}

struct UpstreamMs {
  double filter = 0.0;
  double train = 0.0;
  double score = 0.0;
};

FinalOutcome run_calibrate_stage(const PipelineConfig& cfg, std::uint64_t trial,
                                 const UpstreamMs& up) {
  const Corpus corpus = load_corpus(cfg, true);
  const CsrCandidates csr = load_candidates(cfg, corpus);
  const std::vector<double> scores = read_scores(artifact_path(cfg, kScoresFile));
  if (scores.size() != csr.pair_count()) {
    throw InputError("score file does not match the candidate file (" +
                     std::to_string(scores.size()) + " scores vs " +
                     std::to_string(csr.pair_count()) + " candidates)");
  }
  const StratumAssignment strata = assign_deciles(scores);
  const LabeledTrainSet lt = label_train_set(cfg, corpus, csr);

  PipelineState st;
  st.cfg = &cfg;
  st.corpus = &corpus;
  st.csr = &csr;
  st.scores = &scores;
  st.strata = &strata;
  st.train_inspected = lt.inspected;
  st.filter_ms = up.filter;
  st.train_ms = up.train;
  st.score_ms = up.score;

  FinalOutcome out = calibrate_and_verify(st, cfg.mode, cfg.recall_target, trial);
  ensure_out_dir(cfg);
  write_json_file(artifact_path(cfg, kReportFile), out.report);
  return out;
}

std::pair<double, double> mean_sd(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) {
    const double d = x - mean;
    ss += d * d;
  }
  return {mean, std::sqrt(ss / (n - 1.0))};
}

// ---- config file parsing ----

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = s.find(',', start);
    const std::size_t end = comma == std::string::npos ? s.size() : comma;
    const std::string item = trim(s.substr(start, end - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &pos);
  } catch (const std::exception&) {
    throw InputError("bad number for " + key + ": '" + value + "'");
  }
  if (pos != value.size()) throw InputError("bad number for " + key + ": '" + value + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(value, &pos);
  } catch (const std::exception&) {
    throw InputError("bad integer for " + key + ": '" + value + "'");
  }
  if (pos != value.size()) throw InputError("bad integer for " + key + ": '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "yes" || value == "1") return true;
  if (value == "false" || value == "no" || value == "0") return false;
  throw InputError("bad boolean for " + key + ": '" + value + "'");
}

using SectionMap = std::map<std::string, std::vector<std::pair<std::string, std::string>>>;

SectionMap parse_ini(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open config file: " + path);
  SectionMap sections;
  std::string line;
  std::string current;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    // Inline comments start at # or ; preceded by whitespace (or at column 0).
    for (std::size_t i = 0; i < line.size(); ++i) {
      if ((line[i] == '#' || line[i] == ';') &&
          (i == 0 || std::isspace(static_cast<unsigned char>(line[i - 1])))) {
        line.resize(i);
        break;
      }
    }
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) {
        throw InputError("malformed section header at line " + std::to_string(lineno) + " of " +
                         path);
      }
      current = trim(t.substr(1, t.size() - 2));
      sections[current];
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw InputError("expected key = value at line " + std::to_string(lineno) + " of " + path);
    }
    if (current.empty()) {
      throw InputError("key outside any [section] at line " + std::to_string(lineno) + " of " +
                       path);
    }
    sections[current].emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return sections;
}

void apply_paths(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "source") cfg.source_path = value;
  else if (key == "target") cfg.target_path = value;
  else if (key == "truth") cfg.truth_path = value;
  else if (key == "out_dir") cfg.out_dir = value;
  else throw InputError("unknown key '" + key + "' in [paths]");
}

void apply_pipeline(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "recall_target") cfg.recall_target = parse_double(key, value);
  else if (key == "alpha") cfg.alpha = parse_double(key, value);
  else if (key == "seed") cfg.seed = parse_u64(key, value);
  else if (key == "train_sample") cfg.train_sample = parse_u64(key, value);
  else if (key == "train_labels") cfg.train_labels = parse_u64(key, value);
  else if (key == "calib_sample") cfg.calib_sample = parse_u64(key, value);
  else if (key == "subsamples") cfg.subsamples = parse_u64(key, value);
  else if (key == "bootstrap") cfg.bootstrap = parse_u64(key, value);
  else if (key == "budget") cfg.budget = parse_u64(key, value);
  else if (key == "mode") cfg.mode = parse_mode(value);
  else if (key == "ensemble") {
    if (value == "min") cfg.ensemble = EnsembleMode::Min;
    else if (value == "median") cfg.ensemble = EnsembleMode::Median;
    else throw InputError("unknown ensemble '" + value + "' (expected min or median)");
  } else if (key == "threads") cfg.threads = static_cast<unsigned>(parse_u64(key, value));
  else if (key == "init_seed") cfg.init_seed = parse_u64(key, value);
  else throw InputError("unknown key '" + key + "' in [pipeline]");
}

void apply_train(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "learning_rate") cfg.train.learning_rate = parse_double(key, value);
  else if (key == "max_epochs") cfg.train.max_epochs = parse_u64(key, value);
  else if (key == "patience") cfg.train.patience = parse_u64(key, value);
  else if (key == "batch") cfg.train.train_batch = parse_u64(key, value);
  else throw InputError("unknown key '" + key + "' in [train]");
}

void apply_oracle(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "predicate") {
    if (value == "polygon") cfg.predicate.mode = PredicateMode::PolygonOverlapRatio;
    else if (value == "mbr") cfg.predicate.mode = PredicateMode::MbrOverlapRatio;
    else throw InputError("unknown predicate '" + value + "' (expected polygon or mbr)");
  } else if (key == "min_overlap") cfg.predicate.min_overlap = parse_double(key, value);
  else throw InputError("unknown key '" + key + "' in [oracle]");
}

void apply_synth(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "n_source") cfg.synth.n_source = parse_u64(key, value);
  else if (key == "n_target") cfg.synth.n_target = parse_u64(key, value);
  else if (key == "match_fraction") cfg.synth.match_fraction = parse_double(key, value);
  else if (key == "jitter_sd") cfg.synth.jitter_sd = parse_double(key, value);
  else if (key == "scale_sd") cfg.synth.scale_sd = parse_double(key, value);
  else if (key == "world_extent") cfg.synth.world_extent = parse_double(key, value);
  else if (key == "seed") cfg.synth.seed = parse_u64(key, value);
  else throw InputError("unknown key '" + key + "' in [synth]");
}

void apply_experiment(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "modes") {
    if (value == "all") {
      cfg.experiment_modes = {CalibratorMode::Proposed, CalibratorMode::Ivw1,
                              CalibratorMode::WilsonHash, CalibratorMode::WilsonRnd};
    } else {
      cfg.experiment_modes.clear();
      for (const std::string& m : split_csv(value)) cfg.experiment_modes.push_back(parse_mode(m));
    }
  } else if (key == "targets") {
    cfg.experiment_targets.clear();
    for (const std::string& t : split_csv(value)) {
      cfg.experiment_targets.push_back(parse_double(key, t));
    }
  } else if (key == "vary_init") cfg.vary_init = parse_bool(key, value);
  else throw InputError("unknown key '" + key + "' in [experiment]");
}

void validate_config(const PipelineConfig& cfg) {
  if (!(cfg.recall_target > 0.0 && cfg.recall_target < 1.0)) {
    throw InputError("recall_target must lie in (0, 1)");
  }
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
  if (cfg.train_labels < 2) throw InputError("train_labels must be at least 2");
  if (cfg.train_labels > cfg.train_sample) {
    throw InputError("train_labels cannot exceed train_sample");
  }
  if (cfg.calib_sample == 0) throw InputError("calib_sample must be positive");
  if (cfg.subsamples == 0) throw InputError("subsamples must be positive");
  if (cfg.bootstrap < 2) throw InputError("bootstrap must be at least 2");
  if (cfg.budget == 0) throw InputError("budget must be positive");
  if (cfg.train.learning_rate <= 0.0) throw InputError("learning_rate must be positive");
  if (cfg.train.max_epochs == 0) throw InputError("max_epochs must be positive");
  if (cfg.train.patience == 0 || cfg.train.patience >= cfg.train.max_epochs) {
    throw InputError("patience must lie in [1, max_epochs)");
  }
  if (cfg.train.train_batch == 0) throw InputError("batch must be positive");
  if (cfg.experiment_modes.empty()) throw InputError("experiment modes must not be empty");
  if (cfg.experiment_targets.empty()) throw InputError("experiment targets must not be empty");
  for (const double t : cfg.experiment_targets) {
    if (!(t > 0.0 && t < 1.0)) throw InputError("experiment targets must lie in (0, 1)");
  }
  if (!(cfg.predicate.min_overlap > 0.0 && cfg.predicate.min_overlap <= 1.0)) {
    throw InputError("min_overlap must lie in (0, 1]");
  }
}

}  // namespace

const char* mode_name(CalibratorMode mode) {
  switch (mode) {
    case CalibratorMode::WilsonRnd: return "wilson_rnd";
    case CalibratorMode::WilsonHash: return "wilson_hash";
    case CalibratorMode::Ivw1: return "ivw_1";
    case CalibratorMode::Proposed: return "proposed";
  }
  return "unknown";
}

CalibratorMode parse_mode(const std::string& name) {
  if (name == "wilson_rnd") return CalibratorMode::WilsonRnd;
  if (name == "wilson_hash") return CalibratorMode::WilsonHash;
  if (name == "ivw_1") return CalibratorMode::Ivw1;
  if (name == "proposed") return CalibratorMode::Proposed;
  throw InputError("unknown calibrator mode '" + name +
                   "' (expected proposed, ivw_1, wilson_hash or wilson_rnd)");
}

std::uint64_t trial_seed(const PipelineConfig& cfg, std::uint64_t trial) {
  // One master seed per trial; network init, calibration subsample draws and
  // the uniform-sample baseline all derive from it, so two trials with the
  // same master seed reproduce each other exactly.
  if (cfg.init_seed != 0) return cfg.init_seed;
  const std::uint64_t tag = cfg.vary_init ? trial : 0;
  return tag == 0 ? cfg.seed : derive_seed(cfg.seed, kTrialSeedTag, tag);
}

std::uint64_t effective_init_seed(const PipelineConfig& cfg, std::uint64_t trial) {
  return derive_seed(trial_seed(cfg, trial), kInitSeedTag, 0);
}

std::uint64_t wilson_rnd_seed(const PipelineConfig& cfg, std::uint64_t trial) {
  return derive_seed(trial_seed(cfg, trial), kRandomSampleTag, 0);
}

PipelineConfig desk_defaults() {
  PipelineConfig cfg;
  // Desk-scale corpus: a dense positive class whose top decile exceeds what a
  // single calibration subsample covers, so subsample draws stay partially
  // independent, plus a thin positive tail below the decile to cushion the
  // bound rules' bootstrap excursions.
  cfg.synth.match_fraction = 0.80;
  cfg.synth.jitter_sd = 0.02;
  cfg.synth.scale_sd = 0.03;
  return cfg;
}

PipelineConfig load_config(const std::string& path) {
  PipelineConfig cfg = desk_defaults();
  const SectionMap sections = parse_ini(path);
  for (const auto& [section, entries] : sections) {
    for (const auto& [key, value] : entries) {
      if (section == "paths") apply_paths(cfg, key, value);
      else if (section == "pipeline") apply_pipeline(cfg, key, value);
      else if (section == "train") apply_train(cfg, key, value);
      else if (section == "oracle") apply_oracle(cfg, key, value);
      else if (section == "synth") apply_synth(cfg, key, value);
      else if (section == "experiment") apply_experiment(cfg, key, value);
      else throw InputError("unknown section [" + section + "] in " + path);
    }
  }
  validate_config(cfg);
  return cfg;
}

void cmd_generate(const PipelineConfig& cfg) {
  const SynthDataset ds = generate(cfg.synth, cfg.predicate);
  for (const std::string* p : {&cfg.source_path, &cfg.target_path, &cfg.truth_path}) {
    const fs::path dir = fs::path(*p).parent_path();
    if (!dir.empty()) fs::create_directories(dir);
  }
  write_geometry_csv(cfg.source_path, ds.sources);
  write_geometry_csv(cfg.target_path, ds.targets);
  write_pair_csv(cfg.truth_path, ds.ground_truth);
}

void cmd_filter(const PipelineConfig& cfg) {
  const Corpus c = load_corpus(cfg, false);
  const GridSpec grid = mean_cell_extents(c.sources);
  const CsrCandidates csr =
      enumerate_candidates(c.sources, c.targets, grid, effective_threads(cfg));
  ensure_out_dir(cfg);
  write_csr(artifact_path(cfg, kCandidatesFile), csr);
}

void cmd_train(const PipelineConfig& cfg) {
  const Corpus c = load_corpus(cfg, true);
  const CsrCandidates csr = load_candidates(cfg, c);
  const unsigned threads = effective_threads(cfg);
  const GridSpec grid = mean_cell_extents(c.sources);
  const FeatureMatrix raw = extract_feature_matrix(c.sources, c.targets, csr, grid, threads);
  const FeatureScaler scaler = fit_scaler(raw);
  const FeatureMatrix scaled = transform(scaler, raw);
  const LabeledTrainSet lt = label_train_set(cfg, c, csr);
  const FeatureMatrix train_rows = gather_rows(scaled, lt.rows);
  TrainConfig tc = cfg.train;
  tc.seed = effective_init_seed(cfg, 0);
  const RankerModel model = train(train_rows, lt.labels, tc);
  ensure_out_dir(cfg);
  write_model(artifact_path(cfg, kModelFile), model, scaler);
}

void cmd_score(const PipelineConfig& cfg) {
  const Corpus c = load_corpus(cfg, false);
  const CsrCandidates csr = load_candidates(cfg, c);
  RankerModel model;
  FeatureScaler scaler;
  read_model(artifact_path(cfg, kModelFile), &model, &scaler);
  const unsigned threads = effective_threads(cfg);
  const GridSpec grid = mean_cell_extents(c.sources);
  const FeatureMatrix raw = extract_feature_matrix(c.sources, c.targets, csr, grid, threads);
  const FeatureMatrix scaled = transform(scaler, raw);
  const std::vector<double> scores = predict(model, scaled, threads);
  ensure_out_dir(cfg);
  write_scores(artifact_path(cfg, kScoresFile), scores);
}

nlohmann::ordered_json cmd_calibrate(const PipelineConfig& cfg, std::uint64_t trial) {
  return run_calibrate_stage(cfg, trial, UpstreamMs{}).report;
}

RunOutcome run_pipeline(const PipelineConfig& cfg) {
  validate_config(cfg);
  StageClock clock;
  cmd_filter(cfg);
  UpstreamMs up;
  up.filter = clock.lap_ms();
  cmd_train(cfg);
  up.train = clock.lap_ms();
  cmd_score(cfg);
  up.score = clock.lap_ms();
  const FinalOutcome fo = run_calibrate_stage(cfg, 0, up);
  RunOutcome out;
  out.report = fo.report;
  out.tau = fo.tau;
  out.achieved_recall = fo.recall;
  out.attainable = fo.attainable;
  return out;
}

ExperimentOutcome run_experiment(const PipelineConfig& cfg, std::size_t trials) {
  validate_config(cfg);
  if (trials == 0) throw InputError("experiment needs at least one trial");

  const unsigned threads = effective_threads(cfg);
  StageClock total_clock;
  StageClock clock;

  const Corpus corpus = load_corpus(cfg, true);
  const GridSpec grid = mean_cell_extents(corpus.sources);
  const CsrCandidates csr = enumerate_candidates(corpus.sources, corpus.targets, grid, threads);
  const double filter_ms = clock.lap_ms();

  FeatureMatrix raw = extract_feature_matrix(corpus.sources, corpus.targets, csr, grid, threads);
  const FeatureScaler scaler = fit_scaler(raw);
  const FeatureMatrix scaled = transform(scaler, raw);
  raw = FeatureMatrix{};
  const double features_ms = clock.lap_ms();

  const LabeledTrainSet lt = label_train_set(cfg, corpus, csr);
  const FeatureMatrix train_rows = gather_rows(scaled, lt.rows);

  ExperimentOutcome out;
  std::vector<ordered_json> reports;
  for (const CalibratorMode mode : cfg.experiment_modes) {
    for (const double target : cfg.experiment_targets) {
      ExperimentCell cell;
      cell.mode = mode;
      cell.target = target;
      out.cells.push_back(cell);
    }
  }

  std::vector<double> train_times;
  std::vector<double> score_times;
  std::vector<std::vector<double>> cell_taus(out.cells.size());
  std::vector<std::vector<double>> cell_fractions(out.cells.size());
  std::vector<bool> cell_overrun(out.cells.size(), false);

  for (std::size_t trial = 0; trial < trials; ++trial) {
    clock.lap_ms();
    TrainConfig tc = cfg.train;
    tc.seed = effective_init_seed(cfg, trial);
    const RankerModel model = train(train_rows, lt.labels, tc);
    const double train_ms = clock.lap_ms();
    const std::vector<double> scores = predict(model, scaled, threads);
    const StratumAssignment strata = assign_deciles(scores);
    const double score_ms = clock.lap_ms();
    train_times.push_back(train_ms);
    score_times.push_back(score_ms);

    PipelineState st;
    st.cfg = &cfg;
    st.corpus = &corpus;
    st.csr = &csr;
    st.scores = &scores;
    st.strata = &strata;
    st.train_inspected = lt.inspected;
    st.filter_ms = filter_ms;
    st.train_ms = train_ms;
    st.score_ms = score_ms;

    std::size_t ci = 0;
    for (const CalibratorMode mode : cfg.experiment_modes) {
      for (const double target : cfg.experiment_targets) {
        FinalOutcome fo = calibrate_and_verify(st, mode, target, trial);
        out.cells[ci].recalls.push_back(fo.recall);
        cell_taus[ci].push_back(fo.tau);
        cell_fractions[ci].push_back(static_cast<double>(fo.reviewed) /
                                     static_cast<double>(csr.pair_count()));
        if (fo.report["verification"]["overrun"].get<bool>()) cell_overrun[ci] = true;
        reports.push_back(std::move(fo.report));
        ++ci;
      }
    }
  }

  for (std::size_t ci = 0; ci < out.cells.size(); ++ci) {
    ExperimentCell& cell = out.cells[ci];
    const auto [rm, rs] = mean_sd(cell.recalls);
    cell.recall_mean = rm;
    cell.recall_sd = rs;
    cell.tau_mean = mean_sd(cell_taus[ci]).first;
    cell.review_fraction_mean = mean_sd(cell_fractions[ci]).first;
  }

  ordered_json& j = out.report;
  j["tool"] = "recall-forge";
  j["kind"] = "experiment";
  j["config"] = config_json(cfg, 0, false);
  j["trials"] = trials;
  ordered_json mode_names = ordered_json::array();
  for (const CalibratorMode m : cfg.experiment_modes) mode_names.push_back(mode_name(m));
  j["modes"] = mode_names;
  j["targets"] = cfg.experiment_targets;
  ordered_json summary = ordered_json::array();
  for (std::size_t ci = 0; ci < out.cells.size(); ++ci) {
    const ExperimentCell& cell = out.cells[ci];
    summary.push_back(ordered_json{{"mode", mode_name(cell.mode)},
                                   {"target", cell.target},
                                   {"recall_mean", cell.recall_mean},
                                   {"recall_sd", cell.recall_sd},
                                   {"recall_trials", cell.recalls},
                                   {"tau_mean", cell.tau_mean},
                                   {"review_fraction_mean", cell.review_fraction_mean},
                                   {"overrun_any", static_cast<bool>(cell_overrun[ci])}});
  }
  j["summary"] = summary;
  j["reports"] = reports;
  j["timings"] = ordered_json{{"threads", threads},
                              {"filter_ms", filter_ms},
                              {"features_ms", features_ms},
                              {"train_ms_mean", mean_sd(train_times).first},
                              {"score_ms_mean", mean_sd(score_times).first},
                              {"total_ms", total_clock.lap_ms()}};

  ensure_out_dir(cfg);
  write_json_file(artifact_path(cfg, kExperimentFile), j);
  return out;
}

void write_scores(const std::string& path, const std::vector<double>& scores) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open for writing: " + path);
  os.write("RFSC", 4);
  write_u16_le(os, 1);
  write_u64_le(os, scores.size());
  for (const double s : scores) write_f64_le(os, s);
  if (!os) throw InputError("failed writing " + path);
}

std::vector<double> read_scores(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "RFSC") throw InputError("not a score file: " + path);
  const std::uint16_t version = read_u16_le(is);
  if (version != 1) throw InputError("unsupported score file version in " + path);
  const std::uint64_t count = read_u64_le(is);
  std::vector<double> scores(count);
  for (std::uint64_t i = 0; i < count; ++i) scores[i] = read_f64_le(is);
  is.peek();
  if (!is.eof()) throw InputError("trailing bytes in " + path);
  return scores;
}

}  // namespace recallforge
