#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "recallforge/calibration.hpp"
#include "recallforge/features.hpp"
#include "recallforge/geometry.hpp"
#include "recallforge/grid_filter.hpp"
#include "recallforge/oracle.hpp"
#include "recallforge/pipeline.hpp"
#include "recallforge/ranker.hpp"
#include "recallforge/sampler.hpp"
#include "recallforge/stats.hpp"
#include "recallforge/synth.hpp"
#include "recallforge/wkt.hpp"
#include "recallforge/xxhash64.hpp"

namespace py = pybind11;
using namespace recallforge;

namespace {

using Ring = std::vector<std::pair<double, double>>;

std::vector<Point> to_points(const Ring& ring) {
  std::vector<Point> out;
  out.reserve(ring.size());
  for (const auto& [x, y] : ring) out.push_back({x, y});
  return out;
}

Ring from_points(const std::vector<Point>& pts) {
  Ring out;
  out.reserve(pts.size());
  for (const Point& p : pts) out.emplace_back(p.x, p.y);
  return out;
}

FeatureMatrix to_matrix(const std::vector<std::vector<double>>& rows) {
  FeatureMatrix m = FeatureMatrix::zeros(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != kFeatureCount) {
      throw std::invalid_argument("each feature row must have exactly 16 values");
    }
    for (std::size_t c = 0; c < kFeatureCount; ++c) {
      m.row(r)[c] = static_cast<float>(rows[r][c]);
    }
  }
  return m;
}

std::vector<std::vector<double>> from_matrix(const FeatureMatrix& m) {
  std::vector<std::vector<double>> out(m.rows);
  for (std::size_t r = 0; r < m.rows; ++r) {
    out[r].assign(m.row(r), m.row(r) + kFeatureCount);
  }
  return out;
}

py::object json_to_py(const nlohmann::ordered_json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() =
      "recall-forge core: equigrid candidate filtering, pair features, a small "
      "neural ranker, and recall-calibrated score thresholds.";

  // Hashing and deterministic sampling.
  m.def(
      "xxh64",
      [](const py::bytes& data, std::uint64_t seed) {
        const std::string s = data;
        return xxhash64(s.data(), s.size(), seed);
      },
      py::arg("data"), py::arg("seed") = 0);
  m.def("derive_seed", &derive_seed, py::arg("base"), py::arg("tag_a"), py::arg("tag_b") = 0);
  m.def("hash_key", &hash_key, py::arg("id"), py::arg("stratum"), py::arg("seed"));
  m.def(
      "assign_deciles",
      [](const std::vector<double>& scores) {
        const StratumAssignment s = assign_deciles(scores);
        return std::vector<int>(s.deciles.begin(), s.deciles.end());
      },
      py::arg("scores"));
  m.def(
      "hashed_sample_ids",
      [](std::uint64_t max_id, std::uint64_t k, std::uint64_t seed,
         const std::optional<std::vector<double>>& stratify_scores) {
        if (!stratify_scores) return hashed_sample_ids(max_id, k, seed);
        const StratumAssignment strata = assign_deciles(*stratify_scores);
        return hashed_sample_ids(max_id, k, seed, &strata);
      },
      py::arg("max_id"), py::arg("k"), py::arg("seed"),
      py::arg("stratify_scores") = py::none());

  // Numeric kernels.
  m.def("reg_inc_beta", &reg_inc_beta, py::arg("a"), py::arg("b"), py::arg("x"));
  m.def("beta_inv_cdf", &beta_inv_cdf, py::arg("alpha"), py::arg("a"), py::arg("b"));
  m.def("normal_quantile", &normal_quantile, py::arg("p"));
  m.def("student_t_quantile", &student_t_quantile, py::arg("p"), py::arg("dof"));

  // Threshold calibration.
  py::enum_<RuleKind>(m, "RuleKind")
      .value("ClopperPearson", RuleKind::ClopperPearson)
      .value("Jeffreys", RuleKind::Jeffreys)
      .value("Wilson", RuleKind::Wilson)
      .value("ExactQuantile", RuleKind::ExactQuantile);
  py::enum_<EnsembleMode>(m, "EnsembleMode")
      .value("Min", EnsembleMode::Min)
      .value("Median", EnsembleMode::Median);
  m.def("lower_bound", &lower_bound, py::arg("rule"), py::arg("k"), py::arg("n"),
        py::arg("alpha"));
  m.def("find_min_rank", &find_min_rank, py::arg("rule"), py::arg("n"), py::arg("r_star"),
        py::arg("alpha"));

  py::class_<ThresholdDecision>(m, "ThresholdDecision")
      .def_readonly("tau", &ThresholdDecision::tau)
      .def_readonly("rank", &ThresholdDecision::rank)
      .def_readonly("attainable", &ThresholdDecision::attainable);
  m.def(
      "threshold_for_target",
      [](RuleKind rule, std::vector<double> positive_scores, double r_star, double alpha) {
        return threshold_for_target(rule, CalibrationSample::from_unsorted(std::move(positive_scores)),
                                    r_star, alpha);
      },
      py::arg("rule"), py::arg("positive_scores"), py::arg("r_star"), py::arg("alpha"));

  py::class_<EnsembleResult>(m, "EnsembleResult")
      .def_readonly("per_subsample", &EnsembleResult::per_subsample)
      .def_readonly("final_tau", &EnsembleResult::final_tau)
      .def_readonly("ci_low", &EnsembleResult::ci_low)
      .def_readonly("ci_high", &EnsembleResult::ci_high)
      .def_readonly("alpha", &EnsembleResult::alpha)
      .def_readonly("target", &EnsembleResult::target)
      .def_readonly("attainable", &EnsembleResult::attainable);
  m.def(
      "calibrate_ensemble",
      [](const std::vector<std::vector<double>>& subsample_scores, double r_star, double alpha,
         std::size_t bootstrap, std::uint64_t seed, EnsembleMode mode) {
        std::vector<CalibrationSample> subs;
        subs.reserve(subsample_scores.size());
        for (const std::vector<double>& s : subsample_scores) {
          subs.push_back(CalibrationSample::from_unsorted(s));
        }
        return calibrate_ensemble(subs, r_star, alpha, bootstrap, seed, mode);
      },
      py::arg("subsample_positive_scores"), py::arg("r_star"), py::arg("alpha"),
      py::arg("bootstrap") = 200, py::arg("seed") = 2025,
      py::arg("mode") = EnsembleMode::Min);

  // Geometry.
  py::class_<Geometry>(m, "Geometry")
      .def(py::init([](std::uint64_t id, const Ring& ring) {
             Geometry g;
             g.id = id;
             g.ring = to_points(ring);
             validate_geometry(g);
             return g;
           }),
           py::arg("id"), py::arg("ring"))
      .def_readonly("id", &Geometry::id)
      .def_property_readonly("ring", [](const Geometry& g) { return from_points(g.ring); })
      .def("__repr__", [](const Geometry& g) {
        return "Geometry(id=" + std::to_string(g.id) + ", " + std::to_string(g.ring.size()) +
               " vertices)";
      });
  m.def("area", [](const Geometry& g) { return ring_area(g.ring); }, py::arg("geometry"));
  m.def("perimeter", [](const Geometry& g) { return ring_perimeter(g.ring); },
        py::arg("geometry"));
  m.def("is_convex", [](const Geometry& g) { return ring_is_convex(g.ring); },
        py::arg("geometry"));
  m.def("to_wkt", &format_wkt_polygon, py::arg("geometry"));
  m.def("from_wkt", &parse_wkt_polygon, py::arg("id"), py::arg("wkt"));
  m.def(
      "clip_convex",
      [](const Ring& subject, const Ring& clip) {
        return from_points(clip_convex(to_points(subject), to_points(clip)));
      },
      py::arg("subject"), py::arg("clip"));

  // Candidate filtering. Offsets/values form the usual CSR adjacency.
  m.def(
      "enumerate_candidates",
      [](const std::vector<Geometry>& S, const std::vector<Geometry>& T, unsigned threads) {
        const CsrCandidates csr = enumerate_candidates(S, T, mean_cell_extents(S), threads);
        return py::make_tuple(csr.offsets, csr.values);
      },
      py::arg("sources"), py::arg("targets"), py::arg("threads") = 1);
  m.def(
      "brute_force_candidates",
      [](const std::vector<Geometry>& S, const std::vector<Geometry>& T) {
        const CsrCandidates csr = brute_force_candidates(S, T);
        return py::make_tuple(csr.offsets, csr.values);
      },
      py::arg("sources"), py::arg("targets"));

  // Features and the ranker.
  m.def(
      "pair_features",
      [](const Geometry& s, const Geometry& t, double cell_x, double cell_y) {
        GridSpec grid;
        grid.theta_x = cell_x;
        grid.theta_y = cell_y;
        return extract_features(s, t, grid);
      },
      py::arg("source"), py::arg("target"), py::arg("cell_x") = 1.0, py::arg("cell_y") = 1.0);

  py::class_<FeatureScaler>(m, "FeatureScaler");
  m.def(
      "fit_scaler",
      [](const std::vector<std::vector<double>>& rows) { return fit_scaler(to_matrix(rows)); },
      py::arg("rows"));
  m.def(
      "scale",
      [](const FeatureScaler& scaler, const std::vector<std::vector<double>>& rows) {
        return from_matrix(transform(scaler, to_matrix(rows)));
      },
      py::arg("scaler"), py::arg("rows"));

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("max_epochs", &TrainConfig::max_epochs)
      .def_readwrite("patience", &TrainConfig::patience)
      .def_readwrite("train_batch", &TrainConfig::train_batch)
      .def_readwrite("infer_batch", &TrainConfig::infer_batch)
      .def_readwrite("seed", &TrainConfig::seed);
  py::class_<RankerModel>(m, "RankerModel");
  m.def(
      "train_ranker",
      [](const std::vector<std::vector<double>>& rows, const std::vector<int>& labels,
         const TrainConfig& cfg) {
        std::vector<std::uint8_t> y;
        y.reserve(labels.size());
        for (const int v : labels) y.push_back(v ? 1 : 0);
        return train(to_matrix(rows), y, cfg);
      },
      py::arg("scaled_rows"), py::arg("labels"), py::arg("config") = TrainConfig{});
  m.def(
      "predict",
      [](const RankerModel& model, const std::vector<std::vector<double>>& rows,
         unsigned threads) { return predict(model, to_matrix(rows), threads); },
      py::arg("model"), py::arg("scaled_rows"), py::arg("threads") = 1);
  m.def("save_model", &write_model, py::arg("path"), py::arg("model"), py::arg("scaler"));
  m.def(
      "load_model",
      [](const std::string& path) {
        RankerModel model;
        FeatureScaler scaler;
        read_model(path, &model, &scaler);
        return py::make_tuple(model, scaler);
      },
      py::arg("path"));

  // Oracle predicate and recall accounting.
  py::enum_<PredicateMode>(m, "PredicateMode")
      .value("Polygon", PredicateMode::PolygonOverlapRatio)
      .value("Mbr", PredicateMode::MbrOverlapRatio);
  py::class_<MatchPredicateConfig>(m, "MatchPredicateConfig")
      .def(py::init<>())
      .def_readwrite("mode", &MatchPredicateConfig::mode)
      .def_readwrite("min_overlap", &MatchPredicateConfig::min_overlap);
  m.def("is_match", &is_match, py::arg("source"), py::arg("target"),
        py::arg("predicate") = MatchPredicateConfig{});
  m.def(
      "evaluate_recall",
      [](const std::vector<double>& scores, const std::vector<int>& labels, double tau) {
        std::vector<std::uint8_t> y;
        y.reserve(labels.size());
        for (const int v : labels) y.push_back(v ? 1 : 0);
        return evaluate_recall(scores, y, tau);
      },
      py::arg("scores"), py::arg("labels"), py::arg("tau"));

  // Synthetic corpora.
  py::class_<SynthConfig>(m, "SynthConfig")
      .def(py::init<>())
      .def_readwrite("n_source", &SynthConfig::n_source)
      .def_readwrite("n_target", &SynthConfig::n_target)
      .def_readwrite("match_fraction", &SynthConfig::match_fraction)
      .def_readwrite("jitter_sd", &SynthConfig::jitter_sd)
      .def_readwrite("scale_sd", &SynthConfig::scale_sd)
      .def_readwrite("world_extent", &SynthConfig::world_extent)
      .def_readwrite("seed", &SynthConfig::seed);
  py::class_<SynthDataset>(m, "SynthDataset")
      .def_readonly("sources", &SynthDataset::sources)
      .def_readonly("targets", &SynthDataset::targets)
      .def_readonly("ground_truth", &SynthDataset::ground_truth);
  m.def("generate_synthetic", &generate, py::arg("config"),
        py::arg("predicate") = MatchPredicateConfig{});

  // Pipeline configuration and the end-to-end runs.
  py::enum_<CalibratorMode>(m, "CalibratorMode")
      .value("Proposed", CalibratorMode::Proposed)
      .value("Ivw1", CalibratorMode::Ivw1)
      .value("WilsonHash", CalibratorMode::WilsonHash)
      .value("WilsonRnd", CalibratorMode::WilsonRnd);
  py::class_<PipelineConfig>(m, "PipelineConfig")
      .def(py::init<>())
      .def_readwrite("source_path", &PipelineConfig::source_path)
      .def_readwrite("target_path", &PipelineConfig::target_path)
      .def_readwrite("truth_path", &PipelineConfig::truth_path)
      .def_readwrite("out_dir", &PipelineConfig::out_dir)
      .def_readwrite("recall_target", &PipelineConfig::recall_target)
      .def_readwrite("alpha", &PipelineConfig::alpha)
      .def_readwrite("seed", &PipelineConfig::seed)
      .def_readwrite("train_sample", &PipelineConfig::train_sample)
      .def_readwrite("train_labels", &PipelineConfig::train_labels)
      .def_readwrite("calib_sample", &PipelineConfig::calib_sample)
      .def_readwrite("subsamples", &PipelineConfig::subsamples)
      .def_readwrite("bootstrap", &PipelineConfig::bootstrap)
      .def_readwrite("budget", &PipelineConfig::budget)
      .def_readwrite("mode", &PipelineConfig::mode)
      .def_readwrite("ensemble", &PipelineConfig::ensemble)
      .def_readwrite("threads", &PipelineConfig::threads)
      .def_readwrite("experiment_modes", &PipelineConfig::experiment_modes)
      .def_readwrite("experiment_targets", &PipelineConfig::experiment_targets)
      .def_readwrite("vary_init", &PipelineConfig::vary_init)
      .def_readwrite("init_seed", &PipelineConfig::init_seed)
      .def_property(
          "train", [](PipelineConfig& c) -> TrainConfig& { return c.train; },
          [](PipelineConfig& c, const TrainConfig& v) { c.train = v; },
          py::return_value_policy::reference_internal)
      .def_property(
          "predicate", [](PipelineConfig& c) -> MatchPredicateConfig& { return c.predicate; },
          [](PipelineConfig& c, const MatchPredicateConfig& v) { c.predicate = v; },
          py::return_value_policy::reference_internal)
      .def_property(
          "synth", [](PipelineConfig& c) -> SynthConfig& { return c.synth; },
          [](PipelineConfig& c, const SynthConfig& v) { c.synth = v; },
          py::return_value_policy::reference_internal);
  m.def("desk_defaults", &desk_defaults);
  m.def("load_config", &load_config, py::arg("path"));
  m.def("generate_corpus", &cmd_generate, py::arg("config"));
  m.def(
      "run_pipeline",
      [](const PipelineConfig& cfg) { return json_to_py(run_pipeline(cfg).report); },
      py::arg("config"),
      "Filter, train, score, calibrate, and verify; returns the run report as a dict.");
  m.def(
      "run_experiment",
      [](const PipelineConfig& cfg, std::size_t trials) {
        return json_to_py(run_experiment(cfg, trials).report);
      },
      py::arg("config"), py::arg("trials"),
      "Multi-trial mode/target sweep over a shared corpus; returns the report as a dict.");
}
