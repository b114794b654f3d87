#include "amgc/dataio.hpp"
#include "amgc/trainer.hpp"
#include "amgc/verify.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace amgc;

namespace {

// LossContext carries a raw adapter pointer; rebuild it per call so python
// callers never manage that lifetime.
LossResult py_variant_loss(const VariantSpec& spec, const StatsMap& old_stats,
                           const StatsMap& new_stats, const FeatureMap& new_features,
                           const ClassifierParams& params, const FeatureAdapter* adapter,
                           uint64_t seed) {
    LossContext ctx;
    ctx.old_stats = old_stats;
    ctx.new_stats = new_stats;
    ctx.new_features = new_features;
    ctx.adapter = adapter;
    return variant_loss(spec, ctx, params, seed);
}

py::dict verdict_dict(const SuiteVerdict& v) {
    py::dict d;
    d["suite"] = v.suite;
    d["pass"] = v.pass;
    d["trials"] = v.trials;
    d["violations"] = v.violations;
    d["worst"] = v.worst;
    d["detail"] = v.detail;
    d["seed"] = v.seed;
    return d;
}

}  // namespace

PYBIND11_MODULE(_amgc, m) {
    m.doc() = "Sample-free incremental classifier learning engine";
    m.attr("__version__") = kEngineVersion;

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_IOError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    // ---- statistics ----
    py::class_<ClassStats>(m, "ClassStats")
        .def(py::init([](int class_id, long count, const Vector& mean, const Matrix& cov) {
                 ClassStats s;
                 s.class_id = class_id;
                 s.count = count;
                 s.mean = mean;
                 s.covariance = cov;
                 return s;
             }),
             py::arg("class_id"), py::arg("count"), py::arg("mean"), py::arg("covariance"))
        .def_readwrite("class_id", &ClassStats::class_id)
        .def_readwrite("count", &ClassStats::count)
        .def_readwrite("mean", &ClassStats::mean)
        .def_readwrite("covariance", &ClassStats::covariance)
        .def_property_readonly("diagonal", &ClassStats::diagonal);

    py::class_<StatsAccumulator>(m, "StatsAccumulator")
        .def(py::init<int, int>(), py::arg("class_id"), py::arg("dim"))
        .def("update", &StatsAccumulator::update, py::arg("batch"))
        .def("merge", &StatsAccumulator::merge, py::arg("other"))
        .def_property_readonly("class_id", &StatsAccumulator::class_id)
        .def_property_readonly("dim", &StatsAccumulator::dim)
        .def_property_readonly("count", &StatsAccumulator::count)
        .def_property_readonly("mean", &StatsAccumulator::mean)
        .def_property_readonly("comoment", &StatsAccumulator::comoment);

    py::class_<FeatureAdapter>(m, "FeatureAdapter")
        .def(py::init([](const Matrix& matrix, const Vector& offset) {
                 return FeatureAdapter{matrix, offset};
             }),
             py::arg("matrix"), py::arg("offset"))
        .def_static("identity", &FeatureAdapter::identity, py::arg("dim"))
        .def_readwrite("matrix", &FeatureAdapter::matrix)
        .def_readwrite("offset", &FeatureAdapter::offset)
        .def("apply", py::overload_cast<const Matrix&>(&FeatureAdapter::apply, py::const_),
             py::arg("features"));

    m.def("default_shrinkage", &default_shrinkage, py::arg("accumulator"));
    m.def("finalize",
          py::overload_cast<const StatsAccumulator&, double>(&finalize),
          py::arg("accumulator"), py::arg("shrinkage"));
    m.def("finalize", py::overload_cast<const StatsAccumulator&>(&finalize),
          py::arg("accumulator"));
    m.def("variance_enlarge", &variance_enlarge, py::arg("stats"), py::arg("lambda_"));
    m.def("adapt_stats", &adapt_stats, py::arg("stats"), py::arg("adapter"));
    m.def("sample_pseudo_features", &sample_pseudo_features, py::arg("stats"),
          py::arg("num_samples"), py::arg("seed"));

    // ---- losses ----
    py::class_<ClassifierParams>(m, "ClassifierParams")
        .def(py::init([](const Matrix& weights, const Vector& biases, int old_count,
                         int new_count) {
                 ClassifierParams p;
                 p.weights = weights;
                 p.biases = biases;
                 p.old_count = old_count;
                 p.new_count = new_count;
                 p.check();
                 return p;
             }),
             py::arg("weights"), py::arg("biases"), py::arg("old_count"), py::arg("new_count"))
        .def_readwrite("weights", &ClassifierParams::weights)
        .def_readwrite("biases", &ClassifierParams::biases)
        .def_readwrite("old_count", &ClassifierParams::old_count)
        .def_readwrite("new_count", &ClassifierParams::new_count)
        .def_property_readonly("num_classes", &ClassifierParams::num_classes)
        .def_property_readonly("dim", &ClassifierParams::dim);

    py::class_<LossScope>(m, "LossScope")
        .def(py::init([](std::vector<int> targets, std::vector<int> denominator) {
                 return LossScope{std::move(targets), std::move(denominator)};
             }),
             py::arg("targets"), py::arg("denominator"))
        .def_readwrite("targets", &LossScope::targets)
        .def_readwrite("denominator", &LossScope::denominator);

    py::enum_<Variant>(m, "Variant")
        .value("SBLC", Variant::SBLC)
        .value("SBnDBoLC", Variant::SBnDBoLC)
        .value("SBGC", Variant::SBGC)
        .value("DBLC", Variant::DBLC)
        .value("DBGC", Variant::DBGC)
        .value("DBGC_SM", Variant::DBGC_SM)
        .value("AMGC", Variant::AMGC);
    m.def("parse_variant", &parse_variant, py::arg("name"));
    m.def("variant_name", &variant_name, py::arg("variant"));

    py::class_<VariantSpec>(m, "VariantSpec")
        .def(py::init<>())
        .def_readwrite("variant", &VariantSpec::variant)
        .def_readwrite("lambda_", &VariantSpec::lambda)
        .def_readwrite("mc_samples", &VariantSpec::mc_samples)
        .def_readwrite("fixed_margin", &VariantSpec::fixed_margin);

    py::class_<LossResult>(m, "LossResult")
        .def_readonly("value", &LossResult::value)
        .def_readonly("grad_weights", &LossResult::grad_weights)
        .def_readonly("grad_biases", &LossResult::grad_biases)
        .def_readonly("grad_adapter_matrix", &LossResult::grad_adapter_matrix)
        .def_readonly("grad_adapter_offset", &LossResult::grad_adapter_offset);

    py::class_<ClassDistribution>(m, "ClassDistribution")
        .def(py::init([](const ClassStats& stats, bool raw_space) {
                 return ClassDistribution{stats, raw_space};
             }),
             py::arg("stats"), py::arg("raw_space") = false)
        .def_readwrite("stats", &ClassDistribution::stats)
        .def_readwrite("raw_space", &ClassDistribution::raw_space);

    py::class_<ClassFeatures>(m, "ClassFeatures")
        .def(py::init([](const Matrix& features, bool raw_space) {
                 return ClassFeatures{features, raw_space};
             }),
             py::arg("features"), py::arg("raw_space") = false)
        .def_readwrite("features", &ClassFeatures::features)
        .def_readwrite("raw_space", &ClassFeatures::raw_space);

    py::class_<DbgcLosses>(m, "DbgcLosses")
        .def_readonly("new_loss", &DbgcLosses::new_loss)
        .def_readonly("old_loss", &DbgcLosses::old_loss)
        .def_readonly("seen_loss", &DbgcLosses::seen_loss);

    m.def(
        "db_loss",
        [](const StatsMap& stats, const ClassifierParams& params, const LossScope& scope,
           const FeatureAdapter* adapter) { return db_loss(stats, params, scope, adapter); },
        py::arg("stats"), py::arg("params"), py::arg("scope"), py::arg("adapter") = nullptr);
    m.def(
        "dbgc_losses",
        [](const StatsMap& old_stats, const StatsMap& new_stats, const ClassifierParams& params,
           const FeatureAdapter* adapter) {
            return dbgc_losses(old_stats, new_stats, params, adapter);
        },
        py::arg("old_stats"), py::arg("new_stats"), py::arg("params"),
        py::arg("adapter") = nullptr);
    m.def(
        "sb_loss",
        [](const FeatureMap& features, const ClassifierParams& params, const LossScope& scope,
           const FeatureAdapter* adapter) { return sb_loss(features, params, scope, adapter); },
        py::arg("features"), py::arg("params"), py::arg("scope"), py::arg("adapter") = nullptr);
    m.def(
        "sb_loss_sampled",
        [](const StatsMap& stats, const ClassifierParams& params, const LossScope& scope,
           int mc_samples, uint64_t seed, const FeatureAdapter* adapter) {
            return sb_loss(stats, params, scope, mc_samples, seed, adapter);
        },
        py::arg("stats"), py::arg("params"), py::arg("scope"), py::arg("mc_samples"),
        py::arg("seed"), py::arg("adapter") = nullptr);
    m.def("adaptive_margin", &adaptive_margin, py::arg("weight_column"),
          py::arg("variance_diagonal"), py::arg("lambda_"));
    m.def(
        "amarx_loss",
        [](const StatsMap& old_stats, const ClassifierParams& params, double lambda,
           const FeatureAdapter* adapter) {
            return amarx_loss(old_stats, params, lambda, adapter);
        },
        py::arg("old_stats"), py::arg("params"), py::arg("lambda_"),
        py::arg("adapter") = nullptr);
    m.def("margin_form_loss", &margin_form_loss, py::arg("old_stats"), py::arg("params"),
          py::arg("lambda_"));
    m.def(
        "soft_margin_loss",
        [](const StatsMap& old_stats, const ClassifierParams& params, double fixed_margin,
           const FeatureAdapter* adapter) {
            return soft_margin_loss(old_stats, params, fixed_margin, adapter);
        },
        py::arg("old_stats"), py::arg("params"), py::arg("fixed_margin"),
        py::arg("adapter") = nullptr);
    m.def("variant_loss", &py_variant_loss, py::arg("spec"), py::arg("old_stats"),
          py::arg("new_stats"), py::arg("new_features"), py::arg("params"),
          py::arg("adapter") = nullptr, py::arg("seed") = 0);

    // ---- data io ----
    py::enum_<Split>(m, "Split").value("Train", Split::Train).value("Test", Split::Test);

    py::class_<ClassCounts>(m, "ClassCounts")
        .def_readonly("train", &ClassCounts::train)
        .def_readonly("test", &ClassCounts::test);

    py::class_<FeatureDataset>(m, "FeatureDataset")
        .def(py::init<>())
        .def_readonly("dim", &FeatureDataset::dim)
        .def_readonly("manifest", &FeatureDataset::manifest)
        .def_property_readonly("num_classes", &FeatureDataset::num_classes)
        .def_property_readonly("num_records",
                               [](const FeatureDataset& d) { return d.records.size(); })
        .def("features_of", &FeatureDataset::features_of, py::arg("label"), py::arg("split"));

    py::class_<SynthConfig>(m, "SynthConfig")
        .def(py::init<>())
        .def_readwrite("num_classes", &SynthConfig::num_classes)
        .def_readwrite("dim", &SynthConfig::dim)
        .def_readwrite("train_per_class", &SynthConfig::train_per_class)
        .def_readwrite("test_per_class", &SynthConfig::test_per_class)
        .def_readwrite("mean_dispersion", &SynthConfig::mean_dispersion)
        .def_readwrite("cov_scale", &SynthConfig::cov_scale)
        .def_readwrite("drift", &SynthConfig::drift)
        .def_readwrite("classes_per_task", &SynthConfig::classes_per_task);

    m.def("gen_synthetic", &gen_synthetic, py::arg("config"), py::arg("seed"));
    m.def("write_feature_file", &write_feature_file, py::arg("dataset"), py::arg("path"));
    m.def("read_feature_file", &read_feature_file, py::arg("path"));

    // ---- trainer ----
    py::enum_<StatsMode>(m, "StatsMode")
        .value("FrozenAtSave", StatsMode::FrozenAtSave)
        .value("ReAdapted", StatsMode::ReAdapted);

    py::class_<OptimizerConfig>(m, "OptimizerConfig")
        .def(py::init<>())
        .def_readwrite("initial_lr", &OptimizerConfig::initial_lr)
        .def_readwrite("incremental_lr_adapter", &OptimizerConfig::incremental_lr_adapter)
        .def_readwrite("incremental_lr_classifier", &OptimizerConfig::incremental_lr_classifier)
        .def_readwrite("momentum", &OptimizerConfig::momentum)
        .def_readwrite("epochs_initial", &OptimizerConfig::epochs_initial)
        .def_readwrite("epochs_incremental", &OptimizerConfig::epochs_incremental)
        .def_readwrite("steps_per_epoch", &OptimizerConfig::steps_per_epoch);

    py::class_<ScenarioConfig>(m, "ScenarioConfig")
        .def(py::init<>())
        .def_readwrite("tasks", &ScenarioConfig::tasks)
        .def_readwrite("classes_per_task", &ScenarioConfig::classes_per_task)
        .def_readwrite("dim", &ScenarioConfig::dim)
        .def_readwrite("variant", &ScenarioConfig::variant)
        .def_readwrite("optimizer", &ScenarioConfig::optimizer)
        .def_readwrite("seed", &ScenarioConfig::seed)
        .def_readwrite("stats_mode", &ScenarioConfig::stats_mode)
        .def_readwrite("shrinkage", &ScenarioConfig::shrinkage);

    py::class_<ResultReport>(m, "ResultReport")
        .def_readonly("config", &ResultReport::config)
        .def_readonly("runs", &ResultReport::runs)
        .def_readonly("task_accuracy", &ResultReport::task_accuracy)
        .def_readonly("seen_accuracy", &ResultReport::seen_accuracy)
        .def_readonly("la", &ResultReport::la)
        .def_readonly("aia", &ResultReport::aia)
        .def_readonly("run_reports", &ResultReport::run_reports)
        .def("to_json", [](const ResultReport& r) { return report_to_json(r).dump(2); })
        .def("to_csv", &report_to_csv);

    m.def("expand_classifier", &expand_classifier, py::arg("params"), py::arg("n_new"),
          py::arg("seed"));
    m.def("compute_metrics", &compute_metrics, py::arg("seen_accuracies"));
    m.def("run_scenario", &run_scenario, py::arg("config"), py::arg("dataset"),
          py::arg("run_index") = 0,
          py::call_guard<py::gil_scoped_release>());
    m.def("run_scenario_averaged", &run_scenario_averaged, py::arg("config"), py::arg("dataset"),
          py::arg("runs"), py::arg("deterministic") = false,
          py::call_guard<py::gil_scoped_release>());

    // ---- verification suites ----
    m.def(
        "jensen_bound_suite",
        [](int trials, int max_dim, int max_classes, int mc_samples, uint64_t seed) {
            SuiteVerdict v;
            {
                py::gil_scoped_release release;
                v = jensen_bound_suite(trials, max_dim, max_classes, mc_samples, seed);
            }
            return verdict_dict(v);
        },
        py::arg("trials") = 200, py::arg("max_dim") = 8, py::arg("max_classes") = 6,
        py::arg("mc_samples") = 200000, py::arg("seed") = 20240601);
    m.def(
        "margin_equivalence_suite",
        [](int trials, uint64_t seed) { return verdict_dict(margin_equivalence_suite(trials, seed)); },
        py::arg("trials") = 1000, py::arg("seed") = 20240601);
    m.def(
        "gradient_suite",
        [](int trials, int probe_count, uint64_t seed) {
            return verdict_dict(gradient_suite(trials, probe_count, seed));
        },
        py::arg("trials") = 50, py::arg("probe_count") = 12, py::arg("seed") = 20240601);
    m.def(
        "stats_oracle_suite",
        [](uint64_t seed) { return verdict_dict(stats_oracle_suite(seed)); },
        py::arg("seed") = 20240601);
}
