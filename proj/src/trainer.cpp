#include "amgc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>

namespace amgc {

namespace {

constexpr uint64_t kExpandTag = 0x45585041;  // seed stream tags
constexpr uint64_t kStepTag = 0x53544550;

// Raw per-class statistics, streamed in chunks so the production path
// exercises the batched merge.
ClassStats class_stats_from_features(int label, const Matrix& features,
                                     const std::optional<double>& shrinkage) {
    StatsAccumulator acc(label, static_cast<int>(features.rows()));
    constexpr long kChunk = 64;
    for (long start = 0; start < features.cols(); start += kChunk) {
        const long n = std::min(kChunk, features.cols() - start);
        acc.update(features.middleCols(start, n));
    }
    return shrinkage.has_value() ? finalize(acc, *shrinkage) : finalize(acc);
}

void check_task_labels(const TaskData& task_data, int first, int last) {
    if (task_data.features.empty()) throw ConfigError("task data covers no classes");
    for (const auto& [label, features] : task_data.features) {
        (void)features;
        if (label < first || label >= last)
            throw ConfigError("task data carries label " + std::to_string(label) +
                              ", expected the contiguous range [" + std::to_string(first) +
                              ", " + std::to_string(last) + ")");
    }
    if (static_cast<int>(task_data.features.size()) != last - first)
        throw ConfigError("task data covers " + std::to_string(task_data.features.size()) +
                          " classes, expected " + std::to_string(last - first));
}

}  // namespace

std::string stats_mode_name(StatsMode mode) {
    return mode == StatsMode::FrozenAtSave ? "frozen-at-save" : "re-adapted";
}

StatsMode parse_stats_mode(const std::string& name) {
    if (name == "frozen-at-save" || name == "frozen") return StatsMode::FrozenAtSave;
    if (name == "re-adapted" || name == "readapted") return StatsMode::ReAdapted;
    throw ConfigError("unknown stats mode '" + name + "'");
}

void OptimizerConfig::check() const {
    if (initial_lr < 0.0 || incremental_lr_adapter < 0.0 || incremental_lr_classifier < 0.0)
        throw ConfigError("learning rates must be non-negative");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
    if (epochs_initial < 1 || epochs_incremental < 1)
        throw ConfigError("epoch counts must be at least 1");
    if (steps_per_epoch < 1) throw ConfigError("steps_per_epoch must be at least 1");
}

void ScenarioConfig::check() const {
    if (tasks < 1) throw ConfigError("scenario needs at least one task");
    if (classes_per_task < 1) throw ConfigError("classes_per_task must be positive");
    if (dim < 1) throw ConfigError("feature dimension must be positive");
    if (shrinkage.has_value() && *shrinkage < 0.0)
        throw ConfigError("shrinkage must be non-negative");
    variant.check();
    optimizer.check();
}

void ScenarioConfig::check_against(const FeatureDataset& dataset) const {
    check();
    if (dataset.dim != dim)
        throw ConfigError("scenario dim " + std::to_string(dim) + " does not match dataset dim " +
                          std::to_string(dataset.dim));
    if (dataset.num_classes() != tasks * classes_per_task)
        throw ConfigError("scenario covers " + std::to_string(tasks * classes_per_task) +
                          " classes but the dataset manifest has " +
                          std::to_string(dataset.num_classes()));
    validate_for_training(dataset);
}

ClassifierParams expand_classifier(const ClassifierParams& params, int n_new, uint64_t seed) {
    if (n_new < 1) throw ConfigError("classifier expansion needs at least one new class");
    const int d = params.dim();
    if (d < 1) throw ConfigError("cannot expand a classifier of dimension 0");
    const int k_prev = params.num_classes();

    ClassifierParams out;
    out.old_count = k_prev;
    out.new_count = n_new;
    out.weights = Matrix(d, k_prev + n_new);
    out.biases = Vector(k_prev + n_new);
    if (k_prev > 0) {
        out.weights.leftCols(k_prev) = params.weights;
        out.biases.head(k_prev) = params.biases;
    }

    Rng rng(seed);
    const double stddev = 1.0 / std::sqrt(static_cast<double>(d));
    for (int c = 0; c < n_new; ++c) {
        for (int r = 0; r < d; ++r) out.weights(r, k_prev + c) = stddev * rng.normal();
        out.biases(k_prev + c) = 0.0;
    }
    return out;
}

SgdState SgdState::zero(int dim, int num_classes) {
    SgdState s;
    s.vel_weights = Matrix::Zero(dim, num_classes);
    s.vel_biases = Vector::Zero(num_classes);
    s.vel_adapter_matrix = Matrix::Zero(dim, dim);
    s.vel_adapter_offset = Vector::Zero(dim);
    return s;
}

void sgd_step(ClassifierParams& params, FeatureAdapter& adapter, SgdState& state,
              const LossResult& grads, double lr_classifier, double lr_adapter,
              double momentum) {
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
    if (!grads.grad_weights.allFinite() || !grads.grad_biases.allFinite() ||
        !grads.grad_adapter_matrix.allFinite() || !grads.grad_adapter_offset.allFinite())
        throw NumericError("non-finite gradient, optimizer step aborted");

    state.vel_weights = momentum * state.vel_weights + grads.grad_weights;
    state.vel_biases = momentum * state.vel_biases + grads.grad_biases;
    state.vel_adapter_matrix = momentum * state.vel_adapter_matrix + grads.grad_adapter_matrix;
    state.vel_adapter_offset = momentum * state.vel_adapter_offset + grads.grad_adapter_offset;

    params.weights -= lr_classifier * state.vel_weights;
    params.biases -= lr_classifier * state.vel_biases;
    adapter.matrix -= lr_adapter * state.vel_adapter_matrix;
    adapter.offset -= lr_adapter * state.vel_adapter_offset;
}

IncrementalState run_initial_task(const ScenarioConfig& config, const TaskData& task_data,
                                  uint64_t train_seed) {
    config.check();
    check_task_labels(task_data, 0, static_cast<int>(task_data.features.size()));
    const int d = config.dim;
    const int n_classes = static_cast<int>(task_data.features.size());

    std::vector<int> labels;
    FeatureMap features;
    for (const auto& [label, f] : task_data.features) {
        if (f.rows() != d)
            throw ConfigError("task features of class " + std::to_string(label) +
                              " have dimension " + std::to_string(f.rows()) + ", expected " +
                              std::to_string(d));
        if (f.cols() < 2)
            throw DataError("class " + std::to_string(label) + " has only " +
                            std::to_string(f.cols()) + " training samples, need at least 2");
        labels.push_back(label);
        features[label] = ClassFeatures{f, true};
    }

    IncrementalState state;
    state.params = expand_classifier(ClassifierParams::empty(d), n_classes,
                                     mix_seed(train_seed, 0, kExpandTag));
    state.adapter = FeatureAdapter::identity(d);

    const LossScope scope{labels, labels};
    SgdState sgd = SgdState::zero(d, n_classes);
    const long steps = static_cast<long>(config.optimizer.epochs_initial) *
                       config.optimizer.steps_per_epoch;
    for (long step = 0; step < steps; ++step) {
        const LossResult loss = sb_loss(features, state.params, scope, &state.adapter);
        sgd_step(state.params, state.adapter, sgd, loss, config.optimizer.initial_lr,
                 config.optimizer.initial_lr, config.optimizer.momentum);
    }

    for (const auto& [label, f] : task_data.features) {
        if (config.stats_mode == StatsMode::FrozenAtSave)
            state.saved_old_stats[label] =
                class_stats_from_features(label, state.adapter.apply(f), config.shrinkage);
        else
            state.saved_old_stats[label] = class_stats_from_features(label, f, config.shrinkage);
    }
    state.task_index = 1;
    return state;
}

IncrementalState run_incremental_task(const IncrementalState& state, const TaskData& task_data,
                                      const ScenarioConfig& config, uint64_t train_seed) {
    config.check();
    const int d = config.dim;
    const int k_prev = state.params.num_classes();
    const int n_new = static_cast<int>(task_data.features.size());
    const int task = state.task_index;
    check_task_labels(task_data, k_prev, k_prev + n_new);

    IncrementalState next;
    next.label_map = state.label_map;
    next.adapter = state.adapter;
    next.params = expand_classifier(state.params, n_new,
                                    mix_seed(train_seed, static_cast<uint64_t>(task), kExpandTag));

    // Raw new-class statistics are estimated once; during optimization they
    // are pushed through the current adapter analytically at every step.
    std::map<int, ClassStats> raw_new;
    for (const auto& [label, f] : task_data.features) {
        if (f.cols() < 2)
            throw DataError("class " + std::to_string(label) + " has only " +
                            std::to_string(f.cols()) + " training samples, need at least 2");
        raw_new[label] = class_stats_from_features(label, f, config.shrinkage);
    }

    LossContext ctx;
    ctx.adapter = &next.adapter;
    ctx.new_stats = raw_stats(raw_new);
    ctx.old_stats = config.stats_mode == StatsMode::FrozenAtSave
                        ? frozen_stats(state.saved_old_stats)
                        : raw_stats(state.saved_old_stats);
    for (const auto& [label, f] : task_data.features)
        ctx.new_features[label] = ClassFeatures{f, true};

    SgdState sgd = SgdState::zero(d, next.params.num_classes());
    const long steps = static_cast<long>(config.optimizer.epochs_incremental) *
                       config.optimizer.steps_per_epoch;
    for (long step = 0; step < steps; ++step) {
        const uint64_t step_seed =
            mix_seed(train_seed, static_cast<uint64_t>(task) * 0x10000 + kStepTag,
                     static_cast<uint64_t>(step));
        const LossResult loss = variant_loss(config.variant, ctx, next.params, step_seed);
        sgd_step(next.params, next.adapter, sgd, loss,
                 config.optimizer.incremental_lr_classifier,
                 config.optimizer.incremental_lr_adapter, config.optimizer.momentum);
    }

    next.saved_old_stats = state.saved_old_stats;
    for (const auto& [label, stats] : raw_new) {
        next.saved_old_stats[label] = config.stats_mode == StatsMode::FrozenAtSave
                                          ? adapt_stats(stats, next.adapter)
                                          : stats;
    }
    next.task_index = task + 1;
    return next;
}

std::pair<long, long> evaluate_counts(const IncrementalState& state, const EvalData& test_data) {
    const int num_seen = state.params.num_classes();
    long correct = 0;
    long total = 0;
    for (const auto& [label, features] : test_data) {
        if (label < 0 || label >= num_seen)
            throw ConfigError("test set carries unseen label " + std::to_string(label) +
                              ", classifier covers [0, " + std::to_string(num_seen) + ")");
        const Matrix adapted = state.adapter.apply(features);
        for (long i = 0; i < adapted.cols(); ++i) {
            const Vector logits =
                state.params.weights.transpose() * adapted.col(i) + state.params.biases;
            int argmax = 0;
            logits.maxCoeff(&argmax);
            if (argmax == label) ++correct;
            ++total;
        }
    }
    if (total == 0) throw ConfigError("evaluation received no test samples");
    return {correct, total};
}

double evaluate(const IncrementalState& state, const EvalData& test_data) {
    const auto [correct, total] = evaluate_counts(state, test_data);
    return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

std::pair<double, double> compute_metrics(const std::vector<double>& seen_accuracies) {
    if (seen_accuracies.empty())
        throw ConfigError("metrics need at least one per-task accuracy");
    const double la = seen_accuracies.back();
    const double aia = std::accumulate(seen_accuracies.begin(), seen_accuracies.end(), 0.0) /
                       static_cast<double>(seen_accuracies.size());
    return {la, aia};
}

ResultReport run_scenario(const ScenarioConfig& config, const FeatureDataset& dataset,
                          int run_index) {
    config.check_against(dataset);
    const uint64_t train_seed = config.seed + static_cast<uint64_t>(run_index);

    // Dataset classes map onto task-contiguous labels in index order, so the
    // generator's drift blocks line up with the trainer's tasks.
    std::vector<int> label_map(dataset.num_classes());
    std::iota(label_map.begin(), label_map.end(), 0);

    std::vector<TaskData> tasks(config.tasks);
    std::vector<EvalData> eval(config.tasks);
    for (int t = 0; t < config.tasks; ++t) {
        for (int c = t * config.classes_per_task; c < (t + 1) * config.classes_per_task; ++c) {
            const int label = label_map[c];
            tasks[t].features[label] =
                dataset.features_of(static_cast<uint32_t>(c), Split::Train);
            eval[t][label] = dataset.features_of(static_cast<uint32_t>(c), Split::Test);
        }
    }

    ResultReport report;
    report.config = config;
    IncrementalState state = run_initial_task(config, tasks[0], train_seed);
    state.label_map = label_map;

    for (int t = 0; t < config.tasks; ++t) {
        if (t > 0) state = run_incremental_task(state, tasks[t], config, train_seed);

        std::vector<double> row;
        long correct = 0;
        long total = 0;
        for (int done = 0; done <= t; ++done) {
            const auto [c, n] = evaluate_counts(state, eval[done]);
            row.push_back(100.0 * static_cast<double>(c) / static_cast<double>(n));
            correct += c;
            total += n;
        }
        report.task_accuracy.push_back(std::move(row));
        report.seen_accuracy.push_back(100.0 * static_cast<double>(correct) /
                                       static_cast<double>(total));
    }

    std::tie(report.la, report.aia) = compute_metrics(report.seen_accuracy);
    return report;
}

ResultReport run_scenario_averaged(const ScenarioConfig& config, const FeatureDataset& dataset,
                                   int runs, bool deterministic) {
    if (runs < 1) throw ConfigError("need at least one run");

    std::vector<ResultReport> reports(runs);
    if (deterministic || runs == 1) {
        for (int r = 0; r < runs; ++r) reports[r] = run_scenario(config, dataset, r);
    } else {
        std::vector<std::future<ResultReport>> futures;
        futures.reserve(runs);
        for (int r = 0; r < runs; ++r)
            futures.push_back(std::async(std::launch::async,
                                         [&, r] { return run_scenario(config, dataset, r); }));
        for (int r = 0; r < runs; ++r) reports[r] = futures[r].get();
    }

    ResultReport avg;
    avg.config = config;
    avg.runs = runs;
    avg.task_accuracy = reports[0].task_accuracy;
    avg.seen_accuracy.assign(reports[0].seen_accuracy.size(), 0.0);
    for (auto& row : avg.task_accuracy) std::fill(row.begin(), row.end(), 0.0);

    // Fixed reduction order: run index 0, 1, 2, ...
    const double inv = 1.0 / static_cast<double>(runs);
    for (const auto& report : reports) {
        for (size_t t = 0; t < avg.task_accuracy.size(); ++t)
            for (size_t i = 0; i < avg.task_accuracy[t].size(); ++i)
                avg.task_accuracy[t][i] += inv * report.task_accuracy[t][i];
        for (size_t t = 0; t < avg.seen_accuracy.size(); ++t)
            avg.seen_accuracy[t] += inv * report.seen_accuracy[t];
        avg.la += inv * report.la;
        avg.aia += inv * report.aia;
    }
    avg.run_reports = std::move(reports);
    return avg;
}

}  // namespace amgc
