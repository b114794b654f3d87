#pragma once

#include "amgc/dataio.hpp"
#include "amgc/losses.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace amgc {

/// Where old-class statistics live once their task is over. FrozenAtSave
/// snapshots them in the adapter output space at the end of their task (the
/// default); ReAdapted keeps raw-space statistics and pushes them through the
/// current adapter at every step.
enum class StatsMode { FrozenAtSave, ReAdapted };

std::string stats_mode_name(StatsMode mode);
StatsMode parse_stats_mode(const std::string& name);

struct OptimizerConfig {
    double initial_lr = 1e-2;
    double incremental_lr_adapter = 1e-6;
    double incremental_lr_classifier = 5e-3;
    double momentum = 0.9;
    int epochs_initial = 400;
    int epochs_incremental = 200;
    int steps_per_epoch = 20;

    void check() const;
};

struct ScenarioConfig {
    int tasks = 1;
    int classes_per_task = 0;
    int dim = 0;
    VariantSpec variant;
    OptimizerConfig optimizer;
    uint64_t seed = 0;
    StatsMode stats_mode = StatsMode::FrozenAtSave;
    std::optional<double> shrinkage;  // empty: default trace-based rule

    void check() const;
    void check_against(const FeatureDataset& dataset) const;
};

/// Training features of one task, keyed by global label.
struct TaskData {
    std::map<int, Matrix> features;  // label -> d x n
};

/// Test features keyed by global label.
using EvalData = std::map<int, Matrix>;

struct IncrementalState {
    ClassifierParams params;
    FeatureAdapter adapter;
    std::map<int, ClassStats> saved_old_stats;  // space depends on stats_mode
    int task_index = 0;                         // tasks completed so far
    std::vector<int> label_map;                 // dataset class -> global label
};

struct ResultReport {
    ScenarioConfig config;
    int runs = 1;
    std::vector<std::vector<double>> task_accuracy;  // lower-triangular, percent
    std::vector<double> seen_accuracy;               // percent, one entry per task
    double la = 0.0;
    double aia = 0.0;
    std::vector<ResultReport> run_reports;  // per-run reports on averaged results
};

/// Copies existing columns/biases bit-exactly and appends n_new columns drawn
/// from N(0, 1/dim) with zero biases. All previously seen classes become old.
ClassifierParams expand_classifier(const ClassifierParams& params, int n_new, uint64_t seed);

/// Momentum buffers for one task's optimization.
struct SgdState {
    Matrix vel_weights;
    Vector vel_biases;
    Matrix vel_adapter_matrix;
    Vector vel_adapter_offset;

    static SgdState zero(int dim, int num_classes);
};

/// Classic momentum update, v <- momentum v + g; p <- p - lr v, with separate
/// learning rates for the classifier (W, b) and adapter (A, c) groups.
void sgd_step(ClassifierParams& params, FeatureAdapter& adapter, SgdState& state,
              const LossResult& grads, double lr_classifier, double lr_adapter,
              double momentum);

/// Conventional supervised training on the first task's real features,
/// followed by statistics capture.
IncrementalState run_initial_task(const ScenarioConfig& config, const TaskData& task_data,
                                  uint64_t train_seed);

/// One incremental task: expand the classifier, estimate raw new-class
/// statistics once, optimize (W, b, A, c) under the variant loss against the
/// saved old-class statistics, then save the new statistics.
IncrementalState run_incremental_task(const IncrementalState& state, const TaskData& task_data,
                                      const ScenarioConfig& config, uint64_t train_seed);

/// Seen-class accuracy in percent: argmax over all seen labels of
/// w_k . (A f + c) + b_k.
double evaluate(const IncrementalState& state, const EvalData& test_data);

/// (correct, total) counts behind evaluate(); exposed so per-task and
/// union-of-seen accuracies stay mutually consistent.
std::pair<long, long> evaluate_counts(const IncrementalState& state, const EvalData& test_data);

/// LA = accuracy after the last task, AIA = mean of the per-task accuracies.
std::pair<double, double> compute_metrics(const std::vector<double>& seen_accuracies);

/// Full scenario: initial task plus tasks-1 incremental tasks with an
/// evaluation after each. Training stochasticity is seeded with
/// config.seed + run_index.
ResultReport run_scenario(const ScenarioConfig& config, const FeatureDataset& dataset,
                          int run_index = 0);

/// Repeats run_scenario with run indices 0..runs-1 and reports entrywise
/// means; per-run reports are retained. Runs execute in parallel unless
/// deterministic is set; the reduction order is fixed either way.
ResultReport run_scenario_averaged(const ScenarioConfig& config, const FeatureDataset& dataset,
                                   int runs, bool deterministic = false);

}  // namespace amgc
