#pragma once

#include "amgc/errors.hpp"
#include "amgc/types.hpp"

#include "json.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace amgc {

enum class Split : uint8_t { Train = 0, Test = 1 };

struct FeatureRecord {
    uint32_t label = 0;
    Split split = Split::Train;
    Vector feature;  // float32 on disk, upcast to double in memory
};

struct ClassCounts {
    long train = 0;
    long test = 0;
};

struct FeatureDataset {
    int dim = 0;
    std::vector<FeatureRecord> records;
    std::map<uint32_t, ClassCounts> manifest;  // derived from records

    int num_classes() const { return static_cast<int>(manifest.size()); }
    void rebuild_manifest();

    /// All features of one class and split, one per column.
    Matrix features_of(uint32_t label, Split split) const;
};

/// Dataset invariants needed before training: dense labels 0..C-1 and at
/// least two training records per class.
void validate_for_training(const FeatureDataset& dataset);

/// EFCF binary format, little-endian:
///   magic "EFCF", version u32 = 1, dim u32, record_count u64,
///   then per record: label u32, split u8 (0 train / 1 test), dim x float32.
void write_feature_file(const FeatureDataset& dataset, const std::string& path);
FeatureDataset read_feature_file(const std::string& path);

struct SynthConfig {
    int num_classes = 0;
    int dim = 0;
    int train_per_class = 0;
    int test_per_class = 0;
    double mean_dispersion = 3.0;  // radius of the ball class means are drawn in
    double cov_scale = 0.3;        // isotropic within-class variance
    double drift = 0.0;            // magnitude of the per-task affine perturbation
    int classes_per_task = 0;      // 0: one block, no inter-task drift structure

    void check() const;
};

SynthConfig synth_config_from_json(const nlohmann::json& j);
nlohmann::json synth_config_to_json(const SynthConfig& config);

/// Synthetic benchmark: class means uniform in a ball, isotropic Gaussian
/// samples, and (when drift > 0) one random affine perturbation per
/// classes_per_task block of classes, emulating extractor change across
/// tasks. Deterministic per seed.
FeatureDataset gen_synthetic(const SynthConfig& config, uint64_t seed);

struct ResultReport;  // trainer.hpp

enum class ReportFormat { Json, Csv };

nlohmann::json report_to_json(const ResultReport& report);
std::string report_to_csv(const ResultReport& report);
void emit_report(const ResultReport& report, const std::string& path, ReportFormat format);

}  // namespace amgc
