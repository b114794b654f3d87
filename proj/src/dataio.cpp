#include "amgc/dataio.hpp"

#include "amgc/trainer.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace amgc {

namespace {

constexpr char kMagic[4] = {'E', 'F', 'C', 'F'};
constexpr uint32_t kVersion = 1;
constexpr size_t kHeaderSize = 4 + 4 + 4 + 8;

void put_u32(std::vector<uint8_t>& buf, uint32_t v) {
    buf.push_back(static_cast<uint8_t>(v));
    buf.push_back(static_cast<uint8_t>(v >> 8));
    buf.push_back(static_cast<uint8_t>(v >> 16));
    buf.push_back(static_cast<uint8_t>(v >> 24));
}

void put_u64(std::vector<uint8_t>& buf, uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint32_t get_u32(const std::vector<uint8_t>& buf, size_t offset) {
    return static_cast<uint32_t>(buf[offset]) | (static_cast<uint32_t>(buf[offset + 1]) << 8) |
           (static_cast<uint32_t>(buf[offset + 2]) << 16) |
           (static_cast<uint32_t>(buf[offset + 3]) << 24);
}

uint64_t get_u64(const std::vector<uint8_t>& buf, size_t offset) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[offset + i]) << (8 * i);
    return v;
}

}  // namespace

void FeatureDataset::rebuild_manifest() {
    manifest.clear();
    for (const auto& record : records) {
        auto& counts = manifest[record.label];
        if (record.split == Split::Train)
            ++counts.train;
        else
            ++counts.test;
    }
}

Matrix FeatureDataset::features_of(uint32_t label, Split split) const {
    long n = 0;
    for (const auto& record : records)
        if (record.label == label && record.split == split) ++n;
    Matrix out(dim, n);
    long col = 0;
    for (const auto& record : records)
        if (record.label == label && record.split == split) out.col(col++) = record.feature;
    return out;
}

void validate_for_training(const FeatureDataset& dataset) {
    const int num = dataset.num_classes();
    if (num == 0) throw DataError("dataset has no classes");
    for (int c = 0; c < num; ++c) {
        const auto it = dataset.manifest.find(static_cast<uint32_t>(c));
        if (it == dataset.manifest.end())
            throw DataError("dataset labels are not dense: class " + std::to_string(c) +
                            " is missing from the manifest");
        if (it->second.train < 2)
            throw DataError("class " + std::to_string(c) + " has only " +
                            std::to_string(it->second.train) +
                            " training records, need at least 2");
    }
}

void write_feature_file(const FeatureDataset& dataset, const std::string& path) {
    std::vector<uint8_t> buf;
    buf.reserve(kHeaderSize + dataset.records.size() * (5 + 4 * dataset.dim));
    buf.insert(buf.end(), kMagic, kMagic + 4);
    put_u32(buf, kVersion);
    put_u32(buf, static_cast<uint32_t>(dataset.dim));
    put_u64(buf, dataset.records.size());
    for (const auto& record : dataset.records) {
        if (record.feature.size() != dataset.dim)
            throw DataError("record of class " + std::to_string(record.label) +
                            " has dimension " + std::to_string(record.feature.size()) +
                            ", dataset declares " + std::to_string(dataset.dim));
        put_u32(buf, record.label);
        buf.push_back(static_cast<uint8_t>(record.split));
        for (int i = 0; i < dataset.dim; ++i) {
            const float f = static_cast<float>(record.feature(i));
            put_u32(buf, std::bit_cast<uint32_t>(f));
        }
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError("write to '" + path + "' failed");
}

FeatureDataset read_feature_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "' for reading");
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());

    if (buf.size() < kHeaderSize)
        throw DataError("'" + path + "': truncated header, file has " +
                        std::to_string(buf.size()) + " bytes, header needs " +
                        std::to_string(kHeaderSize));
    if (std::memcmp(buf.data(), kMagic, 4) != 0)
        throw DataError("'" + path + "': bad magic at byte offset 0");
    const uint32_t version = get_u32(buf, 4);
    if (version != kVersion)
        throw DataError("'" + path + "': unsupported version " + std::to_string(version) +
                        " at byte offset 4");
    const uint32_t dim = get_u32(buf, 8);
    if (dim == 0 || dim > (1u << 20))
        throw DataError("'" + path + "': implausible dimension " + std::to_string(dim) +
                        " at byte offset 8");
    const uint64_t count = get_u64(buf, 12);

    FeatureDataset dataset;
    dataset.dim = static_cast<int>(dim);
    dataset.records.reserve(count);
    const size_t record_size = 5 + 4 * static_cast<size_t>(dim);
    size_t offset = kHeaderSize;
    for (uint64_t r = 0; r < count; ++r) {
        if (offset + record_size > buf.size())
            throw DataError("'" + path + "': truncated at byte offset " +
                            std::to_string(buf.size()) + ", record " + std::to_string(r) +
                            " needs bytes up to " + std::to_string(offset + record_size));
        FeatureRecord record;
        record.label = get_u32(buf, offset);
        const uint8_t split = buf[offset + 4];
        if (split > 1)
            throw DataError("'" + path + "': invalid split byte " + std::to_string(split) +
                            " at byte offset " + std::to_string(offset + 4));
        record.split = static_cast<Split>(split);
        record.feature.resize(dim);
        for (uint32_t i = 0; i < dim; ++i) {
            const uint32_t bits = get_u32(buf, offset + 5 + 4 * static_cast<size_t>(i));
            record.feature(i) = static_cast<double>(std::bit_cast<float>(bits));
        }
        dataset.records.push_back(std::move(record));
        offset += record_size;
    }
    if (offset != buf.size())
        throw DataError("'" + path + "': " + std::to_string(buf.size() - offset) +
                        " trailing bytes at byte offset " + std::to_string(offset));
    dataset.rebuild_manifest();
    return dataset;
}

void SynthConfig::check() const {
    if (num_classes < 1) throw ConfigError("synth config: num_classes must be positive");
    if (dim < 1) throw ConfigError("synth config: dim must be positive");
    if (train_per_class < 1 || test_per_class < 1)
        throw ConfigError("synth config: per-class counts must be positive");
    if (mean_dispersion <= 0.0) throw ConfigError("synth config: mean_dispersion must be positive");
    if (cov_scale <= 0.0) throw ConfigError("synth config: cov_scale must be positive");
    if (drift < 0.0) throw ConfigError("synth config: drift must be non-negative");
    if (classes_per_task < 0)
        throw ConfigError("synth config: classes_per_task must be non-negative");
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
    SynthConfig config;
    try {
        config.num_classes = j.at("num_classes").get<int>();
        config.dim = j.at("dim").get<int>();
        config.train_per_class = j.at("train_per_class").get<int>();
        config.test_per_class = j.at("test_per_class").get<int>();
        config.mean_dispersion = j.value("mean_dispersion", config.mean_dispersion);
        config.cov_scale = j.value("cov_scale", config.cov_scale);
        config.drift = j.value("drift", config.drift);
        config.classes_per_task = j.value("classes_per_task", config.classes_per_task);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("synth config: ") + e.what());
    }
    config.check();
    return config;
}

nlohmann::json synth_config_to_json(const SynthConfig& config) {
    return nlohmann::json{{"num_classes", config.num_classes},
                          {"dim", config.dim},
                          {"train_per_class", config.train_per_class},
                          {"test_per_class", config.test_per_class},
                          {"mean_dispersion", config.mean_dispersion},
                          {"cov_scale", config.cov_scale},
                          {"drift", config.drift},
                          {"classes_per_task", config.classes_per_task}};
}

FeatureDataset gen_synthetic(const SynthConfig& config, uint64_t seed) {
    config.check();
    const int d = config.dim;
    Rng rng(seed);

    // Class means, uniform in a ball of the configured radius.
    std::vector<Vector> means;
    means.reserve(config.num_classes);
    for (int c = 0; c < config.num_classes; ++c) {
        Vector g = rng.normal_vector(d);
        const double norm = g.norm();
        if (norm > 0.0) g /= norm;
        const double radius =
            config.mean_dispersion * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
        means.push_back(radius * g);
    }

    // One affine perturbation per task block; block 0 is the reference space.
    const int cpt = config.classes_per_task > 0 ? config.classes_per_task : config.num_classes;
    const int num_blocks = (config.num_classes + cpt - 1) / cpt;
    std::vector<FeatureAdapter> block_maps;
    block_maps.reserve(num_blocks);
    for (int blk = 0; blk < num_blocks; ++blk) {
        if (blk == 0 || config.drift == 0.0) {
            block_maps.push_back(FeatureAdapter::identity(d));
            continue;
        }
        FeatureAdapter map = FeatureAdapter::identity(d);
        map.matrix += (config.drift / std::sqrt(static_cast<double>(d))) *
                      rng.normal_matrix(d, d);
        map.offset = (config.drift * config.mean_dispersion / std::sqrt(static_cast<double>(d))) *
                     rng.normal_vector(d);
        block_maps.push_back(std::move(map));
    }

    FeatureDataset dataset;
    dataset.dim = d;
    dataset.records.reserve(static_cast<size_t>(config.num_classes) *
                            (config.train_per_class + config.test_per_class));
    const double stddev = std::sqrt(config.cov_scale);
    for (int c = 0; c < config.num_classes; ++c) {
        const FeatureAdapter& map = block_maps[c / cpt];
        const int total = config.train_per_class + config.test_per_class;
        for (int i = 0; i < total; ++i) {
            const Vector x = means[c] + stddev * rng.normal_vector(d);
            FeatureRecord record;
            record.label = static_cast<uint32_t>(c);
            record.split = i < config.train_per_class ? Split::Train : Split::Test;
            record.feature = map.apply(x);
            // Round-trip through float32 so in-memory data matches the file.
            for (int k = 0; k < d; ++k)
                record.feature(k) = static_cast<double>(static_cast<float>(record.feature(k)));
            dataset.records.push_back(std::move(record));
        }
    }
    dataset.rebuild_manifest();
    return dataset;
}

namespace {

nlohmann::json report_body_json(const ResultReport& report);

nlohmann::json config_json(const ScenarioConfig& config) {
    nlohmann::json opt{{"initial_lr", config.optimizer.initial_lr},
                       {"incremental_lr_adapter", config.optimizer.incremental_lr_adapter},
                       {"incremental_lr_classifier", config.optimizer.incremental_lr_classifier},
                       {"momentum", config.optimizer.momentum},
                       {"epochs_initial", config.optimizer.epochs_initial},
                       {"epochs_incremental", config.optimizer.epochs_incremental},
                       {"steps_per_epoch", config.optimizer.steps_per_epoch}};
    nlohmann::json variant{{"name", variant_name(config.variant.variant)},
                           {"lambda", config.variant.lambda},
                           {"mc_samples", config.variant.mc_samples},
                           {"fixed_margin", config.variant.fixed_margin}};
    nlohmann::json j{{"tasks", config.tasks},
                     {"classes_per_task", config.classes_per_task},
                     {"dim", config.dim},
                     {"seed", config.seed},
                     {"stats_mode",
                      config.stats_mode == StatsMode::FrozenAtSave ? "frozen-at-save"
                                                                   : "re-adapted"},
                     {"variant", variant},
                     {"optimizer", opt}};
    if (config.shrinkage.has_value())
        j["shrinkage"] = *config.shrinkage;
    else
        j["shrinkage"] = nullptr;
    return j;
}

nlohmann::json report_body_json(const ResultReport& report) {
    nlohmann::json j;
    j["engine_version"] = kEngineVersion;
    j["config"] = config_json(report.config);
    j["runs"] = report.runs;
    j["accuracy_matrix"] = report.task_accuracy;
    j["seen_accuracy"] = report.seen_accuracy;
    j["la"] = report.la;
    j["aia"] = report.aia;
    if (!report.run_reports.empty()) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& run : report.run_reports) arr.push_back(report_body_json(run));
        j["run_reports"] = arr;
    }
    return j;
}

}  // namespace

nlohmann::json report_to_json(const ResultReport& report) { return report_body_json(report); }

std::string report_to_csv(const ResultReport& report) {
    std::string out = "task_trained";
    for (int t = 1; t <= report.config.tasks; ++t) out += ",task_" + std::to_string(t);
    out += ",seen_acc\n";

    char num[64];
    for (size_t row = 0; row < report.seen_accuracy.size(); ++row) {
        out += std::to_string(row + 1);
        for (int t = 0; t < report.config.tasks; ++t) {
            out += ",";
            if (row < report.task_accuracy.size() &&
                t < static_cast<int>(report.task_accuracy[row].size())) {
                std::snprintf(num, sizeof(num), "%.10g", report.task_accuracy[row][t]);
                out += num;
            }
        }
        std::snprintf(num, sizeof(num), "%.10g", report.seen_accuracy[row]);
        out += ",";
        out += num;
        out += "\n";
    }
    return out;
}

void emit_report(const ResultReport& report, const std::string& path, ReportFormat format) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    if (format == ReportFormat::Json)
        out << report_to_json(report).dump(2) << "\n";
    else
        out << report_to_csv(report);
    if (!out) throw DataError("write to '" + path + "' failed");
}

}  // namespace amgc
