#include "amgc/dataio.hpp"
#include "amgc/trainer.hpp"
#include "amgc/verify.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

namespace {

using namespace amgc;

struct RunOptions {
    std::string data_path;
    int tasks = 5;
    std::string variant = "amgc";
    double lambda = 0.4;
    int mc_samples = 16;
    double fixed_margin = 1.0;
    uint64_t seed = 1;
    int runs = 3;
    std::string out_path;
    std::string csv_path;
    std::string stats_mode = "frozen-at-save";
    bool deterministic = false;
    std::optional<double> shrinkage;
    OptimizerConfig optimizer;
};

void add_run_options(CLI::App* cmd, RunOptions& opt) {
    cmd->add_option("--data", opt.data_path, "EFCF dataset path")->required();
    cmd->add_option("--tasks", opt.tasks, "number of tasks T")->required();
    cmd->add_option("--lambda", opt.lambda, "variance-enlarge strength (amgc)")
        ->capture_default_str();
    cmd->add_option("--mc-samples", opt.mc_samples,
                    "pseudo features per class for sample-based variants")
        ->capture_default_str();
    cmd->add_option("--margin", opt.fixed_margin, "fixed margin for dbgc-sm")
        ->capture_default_str();
    cmd->add_option("--seed", opt.seed, "base seed")->capture_default_str();
    cmd->add_option("--stats-mode", opt.stats_mode, "frozen-at-save | re-adapted")
        ->capture_default_str();
    cmd->add_option("--epochs-initial", opt.optimizer.epochs_initial,
                    "initial-task epochs")->capture_default_str();
    cmd->add_option("--epochs-incremental", opt.optimizer.epochs_incremental,
                    "incremental-task epochs")->capture_default_str();
    cmd->add_option("--steps-per-epoch", opt.optimizer.steps_per_epoch,
                    "optimizer steps per epoch")->capture_default_str();
    cmd->add_option("--lr-initial", opt.optimizer.initial_lr,
                    "initial-task learning rate")->capture_default_str();
    cmd->add_option("--lr-adapter", opt.optimizer.incremental_lr_adapter,
                    "incremental adapter learning rate")->capture_default_str();
    cmd->add_option("--lr-classifier", opt.optimizer.incremental_lr_classifier,
                    "incremental classifier learning rate")->capture_default_str();
    cmd->add_option("--momentum", opt.optimizer.momentum, "sgd momentum")
        ->capture_default_str();
    cmd->add_option_function<double>(
        "--shrinkage", [&opt](const double& v) { opt.shrinkage = v; },
        "covariance shrinkage (default: trace-based rule)");
    cmd->add_flag("--deterministic", opt.deterministic,
                  "serial runs with fixed reduction order");
}

ScenarioConfig scenario_from_options(const RunOptions& opt, const FeatureDataset& dataset) {
    ScenarioConfig config;
    config.tasks = opt.tasks;
    if (opt.tasks < 1) throw ConfigError("--tasks must be positive");
    if (dataset.num_classes() % opt.tasks != 0)
        throw ConfigError("dataset has " + std::to_string(dataset.num_classes()) +
                          " classes, not divisible into " + std::to_string(opt.tasks) +
                          " even tasks");
    config.classes_per_task = dataset.num_classes() / opt.tasks;
    config.dim = dataset.dim;
    config.variant.variant = parse_variant(opt.variant);
    config.variant.lambda = opt.lambda;
    config.variant.mc_samples = opt.mc_samples;
    config.variant.fixed_margin = opt.fixed_margin;
    config.seed = opt.seed;
    config.stats_mode = parse_stats_mode(opt.stats_mode);
    config.shrinkage = opt.shrinkage;
    config.optimizer = opt.optimizer;
    return config;
}

void print_report_table(const ResultReport& report) {
    std::printf("task  seen_acc%%\n");
    for (size_t t = 0; t < report.seen_accuracy.size(); ++t)
        std::printf("%4zu  %9.3f\n", t + 1, report.seen_accuracy[t]);
    std::printf("LA  = %.3f\nAIA = %.3f\n", report.la, report.aia);
}

int cmd_gen_synth(const std::string& config_path, uint64_t seed, const std::string& out_path) {
    std::ifstream in(config_path);
    if (!in) throw DataError("cannot open synth config '" + config_path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("synth config '" + config_path + "': " + e.what());
    }
    const SynthConfig config = synth_config_from_json(j);
    const FeatureDataset dataset = gen_synthetic(config, seed);
    write_feature_file(dataset, out_path);

    std::printf("wrote %s: %d classes, dim %d, %zu records\n", out_path.c_str(),
                dataset.num_classes(), dataset.dim, dataset.records.size());
    std::printf("class  train  test\n");
    for (const auto& [label, counts] : dataset.manifest)
        std::printf("%5u  %5ld  %4ld\n", label, counts.train, counts.test);
    return 0;
}

int cmd_run(const RunOptions& opt) {
    const FeatureDataset dataset = read_feature_file(opt.data_path);
    const ScenarioConfig config = scenario_from_options(opt, dataset);
    std::printf("config: %s\n", report_to_json(ResultReport{config})["config"].dump().c_str());

    const ResultReport report =
        run_scenario_averaged(config, dataset, opt.runs, opt.deterministic);
    if (!opt.out_path.empty()) emit_report(report, opt.out_path, ReportFormat::Json);
    if (!opt.csv_path.empty()) emit_report(report, opt.csv_path, ReportFormat::Csv);

    std::printf("variant %s, %d run(s), seed %llu\n", opt.variant.c_str(), opt.runs,
                static_cast<unsigned long long>(opt.seed));
    print_report_table(report);
    return 0;
}

int cmd_ablate(const RunOptions& opt, const std::string& out_dir) {
    const FeatureDataset dataset = read_feature_file(opt.data_path);
    std::filesystem::create_directories(out_dir);

    static const char* kVariants[] = {"sblc", "sbndbolc", "sbgc", "dblc",
                                      "dbgc", "dbgc-sm", "amgc"};
    std::string csv = "variant,la,aia\n";
    for (const char* name : kVariants) {
        RunOptions variant_opt = opt;
        variant_opt.variant = name;
        const ScenarioConfig config = scenario_from_options(variant_opt, dataset);
        const ResultReport report =
            run_scenario_averaged(config, dataset, opt.runs, opt.deterministic);
        emit_report(report, out_dir + "/" + name + ".json", ReportFormat::Json);
        char line[128];
        std::snprintf(line, sizeof(line), "%s,%.10g,%.10g\n", name, report.la, report.aia);
        csv += line;
        std::printf("%-9s LA %7.3f  AIA %7.3f\n", name, report.la, report.aia);
    }
    std::ofstream out(out_dir + "/ablation.csv", std::ios::trunc);
    if (!out) throw DataError("cannot open '" + out_dir + "/ablation.csv' for writing");
    out << csv;
    return 0;
}

int cmd_verify(const std::string& suite, uint64_t seed, const std::string& out_path) {
    std::vector<SuiteVerdict> verdicts;
    if (suite == "jensen" || suite == "all")
        verdicts.push_back(jensen_bound_suite(200, 8, 6, 200000, seed));
    if (suite == "margin" || suite == "all")
        verdicts.push_back(margin_equivalence_suite(1000, seed));
    if (suite == "grad" || suite == "all") verdicts.push_back(gradient_suite(50, 12, seed));
    if (suite == "stats" || suite == "all") verdicts.push_back(stats_oracle_suite(seed));
    if (verdicts.empty())
        throw ConfigError("unknown suite '" + suite +
                          "', expected jensen|margin|grad|stats|all");

    nlohmann::json out = nlohmann::json::array();
    bool all_pass = true;
    for (const auto& verdict : verdicts) {
        out.push_back(verdict.to_json());
        all_pass = all_pass && verdict.pass;
        std::printf("%-8s %s  (%d trials, %d violations, %s)\n", verdict.suite.c_str(),
                    verdict.pass ? "PASS" : "FAIL", verdict.trials, verdict.violations,
                    verdict.detail.c_str());
    }
    if (!out_path.empty()) {
        std::ofstream file(out_path, std::ios::trunc);
        if (!file) throw DataError("cannot open '" + out_path + "' for writing");
        file << out.dump(2) << "\n";
    }
    return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sample-free incremental classifier learning engine"};
    app.require_subcommand(1);

    // gen-synth
    std::string synth_config_path, synth_out;
    uint64_t synth_seed = 1;
    CLI::App* gen = app.add_subcommand("gen-synth", "generate a synthetic EFCF dataset");
    gen->add_option("--config", synth_config_path, "SynthConfig JSON path")->required();
    gen->add_option("--seed", synth_seed, "generator seed")->capture_default_str();
    gen->add_option("--out", synth_out, "output .efcf path")->required();

    // run
    RunOptions run_opt;
    CLI::App* run = app.add_subcommand("run", "run one incremental scenario");
    add_run_options(run, run_opt);
    run->add_option("--variant", run_opt.variant,
                    "sblc|sbndbolc|sbgc|dblc|dbgc|dbgc-sm|amgc")->capture_default_str();
    run->add_option("--runs", run_opt.runs, "number of averaged runs")->capture_default_str();
    run->add_option("--out", run_opt.out_path, "JSON report path");
    run->add_option("--csv", run_opt.csv_path, "CSV report path");

    // ablate
    RunOptions ablate_opt;
    std::string ablate_dir;
    CLI::App* ablate = app.add_subcommand("ablate", "run every variant with shared seeds");
    add_run_options(ablate, ablate_opt);
    ablate->add_option("--runs", ablate_opt.runs, "number of averaged runs")->capture_default_str();
    ablate->add_option("--out", ablate_dir, "output directory")->required();

    // verify
    std::string suite = "all", verify_out;
    uint64_t verify_seed = 20240601;
    CLI::App* verify = app.add_subcommand("verify", "run verification suites");
    verify->add_option("--suite", suite, "jensen|margin|grad|stats|all")->capture_default_str();
    verify->add_option("--seed", verify_seed, "suite seed")->capture_default_str();
    verify->add_option("--out", verify_out, "verdict JSON path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_synth(synth_config_path, synth_seed, synth_out);
        if (run->parsed()) return cmd_run(run_opt);
        if (ablate->parsed()) return cmd_ablate(ablate_opt, ablate_dir);
        if (verify->parsed()) return cmd_verify(suite, verify_seed, verify_out);
    } catch (const amgc::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const amgc::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const amgc::NumericError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
