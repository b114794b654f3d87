#pragma once

#include "amgc/losses.hpp"

#include "json.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace amgc {

/// Machine-readable outcome of one verification suite.
struct SuiteVerdict {
    std::string suite;
    bool pass = false;
    int trials = 0;
    int violations = 0;
    double worst = 0.0;  // suite-specific: slack, max relative error, ...
    std::string detail;
    uint64_t seed = 0;

    nlohmann::json to_json() const;
};

/// A random loss instance: classifier parameters plus frozen per-class
/// statistics for every seen class.
struct RandomInstance {
    ClassifierParams params;
    StatsMap stats;
};

RandomInstance random_instance(Rng& rng, int dim, int num_old, int num_new,
                               double mean_spread, double cov_scale);

/// Monte-Carlo estimate of the sample-based loss with its standard error.
/// Implemented directly from pseudo-feature draws, independent of the
/// loss-engine evaluation path it is used to check.
struct SbEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

SbEstimate mc_sb_estimate(const StatsMap& stats, const ClassifierParams& params,
                          const LossScope& scope, int mc_samples, uint64_t seed);

/// Asserts the Monte-Carlo sample-based loss never exceeds the
/// distribution-based loss by more than three standard errors.
/// worst = smallest observed slack db + 3 SE - sb.
SuiteVerdict jensen_bound_suite(int trials, int max_dim, int max_classes, int mc_samples,
                                uint64_t seed);

/// Asserts the variance-enlarged old-class loss and its explicit margin
/// decomposition agree. worst = max relative discrepancy.
SuiteVerdict margin_equivalence_suite(int trials, uint64_t seed);

/// Central finite differences against analytic gradients for every variant,
/// probing random coordinates of W, b, A and c. worst = max relative error
/// with denominator max(1, |analytic|, |numeric|).
SuiteVerdict gradient_suite(int trials, int probe_count, uint64_t seed);

/// Streaming-vs-two-pass covariance agreement and the Monte-Carlo pushforward
/// check of adapt_stats.
SuiteVerdict stats_oracle_suite(uint64_t seed);

std::vector<SuiteVerdict> run_all_suites(uint64_t seed);

}  // namespace amgc
