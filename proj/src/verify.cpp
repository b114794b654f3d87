#include "amgc/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

namespace amgc {

namespace {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

double logsumexp(const std::vector<double>& z) {
    const double zmax = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - zmax);
    return zmax + std::log(s);
}

}  // namespace

nlohmann::json SuiteVerdict::to_json() const {
    return nlohmann::json{{"suite", suite},   {"pass", pass},   {"trials", trials},
                          {"violations", violations}, {"worst", worst}, {"detail", detail},
                          {"seed", seed}};
}

RandomInstance random_instance(Rng& rng, int dim, int num_old, int num_new,
                               double mean_spread, double cov_scale) {
    RandomInstance inst;
    const int k = num_old + num_new;
    inst.params.old_count = num_old;
    inst.params.new_count = num_new;
    inst.params.weights = rng.normal_matrix(dim, k) / std::sqrt(static_cast<double>(dim));
    inst.params.biases = 0.3 * rng.normal_vector(k);
    for (int c = 0; c < k; ++c) {
        ClassStats stats;
        stats.class_id = c;
        stats.count = 2;
        stats.mean = mean_spread * rng.normal_vector(dim);
        const Matrix b = rng.normal_matrix(dim, dim);
        stats.covariance = cov_scale * (b * b.transpose() / static_cast<double>(dim));
        stats.covariance.diagonal().array() += 0.05 * cov_scale;
        inst.stats[c] = ClassDistribution{std::move(stats), false};
    }
    return inst;
}

SbEstimate mc_sb_estimate(const StatsMap& stats, const ClassifierParams& params,
                          const LossScope& scope, int mc_samples, uint64_t seed) {
    const int num_j = static_cast<int>(scope.denominator.size());
    const int d = params.dim();

    double value = 0.0;
    double variance_of_mean = 0.0;
    const double inv_t = 1.0 / static_cast<double>(scope.targets.size());
    std::vector<double> z(num_j);
    for (int k : scope.targets) {
        const Matrix samples =
            sample_pseudo_features(stats.at(k).stats, mc_samples, mix_seed(seed, k));
        Matrix v(d, num_j);
        Vector delta(num_j);
        for (int jj = 0; jj < num_j; ++jj) {
            const int j = scope.denominator[jj];
            v.col(jj) = params.weights.col(j) - params.weights.col(k);
            delta(jj) = params.biases(j) - params.biases(k);
        }
        // Welford over the per-sample cross-entropy values.
        double mean = 0.0;
        double m2 = 0.0;
        for (int i = 0; i < mc_samples; ++i) {
            for (int jj = 0; jj < num_j; ++jj)
                z[jj] = v.col(jj).dot(samples.col(i)) + delta(jj);
            const double lse = logsumexp(z);
            const double d1 = lse - mean;
            mean += d1 / static_cast<double>(i + 1);
            m2 += d1 * (lse - mean);
        }
        value += inv_t * mean;
        if (mc_samples > 1) {
            const double var = m2 / static_cast<double>(mc_samples - 1);
            variance_of_mean += inv_t * inv_t * var / static_cast<double>(mc_samples);
        }
    }
    return SbEstimate{value, std::sqrt(variance_of_mean)};
}

SuiteVerdict jensen_bound_suite(int trials, int max_dim, int max_classes, int mc_samples,
                                uint64_t seed) {
    SuiteVerdict verdict;
    verdict.suite = "jensen";
    verdict.trials = trials;
    verdict.seed = seed;

    Rng rng(seed);
    double worst_slack = std::numeric_limits<double>::infinity();
    for (int t = 0; t < trials; ++t) {
        const int d = 1 + static_cast<int>(rng.uniform() * max_dim);
        const int k = 2 + static_cast<int>(rng.uniform() * (max_classes - 1));
        const double cov_scale = 0.1 + 0.9 * rng.uniform();
        const RandomInstance inst = random_instance(rng, d, 0, k, 1.5, cov_scale);
        const LossScope scope = seen_seen_scope(inst.params);

        DbOptions options;
        options.with_gradients = false;
        const double db = db_loss(inst.stats, inst.params, scope, nullptr, options).value;
        const SbEstimate sb =
            mc_sb_estimate(inst.stats, inst.params, scope, mc_samples, mix_seed(seed, t, 1));

        const double slack = db + 3.0 * sb.std_error - sb.value;
        worst_slack = std::min(worst_slack, slack);
        if (slack < 0.0) ++verdict.violations;
    }
    verdict.worst = worst_slack;
    verdict.pass = verdict.violations == 0;
    verdict.detail = "worst slack db + 3se - sb = " + format_double(worst_slack);
    return verdict;
}

SuiteVerdict margin_equivalence_suite(int trials, uint64_t seed) {
    SuiteVerdict verdict;
    verdict.suite = "margin";
    verdict.trials = trials;
    verdict.seed = seed;

    Rng rng(seed);
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
        const int d = 1 + static_cast<int>(rng.uniform() * 16);
        const int num_old = 1 + static_cast<int>(rng.uniform() * 10);
        const int num_new = 1 + static_cast<int>(rng.uniform() * 9);
        const double lambda = 2.0 * rng.uniform();
        const RandomInstance inst =
            random_instance(rng, d, num_old, num_new, 1.5, 0.2 + 0.6 * rng.uniform());

        const double direct = amarx_loss(inst.stats, inst.params, lambda).value;
        const double margin_form = margin_form_loss(inst.stats, inst.params, lambda);
        const double rel = std::abs(direct - margin_form) / std::max(1.0, std::abs(direct));
        worst = std::max(worst, rel);
        if (rel > 1e-9) ++verdict.violations;
    }
    verdict.worst = worst;
    verdict.pass = verdict.violations == 0;
    verdict.detail = "max relative discrepancy = " + format_double(worst);
    return verdict;
}

namespace {

struct GradientProbe {
    double analytic = 0.0;
    double numeric = 0.0;
};

double probe_relative_error(const GradientProbe& p) {
    return std::abs(p.analytic - p.numeric) /
           std::max({1.0, std::abs(p.analytic), std::abs(p.numeric)});
}

}  // namespace

SuiteVerdict gradient_suite(int trials, int probe_count, uint64_t seed) {
    SuiteVerdict verdict;
    verdict.suite = "gradient";
    verdict.seed = seed;

    constexpr Variant kVariants[] = {Variant::SBLC, Variant::SBnDBoLC, Variant::SBGC,
                                     Variant::DBLC, Variant::DBGC,     Variant::DBGC_SM,
                                     Variant::AMGC};
    constexpr double kStep = 1e-5;
    constexpr double kTolerance = 1e-4;

    Rng rng(seed);
    double worst = 0.0;
    for (Variant variant : kVariants) {
        for (int t = 0; t < trials; ++t) {
            const int d = 2 + static_cast<int>(rng.uniform() * 4);
            const int num_old = 1 + static_cast<int>(rng.uniform() * 3);
            const int num_new = 1 + static_cast<int>(rng.uniform() * 3);
            RandomInstance inst =
                random_instance(rng, d, num_old, num_new, 1.2, 0.2 + 0.5 * rng.uniform());

            VariantSpec spec;
            spec.variant = variant;
            spec.lambda = 0.1 + rng.uniform();
            spec.mc_samples = 8;
            spec.fixed_margin = 0.2 + rng.uniform();

            FeatureAdapter adapter = FeatureAdapter::identity(d);
            adapter.matrix += (0.15 / std::sqrt(static_cast<double>(d))) * rng.normal_matrix(d, d);
            adapter.offset = 0.1 * rng.normal_vector(d);

            // Old statistics frozen, new statistics raw-space so the adapter
            // chain rule is exercised; real features for the new classes.
            LossContext ctx;
            ctx.adapter = &adapter;
            for (int k = 0; k < num_old; ++k) ctx.old_stats[k] = inst.stats.at(k);
            for (int k = num_old; k < num_old + num_new; ++k) {
                ClassDistribution dist = inst.stats.at(k);
                dist.raw_space = true;
                ctx.new_stats[k] = dist;
                ctx.new_features[k] =
                    ClassFeatures{inst.stats.at(k).stats.mean.rowwise().replicate(4) +
                                      0.5 * rng.normal_matrix(d, 4),
                                  true};
            }

            const uint64_t loss_seed = mix_seed(seed, static_cast<uint64_t>(variant), t);
            const LossResult analytic = variant_loss(spec, ctx, inst.params, loss_seed);
            const auto value_at = [&]() {
                return variant_loss(spec, ctx, inst.params, loss_seed).value;
            };

            const auto probe = [&](double& coeff, double analytic_grad) {
                const double saved = coeff;
                coeff = saved + kStep;
                const double up = value_at();
                coeff = saved - kStep;
                const double down = value_at();
                coeff = saved;
                const GradientProbe p{analytic_grad, (up - down) / (2.0 * kStep)};
                const double rel = probe_relative_error(p);
                worst = std::max(worst, rel);
                ++verdict.trials;
                if (rel > kTolerance) ++verdict.violations;
            };

            Rng coord_rng(mix_seed(seed, 0xC0DE, mix_seed(static_cast<uint64_t>(variant), t)));
            const int k_total = inst.params.num_classes();
            for (int i = 0; i < probe_count; ++i) {
                const int r = static_cast<int>(coord_rng.uniform() * d);
                const int c = static_cast<int>(coord_rng.uniform() * k_total);
                probe(inst.params.weights(r, c), analytic.grad_weights(r, c));
            }
            for (int i = 0; i < std::min(probe_count, k_total); ++i) {
                const int c = static_cast<int>(coord_rng.uniform() * k_total);
                probe(inst.params.biases(c), analytic.grad_biases(c));
            }
            for (int i = 0; i < probe_count; ++i) {
                const int r = static_cast<int>(coord_rng.uniform() * d);
                const int c = static_cast<int>(coord_rng.uniform() * d);
                probe(adapter.matrix(r, c), analytic.grad_adapter_matrix(r, c));
            }
            for (int i = 0; i < std::min(probe_count, d); ++i) {
                const int r = static_cast<int>(coord_rng.uniform() * d);
                probe(adapter.offset(r), analytic.grad_adapter_offset(r));
            }
        }
    }
    verdict.worst = worst;
    verdict.pass = verdict.violations == 0;
    verdict.detail = "max relative error = " + format_double(worst);
    return verdict;
}

SuiteVerdict stats_oracle_suite(uint64_t seed) {
    SuiteVerdict verdict;
    verdict.suite = "stats";
    verdict.seed = seed;

    Rng rng(seed);
    double worst = 0.0;

    // Streaming vs two-pass covariance, over random chunkings.
    {
        const int d = 6;
        const int n = 257;
        const Matrix data =
            (rng.normal_matrix(d, n).array() * (1.0 + rng.uniform())).matrix() +
            2.0 * rng.normal_vector(d).rowwise().replicate(n);

        StatsAccumulator acc(0, d);
        long start = 0;
        while (start < n) {
            const long chunk = 1 + static_cast<long>(rng.uniform() * 48);
            const long take = std::min(chunk, static_cast<long>(n) - start);
            acc.update(data.middleCols(start, take));
            start += take;
        }
        // Also fold in a worker-style merge of two half accumulators.
        StatsAccumulator left(1, d), right(1, d);
        left.update(data.leftCols(n / 2));
        right.update(data.rightCols(n - n / 2));
        left.merge(right);

        const Vector mean = data.rowwise().mean();
        const Matrix centered = data.colwise() - mean;
        const Matrix two_pass = centered * centered.transpose() / static_cast<double>(n - 1);

        const ClassStats streamed = finalize(acc, 0.0);
        const ClassStats merged = finalize(left, 0.0);
        const double denom = std::max(1.0, two_pass.norm());
        const double err = std::max((streamed.covariance - two_pass).norm() / denom,
                                    (merged.covariance - two_pass).norm() / denom);
        worst = std::max(worst, err);
        ++verdict.trials;
        if (err > 1e-10) ++verdict.violations;
    }

    // adapt_stats vs Monte-Carlo pushforward of 1e6 samples, 3-sigma bands.
    {
        const int d = 3;
        const long n = 1000000;
        ClassStats raw;
        raw.class_id = 0;
        raw.count = 2;
        raw.mean = rng.normal_vector(d);
        const Matrix b = rng.normal_matrix(d, d);
        raw.covariance = b * b.transpose() / static_cast<double>(d);
        raw.covariance.diagonal().array() += 0.1;

        FeatureAdapter adapter = FeatureAdapter::identity(d);
        adapter.matrix += 0.3 * rng.normal_matrix(d, d);
        adapter.offset = 0.5 * rng.normal_vector(d);

        const ClassStats analytic = adapt_stats(raw, adapter);
        const Matrix samples =
            adapter.apply(sample_pseudo_features(raw, static_cast<int>(n), mix_seed(seed, 42)));
        const Vector emp_mean = samples.rowwise().mean();
        const Matrix centered = samples.colwise() - emp_mean;
        const Matrix emp_cov = centered * centered.transpose() / static_cast<double>(n - 1);

        double worst_sigmas = 0.0;
        for (int i = 0; i < d; ++i) {
            const double se = std::sqrt(analytic.covariance(i, i) / static_cast<double>(n));
            worst_sigmas = std::max(worst_sigmas, std::abs(emp_mean(i) - analytic.mean(i)) / se);
        }
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) {
                const double var_of_cov = (analytic.covariance(i, i) * analytic.covariance(j, j) +
                                           analytic.covariance(i, j) * analytic.covariance(i, j)) /
                                          static_cast<double>(n);
                const double se = std::sqrt(var_of_cov);
                worst_sigmas = std::max(
                    worst_sigmas, std::abs(emp_cov(i, j) - analytic.covariance(i, j)) / se);
            }
        }
        ++verdict.trials;
        if (worst_sigmas > 3.0) ++verdict.violations;
        verdict.detail = "pushforward worst deviation = " + format_double(worst_sigmas) +
                         " standard errors; ";
        worst = std::max(worst, worst_sigmas);
    }

    verdict.worst = worst;
    verdict.pass = verdict.violations == 0;
    verdict.detail += "streaming-vs-two-pass and pushforward checks";
    return verdict;
}

std::vector<SuiteVerdict> run_all_suites(uint64_t seed) {
    return {jensen_bound_suite(200, 8, 6, 200000, seed),
            margin_equivalence_suite(1000, seed),
            gradient_suite(50, 12, seed),
            stats_oracle_suite(seed)};
}

}  // namespace amgc
