#include "amgc/losses.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace amgc {

namespace {

void check_scope(const LossScope& scope, int num_classes) {
    if (scope.targets.empty()) throw ConfigError("loss scope has no target classes");
    if (scope.denominator.empty()) throw ConfigError("loss scope has no denominator classes");
    for (int label : scope.targets) {
        if (label < 0 || label >= num_classes)
            throw ConfigError("target label " + std::to_string(label) +
                              " outside seen range [0, " + std::to_string(num_classes) + ")");
    }
    for (int label : scope.denominator) {
        if (label < 0 || label >= num_classes)
            throw ConfigError("denominator label " + std::to_string(label) +
                              " outside seen range [0, " + std::to_string(num_classes) + ")");
    }
}

std::vector<int> label_range(int first, int last) {
    std::vector<int> out;
    out.reserve(last - first);
    for (int i = first; i < last; ++i) out.push_back(i);
    return out;
}

void check_partition(const StatsMap& stats, int first, int last, const char* what) {
    for (const auto& [label, dist] : stats) {
        (void)dist;
        if (label < first || label >= last)
            throw ConfigError(std::string(what) + " statistics carry label " +
                              std::to_string(label) + " outside range [" +
                              std::to_string(first) + ", " + std::to_string(last) + ")");
    }
}

ClassFeatures pseudo_features(const StatsMap& stats, int label, int mc_samples, uint64_t seed) {
    const auto it = stats.find(label);
    if (it == stats.end())
        throw ConfigError("missing class statistics for class " + std::to_string(label));
    return ClassFeatures{sample_pseudo_features(it->second.stats, mc_samples, mix_seed(seed, label)),
                         it->second.raw_space};
}

}  // namespace

ClassifierParams ClassifierParams::empty(int dim) {
    ClassifierParams p;
    p.weights = Matrix::Zero(dim, 0);
    p.biases = Vector::Zero(0);
    return p;
}

void ClassifierParams::check() const {
    if (weights.cols() != biases.size())
        throw ConfigError("classifier has " + std::to_string(weights.cols()) +
                          " weight columns but " + std::to_string(biases.size()) + " biases");
    if (old_count < 0 || new_count < 0 || weights.cols() != old_count + new_count)
        throw ConfigError("classifier old/new partition (" + std::to_string(old_count) + "+" +
                          std::to_string(new_count) + ") does not match " +
                          std::to_string(weights.cols()) + " columns");
    if (num_classes() < 1) throw ConfigError("classifier covers no classes");
}

std::vector<int> old_labels(const ClassifierParams& p) { return label_range(0, p.old_count); }
std::vector<int> new_labels(const ClassifierParams& p) {
    return label_range(p.old_count, p.num_classes());
}
std::vector<int> seen_labels(const ClassifierParams& p) { return label_range(0, p.num_classes()); }

LossScope old_seen_scope(const ClassifierParams& p) { return {old_labels(p), seen_labels(p)}; }
LossScope new_seen_scope(const ClassifierParams& p) { return {new_labels(p), seen_labels(p)}; }
LossScope seen_seen_scope(const ClassifierParams& p) { return {seen_labels(p), seen_labels(p)}; }

Variant parse_variant(const std::string& name) {
    if (name == "sblc") return Variant::SBLC;
    if (name == "sbndbolc") return Variant::SBnDBoLC;
    if (name == "sbgc") return Variant::SBGC;
    if (name == "dblc") return Variant::DBLC;
    if (name == "dbgc") return Variant::DBGC;
    if (name == "dbgc-sm") return Variant::DBGC_SM;
    if (name == "amgc") return Variant::AMGC;
    throw ConfigError("unknown variant tag '" + name + "'");
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::SBLC: return "sblc";
        case Variant::SBnDBoLC: return "sbndbolc";
        case Variant::SBGC: return "sbgc";
        case Variant::DBLC: return "dblc";
        case Variant::DBGC: return "dbgc";
        case Variant::DBGC_SM: return "dbgc-sm";
        case Variant::AMGC: return "amgc";
    }
    throw ConfigError("unknown variant tag");
}

bool variant_uses_samples(Variant v) {
    return v == Variant::SBLC || v == Variant::SBnDBoLC || v == Variant::SBGC;
}

void VariantSpec::check() const {
    if (lambda < 0.0) throw ConfigError("variant lambda must be non-negative");
    if (fixed_margin < 0.0) throw ConfigError("variant fixed margin must be non-negative");
    if (variant_uses_samples(variant) && mc_samples < 1)
        throw ConfigError("variant '" + variant_name(variant) +
                          "' requires mc_samples >= 1, got " + std::to_string(mc_samples));
}

LossResult zero_loss_result(int dim, int num_classes) {
    LossResult r;
    r.grad_weights = Matrix::Zero(dim, num_classes);
    r.grad_biases = Vector::Zero(num_classes);
    r.grad_adapter_matrix = Matrix::Zero(dim, dim);
    r.grad_adapter_offset = Vector::Zero(dim);
    return r;
}

void LossResult::accumulate(const LossResult& other) {
    if (grad_weights.rows() != other.grad_weights.rows() ||
        grad_weights.cols() != other.grad_weights.cols())
        throw ConfigError("cannot accumulate loss results of different shapes");
    value += other.value;
    grad_weights += other.grad_weights;
    grad_biases += other.grad_biases;
    grad_adapter_matrix += other.grad_adapter_matrix;
    grad_adapter_offset += other.grad_adapter_offset;
}

StatsMap frozen_stats(const std::map<int, ClassStats>& stats) {
    StatsMap out;
    for (const auto& [label, s] : stats) out[label] = ClassDistribution{s, false};
    return out;
}

StatsMap raw_stats(const std::map<int, ClassStats>& stats) {
    StatsMap out;
    for (const auto& [label, s] : stats) out[label] = ClassDistribution{s, true};
    return out;
}

LossResult db_loss(const StatsMap& stats, const ClassifierParams& params,
                   const LossScope& scope, const FeatureAdapter* adapter,
                   const DbOptions& options) {
    params.check();
    check_scope(scope, params.num_classes());
    if (options.ve_lambda < 0.0)
        throw ConfigError("variance-enlarge lambda must be non-negative");
    if (options.margin < 0.0) throw ConfigError("soft margin must be non-negative");

    const int d = params.dim();
    const int num_j = static_cast<int>(scope.denominator.size());
    LossResult out = zero_loss_result(d, params.num_classes());
    const double target_weight = 1.0 / static_cast<double>(scope.targets.size());

    std::vector<double> z(num_j), p(num_j);
    for (int k : scope.targets) {
        const auto it = stats.find(k);
        if (it == stats.end())
            throw ConfigError("missing class statistics for target class " + std::to_string(k));
        const ClassDistribution& dist = it->second;
        if (dist.raw_space && adapter == nullptr)
            throw ConfigError("raw-space statistics of class " + std::to_string(k) +
                              " require a feature adapter");
        const ClassStats eff = dist.raw_space ? adapt_stats(dist.stats, *adapter) : dist.stats;
        if (eff.mean.size() != d)
            throw ConfigError("statistics of class " + std::to_string(k) + " have dimension " +
                              std::to_string(eff.mean.size()) + ", classifier expects " +
                              std::to_string(d));

        Matrix cov = eff.covariance;
        if (options.ve_lambda != 0.0) cov.diagonal() *= (1.0 + options.ve_lambda);

        const Vector wk = params.weights.col(k);
        const double bk = params.biases(k);

        Matrix v(d, num_j);
        Vector delta(num_j);
        for (int jj = 0; jj < num_j; ++jj) {
            const int j = scope.denominator[jj];
            v.col(jj) = params.weights.col(j) - wk;
            delta(jj) = params.biases(j) - bk;
        }
        const Matrix sv = cov * v;  // enlarged-covariance image of each v_jk

        int target_pos = -1;
        for (int jj = 0; jj < num_j; ++jj) {
            const int j = scope.denominator[jj];
            double e = v.col(jj).dot(eff.mean) + 0.5 * v.col(jj).dot(sv.col(jj)) + delta(jj);
            if (j == k) {
                target_pos = jj;
                if (options.margin != 0.0) e -= options.margin;
            }
            if (!std::isfinite(e))
                throw NumericError("non-finite exponent for class pair (j=" + std::to_string(j) +
                                   ", k=" + std::to_string(k) + ")");
            z[jj] = e;
        }

        const double zmax = *std::max_element(z.begin(), z.end());
        double sumexp = 0.0;
        for (int jj = 0; jj < num_j; ++jj) {
            p[jj] = std::exp(z[jj] - zmax);
            sumexp += p[jj];
        }
        double value_k = zmax + std::log(sumexp);
        // The margined target term turns the logsumexp into a true
        // cross-entropy: value = lse(z) - z_target with z_target = -margin.
        if (target_pos >= 0 && options.margin != 0.0) value_k += options.margin;
        out.value += target_weight * value_k;

        if (!options.with_gradients) continue;

        Vector g_mean = Vector::Zero(d);
        for (int jj = 0; jj < num_j; ++jj) {
            const int j = scope.denominator[jj];
            const double pj = p[jj] / sumexp;
            const Vector u = eff.mean + sv.col(jj);  // dz_j / dw_j
            out.grad_weights.col(j) += (target_weight * pj) * u;
            out.grad_weights.col(k) -= (target_weight * pj) * u;
            out.grad_biases(j) += target_weight * pj;
            out.grad_biases(k) -= target_weight * pj;
            g_mean += pj * v.col(jj);
        }

        if (dist.raw_space) {
            Matrix g_cov = Matrix::Zero(d, d);
            for (int jj = 0; jj < num_j; ++jj)
                g_cov.noalias() += (0.5 * p[jj] / sumexp) * (v.col(jj) * v.col(jj).transpose());
            // Adjoint of the variance-enlarge map X -> X + lambda diag(X).
            if (options.ve_lambda != 0.0) g_cov.diagonal() *= (1.0 + options.ve_lambda);
            out.grad_adapter_matrix.noalias() +=
                target_weight * (g_mean * dist.stats.mean.transpose());
            out.grad_adapter_matrix.noalias() +=
                (2.0 * target_weight) * (g_cov * adapter->matrix * dist.stats.covariance);
            out.grad_adapter_offset += target_weight * g_mean;
        }
    }
    return out;
}

DbgcLosses dbgc_losses(const StatsMap& old_stats, const StatsMap& new_stats,
                       const ClassifierParams& params, const FeatureAdapter* adapter) {
    params.check();
    check_partition(old_stats, 0, params.old_count, "old-class");
    check_partition(new_stats, params.old_count, params.num_classes(), "new-class");

    StatsMap seen = old_stats;
    seen.insert(new_stats.begin(), new_stats.end());

    DbgcLosses out;
    if (params.old_count == 0) {
        out.seen_loss = db_loss(seen, params, seen_seen_scope(params), adapter);
        out.new_loss = out.seen_loss;
        return out;
    }
    out.new_loss = db_loss(seen, params, new_seen_scope(params), adapter);
    out.old_loss = db_loss(seen, params, old_seen_scope(params), adapter);
    out.seen_loss = db_loss(seen, params, seen_seen_scope(params), adapter);
    return out;
}

LossResult sb_loss(const FeatureMap& features, const ClassifierParams& params,
                   const LossScope& scope, const FeatureAdapter* adapter,
                   bool with_gradients) {
    params.check();
    check_scope(scope, params.num_classes());

    const int d = params.dim();
    const int num_j = static_cast<int>(scope.denominator.size());
    LossResult out = zero_loss_result(d, params.num_classes());
    const double target_weight = 1.0 / static_cast<double>(scope.targets.size());

    std::vector<double> z(num_j), p(num_j);
    for (int k : scope.targets) {
        const auto it = features.find(k);
        if (it == features.end())
            throw ConfigError("missing features for target class " + std::to_string(k));
        const ClassFeatures& cf = it->second;
        if (cf.raw_space && adapter == nullptr)
            throw ConfigError("raw-space features of class " + std::to_string(k) +
                              " require a feature adapter");
        if (cf.features.rows() != d)
            throw ConfigError("features of class " + std::to_string(k) + " have dimension " +
                              std::to_string(cf.features.rows()) + ", classifier expects " +
                              std::to_string(d));
        const long n = cf.features.cols();
        if (n < 1)
            throw ConfigError("class " + std::to_string(k) + " supplies no feature samples");
        const Matrix f = cf.raw_space ? adapter->apply(cf.features) : cf.features;

        const Vector wk = params.weights.col(k);
        const double bk = params.biases(k);
        Matrix v(d, num_j);
        Vector delta(num_j);
        for (int jj = 0; jj < num_j; ++jj) {
            const int j = scope.denominator[jj];
            v.col(jj) = params.weights.col(j) - wk;
            delta(jj) = params.biases(j) - bk;
        }

        const double cw = target_weight / static_cast<double>(n);
        // Running mean of the per-sample values: bit-stable when every sample
        // coincides, so a zero-variance draw reproduces db_loss exactly.
        double class_mean = 0.0;
        for (long i = 0; i < n; ++i) {
            for (int jj = 0; jj < num_j; ++jj) {
                const double e = v.col(jj).dot(f.col(i)) + delta(jj);
                if (!std::isfinite(e))
                    throw NumericError("non-finite exponent for class pair (j=" +
                                       std::to_string(scope.denominator[jj]) +
                                       ", k=" + std::to_string(k) + ")");
                z[jj] = e;
            }
            const double zmax = *std::max_element(z.begin(), z.end());
            double sumexp = 0.0;
            for (int jj = 0; jj < num_j; ++jj) {
                p[jj] = std::exp(z[jj] - zmax);
                sumexp += p[jj];
            }
            const double lse = zmax + std::log(sumexp);
            class_mean += (lse - class_mean) / static_cast<double>(i + 1);

            if (!with_gradients) continue;
            Vector g_f = Vector::Zero(d);
            for (int jj = 0; jj < num_j; ++jj) {
                const int j = scope.denominator[jj];
                const double pj = p[jj] / sumexp;
                out.grad_weights.col(j) += (cw * pj) * f.col(i);
                out.grad_weights.col(k) -= (cw * pj) * f.col(i);
                out.grad_biases(j) += cw * pj;
                out.grad_biases(k) -= cw * pj;
                g_f += pj * v.col(jj);
            }
            if (cf.raw_space) {
                out.grad_adapter_matrix.noalias() += cw * (g_f * cf.features.col(i).transpose());
                out.grad_adapter_offset += cw * g_f;
            }
        }
        out.value += target_weight * class_mean;
    }
    return out;
}

LossResult sb_loss(const StatsMap& stats, const ClassifierParams& params,
                   const LossScope& scope, int mc_samples, uint64_t seed,
                   const FeatureAdapter* adapter, bool with_gradients) {
    if (mc_samples < 1)
        throw ConfigError("sample-based loss needs mc_samples >= 1, got " +
                          std::to_string(mc_samples));
    params.check();
    check_scope(scope, params.num_classes());

    FeatureMap pseudo;
    for (int k : scope.targets) pseudo[k] = pseudo_features(stats, k, mc_samples, seed);
    return sb_loss(pseudo, params, scope, adapter, with_gradients);
}

double adaptive_margin(const Vector& weight_column, const Vector& variance_diagonal,
                       double lambda) {
    if (lambda < 0.0) throw ConfigError("adaptive margin lambda must be non-negative");
    if (weight_column.size() != variance_diagonal.size())
        throw ConfigError("adaptive margin: weight and diagonal dimensions differ");
    if ((variance_diagonal.array() < 0.0).any())
        throw ConfigError("adaptive margin: variance diagonal has a negative entry");
    const double quad =
        (variance_diagonal.array() * weight_column.array().square()).sum();
    return 0.5 * lambda * quad;
}

LossResult amarx_loss(const StatsMap& old_stats, const ClassifierParams& params,
                      double lambda, const FeatureAdapter* adapter) {
    params.check();
    if (params.old_count == 0) throw EmptyOldSetError();
    if (lambda < 0.0) throw ConfigError("amarx lambda must be non-negative");
    DbOptions options;
    options.ve_lambda = lambda;
    return db_loss(old_stats, params, old_seen_scope(params), adapter, options);
}

double margin_form_loss(const StatsMap& old_stats, const ClassifierParams& params,
                        double lambda) {
    params.check();
    if (params.old_count == 0) throw EmptyOldSetError();
    if (lambda < 0.0) throw ConfigError("amarx lambda must be non-negative");

    const int num_classes = params.num_classes();
    double total = 0.0;
    for (int k = 0; k < params.old_count; ++k) {
        const auto it = old_stats.find(k);
        if (it == old_stats.end())
            throw ConfigError("missing class statistics for target class " + std::to_string(k));
        const ClassStats& stats = it->second.stats;
        const Vector diag = stats.covariance.diagonal();
        if ((diag.array() < 0.0).any())
            throw ConfigError("class " + std::to_string(k) +
                              " covariance diagonal has a negative entry");

        const Vector wk = params.weights.col(k);
        const double margin = adaptive_margin(wk, diag, lambda);
        const double target_logit = wk.dot(stats.mean) + params.biases(k) - margin;

        std::vector<double> logits(num_classes);
        for (int j = 0; j < num_classes; ++j) {
            if (j == k) {
                logits[j] = target_logit;
                continue;
            }
            const Vector wj = params.weights.col(j);
            const Vector vjk = wj - wk;
            const double sigma = 0.5 * vjk.dot(stats.covariance * vjk);
            const double beta =
                0.5 * lambda *
                ((wj.array() * diag.array() * wj.array()).sum() -
                 (wj.array() * diag.array() * wk.array()).sum() -
                 (wk.array() * diag.array() * wj.array()).sum());
            logits[j] = wj.dot(stats.mean) + params.biases(j) + sigma + beta;
        }
        const double zmax = *std::max_element(logits.begin(), logits.end());
        double sumexp = 0.0;
        for (double l : logits) sumexp += std::exp(l - zmax);
        if (!std::isfinite(sumexp))
            throw NumericError("non-finite softmax in margin-form loss for class " +
                               std::to_string(k));
        total += (zmax + std::log(sumexp)) - target_logit;
    }
    return total / static_cast<double>(params.old_count);
}

LossResult soft_margin_loss(const StatsMap& old_stats, const ClassifierParams& params,
                            double fixed_margin, const FeatureAdapter* adapter) {
    params.check();
    if (params.old_count == 0) throw EmptyOldSetError();
    if (fixed_margin < 0.0) throw ConfigError("soft margin must be non-negative");
    DbOptions options;
    options.margin = fixed_margin;
    return db_loss(old_stats, params, old_seen_scope(params), adapter, options);
}

LossResult variant_loss(const VariantSpec& spec, const LossContext& ctx,
                        const ClassifierParams& params, uint64_t seed) {
    params.check();
    spec.check();
    if (params.old_count == 0) throw EmptyOldSetError();

    const std::vector<int> olds = old_labels(params);
    const std::vector<int> news = new_labels(params);

    auto pseudo_old = [&]() {
        FeatureMap fm;
        for (int k : olds) fm[k] = pseudo_features(ctx.old_stats, k, spec.mc_samples, seed);
        return fm;
    };
    // Real new-class features when available, pseudo samples otherwise.
    auto new_features = [&]() {
        FeatureMap fm;
        for (int k : news) {
            const auto it = ctx.new_features.find(k);
            if (it != ctx.new_features.end())
                fm[k] = it->second;
            else
                fm[k] = pseudo_features(ctx.new_stats, k, spec.mc_samples, seed);
        }
        return fm;
    };

    switch (spec.variant) {
        case Variant::SBLC: {
            LossResult r = sb_loss(new_features(), params, {news, news}, ctx.adapter);
            r.accumulate(sb_loss(pseudo_old(), params, {olds, olds}, ctx.adapter));
            return r;
        }
        case Variant::SBnDBoLC: {
            LossResult r = sb_loss(new_features(), params, {news, news}, ctx.adapter);
            r.accumulate(db_loss(ctx.old_stats, params, {olds, olds}, ctx.adapter));
            return r;
        }
        case Variant::SBGC: {
            FeatureMap all = new_features();
            FeatureMap old_fm = pseudo_old();
            all.insert(old_fm.begin(), old_fm.end());
            return sb_loss(all, params, seen_seen_scope(params), ctx.adapter);
        }
        case Variant::DBLC: {
            LossResult r = db_loss(ctx.new_stats, params, {news, news}, ctx.adapter);
            r.accumulate(db_loss(ctx.old_stats, params, {olds, olds}, ctx.adapter));
            return r;
        }
        case Variant::DBGC: {
            LossResult r = db_loss(ctx.new_stats, params, new_seen_scope(params), ctx.adapter);
            r.accumulate(db_loss(ctx.old_stats, params, old_seen_scope(params), ctx.adapter));
            return r;
        }
        case Variant::DBGC_SM: {
            LossResult r = db_loss(ctx.new_stats, params, new_seen_scope(params), ctx.adapter);
            r.accumulate(soft_margin_loss(ctx.old_stats, params, spec.fixed_margin, ctx.adapter));
            return r;
        }
        case Variant::AMGC: {
            LossResult r = db_loss(ctx.new_stats, params, new_seen_scope(params), ctx.adapter);
            r.accumulate(amarx_loss(ctx.old_stats, params, spec.lambda, ctx.adapter));
            return r;
        }
    }
    throw ConfigError("unknown variant tag");
}

}  // namespace amgc
