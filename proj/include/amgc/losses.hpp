#pragma once

#include "amgc/stats.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace amgc {

/// Weight columns and biases for all seen classes. Labels are 0-based and
/// contiguous: old classes occupy [0, old_count), new classes
/// [old_count, old_count + new_count).
struct ClassifierParams {
    Matrix weights;  // d x K, one column per class
    Vector biases;   // K
    int old_count = 0;
    int new_count = 0;

    static ClassifierParams empty(int dim);

    int num_classes() const { return old_count + new_count; }
    int dim() const { return static_cast<int>(weights.rows()); }
    void check() const;
};

std::vector<int> old_labels(const ClassifierParams& params);
std::vector<int> new_labels(const ClassifierParams& params);
std::vector<int> seen_labels(const ClassifierParams& params);

/// Index sets of the outer (target) and inner (denominator) sums.
struct LossScope {
    std::vector<int> targets;
    std::vector<int> denominator;
};

LossScope old_seen_scope(const ClassifierParams& params);
LossScope new_seen_scope(const ClassifierParams& params);
LossScope seen_seen_scope(const ClassifierParams& params);

enum class Variant { SBLC, SBnDBoLC, SBGC, DBLC, DBGC, DBGC_SM, AMGC };

Variant parse_variant(const std::string& name);  // "sblc", ..., "dbgc-sm", "amgc"
std::string variant_name(Variant v);
bool variant_uses_samples(Variant v);

struct VariantSpec {
    Variant variant = Variant::AMGC;
    double lambda = 0.4;        // variance-enlarge strength (AMGC only)
    int mc_samples = 16;        // pseudo features per class (SB variants only)
    double fixed_margin = 1.0;  // class-agnostic margin (DBGC_SM only)

    void check() const;
};

/// Scalar loss value plus analytic gradients for every trainable group.
struct LossResult {
    double value = 0.0;
    Matrix grad_weights;         // d x K
    Vector grad_biases;          // K
    Matrix grad_adapter_matrix;  // d x d
    Vector grad_adapter_offset;  // d

    void accumulate(const LossResult& other);
};

LossResult zero_loss_result(int dim, int num_classes);

/// A class distribution as the losses see it. `raw_space` marks statistics
/// living in the adapter input space: they are pushed through the adapter at
/// evaluation time and contribute adapter gradients via the chain rule.
struct ClassDistribution {
    ClassStats stats;
    bool raw_space = false;
};

using StatsMap = std::map<int, ClassDistribution>;

StatsMap frozen_stats(const std::map<int, ClassStats>& stats);
StatsMap raw_stats(const std::map<int, ClassStats>& stats);

struct DbOptions {
    double ve_lambda = 0.0;      // variance enlarging applied to each target covariance
    double margin = 0.0;         // subtracted from the target logit
    bool with_gradients = true;
};

/// Distribution-based loss: mean over targets k of
///   logsumexp_j( v_jk . mu_k + 0.5 v_jk . Sigma_k v_jk + delta_jk )
/// with v_jk = w_j - w_k and delta_jk = b_j - b_k, j over the denominator.
/// All exponent sums subtract the running maximum before exponentiation.
LossResult db_loss(const StatsMap& stats, const ClassifierParams& params,
                   const LossScope& scope, const FeatureAdapter* adapter = nullptr,
                   const DbOptions& options = {});

struct DbgcLosses {
    LossResult new_loss;                 // new targets / seen denominator
    std::optional<LossResult> old_loss;  // empty when there are no old classes
    LossResult seen_loss;                // seen targets / seen denominator
};

DbgcLosses dbgc_losses(const StatsMap& old_stats, const StatsMap& new_stats,
                       const ClassifierParams& params,
                       const FeatureAdapter* adapter = nullptr);

/// Per-class feature sets for the sample-based loss. `raw_space` features are
/// pushed through the adapter (with gradients) before entering the logits.
struct ClassFeatures {
    Matrix features;  // d x n, one sample per column
    bool raw_space = false;
};

using FeatureMap = std::map<int, ClassFeatures>;

/// Sample-based softmax cross-entropy on explicit per-class features:
/// mean over targets of mean over that class's samples of
/// logsumexp_j( v_jk . f + delta_jk ).
LossResult sb_loss(const FeatureMap& features, const ClassifierParams& params,
                   const LossScope& scope, const FeatureAdapter* adapter = nullptr,
                   bool with_gradients = true);

/// Sample-based loss on mc_samples pseudo features per target class, drawn
/// from the class statistics. Raw-space statistics are sampled in raw space
/// and pushed through the adapter so adapter gradients are exact (the draws
/// themselves never depend on the trainable parameters).
LossResult sb_loss(const StatsMap& stats, const ClassifierParams& params,
                   const LossScope& scope, int mc_samples, uint64_t seed,
                   const FeatureAdapter* adapter = nullptr, bool with_gradients = true);

/// Adaptive per-class margin m_k = (lambda/2) * sum_i diag_i * w_k[i]^2.
double adaptive_margin(const Vector& weight_column, const Vector& variance_diagonal,
                       double lambda);

/// Old-class distribution-based loss with variance-enlarged covariances
/// (seen denominator). lambda = 0 reproduces the plain old-class loss
/// bit for bit.
LossResult amarx_loss(const StatsMap& old_stats, const ClassifierParams& params,
                      double lambda, const FeatureAdapter* adapter = nullptr);

/// Equivalence oracle for amarx_loss: evaluates the explicit margin
/// decomposition (target logit reduced by m_k; competitor logits raised by
/// sigma_jk + beta_jk) and returns the negative-log-softmax average.
/// Value only, no gradients; deliberately a separate algebraic route.
double margin_form_loss(const StatsMap& old_stats, const ClassifierParams& params,
                        double lambda);

/// Old-class loss with a fixed class-agnostic margin subtracted from the
/// target logit inside the softmax (seen denominator).
LossResult soft_margin_loss(const StatsMap& old_stats, const ClassifierParams& params,
                            double fixed_margin, const FeatureAdapter* adapter = nullptr);

/// Inputs for one full variant evaluation at a training step.
struct LossContext {
    StatsMap old_stats;
    StatsMap new_stats;
    FeatureMap new_features;  // real new-class features; pseudo samples are drawn when absent
    const FeatureAdapter* adapter = nullptr;
};

/// Dispatches to the loss composition of the selected variant. Local (LC)
/// variants restrict both the softmax denominator and the gradient flow to
/// the matching sub-classifier; global (GC) variants use the seen denominator.
LossResult variant_loss(const VariantSpec& spec, const LossContext& ctx,
                        const ClassifierParams& params, uint64_t seed);

}  // namespace amgc
