#pragma once

#include "amgc/errors.hpp"
#include "amgc/types.hpp"

#include <cstdint>

namespace amgc {

/// Streaming (count, mean, comoment) accumulator for one class.
///
/// Mini-batches are reduced exactly (two-pass within the batch) and combined
/// with Chan's parallel-merge rule, so any partition of the data yields the
/// same finalized statistics up to floating-point round-off. Single writer;
/// parallel accumulation uses one accumulator per worker plus merge().
class StatsAccumulator {
public:
    StatsAccumulator(int class_id, int dim);

    /// Folds a batch of feature vectors (one per column) into the running
    /// statistics. An empty batch is a no-op.
    void update(const Matrix& batch);

    /// Chan merge of two accumulators for the same class.
    void merge(const StatsAccumulator& other);

    int class_id() const { return class_id_; }
    int dim() const { return static_cast<int>(mean_.size()); }
    long count() const { return count_; }
    const Vector& mean() const { return mean_; }
    const Matrix& comoment() const { return comoment_; }

private:
    int class_id_;
    long count_ = 0;
    Vector mean_;      // all-zero while count == 0
    Matrix comoment_;  // sum of outer-product deviations
};

/// Finalized per-class Gaussian model: mean vector and covariance matrix.
struct ClassStats {
    int class_id = -1;
    long count = 0;
    Vector mean;
    Matrix covariance;  // exactly symmetric after finalize

    Vector diagonal() const { return covariance.diagonal(); }
};

/// Affine surrogate of the trainable feature extractor: f -> A f + c.
/// Gaussian statistics push forward through it in closed form.
struct FeatureAdapter {
    Matrix matrix;  // A
    Vector offset;  // c

    static FeatureAdapter identity(int dim);

    int dim() const { return static_cast<int>(offset.size()); }
    Vector apply(const Vector& feature) const { return matrix * feature + offset; }
    Matrix apply(const Matrix& features) const;  // column-wise
};

/// Default diagonal shrinkage: 1e-4 * trace(S)/d of the sample covariance.
/// Keeps the finalized covariance positive definite when count < dim without
/// materially changing loss values.
double default_shrinkage(const StatsAccumulator& acc);

/// covariance = symmetrized comoment / (count - 1) + shrinkage * I.
/// Requires count >= 2.
ClassStats finalize(const StatsAccumulator& acc, double shrinkage);
ClassStats finalize(const StatsAccumulator& acc);  // default shrinkage rule

/// Variance enlarging: adds lambda times the covariance diagonal, i.e. each
/// diagonal entry is scaled by exactly (1 + lambda). Off-diagonal entries are
/// bit-identical to the input.
ClassStats variance_enlarge(const ClassStats& stats, double lambda);

/// Exact pushforward through an affine map: mean' = A mu + c,
/// covariance' = A Sigma A^T (symmetrized).
ClassStats adapt_stats(const ClassStats& stats, const FeatureAdapter& adapter);

/// Lower Cholesky factor with escalating diagonal jitter: the plain
/// factorization is tried first, then jitter 1e-10 growing tenfold per retry
/// up to 1e-6. Throws NumericError once the escalation is exhausted.
Matrix robust_cholesky(const Matrix& covariance);

/// num_samples i.i.d. draws from N(mean, covariance), one per column.
/// Deterministic per seed; a zero covariance yields the mean exactly.
Matrix sample_pseudo_features(const ClassStats& stats, int num_samples, uint64_t seed);

}  // namespace amgc
