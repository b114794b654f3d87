#include "amgc/stats.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <string>

namespace amgc {

namespace {

void check_dim(int expected, long received, const char* what) {
    if (received != expected) {
        throw ConfigError(std::string(what) + ": dimension mismatch, expected d=" +
                          std::to_string(expected) + " but received d=" +
                          std::to_string(received));
    }
}

}  // namespace

StatsAccumulator::StatsAccumulator(int class_id, int dim) : class_id_(class_id) {
    if (dim < 1) throw ConfigError("accumulator dimension must be positive");
    mean_ = Vector::Zero(dim);
    comoment_ = Matrix::Zero(dim, dim);
}

void StatsAccumulator::update(const Matrix& batch) {
    const long n2 = batch.cols();
    if (n2 == 0) return;
    check_dim(dim(), batch.rows(), "stream update");

    const Vector batch_mean = batch.rowwise().mean();
    const Matrix centered = batch.colwise() - batch_mean;
    const Matrix batch_comoment = centered * centered.transpose();

    const long n1 = count_;
    const long n = n1 + n2;
    const Vector delta = batch_mean - mean_;
    mean_ += delta * (static_cast<double>(n2) / static_cast<double>(n));
    comoment_ += batch_comoment +
                 delta * delta.transpose() *
                     (static_cast<double>(n1) * static_cast<double>(n2) / static_cast<double>(n));
    count_ = n;
}

void StatsAccumulator::merge(const StatsAccumulator& other) {
    if (other.class_id_ != class_id_) {
        throw ConfigError("cannot merge accumulators of classes " + std::to_string(class_id_) +
                          " and " + std::to_string(other.class_id_));
    }
    check_dim(dim(), other.dim(), "accumulator merge");
    if (other.count_ == 0) return;
    if (count_ == 0) {
        count_ = other.count_;
        mean_ = other.mean_;
        comoment_ = other.comoment_;
        return;
    }
    const long n1 = count_;
    const long n2 = other.count_;
    const long n = n1 + n2;
    const Vector delta = other.mean_ - mean_;
    mean_ += delta * (static_cast<double>(n2) / static_cast<double>(n));
    comoment_ += other.comoment_ +
                 delta * delta.transpose() *
                     (static_cast<double>(n1) * static_cast<double>(n2) / static_cast<double>(n));
    count_ = n;
}

FeatureAdapter FeatureAdapter::identity(int dim) {
    return FeatureAdapter{Matrix::Identity(dim, dim), Vector::Zero(dim)};
}

Matrix FeatureAdapter::apply(const Matrix& features) const {
    check_dim(dim(), features.rows(), "adapter apply");
    return (matrix * features).colwise() + offset;
}

double default_shrinkage(const StatsAccumulator& acc) {
    if (acc.count() < 2) return 0.0;
    const double d = static_cast<double>(acc.dim());
    const double trace = acc.comoment().trace() / static_cast<double>(acc.count() - 1);
    return 1e-4 * trace / d;
}

ClassStats finalize(const StatsAccumulator& acc, double shrinkage) {
    if (acc.count() < 2) {
        throw DataError("insufficient data for class " + std::to_string(acc.class_id()) +
                        ": covariance needs at least 2 samples, have " +
                        std::to_string(acc.count()));
    }
    if (shrinkage < 0.0) throw ConfigError("shrinkage must be non-negative");

    ClassStats out;
    out.class_id = acc.class_id();
    out.count = acc.count();
    out.mean = acc.mean();
    const double norm = 1.0 / static_cast<double>(acc.count() - 1);
    out.covariance = (acc.comoment() + acc.comoment().transpose()) * (0.5 * norm);
    out.covariance.diagonal().array() += shrinkage;
    return out;
}

ClassStats finalize(const StatsAccumulator& acc) {
    return finalize(acc, default_shrinkage(acc));
}

ClassStats variance_enlarge(const ClassStats& stats, double lambda) {
    if (lambda < 0.0) {
        throw ConfigError("variance-enlarge lambda must be non-negative, got " +
                          std::to_string(lambda));
    }
    ClassStats out = stats;
    out.covariance.diagonal() *= (1.0 + lambda);
    return out;
}

ClassStats adapt_stats(const ClassStats& stats, const FeatureAdapter& adapter) {
    check_dim(adapter.dim(), stats.mean.size(), "adapt stats");
    ClassStats out;
    out.class_id = stats.class_id;
    out.count = stats.count;
    out.mean = adapter.matrix * stats.mean + adapter.offset;
    const Matrix pushed = adapter.matrix * stats.covariance * adapter.matrix.transpose();
    out.covariance = (pushed + pushed.transpose()) * 0.5;
    return out;
}

Matrix robust_cholesky(const Matrix& covariance) {
    Eigen::LLT<Matrix> llt(covariance);
    if (llt.info() == Eigen::Success) return llt.matrixL();

    double jitter = 1e-10;
    for (int retry = 0; retry < 5; ++retry) {
        Matrix jittered = covariance;
        jittered.diagonal().array() += jitter;
        llt.compute(jittered);
        if (llt.info() == Eigen::Success) return llt.matrixL();
        jitter *= 10.0;
    }
    throw NumericError("covariance factorization failed after jitter escalation to 1e-6");
}

Matrix sample_pseudo_features(const ClassStats& stats, int num_samples, uint64_t seed) {
    if (num_samples < 1) throw ConfigError("number of pseudo features must be positive");
    const int d = static_cast<int>(stats.mean.size());

    // Point mass: a forced-zero covariance yields the mean exactly.
    if (stats.covariance.isZero(0.0)) {
        return stats.mean.replicate(1, num_samples);
    }

    Matrix factor;
    try {
        factor = robust_cholesky(stats.covariance);
    } catch (const NumericError& e) {
        throw NumericError("class " + std::to_string(stats.class_id) + ": " + e.what());
    }

    Rng rng(seed);
    Matrix samples = factor * rng.normal_matrix(d, num_samples);
    samples.colwise() += stats.mean;
    return samples;
}

}  // namespace amgc
