#include "amgc/losses.hpp"
#include "amgc/verify.hpp"

#include "doctest.h"

#include <cmath>

using namespace amgc;

namespace {

ClassStats point_stats(int id, double mean, double variance) {
    ClassStats s;
    s.class_id = id;
    s.count = 2;
    s.mean = Vector::Constant(1, mean);
    s.covariance = Matrix::Constant(1, 1, variance);
    return s;
}

// The worked 1-d instance: w = (1, -1), b = 0, mu = (1, -1).
ClassifierParams two_class_params() {
    ClassifierParams p;
    p.old_count = 0;
    p.new_count = 2;
    p.weights = Matrix(1, 2);
    p.weights << 1.0, -1.0;
    p.biases = Vector::Zero(2);
    return p;
}

LossContext context_from_instance(const RandomInstance& inst, const FeatureAdapter* adapter) {
    LossContext ctx;
    ctx.adapter = adapter;
    for (int k = 0; k < inst.params.old_count; ++k) ctx.old_stats[k] = inst.stats.at(k);
    for (int k = inst.params.old_count; k < inst.params.num_classes(); ++k)
        ctx.new_stats[k] = inst.stats.at(k);
    return ctx;
}

}  // namespace

TEST_CASE("db loss on the worked 1-d instance with zero variance") {
    const ClassifierParams params = two_class_params();
    StatsMap stats;
    stats[0] = {point_stats(0, 1.0, 0.0), false};
    stats[1] = {point_stats(1, -1.0, 0.0), false};
    const LossResult r = db_loss(stats, params, seen_seen_scope(params));
    CHECK(r.value == doctest::Approx(std::log(1.0 + std::exp(-2.0))).epsilon(1e-12));
}

TEST_CASE("db loss rises to log 2 once both variances are 1") {
    const ClassifierParams params = two_class_params();
    StatsMap stats;
    stats[0] = {point_stats(0, 1.0, 1.0), false};
    stats[1] = {point_stats(1, -1.0, 1.0), false};
    const LossResult r = db_loss(stats, params, seen_seen_scope(params));
    CHECK(r.value == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("single class with itself as denominator scores zero") {
    ClassifierParams params;
    params.old_count = 0;
    params.new_count = 1;
    params.weights = Matrix::Constant(2, 1, 0.7);
    params.biases = Vector::Constant(1, -0.3);
    StatsMap stats;
    ClassStats s;
    s.mean = Vector::Constant(2, 1.0);
    s.covariance = Matrix::Identity(2, 2);
    stats[0] = {s, false};
    const LossResult r = db_loss(stats, params, LossScope{{0}, {0}});
    CHECK(r.value == 0.0);
    CHECK(r.grad_weights.isZero(0.0));
}

TEST_CASE("db loss reports a missing target class") {
    const ClassifierParams params = two_class_params();
    StatsMap stats;
    stats[0] = {point_stats(0, 1.0, 0.0), false};
    CHECK_THROWS_AS(db_loss(stats, params, seen_seen_scope(params)), ConfigError);
}

TEST_CASE("overflowing exponent raises a numerical error naming the pair") {
    const ClassifierParams params = two_class_params();
    StatsMap stats;
    stats[0] = {point_stats(0, 1e308, 0.0), false};  // v . mu overflows to -inf
    stats[1] = {point_stats(1, -1e308, 0.0), false};
    try {
        db_loss(stats, params, seen_seen_scope(params));
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("j=") != std::string::npos);
        CHECK(msg.find("k=") != std::string::npos);
    }
}

TEST_CASE("dbgc losses at the initial task have no old component") {
    Rng rng(1);
    const RandomInstance inst = random_instance(rng, 3, 0, 4, 1.5, 0.4);
    const DbgcLosses losses = dbgc_losses({}, inst.stats, inst.params);
    CHECK_FALSE(losses.old_loss.has_value());
    CHECK(losses.new_loss.value == losses.seen_loss.value);
}

TEST_CASE("identical weights and zero biases collapse every exponent") {
    const int k = 5;
    ClassifierParams params;
    params.old_count = 2;
    params.new_count = 3;
    params.weights = Vector::Constant(3, 0.8).rowwise().replicate(k);
    params.biases = Vector::Zero(k);
    Rng rng(2);
    StatsMap old_stats, new_stats;
    for (int c = 0; c < k; ++c) {
        ClassStats s;
        s.mean = rng.normal_vector(3);
        const Matrix b = rng.normal_matrix(3, 3);
        s.covariance = b * b.transpose();
        (c < 2 ? old_stats : new_stats)[c] = {s, false};
    }
    // v_jk = 0 throughout, so every per-class term is log K_denominator.
    const DbgcLosses losses = dbgc_losses(old_stats, new_stats, params);
    CHECK(losses.new_loss.value == doctest::Approx(std::log(5.0)).epsilon(1e-12));
    CHECK(losses.old_loss->value == doctest::Approx(std::log(5.0)).epsilon(1e-12));
    CHECK(losses.seen_loss.value == doctest::Approx(std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("seen loss is the count-weighted mean of the old and new losses") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const int num_old = 1 + static_cast<int>(rng.uniform() * 4);
        const int num_new = 1 + static_cast<int>(rng.uniform() * 4);
        const RandomInstance inst = random_instance(rng, 4, num_old, num_new, 1.5, 0.5);
        StatsMap old_stats, new_stats;
        for (const auto& [label, dist] : inst.stats)
            (label < num_old ? old_stats : new_stats)[label] = dist;
        const DbgcLosses losses = dbgc_losses(old_stats, new_stats, inst.params);
        const double expected =
            (num_new * losses.new_loss.value + num_old * losses.old_loss->value) /
            (num_old + num_new);
        CHECK(losses.seen_loss.value == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("zero-variance sample-based loss equals the distribution-based loss exactly") {
    const ClassifierParams params = two_class_params();
    StatsMap stats;
    stats[0] = {point_stats(0, 1.0, 0.0), false};
    stats[1] = {point_stats(1, -1.0, 0.0), false};
    const LossScope scope = seen_seen_scope(params);
    const double db = db_loss(stats, params, scope).value;
    for (int m : {1, 7, 100}) {
        const double sb = sb_loss(stats, params, scope, m, 9, nullptr).value;
        CHECK(sb == db);
    }
}

TEST_CASE("sample-based loss is deterministic per seed") {
    Rng rng(4);
    const RandomInstance inst = random_instance(rng, 3, 0, 3, 1.0, 0.5);
    const LossScope scope = seen_seen_scope(inst.params);
    const double a = sb_loss(inst.stats, inst.params, scope, 32, 1234, nullptr).value;
    const double b = sb_loss(inst.stats, inst.params, scope, 32, 1234, nullptr).value;
    CHECK(a == b);
    CHECK(a != sb_loss(inst.stats, inst.params, scope, 32, 1235, nullptr).value);
}

TEST_CASE("sample-based loss rejects a non-positive sample count") {
    Rng rng(5);
    const RandomInstance inst = random_instance(rng, 2, 0, 2, 1.0, 0.5);
    CHECK_THROWS_AS(
        sb_loss(inst.stats, inst.params, seen_seen_scope(inst.params), 0, 1, nullptr),
        ConfigError);
}

TEST_CASE("monte-carlo estimate respects the jensen bound on a random instance") {
    Rng rng(6);
    const RandomInstance inst = random_instance(rng, 4, 0, 4, 1.2, 0.6);
    const LossScope scope = seen_seen_scope(inst.params);
    DbOptions options;
    options.with_gradients = false;
    const double db = db_loss(inst.stats, inst.params, scope, nullptr, options).value;
    const SbEstimate sb = mc_sb_estimate(inst.stats, inst.params, scope, 200000, 100);
    CHECK(sb.value <= db + 3.0 * sb.std_error);
}

TEST_CASE("adaptive margin on the worked example") {
    Vector w(2), diag(2);
    w << 1.0, 2.0;
    diag << 1.0, 2.0;
    CHECK(adaptive_margin(w, diag, 0.4) == doctest::Approx(1.8).epsilon(1e-15));
    CHECK(adaptive_margin(w, diag, 0.0) == 0.0);
    Vector w2(2), diag2(2);
    w2 << 0.0, 5.0;
    diag2 << 3.0, 0.0;
    CHECK(adaptive_margin(w2, diag2, 0.7) == 0.0);
    Vector bad(2);
    bad << 1.0, -0.5;
    CHECK_THROWS_AS(adaptive_margin(w, bad, 0.4), ConfigError);
}

TEST_CASE("amarx at lambda 0 reproduces the plain old-class loss bit for bit") {
    Rng rng(7);
    const RandomInstance inst = random_instance(rng, 5, 3, 2, 1.3, 0.4);
    StatsMap old_stats, new_stats;
    for (const auto& [label, dist] : inst.stats)
        (label < 3 ? old_stats : new_stats)[label] = dist;
    const LossResult amarx = amarx_loss(old_stats, inst.params, 0.0);
    const DbgcLosses dbgc = dbgc_losses(old_stats, new_stats, inst.params);
    CHECK(amarx.value == dbgc.old_loss->value);
    CHECK(amarx.grad_weights == dbgc.old_loss->grad_weights);
    CHECK(amarx.grad_biases == dbgc.old_loss->grad_biases);
}

TEST_CASE("amarx is non-decreasing in lambda") {
    Rng rng(8);
    for (int trial = 0; trial < 25; ++trial) {
        const RandomInstance inst = random_instance(rng, 4, 2, 2, 1.2, 0.5);
        StatsMap old_stats;
        for (int k = 0; k < 2; ++k) old_stats[k] = inst.stats.at(k);
        double prev = -1.0;
        for (double lambda = 0.0; lambda <= 2.01; lambda += 0.25) {
            const double value = amarx_loss(old_stats, inst.params, lambda).value;
            CHECK(value >= prev);
            prev = value;
        }
    }
}

TEST_CASE("amarx requires a non-empty old set") {
    Rng rng(9);
    const RandomInstance inst = random_instance(rng, 3, 0, 3, 1.0, 0.5);
    CHECK_THROWS_AS(amarx_loss({}, inst.params, 0.4), EmptyOldSetError);
}

TEST_CASE("margin form at lambda 0 matches the plain old-class loss") {
    Rng rng(10);
    const RandomInstance inst = random_instance(rng, 4, 3, 1, 1.4, 0.5);
    StatsMap old_stats;
    for (int k = 0; k < 3; ++k) old_stats[k] = inst.stats.at(k);
    const double plain = amarx_loss(old_stats, inst.params, 0.0).value;
    CHECK(margin_form_loss(old_stats, inst.params, 0.0) ==
          doctest::Approx(plain).epsilon(1e-10));
}

TEST_CASE("margin form with a single seen class is exactly zero") {
    ClassifierParams params;
    params.old_count = 1;
    params.new_count = 0;
    params.weights = Matrix::Constant(2, 1, 1.3);
    params.biases = Vector::Constant(1, 0.4);
    StatsMap old_stats;
    ClassStats s;
    s.mean = Vector::Constant(2, 2.0);
    s.covariance = 0.7 * Matrix::Identity(2, 2);
    old_stats[0] = {s, false};
    for (double lambda : {0.0, 0.4, 1.7}) {
        CHECK(margin_form_loss(old_stats, params, lambda) == 0.0);
        CHECK(amarx_loss(old_stats, params, lambda).value == 0.0);
    }
}

TEST_CASE("amarx equals its margin decomposition on random instances") {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 1 + static_cast<int>(rng.uniform() * 16);
        const int num_old = 1 + static_cast<int>(rng.uniform() * 10);
        const int num_new = 1 + static_cast<int>(rng.uniform() * 9);
        const double lambda = 2.0 * rng.uniform();
        const RandomInstance inst = random_instance(rng, d, num_old, num_new, 1.5, 0.5);
        StatsMap old_stats;
        for (int k = 0; k < num_old; ++k) old_stats[k] = inst.stats.at(k);
        const double direct = amarx_loss(old_stats, inst.params, lambda).value;
        const double decomposed = margin_form_loss(old_stats, inst.params, lambda);
        CHECK(std::abs(direct - decomposed) / std::max(1.0, std::abs(direct)) <= 1e-9);
    }
}

TEST_CASE("soft margin at zero equals the plain old-class loss") {
    Rng rng(12);
    const RandomInstance inst = random_instance(rng, 3, 2, 2, 1.2, 0.5);
    StatsMap old_stats, new_stats;
    for (const auto& [label, dist] : inst.stats)
        (label < 2 ? old_stats : new_stats)[label] = dist;
    const LossResult sm = soft_margin_loss(old_stats, inst.params, 0.0);
    const DbgcLosses dbgc = dbgc_losses(old_stats, new_stats, inst.params);
    CHECK(sm.value == dbgc.old_loss->value);
    CHECK(sm.grad_weights == dbgc.old_loss->grad_weights);
}

TEST_CASE("soft margin loss is strictly increasing in the margin") {
    Rng rng(13);
    const RandomInstance inst = random_instance(rng, 4, 2, 2, 2.0, 0.3);
    StatsMap old_stats;
    for (int k = 0; k < 2; ++k) old_stats[k] = inst.stats.at(k);
    double prev = -1.0;
    for (double m : {0.0, 0.5, 1.0, 2.0, 5.0, 20.0, 50.0}) {
        const double value = soft_margin_loss(old_stats, inst.params, m).value;
        CHECK(value > prev);
        prev = value;
    }
    CHECK_THROWS_AS(soft_margin_loss(old_stats, inst.params, -0.5), ConfigError);
}

TEST_CASE("soft margin with the adaptive margin differs only by the beta terms") {
    // Single old class: brute-force both softmaxes and compare against the
    // library values term by term.
    Rng rng(14);
    const RandomInstance inst = random_instance(rng, 3, 1, 2, 1.5, 0.6);
    StatsMap old_stats;
    old_stats[0] = inst.stats.at(0);
    const ClassStats& s = old_stats[0].stats;
    const double lambda = 0.8;
    const Vector wk = inst.params.weights.col(0);
    const double m_k = adaptive_margin(wk, s.covariance.diagonal(), lambda);

    const double target = wk.dot(s.mean) + inst.params.biases(0) - m_k;
    double sum_sm = std::exp(0.0);   // target term, normalized by e^target
    double sum_amx = std::exp(0.0);
    for (int j = 1; j < inst.params.num_classes(); ++j) {
        const Vector wj = inst.params.weights.col(j);
        const Vector v = wj - wk;
        const double sigma = 0.5 * v.dot(s.covariance * v);
        const double beta = 0.5 * lambda *
                            ((wj.array() * s.covariance.diagonal().array() * wj.array()).sum() -
                             2.0 * (wj.array() * s.covariance.diagonal().array() * wk.array()).sum());
        const double base = wj.dot(s.mean) + inst.params.biases(j) + sigma - target;
        sum_sm += std::exp(base);
        sum_amx += std::exp(base + beta);
    }
    const double expected_sm = std::log(sum_sm);
    const double expected_amx = std::log(sum_amx);

    const double sm = soft_margin_loss(old_stats, inst.params, m_k).value;
    const double amx = amarx_loss(old_stats, inst.params, lambda).value;
    CHECK(sm == doctest::Approx(expected_sm).epsilon(1e-10));
    CHECK(amx == doctest::Approx(expected_amx).epsilon(1e-10));
    CHECK(amx != sm);  // the beta corrections separate the two losses
}

TEST_CASE("variant parsing round-trips and rejects unknown tags") {
    for (const char* name : {"sblc", "sbndbolc", "sbgc", "dblc", "dbgc", "dbgc-sm", "amgc"})
        CHECK(variant_name(parse_variant(name)) == name);
    CHECK_THROWS_AS(parse_variant("dbgc_sm"), ConfigError);
}

TEST_CASE("amgc with lambda 0 equals dbgc bitwise") {
    Rng rng(15);
    const RandomInstance inst = random_instance(rng, 4, 2, 3, 1.3, 0.5);
    const LossContext ctx = context_from_instance(inst, nullptr);
    VariantSpec amgc;
    amgc.variant = Variant::AMGC;
    amgc.lambda = 0.0;
    VariantSpec dbgc;
    dbgc.variant = Variant::DBGC;
    const LossResult a = variant_loss(amgc, ctx, inst.params, 3);
    const LossResult b = variant_loss(dbgc, ctx, inst.params, 3);
    CHECK(a.value == b.value);
    CHECK(a.grad_weights == b.grad_weights);
    CHECK(a.grad_biases == b.grad_biases);
}

TEST_CASE("dblc old-target term never touches new-class columns") {
    Rng rng(16);
    const RandomInstance inst = random_instance(rng, 4, 3, 2, 1.2, 0.5);
    StatsMap old_stats;
    for (int k = 0; k < 3; ++k) old_stats[k] = inst.stats.at(k);
    const LossResult old_term =
        db_loss(old_stats, inst.params, LossScope{old_labels(inst.params), old_labels(inst.params)});
    for (int c = 3; c < inst.params.num_classes(); ++c) {
        CHECK(old_term.grad_weights.col(c).isZero(0.0));
        CHECK(old_term.grad_biases(c) == 0.0);
    }
}

TEST_CASE("sbgc approaches the seen dbgc loss as variances vanish") {
    ClassifierParams params;
    params.old_count = 2;
    params.new_count = 2;
    Rng rng(17);
    params.weights = rng.normal_matrix(3, 4);
    params.biases = 0.2 * rng.normal_vector(4);
    StatsMap old_stats, new_stats;
    for (int c = 0; c < 4; ++c) {
        ClassStats s;
        s.class_id = c;
        s.mean = rng.normal_vector(3);
        s.covariance = Matrix::Zero(3, 3);
        (c < 2 ? old_stats : new_stats)[c] = {s, false};
    }
    LossContext ctx;
    for (const auto& [label, dist] : old_stats) ctx.old_stats[label] = dist;
    for (const auto& [label, dist] : new_stats) ctx.new_stats[label] = dist;

    VariantSpec sbgc;
    sbgc.variant = Variant::SBGC;
    sbgc.mc_samples = 200000;
    const double sb = variant_loss(sbgc, ctx, params, 77).value;
    const double db = dbgc_losses(old_stats, new_stats, params).seen_loss.value;
    CHECK(std::abs(sb - db) < 1e-6);
}

TEST_CASE("variant losses are translation invariant") {
    Rng rng(18);
    const RandomInstance inst = random_instance(rng, 4, 2, 2, 1.4, 0.5);
    const LossContext ctx = context_from_instance(inst, nullptr);
    const Vector shift_vec = rng.normal_vector(4);

    for (Variant v : {Variant::DBLC, Variant::DBGC, Variant::DBGC_SM, Variant::AMGC}) {
        VariantSpec spec;
        spec.variant = v;
        const double base = variant_loss(spec, ctx, inst.params, 5).value;

        ClassifierParams shifted = inst.params;
        shifted.biases.array() += 3.7;
        CHECK(std::abs(variant_loss(spec, ctx, shifted, 5).value - base) < 1e-10);

        ClassifierParams shifted_w = inst.params;
        shifted_w.weights.colwise() += shift_vec;
        CHECK(std::abs(variant_loss(spec, ctx, shifted_w, 5).value - base) < 1e-10);
    }
}

TEST_CASE("losses with target inside the denominator are non-negative") {
    Rng rng(19);
    for (int trial = 0; trial < 30; ++trial) {
        const RandomInstance inst = random_instance(rng, 3, 2, 2, 1.5, 0.6);
        const LossContext ctx = context_from_instance(inst, nullptr);
        for (Variant v :
             {Variant::SBLC, Variant::SBnDBoLC, Variant::SBGC, Variant::DBLC, Variant::DBGC,
              Variant::DBGC_SM, Variant::AMGC}) {
            VariantSpec spec;
            spec.variant = v;
            spec.mc_samples = 4;
            CHECK(variant_loss(spec, ctx, inst.params, trial).value >= 0.0);
        }
    }
}

TEST_CASE("raw-space statistics without an adapter are rejected") {
    Rng rng(20);
    RandomInstance inst = random_instance(rng, 3, 0, 2, 1.0, 0.5);
    for (auto& [label, dist] : inst.stats) dist.raw_space = true;
    CHECK_THROWS_AS(db_loss(inst.stats, inst.params, seen_seen_scope(inst.params)), ConfigError);
}

TEST_CASE("adapter-tracked db loss matches adapting the stats by hand") {
    Rng rng(21);
    const int d = 3;
    RandomInstance inst = random_instance(rng, d, 0, 3, 1.2, 0.5);
    FeatureAdapter adapter{Matrix::Identity(d, d) + 0.2 * rng.normal_matrix(d, d),
                           0.3 * rng.normal_vector(d)};

    StatsMap raw = inst.stats;
    for (auto& [label, dist] : raw) dist.raw_space = true;
    StatsMap adapted;
    for (const auto& [label, dist] : inst.stats)
        adapted[label] = {adapt_stats(dist.stats, adapter), false};

    const LossScope scope = seen_seen_scope(inst.params);
    const double via_raw = db_loss(raw, inst.params, scope, &adapter).value;
    const double via_adapted = db_loss(adapted, inst.params, scope).value;
    CHECK(via_raw == doctest::Approx(via_adapted).epsilon(1e-12));
}
