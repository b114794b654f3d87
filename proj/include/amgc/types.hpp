#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace amgc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr const char* kEngineVersion = "0.1.0";

uint64_t splitmix64(uint64_t x);

// Derives an independent stream seed from a base seed and up to two tags
// (task index, class label, step counter, ...). Collision-free enough for
// the handful of streams a scenario uses.
uint64_t mix_seed(uint64_t base, uint64_t tag0, uint64_t tag1 = 0);

// Deterministic N(0,1) source: mt19937_64 plus Box-Muller. The standard pins
// the mt19937_64 output sequence, so identical seeds give identical draws on
// every platform; std::normal_distribution would not.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    double uniform();  // [0, 1)
    double normal();   // N(0, 1)
    Vector normal_vector(int n);
    Matrix normal_matrix(int rows, int cols);  // filled column-major

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace amgc
