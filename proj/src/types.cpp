#include "amgc/types.hpp"

#include <cmath>
#include <numbers>

namespace amgc {

uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

uint64_t mix_seed(uint64_t base, uint64_t tag0, uint64_t tag1) {
    uint64_t h = splitmix64(base);
    h = splitmix64(h ^ (tag0 + 0x9E3779B97F4A7C15ULL));
    h = splitmix64(h ^ (tag1 + 0xD1B54A32D192ED03ULL));
    return h;
}

double Rng::uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

Vector Rng::normal_vector(int n) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v(i) = normal();
    return v;
}

Matrix Rng::normal_matrix(int rows, int cols) {
    Matrix m(rows, cols);
    for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) m(r, c) = normal();
    return m;
}

}  // namespace amgc
