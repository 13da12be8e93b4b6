#include "flexo/kernels.hpp"

#include <cassert>
#include <cmath>

namespace flexo::kern::scalar {

double dot(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double sum(std::span<const double> a) {
    double acc = 0.0;
    for (double v : a) acc += v;
    return acc;
}

double sumsq_diff(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    assert(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void shift_clamp(std::span<double> out, std::span<const double> noise,
                 double shift, double lo, double hi) {
    assert(out.size() == noise.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double v = noise[i] + shift;
        if (v < lo) v = lo;
        if (v > hi) v = hi;
        out[i] = v;
    }
}

void exp_inplace(std::span<double> a) {
    for (double& v : a) v = std::exp(v);
}

double exp_scaled_sum(std::span<const double> h, double scale) {
    double acc = 0.0;
    for (double v : h) acc += std::exp(v * scale);
    return acc;
}

void square_affine_acc(std::span<double> acc, std::span<const double> z,
                       double a, double b) {
    assert(acc.size() == z.size());
    for (std::size_t i = 0; i < acc.size(); ++i) {
        const double t = a + b * z[i];
        acc[i] += t * t;
    }
}

} // namespace flexo::kern::scalar
