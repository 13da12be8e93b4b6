#pragma once

// Array kernels used by the hot loops (Monte Carlo expectations, quadrature
// sweeps, primal-dual iterate math). Scalar reference implementations are the
// semantic ground truth; an AVX2 variant is selected at runtime when the CPU
// supports it. Both variants are exposed so they can be tested against each
// other.

#include <cstddef>
#include <span>

namespace flexo::kern {

enum class Backend { scalar, avx2 };

// Backend currently used by the dispatching entry points.
Backend active_backend();

// Request a backend. avx2 silently falls back to scalar when the CPU lacks
// AVX2+FMA. Returns the backend actually installed. The FLEXO_KERNELS
// environment variable ("scalar", "avx2", "auto") sets the initial choice.
Backend set_backend(Backend b);

bool cpu_supports_avx2();

// sum_i a[i] * b[i]
double dot(std::span<const double> a, std::span<const double> b);

// sum_i a[i]
double sum(std::span<const double> a);

// sum_i (a[i] - b[i])^2
double sumsq_diff(std::span<const double> a, std::span<const double> b);

// y[i] += alpha * x[i]
void axpy(double alpha, std::span<const double> x, std::span<double> y);

// out[i] = clamp(noise[i] + shift, lo, hi)
void shift_clamp(std::span<double> out, std::span<const double> noise,
                 double shift, double lo, double hi);

// a[i] = exp(a[i])
void exp_inplace(std::span<double> a);

// sum_i exp(h[i] * scale)
double exp_scaled_sum(std::span<const double> h, double scale);

// acc[i] += (a + b * z[i])^2
void square_affine_acc(std::span<double> acc, std::span<const double> z,
                       double a, double b);

namespace scalar {
double dot(std::span<const double> a, std::span<const double> b);
double sum(std::span<const double> a);
double sumsq_diff(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void shift_clamp(std::span<double> out, std::span<const double> noise,
                 double shift, double lo, double hi);
void exp_inplace(std::span<double> a);
double exp_scaled_sum(std::span<const double> h, double scale);
void square_affine_acc(std::span<double> acc, std::span<const double> z,
                       double a, double b);
} // namespace scalar

#ifdef FLEXO_HAVE_AVX2
namespace avx2 {
double dot(std::span<const double> a, std::span<const double> b);
double sum(std::span<const double> a);
double sumsq_diff(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void shift_clamp(std::span<double> out, std::span<const double> noise,
                 double shift, double lo, double hi);
void exp_inplace(std::span<double> a);
double exp_scaled_sum(std::span<const double> h, double scale);
void square_affine_acc(std::span<double> acc, std::span<const double> z,
                       double a, double b);
} // namespace avx2
#endif

} // namespace flexo::kern
