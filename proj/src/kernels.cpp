#include "flexo/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace flexo::kern {

namespace {

struct Ops {
    double (*dot)(std::span<const double>, std::span<const double>);
    double (*sum)(std::span<const double>);
    double (*sumsq_diff)(std::span<const double>, std::span<const double>);
    void (*axpy)(double, std::span<const double>, std::span<double>);
    void (*shift_clamp)(std::span<double>, std::span<const double>, double, double, double);
    void (*exp_inplace)(std::span<double>);
    double (*exp_scaled_sum)(std::span<const double>, double);
    void (*square_affine_acc)(std::span<double>, std::span<const double>, double, double);
};

constexpr Ops kScalarOps = {
    scalar::dot, scalar::sum, scalar::sumsq_diff, scalar::axpy,
    scalar::shift_clamp, scalar::exp_inplace, scalar::exp_scaled_sum,
    scalar::square_affine_acc,
};

#ifdef FLEXO_HAVE_AVX2
constexpr Ops kAvx2Ops = {
    avx2::dot, avx2::sum, avx2::sumsq_diff, avx2::axpy,
    avx2::shift_clamp, avx2::exp_inplace, avx2::exp_scaled_sum,
    avx2::square_affine_acc,
};
#endif

Backend detect_initial() {
    Backend preferred = cpu_supports_avx2() ? Backend::avx2 : Backend::scalar;
    if (const char* env = std::getenv("FLEXO_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
        if (std::strcmp(env, "avx2") == 0) return preferred;
    }
    return preferred;
}

struct State {
    Backend backend;
    const Ops* ops;
    State() { install(detect_initial()); }
    void install(Backend b) {
#ifdef FLEXO_HAVE_AVX2
        if (b == Backend::avx2 && cpu_supports_avx2()) {
            backend = Backend::avx2;
            ops = &kAvx2Ops;
            return;
        }
#endif
        backend = Backend::scalar;
        ops = &kScalarOps;
    }
};

State& state() {
    static State s;
    return s;
}

} // namespace

bool cpu_supports_avx2() {
#ifdef FLEXO_HAVE_AVX2
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Backend active_backend() { return state().backend; }

Backend set_backend(Backend b) {
    state().install(b);
    return state().backend;
}

double dot(std::span<const double> a, std::span<const double> b) {
    return state().ops->dot(a, b);
}

double sum(std::span<const double> a) { return state().ops->sum(a); }

double sumsq_diff(std::span<const double> a, std::span<const double> b) {
    return state().ops->sumsq_diff(a, b);
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    state().ops->axpy(alpha, x, y);
}

void shift_clamp(std::span<double> out, std::span<const double> noise,
                 double shift, double lo, double hi) {
    state().ops->shift_clamp(out, noise, shift, lo, hi);
}

void exp_inplace(std::span<double> a) { state().ops->exp_inplace(a); }

double exp_scaled_sum(std::span<const double> h, double scale) {
    return state().ops->exp_scaled_sum(h, scale);
}

void square_affine_acc(std::span<double> acc, std::span<const double> z,
                       double a, double b) {
    state().ops->square_affine_acc(acc, z, a, b);
}

} // namespace flexo::kern
